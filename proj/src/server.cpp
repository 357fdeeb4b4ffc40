#include "photon/server.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include <httplib.h>
#include <json.hpp>

#include "photon/capture.hpp"
#include "photon/error.hpp"
#include "photon/simulate.hpp"

namespace photon::serve {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::size_t kReplyCache = 1024;

json key_event_json(const host::KeyEvent& e) {
    return {{"kind", e.kind == host::KeyEvent::Kind::note_on ? "note_on" : "note_off"},
            {"key", to_string(e.id())},
            {"t_s", e.t_s},
            {"traversal_s", e.traversal_s},
            {"velocity", e.velocity}};
}

Reply error_reply(int status, const std::string& type, const std::string& module, const std::string& message,
                  const json& id) {
    json body = {{"ok", false}, {"error", {{"type", type}, {"module", module}, {"message", message}}}};
    if (!id.is_null()) body["id"] = id;
    return {status, body.dump()};
}

struct UnknownCommand : std::runtime_error {
    explicit UnknownCommand(const std::string& cmd) : std::runtime_error("unknown command '" + cmd + "'") {}
};

bool safe_name(const std::string& s) {
    if (s.empty() || s.size() > 64) return false;
    for (char c : s) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) return false;
    }
    return true;
}

}  // namespace

void Broadcaster::publish(std::string type, std::string data) {
    {
        std::lock_guard lock(mu_);
        log_.push_back({next_++, std::move(type), std::move(data)});
        while (log_.size() > history_) log_.pop_front();
    }
    cv_.notify_all();
}

std::vector<Event> Broadcaster::wait(std::uint64_t after, double timeout_s) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, std::chrono::duration<double>(timeout_s), [&] { return closed_ || next_ - 1 > after; });
    std::vector<Event> out;
    for (const auto& e : log_) {
        if (e.id > after) out.push_back(e);
    }
    return out;
}

std::uint64_t Broadcaster::last_id() const {
    std::lock_guard lock(mu_);
    return next_ - 1;
}

void Broadcaster::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool Broadcaster::closed() const {
    std::lock_guard lock(mu_);
    return closed_;
}

struct Server::Impl {
    httplib::Server http;
    sim::KeyWorld world;
    std::unique_ptr<sim::Rig> rig;
    std::unique_ptr<bus::RecordingTransport> port;
    std::unique_ptr<host::HostController> host;
    std::unique_ptr<host::KeyCapture> capture;
    std::string capture_client;
    std::optional<bus::Capture> recording;
    std::string recording_path;
    int recordings = 0;
    double score_end_s = 0.0;
    std::map<std::string, Reply> replies;
    std::deque<std::string> reply_order;

    std::mutex stop_mu;
    std::condition_variable stop_cv;

    Reply execute(Server& server, const std::string& body);
    json handle(Server& server, const json& req);
    json status(Server& server) const;
    json capture_state() const;
    void drop_capture();
};

Server::Server(io::SessionFile file, ServerOptions options)
    : file_(std::move(file)), options_(std::move(options)), events_(options_.history), impl_(std::make_unique<Impl>()) {
    if (!(options_.time_scale > 0.0)) throw ConfigError("serve", "time scale must be positive");
}

Server::~Server() { stop(); }

int Server::start() {
    std::promise<void> ready;
    auto ready_f = ready.get_future();
    running_ = true;
    host_thread_ = std::thread([this, p = std::move(ready)]() mutable { host_loop(std::move(p)); });
    try {
        ready_f.get();
    } catch (...) {
        running_ = false;
        host_thread_.join();
        throw;
    }

    auto& http = impl_->http;
    http.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) {
        auto r = command(R"({"cmd":"status"})");
        res.status = r.http_status;
        res.set_content(r.body, "application/json");
    });
    http.Post("/api/command", [this](const httplib::Request& req, httplib::Response& res) {
        auto r = command(req.body);
        res.status = r.http_status;
        res.set_content(r.body, "application/json");
    });
    http.Get("/api/stream", [this](const httplib::Request& req, httplib::Response& res) {
        const std::string client = req.has_param("client") ? req.get_param_value("client") : "";
        auto last = std::make_shared<std::uint64_t>(
            req.has_param("after") ? std::stoull(req.get_param_value("after")) : events_.last_id());
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [this, last](std::size_t, httplib::DataSink& sink) {
                if (events_.closed()) {
                    sink.done();
                    return true;
                }
                const auto batch = events_.wait(*last, 0.5);
                std::string out;
                for (const auto& e : batch) {
                    out += "id: " + std::to_string(e.id) + "\nevent: " + e.type + "\ndata: " + e.data + "\n\n";
                    *last = e.id;
                }
                if (out.empty()) out = ": keepalive\n\n";
                return sink.write(out.data(), out.size());
            },
            [this, client](bool) {
                if (!client.empty()) client_gone(client);
            });
    });

    int port = options_.port;
    if (port == 0) {
        port = http.bind_to_any_port(options_.host);
    } else if (!http.bind_to_port(options_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        stop();
        throw ConfigError("serve", "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    http_thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
    return port;
}

void Server::wait() {
    std::unique_lock lock(impl_->stop_mu);
    impl_->stop_cv.wait(lock, [this] { return !running_; });
}

void Server::stop() {
    {
        std::lock_guard lock(impl_->stop_mu);
        running_ = false;
    }
    impl_->stop_cv.notify_all();
    events_.close();
    impl_->http.stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (host_thread_.joinable()) host_thread_.join();
    std::lock_guard lock(jobs_mu_);
    for (auto& j : jobs_) j->reply.set_value(error_reply(503, "unavailable", "serve", "server stopping", nullptr));
    jobs_.clear();
}

Reply Server::command(const std::string& body) {
    if (!running_) return error_reply(503, "unavailable", "serve", "server is not running", nullptr);
    auto job = std::make_shared<Job>();
    job->body = body;
    auto f = job->reply.get_future();
    {
        std::lock_guard lock(jobs_mu_);
        jobs_.push_back(job);
    }
    if (f.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
        return error_reply(504, "timeout", "serve", "host task did not answer", nullptr);
    }
    return f.get();
}

void Server::client_gone(const std::string& client) {
    if (!running_) return;
    json j = {{"cmd", "client_gone"}, {"client", client}};
    auto job = std::make_shared<Job>();
    job->body = j.dump();
    std::lock_guard lock(jobs_mu_);
    jobs_.push_back(job);
}

void Server::host_loop(std::promise<void> ready) {
    auto& im = *impl_;
    auto& session = file_.session;
    try {
        auto ro = sim::rig_options(file_, options_.seed);
        im.rig = std::make_unique<sim::Rig>(session, ro, &im.world);
        im.port = std::make_unique<bus::RecordingTransport>(im.rig->host());
        im.host = std::make_unique<host::HostController>(*im.port, session);
        im.host->on_key_event = [this](const host::KeyEvent& e) { events_.publish("key_event", key_event_json(e).dump()); };
        im.host->on_position = [this](const host::PositionFrame& f) {
            json j = {{"t_s", f.t_s},
                      {"key", to_string(f.key)},
                      {"sensor_id", f.sensor_id},
                      {"counts", f.counts},
                      {"mm", f.displacement_mm}};
            events_.publish("position", j.dump());
        };
        sim::bring_up(*im.host);
        if (options_.score) {
            if (options_.score->action) session.action = *options_.score->action;
            const auto tracks = action::scripted_performance(session.action, options_.score->entries, session.compass,
                                                             250.0, options_.seed);
            for (const auto& [k, t] : tracks) {
                for (const auto& n : t.notes) im.score_end_s = std::max(im.score_end_s, n.end_s);
            }
            im.world.add_performance(tracks);
            im.world.set_offset(im.host->now() + 0.1);
        }
    } catch (...) {
        ready.set_exception(std::current_exception());
        return;
    }
    ready.set_value();

    auto wall0 = Clock::now();
    double sim0 = im.host->now();
    auto last_status = Clock::now();
    auto elapsed = [](Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); };
    while (running_) {
        std::deque<std::shared_ptr<Job>> jobs;
        {
            std::lock_guard lock(jobs_mu_);
            jobs.swap(jobs_);
        }
        for (auto& j : jobs) {
            auto r = im.execute(*this, j->body);
            j->reply.set_value(std::move(r));
        }
        if (!jobs.empty()) {
            // Captures run the bus faster than real time; resume pacing from here.
            const double ahead = im.host->now() - (sim0 + elapsed(wall0) * options_.time_scale);
            if (ahead > 0.0) sim0 -= ahead;
        }
        const double target = sim0 + elapsed(wall0) * options_.time_scale;
        if (im.host->now() < target) {
            try {
                while (im.host->now() < target) im.host->pump(target - im.host->now());
            } catch (const Error& e) {
                events_.publish("error", json{{"module", e.module()}, {"message", e.what()}}.dump());
            }
        } else {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        if (options_.score && options_.loop && im.host->now() > im.world.offset() + im.score_end_s + 0.5) {
            im.world.set_offset(im.host->now() + 0.1);
        }
        if (elapsed(last_status) >= options_.status_interval_s) {
            last_status = Clock::now();
            events_.publish("status", im.status(*this).dump());
        }
    }
    if (im.recording && !im.recording_path.empty()) {
        try {
            io::write_text(im.recording_path, im.recording->to_text());
        } catch (const Error&) {
        }
    }
}

Reply Server::Impl::execute(Server& server, const std::string& body) {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        return error_reply(400, "bad_request", "serve", std::string("body is not JSON: ") + e.what(), nullptr);
    }
    if (!req.is_object() || !req.contains("cmd") || !req["cmd"].is_string()) {
        return error_reply(400, "bad_request", "serve", "expected an object with a string 'cmd'", nullptr);
    }
    const json id = req.value("id", json(nullptr));
    std::string id_key;
    if (!id.is_null()) {
        id_key = id.dump();
        if (auto it = replies.find(id_key); it != replies.end()) return it->second;
    }
    Reply reply;
    try {
        json out = handle(server, req);
        out["ok"] = true;
        if (!id.is_null()) out["id"] = id;
        reply = {200, out.dump()};
    } catch (const UnknownCommand& e) {
        reply = error_reply(400, "unknown_command", "serve", e.what(), id);
    } catch (const json::exception& e) {
        reply = error_reply(400, "bad_request", "serve", e.what(), id);
    } catch (const ValidationError& e) {
        reply = error_reply(409, "validation", e.module(), e.what(), id);
    } catch (const CalibrationError& e) {
        reply = error_reply(422, "calibration", e.module(), e.what(), id);
    } catch (const ConfigError& e) {
        reply = error_reply(409, "config", e.module(), e.what(), id);
    } catch (const RoutingError& e) {
        reply = error_reply(409, "routing", e.module(), e.what(), id);
    } catch (const EnumerationError& e) {
        reply = error_reply(502, "enumeration", e.module(), e.what(), id);
    } catch (const CodecError& e) {
        reply = error_reply(502, "protocol", e.module(), e.what(), id);
    } catch (const Error& e) {
        reply = error_reply(502, "bus", e.module(), e.what(), id);
    }
    if (!id_key.empty()) {
        replies[id_key] = reply;
        reply_order.push_back(id_key);
        if (reply_order.size() > kReplyCache) {
            replies.erase(reply_order.front());
            reply_order.pop_front();
        }
    }
    return reply;
}

json Server::Impl::capture_state() const {
    if (!capture) return nullptr;
    json anchors = json::array();
    for (const auto& a : capture->anchors()) anchors.push_back(json::array({a.counts, a.mm}));
    return {{"key", to_string(capture->key())},
            {"phase", host::phase_name(capture->phase())},
            {"client", capture_client},
            {"anchors", anchors}};
}

json Server::Impl::status(Server& server) const {
    const auto& session = server.file_.session;
    json boards = json::array();
    for (const auto& b : session.roster) {
        int calibrated = 0;
        json keys = json::array();
        for (const auto& k : b.keys) {
            keys.push_back(to_string(k));
            calibrated += session.calibration.contains(k) ? 1 : 0;
        }
        boards.push_back({{"address", b.address},
                          {"board_id", b.board_id},
                          {"sensor_count", b.sensor_count},
                          {"calibrated", calibrated},
                          {"keys", keys}});
    }
    const auto& st = session.stats();
    const auto& d = session.detection;
    const auto& v = session.velocity;
    return {{"time_s", host->now()},
            {"roster", boards},
            {"total_sensors", session.total_sensors()},
            {"calibrated", session.calibration.size()},
            {"mode", json::parse(io::mode_to_json(session.mode()))},
            {"capture", capture_state()},
            {"recording", recording.has_value()},
            {"detection",
             {{"on_window_mm", {d.on_window.from_mm, d.on_window.to_mm}},
              {"off_window_mm", {d.off_window.from_mm, d.off_window.to_mm}},
              {"rearm_mm", d.rearm_mm},
              {"pluck_slope_ratio", d.slope_feature_min},
              {"travel_mm", d.travel_mm}}},
            {"velocity", {{"t_min_s", v.t_min_s}, {"t_max_s", v.t_max_s}, {"v_min", v.v_min}, {"v_max", v.v_max}}},
            {"stats",
             {{"stuck_notes", st.stuck_notes},
              {"orphan_offs", st.orphan_offs},
              {"suppressed_by_mode", st.suppressed_by_mode},
              {"uncalibrated_frames", st.uncalibrated_frames},
              {"silent_register", st.silent_register},
              {"bad_frames", host->decoder_stats().dropped()},
              {"timeouts", host->stats().timeouts}}}};
}

void Server::Impl::drop_capture() {
    if (!capture) return;
    world.release(capture->key());
    capture.reset();
    capture_client.clear();
}

json Server::Impl::handle(Server& server, const json& req) {
    auto& session = server.file_.session;
    const auto cmd = req.at("cmd").get<std::string>();
    auto publish_capture = [&](const json& extra) {
        json j = capture_state();
        if (j.is_null()) j = json::object();
        if (extra.is_object()) j.update(extra);
        server.events_.publish("capture", j.dump());
    };

    if (cmd == "status") return status(server);
    if (cmd == "get_session") return {{"session", json::parse(io::session_to_json(server.file_))}};
    if (cmd == "set_mode") {
        const auto mode = io::mode_from_json(req.at("mode").dump());
        host->apply_mode(mode);
        json m = json::parse(io::mode_to_json(session.mode()));
        server.events_.publish("mode", m.dump());
        return {{"mode", m}};
    }
    if (cmd == "capture_begin") {
        const auto key = io::parse_key(req.at("key").get<std::string>());
        if (capture) throw ValidationError("host", "capture already active for " + to_string(capture->key()));
        if (session.mode().kind != host::HostModeKind::midi) {
            // Captures poll single sensors; a stream would fight them for the bus.
            throw ValidationError("host", "calibration capture needs midi mode");
        }
        capture = std::make_unique<host::KeyCapture>(*host, key);
        capture_client = req.value("client", std::string());
        publish_capture(json::object());
        return {{"capture", capture_state()}};
    }
    if (cmd == "capture_rest" || cmd == "capture_full" || cmd == "capture_anchor") {
        if (!capture) throw ValidationError("host", "no capture is active");
        const double travel = session.detection.travel_mm;
        double mm = 0.0, value = 0.0;
        // The simulated fixture holds the key at the step's position unless
        // told otherwise, e.g. to rehearse a blocked key.
        auto hold = [&](double nominal) { world.hold(capture->key(), req.value("sim_hold_mm", nominal)); };
        if (cmd == "capture_rest") {
            hold(0.0);
            value = capture->capture_rest();
        } else if (cmd == "capture_full") {
            hold(travel);
            value = capture->capture_full();
            mm = travel;
        } else {
            mm = req.at("mm").get<double>();
            if (!(mm > 0.0 && mm < travel)) throw ValidationError("host", "anchor must lie strictly inside the travel");
            hold(mm);
            value = capture->capture_anchor(mm);
        }
        json extra = {{"step", cmd}, {"mm", mm}, {"median_counts", value}};
        publish_capture(extra);
        json out = {{"capture", capture_state()}};
        out.update(extra);
        return out;
    }
    if (cmd == "capture_commit") {
        if (!capture) throw ValidationError("host", "no capture is active");
        const auto key = capture->key();
        capture->commit();
        drop_capture();
        if (!server.options_.save_path.empty()) io::save_session(server.file_, server.options_.save_path);
        json entry = json::parse(io::calibration_to_json(session, key));
        server.events_.publish("calibration", entry.dump());
        return {{"entry", entry}};
    }
    if (cmd == "capture_abort") {
        const bool had = capture != nullptr;
        drop_capture();
        if (had) publish_capture({{"step", "capture_abort"}});
        return {{"aborted", had}};
    }
    if (cmd == "client_gone") {
        const auto client = req.at("client").get<std::string>();
        if (capture && !client.empty() && capture_client == client) {
            drop_capture();
            publish_capture({{"step", "capture_abort"}, {"reason", "client disconnected"}});
        }
        return json::object();
    }
    if (cmd == "record_start") {
        if (server.options_.record_dir.empty()) throw ConfigError("serve", "recording is disabled (no --record-dir)");
        if (recording) throw ValidationError("serve", "a recording is already running");
        std::string name = req.value("name", std::string());
        if (name.empty()) name = "recording-" + std::to_string(++recordings);
        if (!safe_name(name)) throw ValidationError("serve", "recording names use letters, digits, '-' and '_'");
        recording_path = (std::filesystem::path(server.options_.record_dir) / (name + ".cap")).string();
        recording.emplace();
        recording->t0_s = host->now();
        port->set_sink(&*recording);
        return {{"path", recording_path}};
    }
    if (cmd == "record_stop") {
        if (!recording) throw ValidationError("serve", "no recording is running");
        port->set_sink(nullptr);
        io::write_text(recording_path, recording->to_text());
        json out = {{"path", recording_path}, {"chunks", recording->chunks.size()}};
        recording.reset();
        return out;
    }
    throw UnknownCommand(cmd);
}

}  // namespace photon::serve
