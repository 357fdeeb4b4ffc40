#include "photon/host_controller.hpp"

#include <algorithm>
#include <set>

#include "photon/error.hpp"

namespace photon::host {
namespace {

constexpr std::string_view kModule = "host";

std::uint8_t source_of(std::uint8_t address) { return static_cast<std::uint8_t>(address & ~bus::kHostBound); }

std::vector<EnumeratedBoard> sorted_unique(std::vector<EnumeratedBoard> found) {
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        return a.address != b.address ? a.address < b.address : a.board_id < b.board_id;
    });
    for (std::size_t i = 1; i < found.size(); ++i) {
        if (found[i].address == found[i - 1].address) {
            throw EnumerationError("bus.enumerate", "duplicate address " + std::to_string(found[i].address) + ": " +
                                                        found[i - 1].board_id + " and " + found[i].board_id);
        }
    }
    return found;
}

}  // namespace

bool is_reply(const bus::Message& m) {
    return std::holds_alternative<bus::Ack>(m) || std::holds_alternative<bus::Nack>(m) ||
           std::holds_alternative<bus::StatusResponse>(m) || std::holds_alternative<bus::PollResponse>(m) ||
           std::holds_alternative<bus::EnumerateReply>(m);
}

std::vector<EnumeratedBoard> enumerate(bus::ByteTransport& transport, double window_s) {
    transport.write(bus::encode(bus::Enumerate{}, bus::kBroadcast, 0));
    bus::Decoder decoder;
    std::vector<EnumeratedBoard> found;
    const double deadline = transport.now() + window_s;
    while (true) {
        const double left = deadline - transport.now();
        if (left <= 0.0) break;
        for (const auto& r : decoder.feed(transport.read(left))) {
            if (const auto* e = std::get_if<bus::EnumerateReply>(&r.message)) {
                found.push_back({e->address, e->board_id, e->sensor_count});
            }
        }
    }
    return sorted_unique(std::move(found));
}

HostController::HostController(bus::ByteTransport& transport, Session& session, ControllerOptions options)
    : transport_(transport), session_(session), options_(options) {}

void HostController::send(std::uint8_t address, const bus::Message& m) {
    transport_.write(bus::encode(m, address, seq_));
    seq_ = static_cast<std::uint8_t>(seq_ + bus::frame_count(m));
}

void HostController::dispatch(const bus::Received& r) {
    const std::uint8_t src = source_of(r.address);
    if (!(r.address & bus::kHostBound)) return;  // downstream echo on a shared line
    if (auto it = last_seq_.find(src); it != last_seq_.end()) {
        if (static_cast<std::int8_t>(r.seq - it->second) < 0) ++stats_.seq_regressions;
    }
    last_seq_[src] = r.seq;

    if (const auto* raw = std::get_if<bus::KeyEventRaw>(&r.message)) {
        if (auto ev = session_.aggregate(src, *raw); ev && on_key_event) on_key_event(*ev);
    } else if (const auto* batch = std::get_if<bus::PositionBatch>(&r.message)) {
        if (on_batch) on_batch(src, *batch);
        for (const auto& f : session_.positions(src, *batch)) {
            if (on_position) on_position(f);
        }
    } else if (is_reply(r.message)) {
        replies_.emplace_back(src, r.message);
    } else {
        ++stats_.unexpected;
    }
}

void HostController::pump(double timeout_s) {
    for (const auto& r : decoder_.feed(transport_.read(timeout_s))) dispatch(r);
}

std::vector<EnumeratedBoard> HostController::enumerate() {
    replies_.clear();
    send(bus::kBroadcast, bus::Enumerate{});
    const double deadline = transport_.now() + options_.enumerate_window_s;
    while (transport_.now() < deadline) pump(deadline - transport_.now());
    std::vector<EnumeratedBoard> found;
    for (const auto& [src, m] : replies_) {
        if (const auto* e = std::get_if<bus::EnumerateReply>(&m)) found.push_back({e->address, e->board_id, e->sensor_count});
    }
    replies_.clear();
    return sorted_unique(std::move(found));
}

void HostController::verify_roster() {
    const auto found = enumerate();
    for (const auto& b : session_.roster) {
        auto it = std::find_if(found.begin(), found.end(), [&](const auto& f) { return f.address == b.address; });
        if (it == found.end()) {
            throw EnumerationError("bus.enumerate", "board " + std::to_string(b.address) + " (" + b.board_id +
                                                        ") did not answer");
        }
        if (it->sensor_count != b.sensor_count) {
            throw EnumerationError("bus.enumerate", "board " + std::to_string(b.address) + " reports " +
                                                        std::to_string(it->sensor_count) + " sensors, roster says " +
                                                        std::to_string(b.sensor_count));
        }
    }
}

bus::Message HostController::request(std::uint8_t address, const bus::Message& message) {
    if (address == bus::kBroadcast || address > bus::kMaxBoardAddress) {
        throw ValidationError(kModule, "requests need a board address");
    }
    ++stats_.requests;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) ++stats_.retries;
        replies_.clear();
        send(address, message);
        const double deadline = transport_.now() + options_.reply_timeout_s;
        while (true) {
            for (auto it = replies_.begin(); it != replies_.end(); ++it) {
                if (it->first == address) {
                    auto reply = it->second;
                    replies_.clear();
                    return reply;
                }
            }
            const double left = deadline - transport_.now();
            if (left <= 0.0) break;
            pump(left);
        }
    }
    ++stats_.timeouts;
    throw Error(kModule, std::string("no reply from board ") + std::to_string(address) + " to " +
                             bus::type_name(bus::type_of(message)));
}

namespace {

void expect_ack(const bus::Message& reply, const std::string& what) {
    if (const auto* n = std::get_if<bus::Nack>(&reply)) {
        throw Error("host", what + " refused with reason " + std::to_string(static_cast<int>(n->reason)));
    }
    if (!std::holds_alternative<bus::Ack>(reply)) throw Error("host", what + ": unexpected reply");
}

}  // namespace

bus::StatusResponse HostController::status(std::uint8_t address) {
    const auto reply = request(address, bus::StatusRequest{});
    if (const auto* s = std::get_if<bus::StatusResponse>(&reply)) return *s;
    throw Error(kModule, "status request answered with " + std::string(bus::type_name(bus::type_of(reply))));
}

std::vector<bus::SampleEntry> HostController::poll(std::uint8_t address, const std::vector<std::uint8_t>& sensors) {
    const auto reply = request(address, bus::PollRequest{sensors});
    if (const auto* p = std::get_if<bus::PollResponse>(&reply)) return p->samples;
    throw Error(kModule, "poll answered with " + std::string(bus::type_name(bus::type_of(reply))));
}

void HostController::push_thresholds() {
    const auto push = bus::threshold_push_from(session_.detection);
    for (const auto& b : session_.roster) expect_ack(request(b.address, push), "threshold push to " + b.board_id);
}

void HostController::push_calibration(const KeyId& key) {
    const auto entry = session_.calibration.find(key);
    if (entry == session_.calibration.end()) throw CalibrationError(kModule, "no calibration for " + to_string(key));
    const auto ref = session_.sensor_of(key);
    if (!ref) throw ConfigError(kModule, "key " + to_string(key) + " not on any board");
    for (const auto& chunk : bus::chunk_calibration(entry->second)) {
        expect_ack(request(ref->address, chunk), "calibration push for " + to_string(key));
    }
}

void HostController::push_all_calibration() {
    for (const auto& [key, entry] : session_.calibration) push_calibration(key);
}

void HostController::apply_mode(const HostMode& mode) {
    const auto commands = session_.plan_mode(mode);
    if (session_.capturing()) {
        throw ValidationError(kModule, "mode change rejected during calibration capture");
    }
    for (const auto& [address, set] : commands) expect_ack(request(address, set), "mode set");
    const bool leaving_midi = session_.mode().kind == HostModeKind::midi && mode.kind != HostModeKind::midi;
    session_.set_mode(mode);
    if (leaving_midi) {
        for (const auto& ev : session_.release_all(session_.latest_time())) {
            if (on_key_event) on_key_event(ev);
        }
    }
}

}  // namespace photon::host
