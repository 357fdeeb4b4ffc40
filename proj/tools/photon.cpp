// photon: simulate, calibrate, serve and export from one binary.
//
// Every option can also come from the environment (PHOTON_<NAME>, listed in
// --help). A flag on the command line wins over the environment, which wins
// over the built-in default.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "photon/bus/capture.hpp"
#include "photon/bus/transport.hpp"
#include "photon/capture.hpp"
#include "photon/error.hpp"
#include "photon/io.hpp"
#include "photon/midi.hpp"
#include "photon/server.hpp"
#include "photon/simulate.hpp"

namespace fs = std::filesystem;
using namespace photon;

namespace {

action::ActionConfig action_named(const std::string& name) {
    if (name == "disengaged") return action::ActionConfig::disengaged();
    if (name == "single_manual") return action::ActionConfig::single_manual();
    if (name == "double_manual") return action::ActionConfig::double_manual();
    throw ConfigError("cli", "unknown action '" + name + "' (disengaged, single_manual, double_manual)");
}

std::vector<KeyId> parse_keys(const std::vector<std::string>& texts) {
    std::vector<KeyId> out;
    for (const auto& t : texts) {
        std::stringstream ss(t);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) out.push_back(io::parse_key(item));
        }
    }
    return out;
}

std::vector<KeyId> roster_keys(const host::Session& s) {
    std::vector<KeyId> out;
    for (const auto& b : s.roster) out.insert(out.end(), b.keys.begin(), b.keys.end());
    return out;
}

std::unique_ptr<bus::ByteTransport> open_device(const std::string& device, int baud) {
    if (device.rfind("tcp:", 0) == 0) return bus::TcpTransport::connect(device.substr(4));
    return std::make_unique<bus::SerialTransport>(device, baud);
}

struct Quit {};

class StdinFixture : public host::Fixture {
public:
    bool position(const KeyId& key, double mm, const std::string& label) override {
        std::fprintf(stderr, "%s: hold at %s (%.2f mm), Enter to capture, s to skip, q to stop: ", to_string(key).c_str(),
                     label.c_str(), mm);
        std::string line;
        if (!std::getline(std::cin, line) || line == "q") throw Quit{};
        return line != "s";
    }
    void release(const KeyId& key) override { std::fprintf(stderr, "%s: release\n", to_string(key).c_str()); }
};

void print_run(const host::CalibrationRun& run) {
    std::printf("calibrated %d, skipped %d, failed %zu%s\n", run.calibrated, run.skipped, run.failures.size(),
                run.interrupted ? ", stopped at limit" : "");
    for (const auto& [k, why] : run.failures) std::printf("  %s: %s\n", to_string(k).c_str(), why.c_str());
}

std::pair<std::string, int> split_bind(const std::string& bind) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("cli", "bind address must be host:port");
    try {
        return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
    } catch (const std::exception&) {
        throw ConfigError("cli", "bad port in '" + bind + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PHOTON optical key-motion sensing: simulator, host and tools"};
    app.require_subcommand(1);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Run a score through the simulated instrument");
    std::string sim_session, sim_score, sim_out = "out", sim_action, sim_record;
    std::uint64_t sim_seed = 1;
    bool sim_midi_only = false, sim_parallel = false, sim_reverse = false;
    sim_cmd->add_option("--session", sim_session, "Session file")->required()->envname("PHOTON_SESSION");
    sim_cmd->add_option("--score", sim_score, "Score file")->required()->envname("PHOTON_SCORE");
    sim_cmd->add_option("--seed", sim_seed, "Seed for every random stream")->envname("PHOTON_SEED");
    sim_cmd->add_option("--out", sim_out, "Output directory")->envname("PHOTON_OUT")->capture_default_str();
    sim_cmd->add_option("--action", sim_action, "Override the action: disengaged, single_manual, double_manual")
        ->envname("PHOTON_ACTION");
    sim_cmd->add_option("--record", sim_record, "Also write the host-side bus capture here")->envname("PHOTON_RECORD");
    sim_cmd->add_flag("--midi-only", sim_midi_only, "Skip the position-stream pass");
    sim_cmd->add_flag("--parallel", sim_parallel, "Step boards on worker threads")->envname("PHOTON_PARALLEL");
    sim_cmd->add_flag("--reverse-chain", sim_reverse, "Attach boards in reverse chain order");

    // calibrate
    auto* cal_cmd = app.add_subcommand("calibrate", "Capture per-key calibration");
    std::string cal_session, cal_output, cal_device;
    std::vector<std::string> cal_keys;
    std::vector<double> cal_anchors = {2.25, 4.5, 6.75};
    bool cal_scripted = false, cal_resume = false;
    int cal_limit = 0, cal_baud = 250000, cal_samples = 24;
    std::uint64_t cal_seed = 1;
    cal_cmd->add_option("--session", cal_session, "Session file")->required()->envname("PHOTON_SESSION");
    cal_cmd->add_flag("--scripted", cal_scripted, "Drive the simulator's fixture instead of an operator");
    cal_cmd->add_option("--output", cal_output, "Write here instead of updating the session file")
        ->envname("PHOTON_OUTPUT");
    cal_cmd->add_flag("--resume", cal_resume, "Keep keys that already have an entry");
    cal_cmd->add_option("--limit", cal_limit, "Stop after this many keys");
    cal_cmd->add_option("--key", cal_keys, "Keys to (re)calibrate, e.g. m1k12 or m1k0,m1k1 (default: all)");
    cal_cmd->add_option("--anchors", cal_anchors, "Intermediate anchor displacements in mm")->capture_default_str();
    cal_cmd->add_option("--samples", cal_samples, "Polls per capture")->capture_default_str();
    cal_cmd->add_option("--seed", cal_seed, "Simulator seed")->envname("PHOTON_SEED");
    cal_cmd->add_option("--device", cal_device, "Bus adaptor: serial device path or tcp:host:port")
        ->envname("PHOTON_DEVICE");
    cal_cmd->add_option("--baud", cal_baud, "Serial baud rate")->envname("PHOTON_BAUD")->capture_default_str();

    // serve
    auto* srv_cmd = app.add_subcommand("serve", "Serve the streaming endpoint on a simulated instrument");
    std::string srv_session, srv_bind = "127.0.0.1:8750", srv_score, srv_record_dir;
    double srv_scale = 1.0;
    bool srv_loop = false, srv_save = false;
    std::uint64_t srv_seed = 1;
    srv_cmd->add_option("--session", srv_session, "Session file")->required()->envname("PHOTON_SESSION");
    srv_cmd->add_option("--bind", srv_bind, "host:port (port 0 picks one)")->envname("PHOTON_BIND")->capture_default_str();
    srv_cmd->add_option("--score", srv_score, "Score the simulated keys play")->envname("PHOTON_SCORE");
    srv_cmd->add_flag("--loop", srv_loop, "Repeat the score");
    srv_cmd->add_option("--time-scale", srv_scale, "Simulated seconds per wall second")
        ->envname("PHOTON_TIME_SCALE")
        ->capture_default_str();
    srv_cmd->add_flag("--save", srv_save, "Write committed calibration back to the session file");
    srv_cmd->add_option("--record-dir", srv_record_dir, "Directory for record_start captures")
        ->envname("PHOTON_RECORD_DIR");
    srv_cmd->add_option("--seed", srv_seed, "Simulator seed")->envname("PHOTON_SEED");

    // export
    auto* exp_cmd = app.add_subcommand("export", "Convert a bus capture to CSV positions or SMF");
    std::string exp_session, exp_trace, exp_format = "smf", exp_out;
    exp_cmd->add_option("--session", exp_session, "Session file")->required()->envname("PHOTON_SESSION");
    exp_cmd->add_option("--trace", exp_trace, "Bus capture")->required()->envname("PHOTON_TRACE");
    exp_cmd->add_option("--format", exp_format, "csv or smf")
        ->check(CLI::IsMember({"csv", "smf"}))
        ->envname("PHOTON_FORMAT")
        ->capture_default_str();
    exp_cmd->add_option("--out", exp_out, "Output file (default: trace name with .csv/.mid)")->envname("PHOTON_OUT");

    // new-session / new-score
    auto* ns_cmd = app.add_subcommand("new-session", "Write the default two-manual session");
    std::string ns_out, ns_action = "single_manual";
    ns_cmd->add_option("--out", ns_out, "Session file")->required();
    ns_cmd->add_option("--action", ns_action, "disengaged, single_manual or double_manual")->capture_default_str();

    auto* sc_cmd = app.add_subcommand("new-score", "Write a randomized score");
    std::string sc_out, sc_action;
    std::vector<std::string> sc_keys = {"m1k20,m1k24,m1k27,m1k31,m1k34,m1k38,m1k41,m1k45"};
    int sc_count = 100;
    std::uint64_t sc_seed = 1;
    sc_cmd->add_option("--out", sc_out, "Score file")->required();
    sc_cmd->add_option("--count", sc_count, "Gestures")->capture_default_str();
    sc_cmd->add_option("--seed", sc_seed, "Seed")->envname("PHOTON_SEED");
    sc_cmd->add_option("--keys", sc_keys, "Keys to play, round-robin");
    sc_cmd->add_option("--action", sc_action, "Store an action override in the score");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim_cmd) {
            auto file = io::load_session(sim_session);
            auto score = io::load_score(sim_score);
            if (score.action) file.session.action = *score.action;
            if (!sim_action.empty()) file.session.action = action_named(sim_action);
            sim::SimulationOptions o;
            o.seed = sim_seed;
            o.midi_only = sim_midi_only;
            o.parallel = sim_parallel;
            o.reverse_chain = sim_reverse;
            bus::Capture capture;
            if (!sim_record.empty()) o.record = &capture;
            const auto r = sim::simulate(file, score.entries, o);
            fs::create_directories(sim_out);
            const auto dir = fs::path(sim_out);
            midi::write_smf(r.events, r.file.route, (dir / "performance.mid").string());
            const std::string csv = sim_midi_only ? std::string("t_s,sensor_id,manual,key,displacement_mm\n")
                                                  : midi::positions_csv(r.stream, r.file.session, r.stream_offset_s);
            io::write_text((dir / "trace.csv").string(), csv);
            io::write_text((dir / "report.json").string(), r.report.to_json());
            if (!sim_record.empty()) io::write_text(sim_record, capture.to_text());
            const auto& p = r.report;
            std::printf("%s: %d gestures, plucks %d/%d matched (recall %.3f), %d unmatched features\n", p.action.c_str(),
                        p.gestures, p.matched_plucks, p.truth_plucks, p.recall(), p.unmatched_features);
            std::printf("notes: %d on, %d off, %d/%d matched, %llu stuck, max on delta %.2f ms\n", p.note_ons,
                        p.note_offs, p.matched_notes, p.truth_notes, static_cast<unsigned long long>(p.stuck_notes),
                        p.max_on_delta_s * 1e3);
            std::printf("wrote %s, %s, %s\n", (dir / "performance.mid").c_str(), (dir / "trace.csv").c_str(),
                        (dir / "report.json").c_str());
            return 0;
        }

        if (*cal_cmd) {
            auto file = io::load_session(cal_session);
            const std::string out = cal_output.empty() ? cal_session : cal_output;
            auto keys = cal_keys.empty() ? roster_keys(file.session) : parse_keys(cal_keys);
            host::CapturePlan plan;
            plan.anchor_mm = cal_anchors;
            plan.samples = cal_samples;
            host::RunOptions run;
            run.resume = cal_resume;
            run.limit = cal_limit;
            run.after_key = [&](const KeyId&) { io::save_session(file, out); };
            host::CalibrationRun result;
            if (cal_scripted) {
                if (!cal_device.empty()) throw ConfigError("cli", "--scripted drives the simulator; drop --device");
                result = sim::calibrate_scripted(file, keys, cal_seed, plan, run);
            } else {
                if (cal_device.empty()) {
                    throw ConfigError("cli", "interactive calibration needs --device; use --scripted on the simulator");
                }
                auto transport = open_device(cal_device, cal_baud);
                host::HostController host(*transport, file.session);
                host.verify_roster();
                host.push_thresholds();
                StdinFixture fixture;
                try {
                    result = host::calibrate_keys(host, fixture, keys, plan, run);
                } catch (const Quit&) {
                    std::printf("stopped by operator; rerun with --resume to continue\n");
                }
            }
            io::save_session(file, out);
            print_run(result);
            return result.failures.empty() ? 0 : 3;
        }

        if (*srv_cmd) {
            auto file = io::load_session(srv_session);
            serve::ServerOptions o;
            std::tie(o.host, o.port) = split_bind(srv_bind);
            o.time_scale = srv_scale;
            o.seed = srv_seed;
            o.loop = srv_loop;
            if (!srv_score.empty()) o.score = io::load_score(srv_score);
            if (srv_save) o.save_path = srv_session;
            o.record_dir = srv_record_dir;
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            serve::Server server(std::move(file), o);
            const int port = server.start();
            std::printf("listening on http://%s:%d\n", o.host.c_str(), port);
            std::fflush(stdout);
            int sig = 0;
            sigwait(&set, &sig);
            server.stop();
            return 0;
        }

        if (*exp_cmd) {
            auto file = io::load_session(exp_session);
            const auto capture = bus::Capture::from_text(io::read_text(exp_trace));
            const auto r = io::replay(capture, file.session);
            std::string out = exp_out;
            if (out.empty()) out = fs::path(exp_trace).replace_extension(exp_format == "csv" ? ".csv" : ".mid").string();
            if (exp_format == "csv") {
                io::write_text(out, midi::positions_csv(r.stream, file.session, capture.t0_s));
            } else {
                midi::write_smf(r.events, file.route, out);
            }
            std::printf("%llu frames (%llu bad), %zu note events, %zu position batches -> %s\n",
                        static_cast<unsigned long long>(r.frames), static_cast<unsigned long long>(r.bad_frames),
                        r.events.size(), r.stream.size(), out.c_str());
            return 0;
        }

        if (*ns_cmd) {
            io::SessionFile file;
            file.session = host::Session::standard(action_named(ns_action));
            io::save_session(file, ns_out);
            return 0;
        }

        if (*sc_cmd) {
            io::Score score;
            score.entries = io::random_score(sc_count, sc_seed, parse_keys(sc_keys));
            if (!sc_action.empty()) score.action = action_named(sc_action);
            io::write_text(sc_out, io::score_to_json(score));
            return 0;
        }
    } catch (const Error& e) {
        // what() already leads with the module name.
        std::fprintf(stderr, "photon: error in %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "photon: %s\n", e.what());
        return 1;
    }
    return 0;
}
