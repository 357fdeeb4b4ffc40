#include "photon/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "photon/error.hpp"

namespace photon::io {
namespace {

using nlohmann::json;
constexpr std::string_view kModule = "session";

json key_json(const KeyId& k) { return to_string(k); }

json action_json(const action::ActionConfig& a) {
    return {{"travel_mm", a.travel_mm},         {"pluck_points_mm", a.pluck_points_mm},
            {"unload_fraction", a.unload_fraction}, {"settle_freq_hz", a.settle_freq_hz},
            {"settle_damping", a.settle_damping}, {"overshoot_max_mm", a.overshoot_max_mm},
            {"velocity_jitter", a.velocity_jitter}};
}

action::ActionConfig action_from(const json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "disengaged") return action::ActionConfig::disengaged();
        if (name == "single_manual") return action::ActionConfig::single_manual();
        if (name == "double_manual") return action::ActionConfig::double_manual();
        throw ConfigError(kModule, "unknown action preset " + name);
    }
    action::ActionConfig a;
    a.travel_mm = j.value("travel_mm", a.travel_mm);
    a.pluck_points_mm = j.value("pluck_points_mm", a.pluck_points_mm);
    a.unload_fraction = j.value("unload_fraction", a.unload_fraction);
    a.settle_freq_hz = j.value("settle_freq_hz", a.settle_freq_hz);
    a.settle_damping = j.value("settle_damping", a.settle_damping);
    a.overshoot_max_mm = j.value("overshoot_max_mm", a.overshoot_max_mm);
    a.velocity_jitter = j.value("velocity_jitter", a.velocity_jitter);
    a.validate();
    return a;
}

json model_json(const optics::SensorModel& m) {
    return {{"a_gain", m.a_gain},
            {"d0_mm", m.d0_mm},
            {"floor_counts", m.floor_counts},
            {"noise_sigma_counts", m.noise_sigma_counts},
            {"adc_bits", m.adc_bits},
            {"rest_gap_mm", m.rest_gap_mm}};
}

optics::SensorModel model_from(const json& j) {
    optics::SensorModel m;
    m.a_gain = j.value("a_gain", m.a_gain);
    m.d0_mm = j.value("d0_mm", m.d0_mm);
    m.floor_counts = j.value("floor_counts", m.floor_counts);
    m.noise_sigma_counts = j.value("noise_sigma_counts", m.noise_sigma_counts);
    m.adc_bits = j.value("adc_bits", m.adc_bits);
    m.rest_gap_mm = j.value("rest_gap_mm", m.rest_gap_mm);
    m.validate();
    return m;
}

json window_json(const host::Window& w) { return json::array({w.from_mm, w.to_mm}); }

host::Window window_from(const json& j) {
    if (!j.is_array() || j.size() != 2) throw ConfigError(kModule, "windows are [from_mm, to_mm] pairs");
    return {j[0].get<double>(), j[1].get<double>()};
}

json mode_json(const host::HostMode& m) {
    json subset = json::array();
    for (const auto& k : m.subset) subset.push_back(key_json(k));
    return {{"kind", m.kind == host::HostModeKind::midi ? "midi" : "position_stream"},
            {"subset", subset},
            {"stream_rate_hz", m.stream_rate_hz}};
}

host::HostMode mode_from(const json& j) {
    host::HostMode m;
    const auto kind = j.value("kind", std::string("midi"));
    if (kind == "midi") {
        m.kind = host::HostModeKind::midi;
    } else if (kind == "position_stream") {
        m.kind = host::HostModeKind::position_stream;
    } else {
        throw ConfigError(kModule, "unknown mode " + kind);
    }
    for (const auto& k : j.value("subset", json::array())) m.subset.push_back(parse_key(k.get<std::string>()));
    m.stream_rate_hz = j.value("stream_rate_hz", m.stream_rate_hz);
    return m;
}

json entry_json(const host::Session& s, const KeyId& key, const host::CalibrationEntry& e) {
    json anchors = json::array();
    for (const auto& a : e.anchors) anchors.push_back(json::array({a.counts, a.mm}));
    const auto ref = s.sensor_of(key);
    return {{"key", key_json(key)},
            {"address", ref ? ref->address : 0},
            {"sensor", e.sensor_id},
            {"raw_rest", e.raw_rest},
            {"raw_full", e.raw_full},
            {"travel_mm", e.travel_mm},
            {"anchors", anchors},
            {"captured_at", e.captured_at}};
}

void check_version(const json& doc, const char* what) {
    if (!doc.contains("schema_version")) throw ConfigError(kModule, std::string(what) + " has no schema_version");
    const int v = doc["schema_version"].get<int>();
    if (v != kSchemaVersion) {
        throw ConfigError(kModule, std::string(what) + " schema_version " + std::to_string(v) + " is not supported");
    }
}

}  // namespace

KeyId parse_key(const std::string& text) {
    int manual = 0, key = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "m%dk%d%c", &manual, &key, &tail) != 2) {
        throw ValidationError("key", "malformed key '" + text + "', expected m<manual>k<key>");
    }
    return {manual, key};
}

std::string mode_to_json(const host::HostMode& mode) { return mode_json(mode).dump(); }

host::HostMode mode_from_json(const std::string& text) {
    try {
        return mode_from(json::parse(text));
    } catch (const ConfigError& e) {
        throw ValidationError("session", e.what());
    } catch (const json::exception& e) {
        throw ValidationError("session", std::string("malformed mode: ") + e.what());
    }
}

std::string calibration_to_json(const host::Session& session, const KeyId& key) {
    const auto it = session.calibration.find(key);
    if (it == session.calibration.end()) throw CalibrationError("session", "no calibration for " + to_string(key));
    return entry_json(session, key, it->second).dump();
}

std::string session_to_json(const SessionFile& file) {
    const auto& s = file.session;
    json roster = json::array();
    for (const auto& b : s.roster) {
        json keys = json::array();
        for (const auto& k : b.keys) keys.push_back(key_json(k));
        roster.push_back({{"address", b.address}, {"board_id", b.board_id}, {"sensor_count", b.sensor_count}, {"keys", keys}});
    }
    json calibration = json::array();
    for (const auto& [key, e] : s.calibration) calibration.push_back(entry_json(s, key, e));
    const auto& d = s.detection;
    const auto& v = s.velocity;
    json channels = json::object();
    for (const auto& [m, c] : file.route.channels) channels[std::to_string(m)] = c;
    json manual_base = json::object();
    for (const auto& [m, n] : file.route.manual_base) manual_base[std::to_string(m)] = n;
    json overrides = json::object();
    for (const auto& [k, m] : file.sensor_overrides) overrides[to_string(k)] = model_json(m);
    const auto& w = file.wire;
    json doc = {
        {"schema_version", kSchemaVersion},
        {"instrument",
         {{"manuals", s.compass.manuals}, {"keys_per_manual", s.compass.keys_per_manual}, {"action", action_json(s.action)}}},
        {"roster", roster},
        {"calibration", calibration},
        {"detection",
         {{"on_window_mm", window_json(d.on_window)},
          {"off_window_mm", window_json(d.off_window)},
          {"rearm_mm", d.rearm_mm},
          {"slope_feature_min", d.slope_feature_min},
          {"travel_mm", d.travel_mm},
          {"slope_window_mm", d.slope_window_mm},
          {"min_window_samples", d.min_window_samples},
          {"min_press_speed_mm_s", d.min_press_speed_mm_s},
          {"min_significance", d.min_significance}}},
        {"velocity",
         {{"t_min_s", v.t_min_s},
          {"t_max_s", v.t_max_s},
          {"v_min", v.v_min},
          {"v_max", v.v_max},
          {"shape", v.shape == host::CurveShape::linear ? "linear" : "gamma"},
          {"gamma", v.gamma}}},
        {"mode", mode_json(s.mode())},
        {"midi", {{"channels", channels}, {"base_note", file.route.base_note}, {"manual_base", manual_base}}},
        {"simulation",
         {{"sensor_model", model_json(file.sensor_model)},
          {"sensor_overrides", overrides},
          {"wire",
           {{"base_latency_s", w.base_latency_s},
            {"hop_latency_s", w.hop_latency_s},
            {"byte_time_s", w.byte_time_s},
            {"corrupt_rate_down", w.corrupt_rate_down},
            {"corrupt_rate_up", w.corrupt_rate_up},
            {"drop_rate_down", w.drop_rate_down},
            {"drop_rate_up", w.drop_rate_up},
            {"seed", w.seed}}}}},
    };
    return doc.dump(2) + "\n";
}

SessionFile session_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(kModule, std::string("session is not valid JSON: ") + e.what());
    }
    check_version(doc, "session");
    SessionFile file;
    auto& s = file.session;
    try {
        if (doc.contains("instrument")) {
            const auto& in = doc["instrument"];
            s.compass.manuals = in.value("manuals", s.compass.manuals);
            s.compass.keys_per_manual = in.value("keys_per_manual", s.compass.keys_per_manual);
            if (in.contains("action")) s.action = action_from(in["action"]);
        }
        if (doc.contains("roster")) {
            s.roster.clear();
            for (const auto& b : doc["roster"]) {
                host::RosterEntry e;
                e.address = b.at("address").get<std::uint8_t>();
                e.board_id = b.at("board_id").get<std::string>();
                e.sensor_count = b.at("sensor_count").get<int>();
                for (const auto& k : b.at("keys")) e.keys.push_back(parse_key(k.get<std::string>()));
                s.roster.push_back(std::move(e));
            }
        } else {
            s.roster = host::standard_roster(s.compass);
        }
        if (doc.contains("detection")) {
            const auto& d = doc["detection"];
            auto& c = s.detection;
            if (d.contains("on_window_mm")) c.on_window = window_from(d["on_window_mm"]);
            if (d.contains("off_window_mm")) c.off_window = window_from(d["off_window_mm"]);
            c.rearm_mm = d.value("rearm_mm", c.rearm_mm);
            c.slope_feature_min = d.value("slope_feature_min", c.slope_feature_min);
            c.travel_mm = d.value("travel_mm", c.travel_mm);
            c.slope_window_mm = d.value("slope_window_mm", c.slope_window_mm);
            c.min_window_samples = d.value("min_window_samples", c.min_window_samples);
            c.min_press_speed_mm_s = d.value("min_press_speed_mm_s", c.min_press_speed_mm_s);
            c.min_significance = d.value("min_significance", c.min_significance);
        }
        if (doc.contains("velocity")) {
            const auto& v = doc["velocity"];
            auto& c = s.velocity;
            c.t_min_s = v.value("t_min_s", c.t_min_s);
            c.t_max_s = v.value("t_max_s", c.t_max_s);
            c.v_min = v.value("v_min", c.v_min);
            c.v_max = v.value("v_max", c.v_max);
            const auto shape = v.value("shape", std::string("linear"));
            if (shape != "linear" && shape != "gamma") throw ConfigError(kModule, "velocity shape must be linear or gamma");
            c.shape = shape == "linear" ? host::CurveShape::linear : host::CurveShape::gamma;
            c.gamma = v.value("gamma", c.gamma);
        }
        for (const auto& e : doc.value("calibration", json::array())) {
            const auto key = parse_key(e.at("key").get<std::string>());
            std::vector<host::Anchor> anchors;
            for (const auto& a : e.value("anchors", json::array())) anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
            const auto ref = s.sensor_of(key);
            if (!ref) throw ConfigError(kModule, "calibration for " + to_string(key) + " which is not in the roster");
            if (e.contains("address") && e["address"].get<int>() != ref->address) {
                throw ConfigError(kModule, "calibration address for " + to_string(key) + " disagrees with roster");
            }
            try {
                s.calibration[key] = host::make_entry(e.value("sensor", ref->sensor), e.at("raw_rest").get<double>(),
                                                      e.at("raw_full").get<double>(), std::move(anchors),
                                                      e.value("travel_mm", s.detection.travel_mm),
                                                      e.value("captured_at", 0.0));
            } catch (const CalibrationError& err) {
                throw ConfigError(kModule, "stored calibration for " + to_string(key) + " is invalid: " + err.what());
            }
        }
        if (doc.contains("midi")) {
            const auto& m = doc["midi"];
            if (m.contains("channels")) {
                file.route.channels.clear();
                for (const auto& [k, v] : m["channels"].items()) file.route.channels[std::stoi(k)] = v.get<int>();
            }
            file.route.base_note = m.value("base_note", file.route.base_note);
            const auto manual_base = m.value("manual_base", json::object());
            for (const auto& [k, v] : manual_base.items()) {
                file.route.manual_base[std::stoi(k)] = v.get<int>();
            }
        }
        if (doc.contains("simulation")) {
            const auto& sim = doc["simulation"];
            if (sim.contains("sensor_model")) file.sensor_model = model_from(sim["sensor_model"]);
            const auto overrides = sim.value("sensor_overrides", json::object());
            for (const auto& [k, v] : overrides.items()) {
                file.sensor_overrides[parse_key(k)] = model_from(v);
            }
            if (sim.contains("wire")) {
                const auto& w = sim["wire"];
                auto& c = file.wire;
                c.base_latency_s = w.value("base_latency_s", c.base_latency_s);
                c.hop_latency_s = w.value("hop_latency_s", c.hop_latency_s);
                c.byte_time_s = w.value("byte_time_s", c.byte_time_s);
                c.corrupt_rate_down = w.value("corrupt_rate_down", c.corrupt_rate_down);
                c.corrupt_rate_up = w.value("corrupt_rate_up", c.corrupt_rate_up);
                c.drop_rate_down = w.value("drop_rate_down", c.drop_rate_down);
                c.drop_rate_up = w.value("drop_rate_up", c.drop_rate_up);
                c.seed = w.value("seed", c.seed);
                c.validate();
            }
        }
        s.validate();
        file.route.validate(s.compass);
        if (doc.contains("mode")) s.set_mode(mode_from(doc["mode"]));
    } catch (const json::exception& e) {
        throw ConfigError(kModule, std::string("malformed session: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(kModule, e.what());
    } catch (const RoutingError& e) {
        throw ConfigError(kModule, e.what());
    }
    return file;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("io", "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ConfigError("io", "cannot write " + path);
        out << text;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw ConfigError("io", "cannot replace " + path);
}

SessionFile load_session(const std::string& path) { return session_from_json(read_text(path)); }

void save_session(const SessionFile& file, const std::string& path) { write_text(path, session_to_json(file)); }

std::vector<action::ScoreEntry> random_score(int count, std::uint64_t seed, const std::vector<KeyId>& keys,
                                             const GestureRanges& r, double spacing_s) {
    if (keys.empty() && count > 0) throw ValidationError("score", "random score needs at least one key");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> press(r.press_min_s, r.press_max_s);
    std::uniform_real_distribution<double> hold(r.hold_min_s, r.hold_max_s);
    std::uniform_real_distribution<double> release(r.release_min_s, r.release_max_s);
    std::map<KeyId, double> free_at;
    std::vector<action::ScoreEntry> out;
    double t = 0.1;
    for (int i = 0; i < count; ++i) {
        action::ScoreEntry e;
        e.key = keys[static_cast<std::size_t>(i) % keys.size()];
        e.gesture.press_duration_s = press(rng);
        e.gesture.hold_s = hold(rng);
        e.gesture.release_duration_s = release(rng);
        e.gesture.release_style = i % 2 ? action::ReleaseStyle::rapid : action::ReleaseStyle::held;
        // A rapid release rings for a while; budget a second before reusing the key.
        const double busy = e.gesture.press_duration_s + e.gesture.hold_s + e.gesture.release_duration_s + 1.0;
        e.onset_s = std::max(t, free_at[e.key]);
        e.gesture.onset_s = e.onset_s;
        free_at[e.key] = e.onset_s + busy + r.gap_s;
        t = e.onset_s + spacing_s;
        out.push_back(e);
    }
    return out;
}

std::string action_to_name(const action::ActionConfig& c) {
    switch (c.pluck_points_mm.size()) {
        case 0: return "disengaged";
        case 1: return "single_manual";
        default: return "double_manual";
    }
}

std::string score_to_json(const Score& score) {
    json notes = json::array();
    for (const auto& e : score.entries) {
        notes.push_back({{"key", key_json(e.key)},
                         {"onset_s", e.onset_s},
                         {"press_s", e.gesture.press_duration_s},
                         {"hold_s", e.gesture.hold_s},
                         {"release_s", e.gesture.release_duration_s},
                         {"release", e.gesture.release_style == action::ReleaseStyle::rapid ? "rapid" : "held"}});
    }
    json doc = {{"schema_version", kSchemaVersion}, {"notes", notes}};
    if (score.action) doc["action"] = action_json(*score.action);
    return doc.dump(2) + "\n";
}

Score score_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("score", std::string("score is not valid JSON: ") + e.what());
    }
    check_version(doc, "score");
    Score score;
    try {
        if (doc.contains("action")) score.action = action_from(doc["action"]);
        for (const auto& n : doc.value("notes", json::array())) {
            action::ScoreEntry e;
            e.key = parse_key(n.at("key").get<std::string>());
            e.onset_s = n.at("onset_s").get<double>();
            e.gesture.onset_s = e.onset_s;
            e.gesture.press_duration_s = n.value("press_s", e.gesture.press_duration_s);
            e.gesture.hold_s = n.value("hold_s", e.gesture.hold_s);
            e.gesture.release_duration_s = n.value("release_s", e.gesture.release_duration_s);
            const auto style = n.value("release", std::string("held"));
            if (style != "held" && style != "rapid") throw ConfigError("score", "release must be held or rapid");
            e.gesture.release_style = style == "rapid" ? action::ReleaseStyle::rapid : action::ReleaseStyle::held;
            score.entries.push_back(e);
        }
        if (doc.contains("generate")) {
            const auto& g = doc["generate"];
            std::vector<KeyId> keys;
            for (const auto& k : g.at("keys")) keys.push_back(parse_key(k.get<std::string>()));
            GestureRanges r;
            r.press_min_s = g.value("press_min_s", r.press_min_s);
            r.press_max_s = g.value("press_max_s", r.press_max_s);
            r.hold_min_s = g.value("hold_min_s", r.hold_min_s);
            r.hold_max_s = g.value("hold_max_s", r.hold_max_s);
            r.release_min_s = g.value("release_min_s", r.release_min_s);
            r.release_max_s = g.value("release_max_s", r.release_max_s);
            auto more = random_score(g.at("count").get<int>(), g.value("seed", std::uint64_t{1}), keys, r,
                                     g.value("spacing_s", 0.25));
            score.entries.insert(score.entries.end(), more.begin(), more.end());
        }
    } catch (const json::exception& e) {
        throw ConfigError("score", std::string("malformed score: ") + e.what());
    }
    return score;
}

Score load_score(const std::string& path) { return score_from_json(read_text(path)); }

std::string trace_csv(const std::map<KeyId, action::DisplacementTrace>& traces) {
    struct Row {
        double t;
        KeyId key;
        double mm;
    };
    std::vector<Row> rows;
    for (const auto& [key, tr] : traces) {
        for (std::size_t i = 0; i < tr.size(); ++i) rows.push_back({tr.time_at(i), key, tr.samples_mm[i]});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    std::string out = "t_s,key,displacement_mm\n";
    char line[96];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%.6f,%s,%.6f\n", r.t, to_string(r.key).c_str(), r.mm);
        out += line;
    }
    return out;
}

std::string truth_csv(const std::map<KeyId, std::vector<action::GroundTruthEvents>>& truth) {
    std::string out = "key,event,t_s,displacement_mm\n";
    char line[128];
    for (const auto& [key, notes] : truth) {
        const auto name = to_string(key);
        for (const auto& n : notes) {
            for (std::size_t i = 0; i < n.pluck_times_s.size(); ++i) {
                std::snprintf(line, sizeof line, "%s,pluck,%.6f,%.6f\n", name.c_str(), n.pluck_times_s[i],
                              n.pluck_displacements_mm[i]);
                out += line;
            }
            if (n.strike_time_s) {
                std::snprintf(line, sizeof line, "%s,strike,%.6f,%.6f\n", name.c_str(), *n.strike_time_s,
                              n.pluck_displacements_mm.back());
                out += line;
            }
            if (n.release_cross_time_s) {
                std::snprintf(line, sizeof line, "%s,release_cross,%.6f,%.6f\n", name.c_str(), *n.release_cross_time_s,
                              n.pluck_displacements_mm.back());
                out += line;
            }
        }
    }
    return out;
}

ReplayResult replay(const bus::Capture& capture, host::Session& session) {
    ReplayResult out;
    const auto saved = session.mode();
    session.reset_runtime();
    session.set_mode({});
    bus::Decoder decoder;
    const auto start_us = static_cast<std::uint32_t>(std::llround(capture.t0_s * 1e6));
    auto tally = [&] {
        out.frames += decoder.stats().frames_ok;
        out.bad_frames += decoder.stats().dropped();
    };
    for (const auto& chunk : capture.chunks) {
        if (chunk.reset) {
            tally();
            decoder = bus::Decoder{};
            session.reset_runtime();
            continue;
        }
        for (const auto& r : decoder.feed(chunk.bytes)) {
            if (!(r.address & bus::kHostBound)) continue;
            const auto src = static_cast<std::uint8_t>(r.address & ~bus::kHostBound);
            if (const auto* raw = std::get_if<bus::KeyEventRaw>(&r.message)) {
                if (auto ev = session.aggregate(src, *raw)) {
                    ev->t_s -= capture.t0_s;
                    out.events.push_back(*ev);
                }
            } else if (const auto* batch = std::get_if<bus::PositionBatch>(&r.message)) {
                bus::PositionBatch kept{batch->kind, {}};
                for (const auto& e : batch->samples) {
                    if (e.t_us >= start_us) kept.samples.push_back(e);
                }
                if (!kept.samples.empty()) out.stream.push_back({src, std::move(kept)});
            }
        }
    }
    tally();
    session.reset_runtime();
    session.set_mode(saved);
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const host::KeyEvent& a, const host::KeyEvent& b) { return a.t_s < b.t_s; });
    return out;
}

}  // namespace photon::io
