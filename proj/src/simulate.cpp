#include "photon/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "photon/error.hpp"

namespace photon::sim {
namespace {

constexpr std::string_view kModule = "sim";

void run_until(host::HostController& host, double t_s) {
    while (host.now() < t_s) host.pump(t_s - host.now());
}

/// Splits keys so no board streams more than its subset limit at once.
std::vector<std::vector<KeyId>> stream_groups(const host::Session& session, const std::vector<KeyId>& keys) {
    std::vector<std::vector<KeyId>> groups;
    std::vector<std::map<std::uint8_t, std::size_t>> load;
    for (const auto& k : keys) {
        const auto ref = session.sensor_of(k);
        if (!ref) throw ConfigError(kModule, "score key " + to_string(k) + " is not on any board");
        std::size_t g = 0;
        while (g < groups.size() && load[g][ref->address] >= bus::kMaxSubset) ++g;
        if (g == groups.size()) {
            groups.emplace_back();
            load.emplace_back();
        }
        groups[g].push_back(k);
        ++load[g][ref->address];
    }
    return groups;
}

}  // namespace

RigOptions rig_options(const io::SessionFile& file, std::uint64_t seed) {
    RigOptions o;
    o.wire = file.wire;
    o.seed = seed;
    o.default_model = file.sensor_model;
    o.models = file.sensor_overrides;
    return o;
}

void bring_up(host::HostController& host) {
    host.verify_roster();
    host.push_thresholds();
    host.push_all_calibration();
    host.apply_mode(host.session().mode());
}

host::CalibrationRun calibrate_scripted(io::SessionFile& file, const std::vector<KeyId>& keys, std::uint64_t seed,
                                        const host::CapturePlan& plan, const host::RunOptions& run) {
    KeyWorld world;
    Rig rig(file.session, rig_options(file, seed), &world);
    auto& session = file.session;
    session.reset_runtime();
    host::HostController host(rig.host(), session);
    host.verify_roster();
    host.push_thresholds();
    ScriptedFixture fixture(world);
    auto result = host::calibrate_keys(host, fixture, keys, plan, run);
    session.reset_runtime();
    return result;
}

std::optional<double> crossing(const action::Trajectory& trajectory, double level, bool rising, double from_s,
                               double to_s) {
    constexpr double kStep = 50e-6;
    auto above = [&](double t) { return trajectory.position(t) >= level; };
    double prev = from_s;
    bool prev_above = above(prev);
    for (double t = from_s + kStep; prev < to_s; t += kStep) {
        t = std::min(t, to_s);
        const bool a = above(t);
        if (a != prev_above && a == rising) {
            double lo = prev, hi = t;
            for (int i = 0; i < 50; ++i) {
                const double mid = 0.5 * (lo + hi);
                (above(mid) == rising ? hi : lo) = mid;
            }
            return hi;
        }
        prev = t;
        prev_above = a;
    }
    return std::nullopt;
}

SimulationResult simulate(const io::SessionFile& input, const std::vector<action::ScoreEntry>& score,
                          const SimulationOptions& opt) {
    SimulationResult res;
    res.file = input;
    auto& s = res.file.session;
    auto& rep = res.report;
    rep.action = io::action_to_name(s.action);
    rep.gestures = static_cast<int>(score.size());
    if (s.capturing()) throw ValidationError(kModule, "session has an open capture");

    res.truth = action::scripted_performance(s.action, score, s.compass, opt.stream_rate_hz, opt.seed);
    std::vector<KeyId> keys;
    double t_end = 0.0;
    for (const auto& [k, track] : res.truth) {
        keys.push_back(k);
        for (const auto& n : track.notes) t_end = std::max(t_end, n.end_s);
    }

    std::vector<KeyId> missing;
    for (const auto& k : keys) {
        if (!s.calibration.contains(k)) missing.push_back(k);
    }
    if (opt.calibrate_missing && !missing.empty()) {
        const auto run = calibrate_scripted(res.file, missing, opt.seed ^ 0xCA11B7A7EULL);
        if (!run.failures.empty()) {
            throw CalibrationError(kModule, "calibration of " + to_string(run.failures.front().first) +
                                                " failed: " + run.failures.front().second);
        }
        rep.calibrated_before_run = run.calibrated;
    }

    KeyWorld world;
    world.add_performance(res.truth);
    auto ro = rig_options(res.file, opt.seed);
    ro.parallel = opt.parallel;
    ro.reverse_chain = opt.reverse_chain;
    const auto saved_mode = s.mode();

    // MIDI pass.
    double offset = 0.0;
    {
        Rig rig(s, ro, &world);
        s.reset_runtime();
        s.set_mode({});
        bus::RecordingTransport port(rig.host());
        port.set_sink(opt.record);
        host::HostController host(port, s);
        std::vector<host::KeyEvent> events;
        host.on_key_event = [&](const host::KeyEvent& e) { events.push_back(e); };
        // Keys stay at rest until the performance is placed after bring-up.
        world.set_offset(1e9);
        bring_up(host);
        // Round the performance start up to 10 ms, with room for the stream
        // pass's longer bring-up.
        offset = std::ceil((host.now() + opt.lead_s) / 0.01) * 0.01 + 0.02;
        world.set_offset(offset);
        if (opt.record) opt.record->t0_s = offset;
        run_until(host, offset + t_end + opt.tail_s);
        for (auto e : events) {
            e.t_s -= offset;
            res.events.push_back(e);
        }
        rep.stuck_notes = s.stats().stuck_notes;
        rep.orphan_offs = s.stats().orphan_offs;
        rep.silent_register = s.stats().silent_register;
        rep.bad_frames += host.decoder_stats().dropped();
    }
    std::stable_sort(res.events.begin(), res.events.end(),
                     [](const host::KeyEvent& a, const host::KeyEvent& b) { return a.t_s < b.t_s; });
    midi::SmfDiagnostics diag;
    (void)midi::smf_bytes(res.events, res.file.route, {}, &diag);
    rep.compensating_offs = diag.compensating_offs;

    // Position-stream pass, as many runs as the subset limit needs.
    res.stream_offset_s = offset;
    if (!opt.midi_only && !keys.empty()) {
        std::map<KeyId, std::vector<std::pair<double, double>>> frames;
        for (const auto& group : stream_groups(s, keys)) {
            Rig rig(s, ro, &world);
            s.reset_runtime();
            s.set_mode({host::HostModeKind::position_stream, group, opt.stream_rate_hz});
            if (opt.record) opt.record->mark_reset();
            bus::RecordingTransport port(rig.host());
            port.set_sink(opt.record);
            host::HostController host(port, s);
            // Samples before the performance's time zero are bring-up pre-roll.
            const auto start_us = static_cast<std::uint32_t>(std::llround(offset * 1e6));
            host.on_batch = [&](std::uint8_t address, const bus::PositionBatch& b) {
                bus::PositionBatch kept{b.kind, {}};
                for (const auto& e : b.samples) {
                    if (e.t_us >= start_us) kept.samples.push_back(e);
                }
                if (!kept.samples.empty()) res.stream.push_back({address, std::move(kept)});
            };
            host.on_position = [&](const host::PositionFrame& f) {
                if (f.t_s < offset) return;
                frames[f.key].emplace_back(f.t_s - offset, f.displacement_mm);
                ++rep.stream_frames;
            };
            bring_up(host);
            if (host.now() > offset) throw Error(kModule, "stream bring-up overran the performance start");
            run_until(host, offset + t_end + opt.tail_s);
            rep.bad_frames += host.decoder_stats().dropped();
        }
        for (auto& [k, f] : frames) {
            std::sort(f.begin(), f.end());
            action::DisplacementTrace tr;
            tr.rate_hz = opt.stream_rate_hz;
            tr.t0_s = f.front().first;
            for (const auto& p : f) tr.samples_mm.push_back(p.second);
            res.features[k] = host::detect_pluck_features(tr, s.detection);
            res.traces[k] = std::move(tr);
        }
    }
    s.reset_runtime();
    s.set_mode(saved_mode);

    // Comparison against ground truth.
    const bool sounding_action = !s.action.pluck_points_mm.empty();
    const auto& d = s.detection;
    for (const auto& [k, track] : res.truth) {
        const auto& feats = res.features[k];
        std::vector<bool> used(feats.size(), false);
        rep.detected_features += static_cast<int>(feats.size());
        std::vector<const host::KeyEvent*> key_events;
        for (const auto& e : res.events) {
            if (e.id() == k) key_events.push_back(&e);
        }
        for (const auto& n : track.notes) {
            NoteReport nr;
            nr.key = k;
            nr.onset_s = n.onset_s;
            nr.truth_plucks_mm = n.pluck_displacements_mm;
            for (std::size_t i = 0; i < n.pluck_times_s.size(); ++i) {
                ++rep.truth_plucks;
                for (std::size_t j = 0; j < feats.size(); ++j) {
                    if (used[j]) continue;
                    if (std::abs(feats[j].t_s - n.pluck_times_s[i]) <= opt.pluck_time_tolerance_s &&
                        std::abs(feats[j].displacement_mm - n.pluck_displacements_mm[i]) <= opt.pluck_tolerance_mm) {
                        used[j] = true;
                        ++nr.matched_plucks;
                        ++rep.matched_plucks;
                        break;
                    }
                }
            }
            for (const auto& f : feats) {
                if (f.t_s >= n.onset_s && f.t_s <= n.end_s) nr.detected_plucks_mm.push_back(f.displacement_mm);
            }

            const auto on_from = crossing(track.trajectory, d.on_window.from_mm, true, n.onset_s, n.end_s);
            nr.truth_on_s = crossing(track.trajectory, d.on_window.to_mm, true, n.onset_s, n.end_s);
            if (nr.truth_on_s) {
                const auto off_from = crossing(track.trajectory, d.off_window.from_mm, false, *nr.truth_on_s, n.end_s);
                nr.truth_off_s = crossing(track.trajectory, d.off_window.to_mm, false, *nr.truth_on_s, n.end_s);
                if (on_from) nr.truth_on_velocity = host::velocity_from_time(s.velocity, *nr.truth_on_s - *on_from);
                if (off_from && nr.truth_off_s) {
                    nr.truth_off_velocity = host::velocity_from_time(s.velocity, *nr.truth_off_s - *off_from);
                }
            }
            const host::KeyEvent* on = nullptr;
            const host::KeyEvent* off = nullptr;
            for (const auto* e : key_events) {
                if (!on && e->kind == host::KeyEvent::Kind::note_on && e->t_s >= n.onset_s && e->t_s <= n.end_s) on = e;
                if (on && !off && e->kind == host::KeyEvent::Kind::note_off && e->t_s >= on->t_s) off = e;
            }
            if (on) {
                nr.detected_on_s = on->t_s;
                nr.on_velocity = on->velocity;
            }
            if (off) {
                nr.detected_off_s = off->t_s;
                nr.off_velocity = off->velocity;
            }
            if (sounding_action && nr.truth_on_s) {
                ++rep.truth_notes;
                if (on && off && nr.truth_off_s) {
                    ++rep.matched_notes;
                    rep.max_on_delta_s = std::max(rep.max_on_delta_s, std::abs(on->t_s - *nr.truth_on_s));
                    rep.max_off_delta_s = std::max(rep.max_off_delta_s, std::abs(off->t_s - *nr.truth_off_s));
                    rep.max_velocity_delta = std::max({rep.max_velocity_delta, std::abs(on->velocity - nr.truth_on_velocity),
                                                       std::abs(off->velocity - nr.truth_off_velocity)});
                }
            }
            rep.notes.push_back(std::move(nr));
        }
    }
    for (const auto& e : res.events) {
        (e.kind == host::KeyEvent::Kind::note_on ? rep.note_ons : rep.note_offs) += 1;
    }
    rep.unmatched_features = rep.detected_features - rep.matched_plucks;
    return res;
}

std::string SimulationReport::to_json() const {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json notes_j = json::array();
    for (const auto& n : notes) {
        notes_j.push_back({{"key", to_string(n.key)},
                           {"onset_s", n.onset_s},
                           {"truth_on_s", opt(n.truth_on_s)},
                           {"detected_on_s", opt(n.detected_on_s)},
                           {"truth_off_s", opt(n.truth_off_s)},
                           {"detected_off_s", opt(n.detected_off_s)},
                           {"truth_on_velocity", n.truth_on_velocity},
                           {"on_velocity", n.on_velocity},
                           {"truth_off_velocity", n.truth_off_velocity},
                           {"off_velocity", n.off_velocity},
                           {"truth_plucks_mm", n.truth_plucks_mm},
                           {"detected_plucks_mm", n.detected_plucks_mm},
                           {"matched_plucks", n.matched_plucks}});
    }
    json doc = {{"action", action},
                {"gestures", gestures},
                {"plucks",
                 {{"truth", truth_plucks},
                  {"matched", matched_plucks},
                  {"detected", detected_features},
                  {"unmatched", unmatched_features},
                  {"recall", recall()}}},
                {"notes",
                 {{"truth", truth_notes},
                  {"note_ons", note_ons},
                  {"note_offs", note_offs},
                  {"matched", matched_notes},
                  {"stuck", stuck_notes},
                  {"orphan_offs", orphan_offs},
                  {"silent_register", silent_register},
                  {"compensating_offs", compensating_offs},
                  {"max_on_delta_s", max_on_delta_s},
                  {"max_off_delta_s", max_off_delta_s},
                  {"max_velocity_delta", max_velocity_delta}}},
                {"calibrated_before_run", calibrated_before_run},
                {"stream_frames", stream_frames},
                {"bad_frames", bad_frames},
                {"gesture_detail", notes_j}};
    return doc.dump(2) + "\n";
}

}  // namespace photon::sim
