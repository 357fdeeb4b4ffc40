#include <gtest/gtest.h>

#include "photon/error.hpp"
#include "photon/io.hpp"
#include "photon/simulate.hpp"

using namespace photon;

namespace {

std::string data(const std::string& name) { return std::string(PHOTON_DATA_DIR) + "/" + name; }

io::SessionFile demo_session() { return io::load_session(data("demo_session.json")); }
std::vector<action::ScoreEntry> demo_score() { return io::load_score(data("demo_score.json")).entries; }

bool same_events(const std::vector<host::KeyEvent>& a, const std::vector<host::KeyEvent>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].kind != b[i].kind || a[i].id() != b[i].id() || a[i].t_s != b[i].t_s || a[i].velocity != b[i].velocity) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST(Simulate, DemoScorePlaysEveryNote) {
    const auto r = sim::simulate(demo_session(), demo_score(), {.seed = 7});
    const auto& rep = r.report;
    EXPECT_EQ(rep.gestures, 8);
    EXPECT_EQ(rep.truth_notes, 8);
    EXPECT_EQ(rep.matched_notes, 8);
    EXPECT_EQ(rep.note_ons, 8);
    EXPECT_EQ(rep.note_offs, 8);
    EXPECT_EQ(rep.stuck_notes, 0u);
    EXPECT_EQ(rep.orphan_offs, 0u);
    EXPECT_EQ(rep.compensating_offs, 0);
    EXPECT_EQ(rep.calibrated_before_run, 0);
    // One board scan period plus the detector's sample spacing.
    EXPECT_LT(rep.max_on_delta_s, 0.002);
    EXPECT_LT(rep.max_off_delta_s, 0.002);
    EXPECT_LE(rep.max_velocity_delta, 2);
    EXPECT_GT(rep.stream_frames, 0u);
    EXPECT_EQ(rep.bad_frames, 0u);
    EXPECT_EQ(rep.truth_plucks, 8);
    EXPECT_GE(rep.matched_plucks, 8);
}

TEST(Simulate, EventsAlternatePerKey) {
    const auto r = sim::simulate(demo_session(), demo_score(), {.seed = 3, .midi_only = true});
    std::map<KeyId, bool> sounding;
    for (const auto& e : r.events) {
        const bool on = e.kind == host::KeyEvent::Kind::note_on;
        EXPECT_NE(sounding[e.id()], on) << to_string(e.id()) << " at " << e.t_s;
        sounding[e.id()] = on;
    }
    for (const auto& [k, s] : sounding) EXPECT_FALSE(s) << to_string(k);
    EXPECT_TRUE(r.stream.empty());
    EXPECT_TRUE(r.traces.empty());
}

TEST(Simulate, DisengagedProducesNoNotes) {
    auto f = demo_session();
    f.session.action = action::ActionConfig::disengaged();
    const auto r = sim::simulate(f, demo_score(), {.seed = 2});
    EXPECT_TRUE(r.events.empty());
    EXPECT_EQ(r.report.truth_plucks, 0);
    EXPECT_EQ(r.report.detected_features, 0);
    EXPECT_EQ(r.report.truth_notes, 0);
    EXPECT_GT(r.report.silent_register, 0u);
}

TEST(Simulate, DoubleManualFindsTwoPlucksPerGesture) {
    auto f = demo_session();
    f.session.action = action::ActionConfig::double_manual();
    const auto r = sim::simulate(f, demo_score(), {.seed = 4});
    EXPECT_EQ(r.report.truth_plucks, 16);
    EXPECT_EQ(r.report.matched_plucks, 16);
    EXPECT_EQ(r.report.unmatched_features, 0);
}

TEST(Simulate, BitIdenticalReruns) {
    const auto a = sim::simulate(demo_session(), demo_score(), {.seed = 11});
    const auto b = sim::simulate(demo_session(), demo_score(), {.seed = 11});
    EXPECT_TRUE(same_events(a.events, b.events));
    EXPECT_EQ(a.report.to_json(), b.report.to_json());
    EXPECT_EQ(midi::smf_bytes(a.events, a.file.route), midi::smf_bytes(b.events, b.file.route));
    EXPECT_EQ(midi::positions_csv(a.stream, a.file.session, a.stream_offset_s),
              midi::positions_csv(b.stream, b.file.session, b.stream_offset_s));
}

TEST(Simulate, ParallelAndReversedChainMatchSerial) {
    const auto serial = sim::simulate(demo_session(), demo_score(), {.seed = 5, .midi_only = true});
    const auto par = sim::simulate(demo_session(), demo_score(), {.seed = 5, .parallel = true, .midi_only = true});
    const auto rev = sim::simulate(demo_session(), demo_score(), {.seed = 5, .reverse_chain = true, .midi_only = true});
    EXPECT_TRUE(same_events(serial.events, par.events));
    EXPECT_TRUE(same_events(serial.events, rev.events));
}

TEST(Simulate, CalibratesMissingKeys) {
    io::SessionFile f;
    f.session = host::Session::standard();
    const auto r = sim::simulate(f, {{{2, 5}, 0.0, {}}}, {.seed = 1, .midi_only = true});
    EXPECT_EQ(r.report.calibrated_before_run, 1);
    EXPECT_TRUE(r.file.session.calibration.contains({2, 5}));
    EXPECT_EQ(r.report.matched_notes, 1);

    // Without an entry the board suppresses the sensor's events.
    const auto raw = sim::simulate(f, {{{2, 5}, 0.0, {}}}, {.seed = 1, .midi_only = true, .calibrate_missing = false});
    EXPECT_EQ(raw.report.calibrated_before_run, 0);
    EXPECT_TRUE(raw.events.empty());
    EXPECT_FALSE(raw.file.session.calibration.contains({2, 5}));
}

TEST(Simulate, ReplayOfRecordingReproducesEvents) {
    bus::Capture cap;
    const auto r = sim::simulate(demo_session(), demo_score(), {.seed = 9, .record = &cap});
    ASSERT_FALSE(cap.chunks.empty());
    auto f = demo_session();
    const auto back = bus::Capture::from_text(cap.to_text());
    const auto rep = io::replay(back, f.session);
    ASSERT_EQ(rep.events.size(), r.events.size());
    for (std::size_t i = 0; i < r.events.size(); ++i) {
        EXPECT_EQ(rep.events[i].id(), r.events[i].id());
        EXPECT_EQ(rep.events[i].kind, r.events[i].kind);
        EXPECT_EQ(rep.events[i].velocity, r.events[i].velocity);
        EXPECT_NEAR(rep.events[i].t_s, r.events[i].t_s, 1e-6);
    }
    EXPECT_EQ(rep.bad_frames, 0u);
    EXPECT_EQ(f.session.mode(), host::HostMode{});
    EXPECT_EQ(midi::positions_csv(rep.stream, f.session, back.t0_s),
              midi::positions_csv(r.stream, r.file.session, r.stream_offset_s));
}

TEST(Simulate, CrossingRefinesToTheLevel) {
    const auto tracks = action::scripted_performance(action::ActionConfig::single_manual(), {{{1, 0}, 0.0, {}}},
                                                     Compass{}, 250.0, 1);
    const auto& traj = tracks.at({1, 0}).trajectory;
    const auto up = sim::crossing(traj, 5.5, true, 0.0, 1.0);
    ASSERT_TRUE(up.has_value());
    EXPECT_NEAR(traj.position(*up), 5.5, 1e-6);
    const auto down = sim::crossing(traj, 4.5, false, *up, 1.0);
    ASSERT_TRUE(down.has_value());
    EXPECT_GT(*down, *up);
    EXPECT_NEAR(traj.position(*down), 4.5, 1e-6);
    EXPECT_FALSE(sim::crossing(traj, 20.0, true, 0.0, 1.0).has_value());
}
