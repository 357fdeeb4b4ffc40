#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "photon/capture.hpp"
#include "photon/error.hpp"
#include "photon/host_controller.hpp"
#include "photon/rig.hpp"
#include "photon/simulate.hpp"

using namespace photon;
using namespace photon::host;

namespace {

void run_until(HostController& h, double t) {
    while (h.now() < t) h.pump(t - h.now());
}

CalibrationEntry nominal(int sensor) {
    const std::vector<double> rest(24, 3800), full(24, 2310);
    return calibrate_sensor(sensor, rest, full);
}

struct Bench {
    explicit Bench(std::uint64_t seed = 1, bool reverse = false) : session(Session::standard()) {
        sim::RigOptions o;
        o.seed = seed;
        o.reverse_chain = reverse;
        rig = std::make_unique<sim::Rig>(session, o, &world);
        host = std::make_unique<HostController>(rig->host(), session);
    }
    sim::KeyWorld world;
    Session session;
    std::unique_ptr<sim::Rig> rig;
    std::unique_ptr<HostController> host;
};

// Holds selected keys near rest whatever position is asked for.
class BlockedFixture : public Fixture {
public:
    explicit BlockedFixture(sim::KeyWorld& w) : world_(w) {}
    bool position(const KeyId& k, double mm, const std::string&) override {
        world_.hold(k, blocked.contains(k) ? std::min(mm, 0.02) : mm);
        return true;
    }
    void release(const KeyId& k) override { world_.release(k); }
    std::set<KeyId> blocked;

private:
    sim::KeyWorld& world_;
};

std::vector<KeyId> first_keys(int n) {
    std::vector<KeyId> v;
    for (int i = 0; i < n; ++i) v.push_back({1, i});
    return v;
}

}  // namespace

TEST(Controller, StatusFromAddressedBoardOnly) {
    Bench b;
    const auto s = b.host->status(3);
    EXPECT_EQ(s.address, 3);
    EXPECT_EQ(s.board_id, "photon-03");
    EXPECT_EQ(s.sensor_count, 24);
    EXPECT_EQ(b.host->stats().unexpected, 0u);
}

TEST(Controller, VerifyRosterDetectsMismatch) {
    Bench b;
    EXPECT_NO_THROW(b.host->verify_roster());
    b.session.roster[4].sensor_count = 23;
    b.session.roster[4].keys.pop_back();
    EXPECT_THROW(b.host->verify_roster(), Error);
}

TEST(Controller, EnumerationSameUnderReversedChain) {
    Bench fwd(1, false), rev(1, true);
    const auto a = fwd.host->enumerate();
    EXPECT_EQ(a.size(), 5u);
    EXPECT_EQ(a, rev.host->enumerate());
}

TEST(Controller, PollReadsHeldKey) {
    Bench b;
    b.world.hold({1, 5}, 9.0);
    const auto s = b.host->poll(1, {5, 4});
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].sensor_id, 4);
    EXPECT_EQ(s[1].sensor_id, 5);
    EXPECT_GT(s[0].value, s[1].value + 1000);
}

TEST(Controller, StreamsAtLeast250FramesPerSecond) {
    Bench b;
    b.session.calibration[{1, 7}] = nominal(7);
    sim::bring_up(*b.host);
    std::vector<PositionFrame> frames;
    b.host->on_position = [&](const PositionFrame& f) { frames.push_back(f); };
    b.host->apply_mode({HostModeKind::position_stream, {{1, 7}}, 250});
    const double t0 = b.host->now();
    run_until(*b.host, t0 + 1.1);
    std::size_t in_window = 0;
    for (const auto& f : frames) {
        EXPECT_EQ(f.key, (KeyId{1, 7}));
        if (f.t_s >= t0 && f.t_s < t0 + 1.0) ++in_window;
    }
    EXPECT_GE(in_window, 250u);
}

TEST(Controller, LeavingMidiClosesSoundingNotes) {
    Bench b;
    b.session.calibration[{1, 0}] = nominal(0);
    sim::bring_up(*b.host);
    std::vector<KeyEvent> events;
    b.host->on_key_event = [&](const KeyEvent& e) { events.push_back(e); };
    b.world.hold({1, 0}, 9.0);
    run_until(*b.host, b.host->now() + 0.05);
    ASSERT_EQ(events.size(), 1u);
    EXPECT_EQ(events[0].kind, KeyEvent::Kind::note_on);
    b.host->apply_mode({HostModeKind::position_stream, {{1, 0}}, 250});
    ASSERT_EQ(events.size(), 2u);
    EXPECT_EQ(events[1].kind, KeyEvent::Kind::note_off);
    EXPECT_EQ(events[1].velocity, 1);
    // Streaming: the release produces no MIDI.
    b.world.release({1, 0});
    run_until(*b.host, b.host->now() + 0.1);
    EXPECT_EQ(events.size(), 2u);
}

TEST(Controller, UncalibratedKeyEventsCountedOnBoard) {
    Bench b;
    sim::bring_up(*b.host);
    std::vector<KeyEvent> events;
    b.host->on_key_event = [&](const KeyEvent& e) { events.push_back(e); };
    b.world.hold({1, 2}, 9.0);
    run_until(*b.host, b.host->now() + 0.05);
    b.world.release({1, 2});
    run_until(*b.host, b.host->now() + 0.05);
    EXPECT_TRUE(events.empty());
    EXPECT_EQ(b.host->status(1).suppressed_events, 2u);
}

TEST(Controller, ModeChangeDuringCaptureRejected) {
    Bench b;
    sim::bring_up(*b.host);
    KeyCapture cap(*b.host, {1, 1});
    EXPECT_THROW(b.host->apply_mode({HostModeKind::position_stream, {{1, 1}}, 250}), ValidationError);
    EXPECT_EQ(b.session.mode().kind, HostModeKind::midi);
}

TEST(Capture, StepsInOrderAndCommit) {
    Bench b;
    sim::bring_up(*b.host);
    sim::ScriptedFixture fx(b.world);
    const KeyId key{2, 10};
    {
        KeyCapture cap(*b.host, key);
        EXPECT_TRUE(b.session.capturing());
        EXPECT_THROW(cap.capture_full(), ValidationError);
        const double rest = cap.capture_rest();
        fx.position(key, 9.0, "full");
        const double full = cap.capture_full();
        EXPECT_GT(rest, full + 1000);
        for (double mm : {2.25, 4.5, 6.75}) {
            fx.position(key, mm, "anchor");
            cap.capture_anchor(mm);
        }
        fx.release(key);
        const auto e = cap.commit();
        EXPECT_EQ(cap.phase(), KeyCapture::Phase::done);
        EXPECT_EQ(e.anchors.size(), 3u);
        EXPECT_EQ(displacement(e, e.raw_rest), 0.0);
        EXPECT_EQ(displacement(e, e.raw_full), 9.0);
    }
    EXPECT_FALSE(b.session.capturing());
    ASSERT_TRUE(b.session.calibration.contains(key));
    const auto ref = *b.session.sensor_of(key);
    EXPECT_TRUE(b.rig->board(ref.address).calibrated(ref.sensor));
}

TEST(Capture, SmallSpanStaysAtFullPhase) {
    Bench b;
    sim::bring_up(*b.host);
    KeyCapture cap(*b.host, {1, 3});
    cap.capture_rest();
    b.world.hold({1, 3}, 0.02);
    EXPECT_THROW(cap.capture_full(), CalibrationError);
    EXPECT_EQ(cap.phase(), KeyCapture::Phase::full);
    b.world.hold({1, 3}, 9.0);
    EXPECT_NO_THROW(cap.capture_full());
    EXPECT_EQ(cap.phase(), KeyCapture::Phase::anchor);
}

TEST(Capture, AbandonedCaptureLeavesSessionUntouched) {
    Bench b;
    sim::bring_up(*b.host);
    const auto before = b.session.calibration;
    {
        KeyCapture cap(*b.host, {1, 3});
        cap.capture_rest();
        b.world.hold({1, 3}, 9.0);
        cap.capture_full();
    }
    EXPECT_FALSE(b.session.capturing());
    EXPECT_EQ(b.session.calibration, before);
}

TEST(Calibrate, BlockedKeyFailsAndKeepsPreviousEntry) {
    Bench b;
    sim::bring_up(*b.host);
    BlockedFixture fx(b.world);
    const KeyId key{1, 4};
    b.session.calibration[key] = nominal(4);
    fx.blocked.insert(key);
    EXPECT_THROW(calibrate_key(*b.host, fx, key, {}), CalibrationError);
    EXPECT_EQ(b.session.calibration.at(key), nominal(4));
    EXPECT_FALSE(b.session.capturing());
}

TEST(Calibrate, ScriptedFullInstrument122Entries) {
    io::SessionFile f;
    const auto run = sim::calibrate_scripted(f, [] {
        std::vector<KeyId> all;
        for (int i = 0; i < 122; ++i) all.push_back(Compass{}.key_at(i));
        return all;
    }(), 3);
    EXPECT_EQ(run.calibrated, 122);
    EXPECT_TRUE(run.failures.empty());
    ASSERT_EQ(f.session.calibration.size(), 122u);
    for (const auto& [k, e] : f.session.calibration) {
        EXPECT_EQ(displacement(e, e.raw_rest), 0.0);
        EXPECT_EQ(displacement(e, e.raw_full), 9.0);
        EXPECT_EQ(e.sensor_id, f.session.sensor_of(k)->sensor);
    }
    EXPECT_NO_THROW(f.session.validate());
}

TEST(Calibrate, InterruptThenResumeKeepsEarlierKeys) {
    io::SessionFile f;
    const auto keys = first_keys(20);
    RunOptions stop;
    stop.limit = 10;
    const auto first = sim::calibrate_scripted(f, keys, 4, {}, stop);
    EXPECT_TRUE(first.interrupted);
    EXPECT_EQ(first.calibrated, 10);
    const auto after_first = f.session.calibration;
    ASSERT_EQ(after_first.size(), 10u);

    RunOptions resume;
    resume.resume = true;
    const auto second = sim::calibrate_scripted(f, keys, 5, {}, resume);
    EXPECT_EQ(second.skipped, 10);
    EXPECT_EQ(second.calibrated, 10);
    EXPECT_EQ(f.session.calibration.size(), 20u);
    for (const auto& [k, e] : after_first) EXPECT_EQ(f.session.calibration.at(k), e) << to_string(k);
}

TEST(Calibrate, RecalibratingOneKeyChangesOnlyThatEntry) {
    io::SessionFile f;
    sim::calibrate_scripted(f, first_keys(6), 6);
    const auto before = f.session.calibration;
    sim::calibrate_scripted(f, {{1, 3}}, 7);
    for (const auto& [k, e] : before) {
        if (k == KeyId{1, 3}) {
            EXPECT_NE(f.session.calibration.at(k), e);
        } else {
            EXPECT_EQ(f.session.calibration.at(k), e);
        }
    }
}
