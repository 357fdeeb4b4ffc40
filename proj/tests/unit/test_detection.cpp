#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "photon/calibration.hpp"
#include "photon/detection.hpp"
#include "photon/error.hpp"
#include "photon/optics.hpp"

using namespace photon;
using namespace photon::host;

namespace {

action::GestureSpec gesture(double press) {
    action::GestureSpec g;
    g.press_duration_s = press;
    g.hold_s = 0.1;
    g.release_duration_s = 0.06;
    return g;
}

// Ground truth -> default optics -> calibrated displacement, as the host sees it.
action::DisplacementTrace sensed(const action::DisplacementTrace& truth, std::uint64_t seed) {
    const optics::SensorModel m;
    std::vector<Anchor> anchors;
    for (double mm : {2.25, 4.5, 6.75}) anchors.push_back({optics::expected_counts_at_displacement(m, mm), mm});
    const std::vector<double> rest(24, optics::expected_counts_at_displacement(m, 0));
    const std::vector<double> full(24, optics::expected_counts_at_displacement(m, 9));
    const auto entry = calibrate_sensor(0, rest, full, anchors);
    std::mt19937_64 rng(seed);
    auto out = truth;
    for (auto& x : out.samples_mm) x = displacement(entry, optics::sample(m, x, rng).counts);
    return out;
}

}  // namespace

TEST(Velocity, ClampEndpoints) {
    VelocityCurve c;
    EXPECT_EQ(velocity_from_time(c, 0.001), 127);
    EXPECT_EQ(velocity_from_time(c, c.t_min_s), 127);
    EXPECT_EQ(velocity_from_time(c, c.t_max_s), 1);
    EXPECT_EQ(velocity_from_time(c, 5.0), 1);
}

TEST(Velocity, MidpointClosedForm) {
    VelocityCurve c;
    c.t_min_s = 0.005;
    c.t_max_s = 0.105;
    c.v_min = 1;
    c.v_max = 127;
    // u = (0.105 - 0.055) / 0.1 = 0.5; 1 + 0.5 * 126 = 64.
    EXPECT_EQ(velocity_from_time(c, 0.055), 64);
}

TEST(Velocity, NonPositiveTraversalRejected) {
    EXPECT_THROW(velocity_from_time(VelocityCurve{}, 0.0), ValidationError);
    EXPECT_THROW(velocity_from_time(VelocityCurve{}, -1e-3), ValidationError);
}

TEST(Velocity, GammaOneEqualsLinear) {
    VelocityCurve lin, gam;
    gam.shape = CurveShape::gamma;
    gam.gamma = 1.0;
    for (int i = 0; i <= 10; ++i) {
        const double t = lin.t_min_s + i * (lin.t_max_s - lin.t_min_s) / 10;
        EXPECT_EQ(velocity_from_time(lin, t), velocity_from_time(gam, t)) << t;
    }
}

TEST(Velocity, MonotoneForLinearAndGamma) {
    for (double g : {1.0, 0.5, 2.0, 3.0}) {
        VelocityCurve c;
        c.shape = g == 1.0 ? CurveShape::linear : CurveShape::gamma;
        c.gamma = g;
        int prev = 128;
        for (double t = 1e-4; t < 0.2; t += 1e-4) {
            const int v = velocity_from_time(c, t);
            ASSERT_LE(v, prev) << "gamma " << g << " t " << t;
            ASSERT_GE(v, 1);
            ASSERT_LE(v, 127);
            prev = v;
        }
    }
}

// Strict decrease between the clamp bounds, at the spacing the output
// quantization can resolve: one velocity step of the linear curve.
TEST(Velocity, StrictInsideClampAtResolvableSpacing) {
    VelocityCurve c;
    const double step = (c.t_max_s - c.t_min_s) / (c.v_max - c.v_min);
    for (double t = c.t_min_s; t + step <= c.t_max_s + 1e-12; t += step) {
        EXPECT_GT(velocity_from_time(c, t), velocity_from_time(c, t + step)) << t;
    }
}

TEST(Velocity, InvalidCurvesRejected) {
    VelocityCurve c;
    c.t_min_s = 0.2;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.v_min = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.v_max = 128;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.v_min = 64;
    c.v_max = 64;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(DetectionConfig, InvalidWindowsRejected) {
    DetectionConfig c;
    c.on_window = {5.5, 4.5};
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.rearm_mm = 5.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = {};
    c.on_window = {4.5, 9.5};
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Window, MonotonePressGivesOneOnEvent) {
    WindowDetector d;
    std::vector<WindowEvent> ev;
    for (int i = 0; i <= 900; ++i) {
        if (auto e = d.update(i * 1e-3, i * 0.01)) ev.push_back(*e);
    }
    ASSERT_EQ(ev.size(), 1u);
    EXPECT_EQ(ev[0].kind, EdgeKind::on);
    EXPECT_GT(ev[0].exit_s - ev[0].entry_s, 0.0);
    // 4.5 mm at 450 ms, 5.5 mm at 550 ms.
    EXPECT_NEAR(ev[0].entry_s, 0.45, 1e-9);
    EXPECT_NEAR(ev[0].exit_s, 0.55, 1e-9);
}

TEST(Window, PressAndReleaseAlternate) {
    WindowDetector d;
    std::vector<WindowEvent> ev;
    double t = 0;
    for (int rep = 0; rep < 5; ++rep) {
        for (int i = 0; i <= 90; ++i, t += 1e-3) {
            if (auto e = d.update(t, i * 0.1)) ev.push_back(*e);
        }
        for (int i = 90; i >= 0; --i, t += 1e-3) {
            if (auto e = d.update(t, i * 0.1)) ev.push_back(*e);
        }
    }
    ASSERT_EQ(ev.size(), 10u);
    for (std::size_t i = 0; i < ev.size(); ++i) {
        EXPECT_EQ(ev[i].kind, i % 2 == 0 ? EdgeKind::on : EdgeKind::off);
        EXPECT_GT(ev[i].exit_s, ev[i].entry_s);
    }
}

TEST(Window, JitterAroundEdgeIsSilent) {
    WindowDetector d;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    int events = 0;
    d.update(0, 0);
    for (int i = 1; i < 10000; ++i) {
        if (d.update(i * 1e-3, 5.5 + u(rng))) ++events;
    }
    // Crossing 5.5 from armed means a press happened.
    EXPECT_LE(events, 1);
    WindowDetector e;
    events = 0;
    e.update(0, 0);
    for (int i = 1; i < 10000; ++i) {
        if (e.update(i * 1e-3, 4.5 + u(rng))) ++events;
    }
    EXPECT_EQ(events, 0);
}

TEST(Window, KeyHeldAtPowerUpNeverFires) {
    WindowDetector d;
    int events = 0;
    for (int i = 0; i < 100; ++i) {
        if (d.update(i * 1e-3, 9.0)) ++events;
    }
    for (int i = 0; i < 100; ++i) {
        if (d.update(0.1 + i * 1e-3, 9.0 - 0.09 * i)) ++events;
    }
    EXPECT_EQ(events, 0);
    EXPECT_EQ(d.state(), WindowDetector::State::armed);
}

TEST(Pluck, DisengagedIsFeatureless) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = action::simulate_keystroke(action::ActionConfig::disengaged(), gesture(0.08 + 0.004 * seed), 250,
                                                  seed);
        EXPECT_TRUE(detect_pluck_features(sensed(r.trace, seed)).empty()) << seed;
    }
}

TEST(Pluck, SingleManualFeatureNearPluck) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r =
            action::simulate_keystroke(action::ActionConfig::single_manual(), gesture(0.08 + 0.004 * seed), 250, seed);
        const auto f = detect_pluck_features(sensed(r.trace, seed));
        ASSERT_EQ(f.size(), 1u) << seed;
        EXPECT_NEAR(f[0].displacement_mm, 5.5, 0.5);
        EXPECT_GE(f[0].slope_ratio, 1.2);
    }
}

TEST(Pluck, DoubleManualTwoFeaturesInOrder) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r =
            action::simulate_keystroke(action::ActionConfig::double_manual(), gesture(0.08 + 0.004 * seed), 250, seed);
        const auto f = detect_pluck_features(sensed(r.trace, seed));
        ASSERT_EQ(f.size(), 2u) << seed;
        EXPECT_NEAR(f[0].displacement_mm, 5.5, 0.5);
        EXPECT_NEAR(f[1].displacement_mm, 7.0, 0.5);
        EXPECT_LT(f[0].t_s, f[1].t_s);
    }
}

TEST(Pluck, AtMostOneFeaturePerMillimetre) {
    const auto r = action::simulate_keystroke(action::ActionConfig::double_manual(), gesture(0.1), 250, 4);
    const auto f = detect_pluck_features(r.trace);
    for (std::size_t i = 1; i < f.size(); ++i) EXPECT_GE(f[i].displacement_mm - f[i - 1].displacement_mm, 1.0);
}

TEST(Pluck, EmptyTrace) {
    EXPECT_TRUE(detect_pluck_features(action::DisplacementTrace{}).empty());
}
