#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "photon/action_sim.hpp"
#include "photon/error.hpp"

using namespace photon;
using namespace photon::action;

namespace {

GestureSpec gesture(double press = 0.1, ReleaseStyle style = ReleaseStyle::held) {
    GestureSpec g;
    g.press_duration_s = press;
    g.hold_s = 0.1;
    g.release_duration_s = 0.06;
    g.release_style = style;
    return g;
}

double mean_slope(const DisplacementTrace& tr, std::size_t from, std::size_t to) {
    return (tr.samples_mm[to] - tr.samples_mm[from]) * tr.rate_hz / static_cast<double>(to - from);
}

}  // namespace

TEST(ActionConfig, RejectsBadPluckPoints) {
    auto c = ActionConfig::single_manual();
    c.pluck_points_mm = {7.0, 5.5};
    EXPECT_THROW(c.validate(), ValidationError);
    c.pluck_points_mm = {9.0};
    EXPECT_THROW(c.validate(), ValidationError);
    c.pluck_points_mm = {0.0};
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ActionConfig, RejectsDegenerateTravelAndSettling) {
    auto c = ActionConfig::disengaged();
    c.travel_mm = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = ActionConfig::disengaged();
    c.settle_damping = 1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = ActionConfig::disengaged();
    c.settle_freq_hz = 0.0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(ActionConfig, ErrorNamesTheInvariant) {
    auto c = ActionConfig::single_manual();
    c.pluck_points_mm = {6.0, 5.0};
    try {
        c.validate();
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("increasing"), std::string::npos) << e.what();
    }
}

TEST(Gesture, RejectsNonPositivePress) {
    auto g = gesture(0.0);
    EXPECT_THROW(g.validate(), ValidationError);
    g = gesture();
    g.hold_s = -0.01;
    EXPECT_THROW(g.validate(), ValidationError);
    EXPECT_THROW(simulate_keystroke(ActionConfig::single_manual(), gesture(0.0), 250, 1), ValidationError);
}

TEST(Keystroke, DisengagedHasNoPlucks) {
    const auto r = simulate_keystroke(ActionConfig::disengaged(), gesture(0.08), 250, 1);
    EXPECT_TRUE(r.truth.pluck_times_s.empty());
    EXPECT_TRUE(r.truth.pluck_displacements_mm.empty());
    EXPECT_FALSE(r.truth.strike_time_s);
    EXPECT_GT(*std::max_element(r.trace.samples_mm.begin(), r.trace.samples_mm.end()), 8.9);
}

TEST(Keystroke, DoubleManualRecordsExactPluckPoints) {
    const auto r = simulate_keystroke(ActionConfig::double_manual(), gesture(), 250, 3);
    ASSERT_EQ(r.truth.pluck_displacements_mm.size(), 2u);
    EXPECT_EQ(r.truth.pluck_displacements_mm[0], 5.5);
    EXPECT_EQ(r.truth.pluck_displacements_mm[1], 7.0);
    EXPECT_LT(r.truth.pluck_times_s[0], r.truth.pluck_times_s[1]);
    EXPECT_EQ(*r.truth.strike_time_s, r.truth.pluck_times_s[1]);
}

TEST(Keystroke, TruthListsHaveEqualLength) {
    for (const auto& c : {ActionConfig::disengaged(), ActionConfig::single_manual(), ActionConfig::double_manual()}) {
        const auto r = simulate_keystroke(c, gesture(), 250, 5);
        EXPECT_EQ(r.truth.pluck_times_s.size(), r.truth.pluck_displacements_mm.size());
        EXPECT_EQ(r.truth.pluck_times_s.size(), c.pluck_points_mm.size());
    }
}

TEST(Keystroke, TruthTimeLiesOnTheTrajectory) {
    const auto cfg = ActionConfig::double_manual();
    const auto ks = build_keystroke(cfg, gesture(), 9);
    for (std::size_t i = 0; i < ks.truth.pluck_times_s.size(); ++i) {
        EXPECT_NEAR(ks.trajectory.position(ks.truth.pluck_times_s[i]), cfg.pluck_points_mm[i], 1e-9);
    }
}

// Mean slope over the two samples after each crossing exceeds the two before.
TEST(Keystroke, SlopeIncreasesAcrossEveryPluck) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        for (double press : {0.08, 0.12, 0.16}) {
            const auto r = simulate_keystroke(ActionConfig::double_manual(), gesture(press), 250, seed);
            for (double tp : r.truth.pluck_times_s) {
                const auto k = static_cast<std::size_t>(std::floor((tp - r.trace.t0_s) * r.trace.rate_hz));
                ASSERT_GE(k, 2u);
                const double before = mean_slope(r.trace, k - 2, k);
                const double after = mean_slope(r.trace, k + 1, k + 3);
                EXPECT_GT(after, before) << "seed " << seed << " press " << press;
            }
        }
    }
}

TEST(Keystroke, PressPhaseIsMonotone) {
    const auto r = simulate_keystroke(ActionConfig::double_manual(), gesture(), 1000, 2);
    const auto& s = r.trace.samples_mm;
    const auto peak = std::max_element(s.begin(), s.end()) - s.begin();
    for (long i = 1; i <= peak; ++i) EXPECT_GE(s[i], s[i - 1] - 1e-12) << i;
}

TEST(Keystroke, CompleteKeystrokeStartsAndEndsAtRest) {
    for (auto style : {ReleaseStyle::held, ReleaseStyle::rapid}) {
        const auto r = simulate_keystroke(ActionConfig::single_manual(), gesture(0.1, style), 250, 4);
        EXPECT_NEAR(r.trace.samples_mm.front(), 0.0, 1e-3);
        EXPECT_NEAR(r.trace.samples_mm.back(), 0.0, 1e-3);
    }
}

TEST(Keystroke, RapidReleaseRingsBelowRest) {
    const auto cfg = ActionConfig::single_manual();
    const auto held = simulate_keystroke(cfg, gesture(0.1, ReleaseStyle::held), 1000, 4);
    const auto rapid = simulate_keystroke(cfg, gesture(0.1, ReleaseStyle::rapid), 1000, 4);
    const double held_min = *std::min_element(held.trace.samples_mm.begin(), held.trace.samples_mm.end());
    const double rapid_min = *std::min_element(rapid.trace.samples_mm.begin(), rapid.trace.samples_mm.end());
    EXPECT_GE(held_min, -1e-12);
    EXPECT_LT(rapid_min, -0.05);
    EXPECT_GE(rapid_min, -cfg.overshoot_max_mm - 1e-9);
    // More than one sign change after the release: an oscillation, not a dip.
    const auto peak = std::max_element(rapid.trace.samples_mm.begin(), rapid.trace.samples_mm.end());
    int changes = 0;
    for (auto it = peak; it + 1 != rapid.trace.samples_mm.end(); ++it) {
        if (*it < 0 && *(it + 1) >= 0) ++changes;
        if (*it >= 0 && *(it + 1) < 0) ++changes;
    }
    EXPECT_GE(changes, 3);
}

TEST(Keystroke, SamplesStayInBounds) {
    const auto cfg = ActionConfig::double_manual();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = simulate_keystroke(cfg, gesture(0.08, ReleaseStyle::rapid), 250, seed);
        for (double x : r.trace.samples_mm) {
            EXPECT_LE(x, cfg.travel_mm + 1e-9);
            EXPECT_GE(x, -cfg.overshoot_max_mm - 1e-9);
        }
    }
}

TEST(Keystroke, Deterministic) {
    const auto a = simulate_keystroke(ActionConfig::double_manual(), gesture(0.1, ReleaseStyle::rapid), 250, 77);
    const auto b = simulate_keystroke(ActionConfig::double_manual(), gesture(0.1, ReleaseStyle::rapid), 250, 77);
    EXPECT_EQ(a.trace.samples_mm, b.trace.samples_mm);
    EXPECT_EQ(a.truth.pluck_times_s, b.truth.pluck_times_s);
}

TEST(Keystroke, TruthIsRateIndependent) {
    const auto a = simulate_keystroke(ActionConfig::double_manual(), gesture(), 250, 8);
    const auto b = simulate_keystroke(ActionConfig::double_manual(), gesture(), 1000, 8);
    ASSERT_EQ(a.truth.pluck_times_s.size(), b.truth.pluck_times_s.size());
    for (std::size_t i = 0; i < a.truth.pluck_times_s.size(); ++i) {
        EXPECT_LT(std::abs(a.truth.pluck_times_s[i] - b.truth.pluck_times_s[i]), 1.0 / 1000);
    }
}

TEST(Performance, EmptyScoreGivesEmptyMap) {
    EXPECT_TRUE(scripted_performance(ActionConfig::single_manual(), {}, Compass{}, 250, 1).empty());
}

TEST(Performance, StrikesFollowOnsetOrder) {
    std::vector<ScoreEntry> score = {{{1, 10}, 0.3, gesture()}, {{1, 5}, 0.1, gesture()}};
    const auto t = scripted_performance(ActionConfig::single_manual(), score, Compass{}, 250, 1);
    ASSERT_EQ(t.size(), 2u);
    EXPECT_LT(*t.at({1, 5}).notes[0].strike_time_s, *t.at({1, 10}).notes[0].strike_time_s);
}

TEST(Performance, ScaleHasOnePluckCountPerTrace) {
    // Eight quarter notes at 120 BPM.
    std::vector<ScoreEntry> score;
    for (int i = 0; i < 8; ++i) score.push_back({{1, 24 + i}, 0.5 * i, gesture()});
    const auto cfg = ActionConfig::double_manual();
    const auto t = scripted_performance(cfg, score, Compass{}, 250, 1);
    ASSERT_EQ(t.size(), 8u);
    for (const auto& [k, track] : t) {
        ASSERT_EQ(track.notes.size(), 1u);
        EXPECT_EQ(track.notes[0].pluck_times_s.size(), cfg.pluck_points_mm.size());
    }
}

TEST(Performance, SameKeyOverlapRejected) {
    std::vector<ScoreEntry> score = {{{1, 3}, 0.0, gesture()}, {{1, 3}, 0.1, gesture()}};
    EXPECT_THROW(scripted_performance(ActionConfig::single_manual(), score, Compass{}, 250, 1), ValidationError);
}

TEST(Performance, DistinctKeysMayOverlap) {
    std::vector<ScoreEntry> score = {{{1, 3}, 0.0, gesture()}, {{2, 3}, 0.05, gesture()}};
    EXPECT_EQ(scripted_performance(ActionConfig::single_manual(), score, Compass{}, 250, 1).size(), 2u);
}

TEST(Performance, RejectsKeysOutsideCompassAndNegativeOnsets) {
    EXPECT_THROW(scripted_performance(ActionConfig::single_manual(), {{{3, 0}, 0.0, gesture()}}, Compass{}, 250, 1),
                 ValidationError);
    EXPECT_THROW(scripted_performance(ActionConfig::single_manual(), {{{1, 61}, 0.0, gesture()}}, Compass{}, 250, 1),
                 ValidationError);
    EXPECT_THROW(scripted_performance(ActionConfig::single_manual(), {{{1, 0}, -0.1, gesture()}}, Compass{}, 250, 1),
                 ValidationError);
}
