#pragma once

// Ground-truth key-lever trajectories for a plucked keyboard action.
//
// Displacement is measured downward from rest (0 mm) to the keybed
// (travel_mm). A keystroke is assembled from analytic segments: constant-jerk
// acceleration ramps, constant-velocity cruise pieces whose speed steps up each
// time the lever passes a pluck point, a hold at the keybed, and a release that
// either glides to rest or strikes the backrail and rings down.

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "photon/key.hpp"

namespace photon::action {

enum class ReleaseStyle { held, rapid };

struct ActionConfig {
    double travel_mm = 9.0;
    std::vector<double> pluck_points_mm = {5.5};
    double unload_fraction = 0.35;
    double settle_freq_hz = 18.0;
    double settle_damping = 0.25;
    /// Largest excursion below rest after a rapid release.
    double overshoot_max_mm = 0.4;
    /// Per-segment cruise speed perturbation, uniform in +/- this fraction.
    double velocity_jitter = 0.02;

    static ActionConfig disengaged();
    static ActionConfig single_manual();
    static ActionConfig double_manual();

    /// Throws ValidationError naming the first violated invariant.
    void validate() const;
};

struct GestureSpec {
    double onset_s = 0.0;
    double press_duration_s = 0.08;
    double hold_s = 0.1;
    double release_duration_s = 0.06;
    ReleaseStyle release_style = ReleaseStyle::held;

    void validate() const;
};

struct DisplacementTrace {
    double rate_hz = 250.0;
    double t0_s = 0.0;
    std::vector<double> samples_mm;

    double time_at(std::size_t i) const { return t0_s + static_cast<double>(i) / rate_hz; }
    std::size_t size() const { return samples_mm.size(); }
};

struct GroundTruthEvents {
    std::vector<double> pluck_times_s;
    std::vector<double> pluck_displacements_mm;
    std::optional<double> strike_time_s;
    std::optional<double> release_cross_time_s;
    double onset_s = 0.0;
    double end_s = 0.0;
};

/// Continuous displacement as a function of time. Outside its support the
/// lever is at rest.
class Trajectory {
public:
    struct Segment {
        enum class Kind { polynomial, ringdown };
        Kind kind = Kind::polynomial;
        double t_begin = 0.0;
        double t_end = 0.0;
        // polynomial: x0 + v0*dt + a0*dt^2/2 + jerk*dt^3/6
        double x0 = 0.0;
        double v0 = 0.0;
        double a0 = 0.0;
        double jerk = 0.0;
        // ringdown: -amplitude * exp(-decay*dt) * sin(omega*dt)
        double amplitude = 0.0;
        double decay = 0.0;
        double omega = 0.0;
    };

    double position(double t_s) const;
    double begin_s() const { return segments_.empty() ? 0.0 : segments_.front().t_begin; }
    double end_s() const { return segments_.empty() ? 0.0 : segments_.back().t_end; }
    const std::vector<Segment>& segments() const { return segments_; }

    void append(const Segment& seg);
    /// Appends every segment of `other`; both must be time-ordered and disjoint.
    void extend(const Trajectory& other);

private:
    std::vector<Segment> segments_;
};

struct Keystroke {
    Trajectory trajectory;
    GroundTruthEvents truth;
};

/// Builds the analytic trajectory of one keystroke. The seed drives only the
/// cruise-speed jitter.
Keystroke build_keystroke(const ActionConfig& config, const GestureSpec& gesture,
                          std::uint64_t rng_seed);

/// Samples `trajectory` on [t0, t_end] at `rate_hz`, extending by one sample
/// so the final sample lies at or after `t_end`.
DisplacementTrace sample_trajectory(const Trajectory& trajectory, double t0_s, double t_end_s,
                                    double rate_hz);

struct KeystrokeResult {
    DisplacementTrace trace;
    GroundTruthEvents truth;
};

KeystrokeResult simulate_keystroke(const ActionConfig& config, const GestureSpec& gesture,
                                   double rate_hz, std::uint64_t rng_seed);

struct ScoreEntry {
    KeyId key;
    double onset_s = 0.0;
    GestureSpec gesture;
};

struct KeyTrack {
    KeyId key;
    Trajectory trajectory;
    DisplacementTrace trace;
    std::vector<GroundTruthEvents> notes;
};

/// One track per key, all sampled on a shared clock starting at t = 0 and
/// ending after the last gesture settles. Same-key overlaps are rejected.
std::map<KeyId, KeyTrack> scripted_performance(const ActionConfig& config,
                                               const std::vector<ScoreEntry>& score,
                                               const Compass& compass, double rate_hz,
                                               std::uint64_t rng_seed);

}  // namespace photon::action
