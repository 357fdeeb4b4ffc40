#include "photon/action_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "photon/error.hpp"

namespace photon::action {
namespace {

constexpr std::string_view kModule = "action-sim";

// Fractions of the nominal press/release time spent in the jerk ramps.
constexpr double kPressAccelFraction = 0.12;
constexpr double kPressDecelFraction = 0.10;
constexpr double kReleaseAccelFraction = 0.15;
constexpr double kReleaseDecelFraction = 0.15;
// Ring-down is cut at the first zero crossing after the envelope drops below this.
constexpr double kRingdownFloorMm = 1e-5;

[[noreturn]] void fail(const std::string& what) { throw ValidationError(kModule, what); }

class Builder {
public:
    explicit Builder(double t0) : t_(t0) {}

    void cruise_for(double duration) {
        if (duration <= 0.0) return;
        push({.t_begin = t_, .t_end = t_ + duration, .x0 = x_, .v0 = v_});
        x_ += v_ * duration;
        t_ += duration;
    }

    void cruise_to(double target) {
        if (v_ == 0.0) return;
        const double dt = (target - x_) / v_;
        cruise_for(dt);
        x_ = target;
    }

    /// Two constant-jerk halves take the velocity from v_ to `v_to` with zero
    /// acceleration at both ends.
    void scurve(double v_to, double duration) {
        if (duration <= 0.0) {
            v_ = v_to;
            return;
        }
        const double half = duration / 2.0;
        const double jerk = 4.0 * (v_to - v_) / (duration * duration);
        push({.t_begin = t_, .t_end = t_ + half, .x0 = x_, .v0 = v_, .a0 = 0.0, .jerk = jerk});
        const double a_mid = jerk * half;
        const double v_mid = v_ + jerk * half * half / 2.0;
        const double x_mid = x_ + v_ * half + jerk * half * half * half / 6.0;
        push({.t_begin = t_ + half,
              .t_end = t_ + duration,
              .x0 = x_mid,
              .v0 = v_mid,
              .a0 = a_mid,
              .jerk = -jerk});
        x_ += (v_ + v_to) / 2.0 * duration;
        v_ = v_to;
        t_ += duration;
    }

    void hold(double duration) {
        v_ = 0.0;
        cruise_for(duration);
    }

    void ringdown(double amplitude, double decay, double omega, double duration) {
        Trajectory::Segment seg;
        seg.kind = Trajectory::Segment::Kind::ringdown;
        seg.t_begin = t_;
        seg.t_end = t_ + duration;
        seg.amplitude = amplitude;
        seg.decay = decay;
        seg.omega = omega;
        push(seg);
        t_ += duration;
        x_ = 0.0;
        v_ = 0.0;
    }

    void set_velocity(double v) { v_ = v; }
    void set_position(double x) { x_ = x; }
    double t() const { return t_; }
    double x() const { return x_; }
    double v() const { return v_; }
    Trajectory take() { return std::move(traj_); }

private:
    void push(Trajectory::Segment seg) { traj_.append(seg); }

    Trajectory traj_;
    double t_ = 0.0;
    double x_ = 0.0;
    double v_ = 0.0;
};

/// Bisection for the time the (monotone on the interval) trajectory meets `level`.
double crossing_time(const Trajectory& traj, double lo, double hi, double level) {
    const bool rising = traj.position(lo) < traj.position(hi);
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        const bool below = traj.position(mid) < level;
        if (below == rising) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

ActionConfig ActionConfig::disengaged() {
    ActionConfig c;
    c.pluck_points_mm.clear();
    return c;
}

ActionConfig ActionConfig::single_manual() { return ActionConfig{}; }

ActionConfig ActionConfig::double_manual() {
    ActionConfig c;
    c.pluck_points_mm = {5.5, 7.0};
    return c;
}

void ActionConfig::validate() const {
    if (!(travel_mm > 0.0)) fail("travel_mm must be > 0");
    double prev = 0.0;
    for (double p : pluck_points_mm) {
        if (!(p > 0.0 && p < travel_mm)) {
            std::ostringstream os;
            os << "pluck point " << p << " mm outside (0, travel_mm)";
            fail(os.str());
        }
        if (!(p > prev)) fail("pluck points must be strictly increasing");
        prev = p;
    }
    if (!(unload_fraction > 0.0 && unload_fraction < 1.0)) fail("unload_fraction must lie in (0, 1)");
    if (!(settle_freq_hz > 0.0)) fail("settle_freq_hz must be > 0");
    if (!(settle_damping > 0.0 && settle_damping < 1.0)) fail("settle_damping must lie in (0, 1)");
    if (!(overshoot_max_mm >= 0.0 && overshoot_max_mm < 0.5)) fail("overshoot_max_mm must lie in [0, 0.5)");
    // Jitter may never cancel the speed step at a pluck.
    const double jitter_limit = unload_fraction / (2.0 - unload_fraction);
    if (!(velocity_jitter >= 0.0 && velocity_jitter < jitter_limit)) {
        fail("velocity_jitter must lie in [0, unload_fraction / (2 - unload_fraction))");
    }
}

void GestureSpec::validate() const {
    if (!(onset_s >= 0.0)) fail("onset_s must be >= 0");
    if (!(press_duration_s > 0.0)) fail("press_duration_s must be > 0");
    if (!(hold_s >= 0.0)) fail("hold_s must be >= 0");
    if (!(release_duration_s >= 0.0)) fail("release_duration_s must be >= 0");
}

double Trajectory::position(double t_s) const {
    if (segments_.empty() || t_s < segments_.front().t_begin || t_s >= segments_.back().t_end) return 0.0;
    auto it = std::upper_bound(segments_.begin(), segments_.end(), t_s,
                               [](double t, const Segment& s) { return t < s.t_begin; });
    const Segment& s = *std::prev(it);
    if (t_s >= s.t_end) return 0.0;  // gap between keystrokes
    const double dt = t_s - s.t_begin;
    if (s.kind == Segment::Kind::ringdown) {
        return -s.amplitude * std::exp(-s.decay * dt) * std::sin(s.omega * dt);
    }
    const double x = s.x0 + s.v0 * dt + s.a0 * dt * dt / 2.0 + s.jerk * dt * dt * dt / 6.0;
    return std::max(0.0, x);
}

void Trajectory::append(const Segment& seg) {
    if (seg.t_end <= seg.t_begin) return;
    segments_.push_back(seg);
}

void Trajectory::extend(const Trajectory& other) {
    for (const auto& s : other.segments()) append(s);
}

Keystroke build_keystroke(const ActionConfig& config, const GestureSpec& gesture,
                          std::uint64_t rng_seed) {
    config.validate();
    gesture.validate();

    const double travel = config.travel_mm;
    const auto& plucks = config.pluck_points_mm;
    const std::size_t n = plucks.size();
    const double press = gesture.press_duration_s;

    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> jitter(-config.velocity_jitter, config.velocity_jitter);

    // Unloaded cruise speed makes the disengaged stroke last exactly `press`.
    const double v_free = travel / (press * (1.0 - kPressAccelFraction / 2.0 - kPressDecelFraction / 2.0));
    std::vector<double> cruise(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double loaded = std::pow(1.0 - config.unload_fraction, static_cast<double>(n - k));
        cruise[k] = v_free * loaded * (1.0 + jitter(rng));
    }

    Builder b(gesture.onset_s);
    GroundTruthEvents truth;
    truth.onset_s = gesture.onset_s;

    const double first_target = n > 0 ? plucks.front() : travel / 2.0;
    double t_accel = kPressAccelFraction * press;
    if (cruise[0] * t_accel / 2.0 > first_target / 2.0) t_accel = first_target / cruise[0];
    b.scurve(cruise[0], t_accel);

    for (std::size_t k = 0; k < n; ++k) {
        b.cruise_to(plucks[k]);
        truth.pluck_times_s.push_back(b.t());
        truth.pluck_displacements_mm.push_back(plucks[k]);
        b.set_velocity(cruise[k + 1]);
    }
    if (n > 0) truth.strike_time_s = truth.pluck_times_s.back();

    const double v_last = cruise[n];
    double t_decel = kPressDecelFraction * press;
    if (v_last * t_decel / 2.0 > travel - b.x()) t_decel = 2.0 * (travel - b.x()) / v_last;
    b.cruise_to(travel - v_last * t_decel / 2.0);
    b.scurve(0.0, t_decel);
    b.set_position(travel);
    b.hold(gesture.hold_s);
    const double release_begin = b.t();

    const double release = gesture.release_duration_s;
    if (release > 0.0) {
        const double t_ra = kReleaseAccelFraction * release;
        if (gesture.release_style == ReleaseStyle::held) {
            const double t_rd = kReleaseDecelFraction * release;
            const double w = travel / (release * (1.0 - kReleaseAccelFraction / 2.0 - kReleaseDecelFraction / 2.0));
            b.scurve(-w, t_ra);
            b.cruise_to(w * t_rd / 2.0);
            b.scurve(0.0, t_rd);
        } else {
            const double w = travel / (release * (1.0 - kReleaseAccelFraction / 2.0));
            b.scurve(-w, t_ra);
            b.cruise_to(0.0);
        }
    }
    const double release_end = b.t();

    if (gesture.release_style == ReleaseStyle::rapid) {
        const double omega_n = 2.0 * std::numbers::pi * config.settle_freq_hz;
        const double zeta = config.settle_damping;
        const double omega = omega_n * std::sqrt(1.0 - zeta * zeta);
        const double decay = zeta * omega_n;
        const double arrival = release > 0.0 ? -b.v() : std::numeric_limits<double>::infinity();
        const double amplitude = std::min(arrival / omega, config.overshoot_max_mm);
        if (amplitude > kRingdownFloorMm) {
            const double tail = std::log(amplitude / kRingdownFloorMm) / decay;
            const double half_period = std::numbers::pi / omega;
            b.ringdown(amplitude, decay, omega, std::ceil(tail / half_period) * half_period);
        }
    }

    Trajectory traj = b.take();
    if (n > 0) {
        const double top = plucks.back();
        if (release > 0.0) {
            truth.release_cross_time_s = crossing_time(traj, release_begin, release_end, top);
        } else {
            truth.release_cross_time_s = release_begin;
        }
    }
    truth.end_s = traj.end_s();
    return {std::move(traj), std::move(truth)};
}

DisplacementTrace sample_trajectory(const Trajectory& trajectory, double t0_s, double t_end_s,
                                    double rate_hz) {
    if (!(rate_hz > 0.0)) fail("rate_hz must be > 0");
    DisplacementTrace trace;
    trace.rate_hz = rate_hz;
    trace.t0_s = t0_s;
    const auto count = static_cast<std::size_t>(std::ceil((t_end_s - t0_s) * rate_hz - 1e-9)) + 1;
    trace.samples_mm.reserve(count);
    for (std::size_t i = 0; i < count; ++i) trace.samples_mm.push_back(trajectory.position(trace.time_at(i)));
    return trace;
}

KeystrokeResult simulate_keystroke(const ActionConfig& config, const GestureSpec& gesture,
                                   double rate_hz, std::uint64_t rng_seed) {
    if (!(rate_hz > 0.0)) fail("rate_hz must be > 0");
    auto stroke = build_keystroke(config, gesture, rng_seed);
    auto trace = sample_trajectory(stroke.trajectory, gesture.onset_s, stroke.truth.end_s, rate_hz);
    return {std::move(trace), std::move(stroke.truth)};
}

std::map<KeyId, KeyTrack> scripted_performance(const ActionConfig& config,
                                               const std::vector<ScoreEntry>& score,
                                               const Compass& compass, double rate_hz,
                                               std::uint64_t rng_seed) {
    if (!(rate_hz > 0.0)) fail("rate_hz must be > 0");
    std::vector<std::size_t> order(score.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a].onset_s < score[b].onset_s; });

    std::map<KeyId, KeyTrack> tracks;
    double t_end = 0.0;
    for (std::size_t idx : order) {
        const ScoreEntry& entry = score[idx];
        if (!compass.contains(entry.key)) fail("key " + to_string(entry.key) + " outside the configured compass");
        if (!(entry.onset_s >= 0.0)) fail("score onsets must be >= 0");
        GestureSpec g = entry.gesture;
        g.onset_s = entry.onset_s;
        // Each score entry gets its own stream so reordering keys leaves the rest unchanged.
        auto stroke = build_keystroke(config, g, rng_seed ^ (0x9E3779B97F4A7C15ULL * (idx + 1)));

        KeyTrack& track = tracks[entry.key];
        track.key = entry.key;
        if (!track.notes.empty() && entry.onset_s < track.notes.back().end_s) {
            fail("overlapping gestures on key " + to_string(entry.key));
        }
        track.trajectory.extend(stroke.trajectory);
        track.notes.push_back(stroke.truth);
        t_end = std::max(t_end, stroke.truth.end_s);
    }
    for (auto& [key, track] : tracks) track.trace = sample_trajectory(track.trajectory, 0.0, t_end, rate_hz);
    return tracks;
}

}  // namespace photon::action
