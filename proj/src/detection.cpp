#include "photon/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "photon/error.hpp"

namespace photon::host {
namespace {

constexpr std::string_view kModule = "host.detection";

struct Line {
    double slope = 0.0;
    double intercept = 0.0;
    double at(double t) const { return intercept + slope * t; }
};

struct Fit {
    Line line;
    double rss = 0.0;
    double stt = 0.0;
};

Fit fit_line(const std::vector<double>& x, std::size_t first, std::size_t last) {
    const double n = static_cast<double>(last - first + 1);
    double st = 0.0, sx = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        st += static_cast<double>(i);
        sx += x[i];
    }
    const double tm = st / n;
    const double xm = sx / n;
    double stt = 0.0, stx = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
        const double dt = static_cast<double>(i) - tm;
        stt += dt * dt;
        stx += dt * (x[i] - xm);
    }
    Fit fit;
    fit.line.slope = stt > 0.0 ? stx / stt : 0.0;
    fit.line.intercept = xm - fit.line.slope * tm;
    fit.stt = stt;
    for (std::size_t i = first; i <= last; ++i) {
        const double r = x[i] - fit.line.at(static_cast<double>(i));
        fit.rss += r * r;
    }
    return fit;
}

struct Hinge {
    double knot = 0.0;
    double value = 0.0;
    /// Slope after the knot minus slope before it.
    double bend = 0.0;
};

/// Continuous two-piece linear fit of x[first..last]; the knot is scanned on a
/// sub-sample grid within +/- `reach` samples of `guess`.
Hinge fit_hinge(const std::vector<double>& x, std::size_t first, std::size_t last, double guess, double reach) {
    Hinge best{guess, x[static_cast<std::size_t>(guess)]};
    double best_rss = std::numeric_limits<double>::infinity();
    const double lo = std::max(static_cast<double>(first) + 1.0, guess - reach);
    const double hi = std::min(static_cast<double>(last) - 1.0, guess + reach);
    for (double knot = lo; knot <= hi + 1e-9; knot += 0.02) {
        // Basis: 1, (t - knot), max(0, t - knot).
        double m[3][3] = {};
        double r[3] = {};
        for (std::size_t i = first; i <= last; ++i) {
            const double d = static_cast<double>(i) - knot;
            const double phi[3] = {1.0, d, std::max(0.0, d)};
            for (int a = 0; a < 3; ++a) {
                r[a] += phi[a] * x[i];
                for (int c = 0; c < 3; ++c) m[a][c] += phi[a] * phi[c];
            }
        }
        const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        if (std::abs(det) < 1e-12) continue;
        // Cramer's rule on the 3x3 normal equations.
        auto solve = [&](int col) {
            double mm[3][3];
            for (int a = 0; a < 3; ++a)
                for (int c = 0; c < 3; ++c) mm[a][c] = c == col ? r[a] : m[a][c];
            return (mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1]) -
                    mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0]) +
                    mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0])) /
                   det;
        };
        const double c0 = solve(0), c1 = solve(1), c2 = solve(2);
        double rss = 0.0;
        for (std::size_t i = first; i <= last; ++i) {
            const double d = static_cast<double>(i) - knot;
            const double e = x[i] - (c0 + c1 * d + c2 * std::max(0.0, d));
            rss += e * e;
        }
        if (rss < best_rss) {
            best_rss = rss;
            best = {knot, c0, c2};
        }
    }
    return best;
}

}  // namespace

void DetectionConfig::validate() const {
    auto bad = [](const std::string& w) { throw ValidationError(kModule, w); };
    if (!(on_window.from_mm < on_window.to_mm)) bad("on_window must rise (from < to)");
    if (!(off_window.from_mm > off_window.to_mm)) bad("off_window must fall (from > to)");
    if (!(rearm_mm > 0.0 && rearm_mm < on_window.from_mm && rearm_mm < off_window.to_mm)) {
        bad("rearm_mm must lie below both windows");
    }
    for (double edge : {on_window.from_mm, on_window.to_mm, off_window.from_mm, off_window.to_mm}) {
        if (!(edge > 0.0 && edge < travel_mm)) bad("window edges must lie inside (0, travel_mm)");
    }
    if (!(slope_feature_min > 1.0)) bad("slope_feature_min must be > 1");
    if (!(slope_window_mm > 0.0)) bad("slope_window_mm must be > 0");
    if (min_window_samples < 2) bad("min_window_samples must be >= 2");
    if (!(min_press_speed_mm_s > 0.0)) bad("min_press_speed_mm_s must be > 0");
    if (!(min_significance >= 0.0)) bad("min_significance must be >= 0");
}

void VelocityCurve::validate() const {
    auto bad = [](const std::string& w) { throw ValidationError(kModule, w); };
    if (!(t_min_s > 0.0 && t_min_s < t_max_s)) bad("velocity curve needs 0 < t_min < t_max");
    if (!(v_min >= 1 && v_min < v_max && v_max <= 127)) bad("velocity curve needs 1 <= v_min < v_max <= 127");
    if (shape == CurveShape::gamma && !(gamma > 0.0)) bad("gamma must be > 0");
}

int velocity_from_time(const VelocityCurve& curve, double traversal_s) {
    if (!(traversal_s > 0.0)) throw ValidationError(kModule, "traversal time must be > 0");
    const double t = std::clamp(traversal_s, curve.t_min_s, curve.t_max_s);
    double u = (curve.t_max_s - t) / (curve.t_max_s - curve.t_min_s);
    if (curve.shape == CurveShape::gamma) u = std::pow(u, curve.gamma);
    const double v = static_cast<double>(curve.v_min) + u * static_cast<double>(curve.v_max - curve.v_min);
    return std::clamp(static_cast<int>(std::lround(v)), curve.v_min, curve.v_max);
}

double WindowDetector::crossing(double level, double t, double x) const {
    if (!has_prev_ || x == prev_x_) return t;
    const double f = std::clamp((level - prev_x_) / (x - prev_x_), 0.0, 1.0);
    return prev_t_ + f * (t - prev_t_);
}

std::optional<WindowEvent> WindowDetector::update(double t_s, double x) {
    std::optional<WindowEvent> out;
    const auto& on = cfg_.on_window;
    const auto& off = cfg_.off_window;
    switch (state_) {
        case State::disarmed:
            if (x < cfg_.rearm_mm) state_ = State::armed;
            break;
        case State::armed:
        case State::on_window:
            if (state_ == State::armed && x >= on.from_mm) {
                entry_s_ = crossing(on.from_mm, t_s, x);
                state_ = State::on_window;
            } else if (state_ == State::on_window && x < on.from_mm) {
                state_ = State::armed;
            }
            if (state_ == State::on_window && x >= on.to_mm) {
                out = WindowEvent{EdgeKind::on, entry_s_, crossing(on.to_mm, t_s, x)};
                state_ = State::sounding;
            }
            break;
        case State::sounding:
        case State::off_window:
            if (state_ == State::sounding && x <= off.from_mm) {
                entry_s_ = crossing(off.from_mm, t_s, x);
                state_ = State::off_window;
            } else if (state_ == State::off_window && x > off.from_mm) {
                state_ = State::sounding;
            }
            if (state_ == State::off_window && x <= off.to_mm) {
                out = WindowEvent{EdgeKind::off, entry_s_, crossing(off.to_mm, t_s, x)};
                state_ = x < cfg_.rearm_mm ? State::armed : State::disarmed;
            }
            break;
    }
    has_prev_ = true;
    prev_t_ = t_s;
    prev_x_ = x;
    return out;
}

std::vector<PluckFeature> detect_pluck_features(const action::DisplacementTrace& trace,
                                                const DetectionConfig& cfg) {
    const auto& x = trace.samples_mm;
    const std::size_t n = x.size();
    const auto min_pts = static_cast<std::size_t>(cfg.min_window_samples);
    std::vector<PluckFeature> features;
    if (n < 2 * min_pts + 3) return features;

    std::vector<double> s(n);
    s.front() = x.front();
    s.back() = x.back();
    for (std::size_t i = 1; i + 1 < n; ++i) s[i] = (x[i - 1] + x[i] + x[i + 1]) / 3.0;

    // Rising run within one slope window below and above s[i].
    auto window = [&](std::size_t i) {
        std::size_t b = i, f = i;
        while (b > 0 && s[b - 1] < s[b] && s[b - 1] >= s[i] - cfg.slope_window_mm) --b;
        while (f + 1 < n && s[f + 1] > s[f] && s[f + 1] <= s[i] + cfg.slope_window_mm) ++f;
        return std::pair{b, f};
    };

    const double min_slope = cfg.min_press_speed_mm_s / trace.rate_hz;
    std::vector<double> ratio(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (s[i] - cfg.slope_window_mm < cfg.rearm_mm) continue;
        const auto [b, f] = window(i);
        if (i - b + 1 < min_pts || f - i + 1 < min_pts) continue;
        const Fit back = fit_line(s, b, i);
        const Fit fwd = fit_line(s, i, f);
        if (back.stt == 0.0 || fwd.stt == 0.0) continue;
        if (back.line.slope < min_slope || fwd.line.slope <= back.line.slope) continue;
        // Pooled residual variance: both sides see the same sensor noise.
        const double dof = static_cast<double>((i - b + 1) + (f - i + 1)) - 4.0;
        const double pooled = dof > 0.0 ? (back.rss + fwd.rss) / dof : 0.0;
        const double se = std::sqrt(pooled / back.stt + pooled / fwd.stt);
        if (fwd.line.slope - back.line.slope < cfg.min_significance * se) continue;
        ratio[i] = fwd.line.slope / back.line.slope;
    }

    // Keystrokes are maximal excursions above the rearm level.
    std::vector<int> press_id(n, -1);
    int current = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (s[i] >= cfg.rearm_mm) {
            if (i == 0 || s[i - 1] < cfg.rearm_mm) ++current;
            press_id[i] = current;
        }
    }

    struct Peak {
        PluckFeature feature;
        int press;
    };
    std::vector<Peak> peaks;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double r = ratio[i];
        if (r < cfg.slope_feature_min || r < ratio[i - 1] || r <= ratio[i + 1]) continue;
        // Sub-sample kink location from a hinge fit on the raw samples over
        // the whole rising window, re-centred until the knot settles.
        const auto [b0, f0] = window(i);
        Hinge h = fit_hinge(x, b0, f0, static_cast<double>(i), static_cast<double>(f0 - b0));
        std::size_t centre = i;
        for (int pass = 0; pass < 3; ++pass) {
            const auto next = static_cast<std::size_t>(std::lround(h.knot));
            if (next == centre || next <= b0 || next >= f0) break;
            centre = next;
            const auto [b, f] = window(centre);
            const Hinge again = fit_hinge(x, b, f, static_cast<double>(centre), static_cast<double>(f - b));
            if (!(again.bend > 0.0) || again.knot <= b0 || again.knot >= f0) break;
            h = again;
        }
        peaks.push_back({{trace.t0_s + h.knot / trace.rate_hz, h.value, r}, press_id[i]});
    }

    std::sort(peaks.begin(), peaks.end(),
              [](const Peak& a, const Peak& b) { return a.feature.slope_ratio > b.feature.slope_ratio; });
    std::vector<Peak> kept;
    for (const auto& p : peaks) {
        const bool crowded = std::any_of(kept.begin(), kept.end(), [&](const Peak& k) {
            return k.press == p.press && std::abs(k.feature.displacement_mm - p.feature.displacement_mm) < 1.0;
        });
        if (!crowded) kept.push_back(p);
    }
    for (const auto& k : kept) features.push_back(k.feature);
    std::sort(features.begin(), features.end(),
              [](const PluckFeature& a, const PluckFeature& b) { return a.t_s < b.t_s; });
    return features;
}

}  // namespace photon::host
