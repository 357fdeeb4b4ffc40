#include "photon/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "photon/error.hpp"

namespace photon::host {
namespace {

constexpr std::string_view kModule = "host.calibration";

double stddev(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

MonotoneCurve::MonotoneCurve(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw CalibrationError(kModule, "curve needs at least two nodes");
    std::vector<double> secant(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!(x_[i + 1] > x_[i])) throw CalibrationError(kModule, "curve nodes must be strictly increasing");
        secant[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    }
    slope_.assign(n, 0.0);
    slope_.front() = secant.front();
    slope_.back() = secant.back();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (secant[i - 1] * secant[i] <= 0.0) {
            slope_[i] = 0.0;
            continue;
        }
        // Weighted harmonic mean (Fritsch-Butland) keeps each piece monotone.
        const double h0 = x_[i] - x_[i - 1];
        const double h1 = x_[i + 1] - x_[i];
        const double w0 = 2.0 * h1 + h0;
        const double w1 = h1 + 2.0 * h0;
        slope_[i] = (w0 + w1) / (w0 / secant[i - 1] + w1 / secant[i]);
    }
    // End slopes: three-point estimate limited to preserve monotonicity.
    if (n > 2) {
        auto end_slope = [](double h0, double h1, double d0, double d1) {
            double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if (m * d0 <= 0.0) return 0.0;
            if (d0 * d1 <= 0.0 && std::abs(m) > std::abs(3.0 * d0)) m = 3.0 * d0;
            return m;
        };
        slope_.front() = end_slope(x_[1] - x_[0], x_[2] - x_[1], secant[0], secant[1]);
        slope_.back() = end_slope(x_[n - 1] - x_[n - 2], x_[n - 2] - x_[n - 3], secant[n - 2], secant[n - 3]);
    }
}

double MonotoneCurve::operator()(double x) const {
    if (x_.empty()) return 0.0;
    if (x <= x_.front()) return y_.front();
    if (x >= x_.back()) return y_.back();
    const auto i = static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    const double h10 = t3 - 2.0 * t2 + t;
    const double h01 = -2.0 * t3 + 3.0 * t2;
    const double h11 = t3 - t2;
    const double v = h00 * y_[i] + h10 * h * slope_[i] + h01 * y_[i + 1] + h11 * h * slope_[i + 1];
    // Clamp the piece to its node range; guards the last ulp of rounding.
    return std::clamp(v, std::min(y_[i], y_[i + 1]), std::max(y_[i], y_[i + 1]));
}

void CalibrationEntry::rebuild() {
    std::vector<std::pair<double, double>> nodes;
    nodes.emplace_back(raw_rest, 0.0);
    for (const auto& a : anchors) nodes.emplace_back(a.counts, a.mm);
    nodes.emplace_back(raw_full, travel_mm);
    std::sort(nodes.begin(), nodes.end());
    std::vector<double> x, y;
    for (auto [c, mm] : nodes) {
        x.push_back(c);
        y.push_back(mm);
    }
    curve_ = MonotoneCurve(std::move(x), std::move(y));
}

double median(std::span<const double> values) {
    if (values.empty()) throw CalibrationError(kModule, "median of an empty capture");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

CalibrationEntry make_entry(int sensor_id, double raw_rest, double raw_full, std::vector<Anchor> anchors,
                            double travel_mm, double captured_at) {
    if (!(travel_mm > 0.0)) throw CalibrationError(kModule, "travel_mm must be > 0");
    if (raw_rest == raw_full) {
        throw CalibrationError(kModule, "sensor " + std::to_string(sensor_id) +
                                            ": rest and full readings coincide (key blocked or sensor misaligned)");
    }
    std::sort(anchors.begin(), anchors.end(), [](const Anchor& a, const Anchor& b) { return a.mm < b.mm; });
    const double direction = raw_full > raw_rest ? 1.0 : -1.0;
    double prev_counts = raw_rest;
    double prev_mm = 0.0;
    for (const auto& a : anchors) {
        if (!(a.mm > prev_mm && a.mm < travel_mm) || !((a.counts - prev_counts) * direction > 0.0)) {
            throw CalibrationError(kModule, "sensor " + std::to_string(sensor_id) + ": anchors are not strictly monotone");
        }
        prev_counts = a.counts;
        prev_mm = a.mm;
    }
    if (!((raw_full - prev_counts) * direction > 0.0)) {
        throw CalibrationError(kModule, "sensor " + std::to_string(sensor_id) + ": anchors are not strictly monotone");
    }
    CalibrationEntry e;
    e.sensor_id = sensor_id;
    e.raw_rest = raw_rest;
    e.raw_full = raw_full;
    e.travel_mm = travel_mm;
    e.anchors = std::move(anchors);
    e.captured_at = captured_at;
    e.rebuild();
    return e;
}

CalibrationEntry calibrate_sensor(int sensor_id, std::span<const double> rest_samples,
                                  std::span<const double> full_samples, std::span<const Anchor> anchors,
                                  double travel_mm, double captured_at, const CalibrationLimits& limits) {
    const std::string who = "sensor " + std::to_string(sensor_id) + ": ";
    if (rest_samples.size() < limits.min_samples || full_samples.size() < limits.min_samples) {
        throw CalibrationError(kModule, who + "need at least " + std::to_string(limits.min_samples) +
                                            " samples per capture");
    }
    const double rest = median(rest_samples);
    const double full = median(full_samples);
    const double noise = std::max(stddev(rest_samples), stddev(full_samples));
    const double span = std::abs(rest - full);
    if (span == 0.0 || span < limits.min_span_noise_ratio * noise) {
        throw CalibrationError(kModule, who + "calibration failed: span too small against capture noise "
                                              "(key blocked or sensor misaligned)");
    }
    return make_entry(sensor_id, rest, full, std::vector<Anchor>(anchors.begin(), anchors.end()), travel_mm,
                      captured_at);
}

double displacement(const CalibrationEntry& entry, double counts) {
    return std::clamp(entry.curve()(counts), 0.0, entry.travel_mm);
}

}  // namespace photon::host
