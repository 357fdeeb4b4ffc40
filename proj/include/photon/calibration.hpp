#pragma once

// Per-sensor two-point calibration with optional mid-travel anchors.
//
// The counts -> displacement curve is a shape-preserving monotone cubic
// (Fritsch-Carlson) through the anchor nodes. It assumes nothing about the
// optical response beyond monotonicity.

#include <span>
#include <vector>

namespace photon::host {

struct Anchor {
    double counts = 0.0;
    double mm = 0.0;

    bool operator==(const Anchor&) const = default;
};

class MonotoneCurve {
public:
    MonotoneCurve() = default;
    /// Nodes need strictly increasing x and monotone y.
    MonotoneCurve(std::vector<double> x, std::vector<double> y);

    /// Clamped to the node interval.
    double operator()(double x) const;
    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& y() const { return y_; }

private:
    std::vector<double> x_, y_, slope_;
};

struct CalibrationEntry {
    int sensor_id = 0;
    double raw_rest = 0.0;
    double raw_full = 0.0;
    double travel_mm = 9.0;
    std::vector<Anchor> anchors;  // mid-travel only, ordered by mm
    double captured_at = 0.0;

    /// Rebuilds the interpolation curve; call after editing fields by hand.
    void rebuild();
    const MonotoneCurve& curve() const { return curve_; }

    bool operator==(const CalibrationEntry& o) const {
        return sensor_id == o.sensor_id && raw_rest == o.raw_rest && raw_full == o.raw_full &&
               travel_mm == o.travel_mm && anchors == o.anchors && captured_at == o.captured_at;
    }

private:
    MonotoneCurve curve_;
};

struct CalibrationLimits {
    std::size_t min_samples = 20;
    double min_span_noise_ratio = 10.0;
};

double median(std::span<const double> values);

/// Throws CalibrationError when a capture is too short, the span is too
/// small against the capture noise, or anchors are not strictly monotone.
CalibrationEntry calibrate_sensor(int sensor_id, std::span<const double> rest_samples,
                                  std::span<const double> full_samples, std::span<const Anchor> anchors = {},
                                  double travel_mm = 9.0, double captured_at = 0.0,
                                  const CalibrationLimits& limits = {});

/// Validates an entry assembled from stored fields and builds its curve.
CalibrationEntry make_entry(int sensor_id, double raw_rest, double raw_full, std::vector<Anchor> anchors,
                            double travel_mm, double captured_at);

/// Monotone in counts, clamped to [0, travel_mm].
double displacement(const CalibrationEntry& entry, double counts);

}  // namespace photon::host
