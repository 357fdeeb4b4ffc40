#pragma once

// Reflective optical sensor: distance -> reflected intensity -> ADC counts.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <string>

namespace photon::optics {

struct SensorModel {
    double a_gain = 3.285e6;  // counts * mm^2
    double d0_mm = 28.0;
    double floor_counts = 150.0;
    double noise_sigma_counts = 4.5;
    int adc_bits = 12;
    double rest_gap_mm = 2.0;

    int adc_max() const { return (1 << adc_bits) - 1; }
    void validate() const;
};

struct RawSample {
    int counts = 0;
    double t_s = 0.0;
    int sensor_id = 0;
};

/// floor + a_gain / (distance + d0)^2. Throws ValidationError for negative distance.
double expected_counts(const SensorModel& model, double distance_mm);

/// Expected counts seen when the lever sits at `displacement_mm` below rest.
/// Overshoot above the rest position reads as rest.
double expected_counts_at_displacement(const SensorModel& model, double displacement_mm);

/// Noisy, quantized, saturating reading.
RawSample sample(const SensorModel& model, double displacement_mm, std::mt19937_64& rng,
                 double t_s = 0.0, int sensor_id = 0);

/// Counts the displacement positions on [0, travel] whose expected ADC codes
/// differ from the previously accepted one by at least
/// max(separation_k * sigma, 1 code).
int distinguishable_levels(const SensorModel& model, double travel_mm, double separation_k = 2.0);

/// Sensor-model parameter file: one `sensor_id=<n> key=value ...` record per line,
/// `#` starts a comment. Missing keys take the defaults.
std::map<int, SensorModel> read_model_file(std::istream& in);
void write_model_file(std::ostream& out, const std::map<int, SensorModel>& models);

}  // namespace photon::optics
