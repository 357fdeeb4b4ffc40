#include "photon/optics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "photon/error.hpp"

namespace photon::optics {
namespace {

constexpr std::string_view kModule = "optics";
constexpr double kLevelStepMm = 1e-4;

}  // namespace

void SensorModel::validate() const {
    if (!(a_gain > 0.0)) throw ValidationError(kModule, "a_gain must be > 0");
    if (!(d0_mm > 0.0)) throw ValidationError(kModule, "d0_mm must be > 0");
    if (adc_bits < 1 || adc_bits > 24) throw ValidationError(kModule, "adc_bits must lie in [1, 24]");
    if (!(floor_counts >= 0.0 && floor_counts < static_cast<double>(1 << adc_bits))) {
        throw ValidationError(kModule, "floor_counts must lie in [0, 2^adc_bits)");
    }
    if (!(noise_sigma_counts >= 0.0)) throw ValidationError(kModule, "noise_sigma_counts must be >= 0");
    if (!(rest_gap_mm >= 0.0)) throw ValidationError(kModule, "rest_gap_mm must be >= 0");
}

double expected_counts(const SensorModel& model, double distance_mm) {
    if (!(distance_mm >= 0.0)) throw ValidationError(kModule, "distance must be >= 0");
    const double r = distance_mm + model.d0_mm;
    return model.floor_counts + model.a_gain / (r * r);
}

double expected_counts_at_displacement(const SensorModel& model, double displacement_mm) {
    return expected_counts(model, model.rest_gap_mm + std::max(0.0, displacement_mm));
}

RawSample sample(const SensorModel& model, double displacement_mm, std::mt19937_64& rng, double t_s,
                 int sensor_id) {
    double value = expected_counts_at_displacement(model, displacement_mm);
    if (model.noise_sigma_counts > 0.0) {
        std::normal_distribution<double> noise(0.0, model.noise_sigma_counts);
        value += noise(rng);
    }
    const double clamped = std::clamp(std::round(value), 0.0, static_cast<double>(model.adc_max()));
    return {static_cast<int>(clamped), t_s, sensor_id};
}

int distinguishable_levels(const SensorModel& model, double travel_mm, double separation_k) {
    const double threshold = std::max(separation_k * model.noise_sigma_counts, 1.0);
    auto code = [&](double x) {
        return std::clamp(std::round(expected_counts_at_displacement(model, x)), 0.0,
                          static_cast<double>(model.adc_max()));
    };
    const auto steps = static_cast<long>(std::ceil(travel_mm / kLevelStepMm));
    int levels = 1;
    double accepted = code(0.0);
    for (long i = 1; i <= steps; ++i) {
        const double c = code(std::min(travel_mm, static_cast<double>(i) * kLevelStepMm));
        if (std::abs(c - accepted) >= threshold) {
            ++levels;
            accepted = c;
        }
    }
    return levels;
}

std::map<int, SensorModel> read_model_file(std::istream& in) {
    std::map<int, SensorModel> models;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string field;
        SensorModel m;
        int id = -1;
        bool any = false;
        while (fields >> field) {
            any = true;
            const auto eq = field.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(kModule, "line " + std::to_string(line_no) + ": expected key=value, got '" + field + "'");
            }
            const std::string key = field.substr(0, eq);
            const std::string value = field.substr(eq + 1);
            try {
                if (key == "sensor_id") id = std::stoi(value);
                else if (key == "a_gain") m.a_gain = std::stod(value);
                else if (key == "d0_mm") m.d0_mm = std::stod(value);
                else if (key == "floor_counts") m.floor_counts = std::stod(value);
                else if (key == "noise_sigma_counts") m.noise_sigma_counts = std::stod(value);
                else if (key == "adc_bits") m.adc_bits = std::stoi(value);
                else if (key == "rest_gap_mm") m.rest_gap_mm = std::stod(value);
                else throw ConfigError(kModule, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
            } catch (const std::logic_error&) {
                throw ConfigError(kModule, "line " + std::to_string(line_no) + ": bad value for '" + key + "'");
            }
        }
        if (!any) continue;
        if (id < 0) throw ConfigError(kModule, "line " + std::to_string(line_no) + ": missing sensor_id");
        if (models.count(id)) throw ConfigError(kModule, "duplicate sensor_id " + std::to_string(id));
        m.validate();
        models.emplace(id, m);
    }
    return models;
}

void write_model_file(std::ostream& out, const std::map<int, SensorModel>& models) {
    out << "# sensor_id a_gain d0_mm floor_counts noise_sigma_counts adc_bits rest_gap_mm\n";
    out << std::setprecision(17);
    for (const auto& [id, m] : models) {
        out << "sensor_id=" << id << " a_gain=" << m.a_gain << " d0_mm=" << m.d0_mm
            << " floor_counts=" << m.floor_counts << " noise_sigma_counts=" << m.noise_sigma_counts
            << " adc_bits=" << m.adc_bits << " rest_gap_mm=" << m.rest_gap_mm << '\n';
    }
}

}  // namespace photon::optics
