#pragma once

// Event detection on calibrated displacement: dual-threshold key windows,
// traversal-time velocity mapping, and pluck-feature (slope change) search.

#include <optional>
#include <vector>

#include "photon/action_sim.hpp"

namespace photon::host {

struct Window {
    double from_mm = 0.0;  // entry edge
    double to_mm = 0.0;    // exit edge

    bool operator==(const Window&) const = default;
};

struct DetectionConfig {
    Window on_window{4.5, 5.5};
    Window off_window{5.5, 4.5};
    double rearm_mm = 1.0;
    double slope_feature_min = 1.2;
    double travel_mm = 9.0;
    /// Slopes either side of a candidate are fitted over this much travel.
    double slope_window_mm = 1.2;
    int min_window_samples = 3;
    /// Backward slope below this is treated as a stationary key.
    double min_press_speed_mm_s = 10.0;
    /// Slope increase must exceed this many standard deviations of its noise.
    double min_significance = 4.0;

    void validate() const;
    bool operator==(const DetectionConfig&) const = default;
};

enum class CurveShape { linear, gamma };

struct VelocityCurve {
    double t_min_s = 0.005;
    double t_max_s = 0.105;
    int v_min = 1;
    int v_max = 127;
    CurveShape shape = CurveShape::linear;
    double gamma = 1.0;

    void validate() const;
    bool operator==(const VelocityCurve&) const = default;
};

/// Traversal time -> MIDI velocity. Throws ValidationError for traversal <= 0.
int velocity_from_time(const VelocityCurve& curve, double traversal_s);

enum class EdgeKind { on, off };

struct WindowEvent {
    EdgeKind kind = EdgeKind::on;
    double entry_s = 0.0;
    double exit_s = 0.0;
};

/// Per-sensor hysteresis state machine. Starts disarmed until the key is seen
/// below the rearm level, so a key held at power-up never fires.
class WindowDetector {
public:
    enum class State { disarmed, armed, on_window, sounding, off_window };

    explicit WindowDetector(const DetectionConfig& cfg = {}) : cfg_(cfg) {}

    std::optional<WindowEvent> update(double t_s, double displacement_mm);
    State state() const { return state_; }
    void reset() {
        state_ = State::disarmed;
        has_prev_ = false;
    }
    void set_config(const DetectionConfig& cfg) { cfg_ = cfg; }

private:
    double crossing(double level, double t, double x) const;

    DetectionConfig cfg_;
    State state_ = State::disarmed;
    bool has_prev_ = false;
    double prev_t_ = 0.0;
    double prev_x_ = 0.0;
    double entry_s_ = 0.0;
};

struct PluckFeature {
    double t_s = 0.0;
    double displacement_mm = 0.0;
    double slope_ratio = 0.0;
};

/// Finds slope increases during key descent. Returns features in time order.
std::vector<PluckFeature> detect_pluck_features(const action::DisplacementTrace& trace,
                                                const DetectionConfig& cfg = {});

}  // namespace photon::host
