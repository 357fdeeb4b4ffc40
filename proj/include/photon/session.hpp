#pragma once

// Host-side instrument state: board roster, per-key calibration, detection
// and velocity settings, the active mode, and the translation of board
// messages into instrument-level key events and position frames.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "photon/action_sim.hpp"
#include "photon/bus/message.hpp"
#include "photon/calibration.hpp"
#include "photon/detection.hpp"
#include "photon/key.hpp"

namespace photon::host {

struct RosterEntry {
    std::uint8_t address = 1;
    std::string board_id;
    int sensor_count = 0;
    /// keys[sensor] is the key above that sensor.
    std::vector<KeyId> keys;

    bool operator==(const RosterEntry&) const = default;
};

/// Boards of consecutive sensors along the compass, manual by manual.
/// The default sizes cover 2 x 61 keys with five boards.
std::vector<RosterEntry> standard_roster(const Compass& compass, const std::vector<int>& board_sizes = {});

struct SensorRef {
    std::uint8_t address = 0;
    int sensor = 0;

    auto operator<=>(const SensorRef&) const = default;
};

enum class HostModeKind { midi, position_stream };

struct HostMode {
    HostModeKind kind = HostModeKind::midi;
    std::vector<KeyId> subset;
    double stream_rate_hz = 250.0;

    bool operator==(const HostMode&) const = default;
};

struct KeyEvent {
    enum class Kind { note_on, note_off };
    Kind kind = Kind::note_on;
    int manual = 1;
    int key = 0;
    /// Window exit, session clock.
    double t_s = 0.0;
    double traversal_s = 0.0;
    int velocity = 1;

    KeyId id() const { return {manual, key}; }
    bool operator==(const KeyEvent&) const = default;
};

struct PositionFrame {
    KeyId key;
    int sensor_id = 0;  // global id, see Session::global_sensor_id
    double t_s = 0.0;
    int counts = 0;
    double displacement_mm = 0.0;
};

struct AggregateStats {
    std::uint64_t stuck_notes = 0;    // on after on, dropped
    std::uint64_t orphan_offs = 0;    // off without a sounding note, dropped
    std::uint64_t unknown_sensor = 0;
    std::uint64_t uncalibrated_frames = 0;
    std::uint64_t suppressed_by_mode = 0;
    /// Motion on a disengaged action: no string is plucked, so no note.
    std::uint64_t silent_register = 0;
};

/// Unwraps a 32-bit microsecond board clock into seconds.
class ClockUnwrapper {
public:
    double operator()(std::uint32_t us);

private:
    bool started_ = false;
    std::int64_t last_ = 0;
};

/// Pending board commands for a mode change, one per board, in address order.
using ModeCommands = std::vector<std::pair<std::uint8_t, bus::ModeSet>>;

class Session {
public:
    static constexpr int kSchemaVersion = 1;

    Compass compass;
    action::ActionConfig action;
    std::vector<RosterEntry> roster;
    /// Keyed by key; each entry's sensor_id is the board-local sensor.
    std::map<KeyId, CalibrationEntry> calibration;
    DetectionConfig detection;
    VelocityCurve velocity;

    Session();
    /// Default two-manual instrument with the standard roster.
    static Session standard(const action::ActionConfig& action = action::ActionConfig::single_manual());

    /// Roster and calibration consistency. Throws ConfigError.
    void validate() const;

    std::optional<SensorRef> sensor_of(const KeyId& key) const;
    std::optional<KeyId> key_of(std::uint8_t address, int sensor) const;
    /// Board-order dense id: sensors of the first roster board, then the next, ...
    std::optional<int> global_sensor_id(std::uint8_t address, int sensor) const;
    const RosterEntry* board(std::uint8_t address) const;
    int total_sensors() const;

    const HostMode& mode() const { return mode_; }
    /// Validates a mode and returns the board commands that implement it
    /// without changing state.
    ModeCommands plan_mode(const HostMode& mode) const;
    /// Commits a mode. Throws ValidationError while a capture is active or the
    /// mode is invalid.
    ModeCommands set_mode(const HostMode& mode);

    void begin_capture(const KeyId& key);
    void end_capture();
    bool capturing() const { return capture_.has_value(); }
    std::optional<KeyId> capture_key() const { return capture_; }

    /// Board message -> key event under the alternation rule. Events from
    /// unknown sensors and events while streaming are dropped and counted.
    std::optional<KeyEvent> aggregate(std::uint8_t address, const bus::KeyEventRaw& raw);
    std::vector<KeyEvent> aggregate_events(const std::vector<std::pair<std::uint8_t, bus::Message>>& messages);
    std::vector<PositionFrame> positions(std::uint8_t address, const bus::PositionBatch& batch);

    /// Closes every sounding note at `t_s` with velocity 1.
    std::vector<KeyEvent> release_all(double t_s);
    bool sounding(const KeyId& key) const { return sounding_.contains(key); }
    const AggregateStats& stats() const { return stats_; }
    double board_time(std::uint8_t address, std::uint32_t us);
    /// Latest board timestamp seen, session clock.
    double latest_time() const { return latest_; }
    /// Forgets note state and clocks, keeping configuration.
    void reset_runtime();

private:
    HostMode mode_;
    std::optional<KeyId> capture_;
    std::set<KeyId> sounding_;
    std::map<std::uint8_t, ClockUnwrapper> clocks_;
    AggregateStats stats_;
    double latest_ = 0.0;
};

}  // namespace photon::host
