#pragma once

// End-to-end runs on the simulated instrument: scripted calibration, a MIDI
// pass for key events and a position-stream pass for traces and pluck
// features, compared against the action simulator's ground truth.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photon/bus/capture.hpp"
#include "photon/capture.hpp"
#include "photon/io.hpp"
#include "photon/midi.hpp"
#include "photon/rig.hpp"

namespace photon::sim {

/// Holds keys at exact displacements in a simulated world.
class ScriptedFixture : public host::Fixture {
public:
    explicit ScriptedFixture(KeyWorld& world) : world_(world) {}
    bool position(const KeyId& key, double mm, const std::string&) override {
        world_.hold(key, mm);
        return true;
    }
    void release(const KeyId& key) override { world_.release(key); }

private:
    KeyWorld& world_;
};

RigOptions rig_options(const io::SessionFile& file, std::uint64_t seed);

/// Enumerates, checks the roster and pushes thresholds, calibration and mode.
void bring_up(host::HostController& host);

/// Scripted calibration of `keys` on a fresh rig. Entries land in `file`.
host::CalibrationRun calibrate_scripted(io::SessionFile& file, const std::vector<KeyId>& keys, std::uint64_t seed,
                                        const host::CapturePlan& plan = {}, const host::RunOptions& run = {});

struct SimulationOptions {
    std::uint64_t seed = 1;
    double stream_rate_hz = 250.0;
    bool parallel = false;
    bool reverse_chain = false;
    /// Skip the position-stream pass (no traces, no pluck features).
    bool midi_only = false;
    /// Quiet time after bring-up before the performance's time zero.
    double lead_s = 0.05;
    double tail_s = 0.3;
    /// Calibrate score keys without an entry before playing.
    bool calibrate_missing = true;
    /// Match tolerances for the report.
    double pluck_tolerance_mm = 0.5;
    double pluck_time_tolerance_s = 0.02;
    /// Receives the host-side bus traffic of every pass when set.
    bus::Capture* record = nullptr;
};

struct NoteReport {
    KeyId key;
    double onset_s = 0.0;
    std::optional<double> truth_on_s, truth_off_s;
    int truth_on_velocity = 0, truth_off_velocity = 0;
    std::optional<double> detected_on_s, detected_off_s;
    int on_velocity = 0, off_velocity = 0;
    std::vector<double> truth_plucks_mm;
    std::vector<double> detected_plucks_mm;
    int matched_plucks = 0;
};

struct SimulationReport {
    std::string action;
    int gestures = 0;
    int truth_plucks = 0;
    int matched_plucks = 0;
    int detected_features = 0;
    /// Features that match no ground-truth pluck.
    int unmatched_features = 0;
    int truth_notes = 0;
    int note_ons = 0;
    int note_offs = 0;
    int matched_notes = 0;
    std::uint64_t stuck_notes = 0;
    std::uint64_t orphan_offs = 0;
    std::uint64_t silent_register = 0;
    int compensating_offs = 0;
    int calibrated_before_run = 0;
    std::uint64_t stream_frames = 0;
    std::uint64_t bad_frames = 0;
    double max_on_delta_s = 0.0;
    double max_off_delta_s = 0.0;
    int max_velocity_delta = 0;
    std::vector<NoteReport> notes;

    double recall() const { return truth_plucks ? static_cast<double>(matched_plucks) / truth_plucks : 1.0; }
    std::string to_json() const;
};

struct SimulationResult {
    /// Note events in performance time (zero = score time zero).
    std::vector<host::KeyEvent> events;
    std::map<KeyId, action::KeyTrack> truth;
    std::vector<midi::TimedBatch> stream;
    /// Subtract from stream board timestamps to get performance time.
    double stream_offset_s = 0.0;
    std::map<KeyId, action::DisplacementTrace> traces;
    std::map<KeyId, std::vector<host::PluckFeature>> features;
    /// Session after the run, including any calibration made for it.
    io::SessionFile file;
    SimulationReport report;
};

SimulationResult simulate(const io::SessionFile& file, const std::vector<action::ScoreEntry>& score,
                          const SimulationOptions& options = {});

/// First time in [from, to] where the trajectory crosses `level` in the given
/// direction, refined by bisection.
std::optional<double> crossing(const action::Trajectory& trajectory, double level, bool rising, double from_s,
                               double to_s);

}  // namespace photon::sim
