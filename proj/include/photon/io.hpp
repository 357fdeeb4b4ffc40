#pragma once

// Versioned JSON documents (session, score) and CSV exports of simulated
// traces and ground truth.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "photon/action_sim.hpp"
#include "photon/bus/capture.hpp"
#include "photon/bus/frame.hpp"
#include "photon/bus/wire.hpp"
#include "photon/midi.hpp"
#include "photon/optics.hpp"
#include "photon/session.hpp"

namespace photon::io {

inline constexpr int kSchemaVersion = 1;

/// "m<manual>k<key>"; throws ValidationError otherwise.
KeyId parse_key(const std::string& text);

struct SessionFile {
    host::Session session;
    midi::MidiRoute route;
    /// Sensor model the simulator uses for every key without an override.
    optics::SensorModel sensor_model;
    std::map<KeyId, optics::SensorModel> sensor_overrides;
    bus::WireConfig wire;
};

std::string session_to_json(const SessionFile& file);
/// Throws ConfigError for unsupported schema versions or inconsistent content.
SessionFile session_from_json(const std::string& text);
SessionFile load_session(const std::string& path);
void save_session(const SessionFile& file, const std::string& path);

std::string mode_to_json(const host::HostMode& mode);
host::HostMode mode_from_json(const std::string& text);
/// One calibration entry as stored in the session file.
std::string calibration_to_json(const host::Session& session, const KeyId& key);

struct GestureRanges {
    double press_min_s = 0.08, press_max_s = 0.16;
    double hold_min_s = 0.05, hold_max_s = 0.2;
    double release_min_s = 0.04, release_max_s = 0.1;
    /// Pause between consecutive gestures on the same key.
    double gap_s = 0.05;
};

struct Score {
    std::vector<action::ScoreEntry> entries;
    /// Replaces the session's action when present.
    std::optional<action::ActionConfig> action;
};

/// `count` gestures round-robin over `keys`, alternating release styles,
/// onsets spaced so gestures on one key never overlap.
std::vector<action::ScoreEntry> random_score(int count, std::uint64_t seed, const std::vector<KeyId>& keys,
                                             const GestureRanges& ranges = {}, double spacing_s = 0.25);

std::string score_to_json(const Score& score);
Score score_from_json(const std::string& text);
Score load_score(const std::string& path);

std::string action_to_name(const action::ActionConfig& config);

/// `t_s,key,displacement_mm`, one row per sample of each track, 6 decimals.
std::string trace_csv(const std::map<KeyId, action::DisplacementTrace>& traces);
/// `key,event,t_s,displacement_mm` with events pluck, strike and release_cross.
std::string truth_csv(const std::map<KeyId, std::vector<action::GroundTruthEvents>>& truth);

struct ReplayResult {
    /// Performance time (capture t0 subtracted), time-ordered.
    std::vector<host::KeyEvent> events;
    std::vector<midi::TimedBatch> stream;
    std::uint64_t frames = 0;
    std::uint64_t bad_frames = 0;
};

/// Decodes a bus capture and runs it through the session's aggregation as
/// in MIDI mode. Position samples before the capture's t0 are dropped. The
/// session's runtime state is reset; its mode is kept.
ReplayResult replay(const bus::Capture& capture, host::Session& session);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace photon::io
