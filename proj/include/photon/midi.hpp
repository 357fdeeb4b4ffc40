#pragma once

// MIDI output: real-time note messages, Standard MIDI File (format 0) corpus
// files, and CSV export of streamed positions.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "photon/bus/message.hpp"
#include "photon/session.hpp"

namespace photon::midi {

struct MidiRoute {
    /// manual -> channel 1-16
    std::map<int, int> channels = {{1, 1}, {2, 2}};
    /// Note number of key 0 on every manual.
    int base_note = 36;
    /// Per-manual overrides of base_note.
    std::map<int, int> manual_base;

    int channel(int manual) const;
    int note(const KeyId& key) const;
    /// Inverse of (channel, note), for parse-back.
    std::optional<KeyId> key_for(int channel, int note) const;
    /// Every key of the compass maps into 0-127 and channels are distinct.
    void validate(const Compass& compass) const;
};

/// Throws RoutingError for unmapped manuals or notes outside 0-127.
std::array<std::uint8_t, 3> encode_realtime(const host::KeyEvent& event, const MidiRoute& route);

/// Stream encoder that mirrors key-event alternation and closes dangling notes.
class RealtimeEncoder {
public:
    explicit RealtimeEncoder(MidiRoute route) : route_(std::move(route)) {}

    std::vector<std::uint8_t> feed(const host::KeyEvent& event);
    /// Note-offs (velocity 1) for every note still sounding.
    std::vector<std::uint8_t> close();
    std::uint64_t compensated() const { return compensated_; }
    std::uint64_t dropped() const { return dropped_; }

private:
    MidiRoute route_;
    std::map<std::pair<int, int>, bool> sounding_;
    std::uint64_t compensated_ = 0;
    std::uint64_t dropped_ = 0;
};

struct SmfOptions {
    int ticks_per_quarter = 480;
    std::uint32_t tempo_us_per_quarter = 500000;
};

struct SmfDiagnostics {
    int compensating_offs = 0;
};

/// Toolkit-independent representation of a parsed file.
struct SmfEvent {
    std::uint32_t tick = 0;
    std::vector<std::uint8_t> bytes;  // status + data, or FF type len data for meta

    bool operator==(const SmfEvent&) const = default;
};

struct SmfFile {
    int format = 0;
    int ticks_per_quarter = 480;
    std::uint32_t tempo_us_per_quarter = 500000;
    std::vector<SmfEvent> events;  // absolute ticks
};

/// Bytes of a format-0 file. Events must be time-sorted (ValidationError
/// otherwise). Notes left sounding get a velocity-1 note-off at the last event.
std::vector<std::uint8_t> smf_bytes(const std::vector<host::KeyEvent>& events, const MidiRoute& route,
                                    const SmfOptions& options = {}, SmfDiagnostics* diag = nullptr);
void write_smf(const std::vector<host::KeyEvent>& events, const MidiRoute& route, const std::string& path,
               const SmfOptions& options = {}, SmfDiagnostics* diag = nullptr);

/// Throws CodecError on malformed input.
SmfFile parse_smf(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

/// Note events of a parsed file back as key events (traversal unknown: 0).
std::vector<host::KeyEvent> key_events(const SmfFile& file, const MidiRoute& route);

double tick_seconds(const SmfOptions& options);

struct TimedBatch {
    std::uint8_t address = 0;
    bus::PositionBatch batch;
};

/// `t_s,sensor_id,manual,key,displacement_mm`, time-ordered, 6 decimals.
/// Throws CalibrationError naming the first sensor without calibration.
/// `t0_s` is subtracted from every timestamp.
std::string positions_csv(std::span<const TimedBatch> stream, const host::Session& session, double t0_s = 0.0);
void export_positions(std::span<const TimedBatch> stream, const host::Session& session, const std::string& path,
                      double t0_s = 0.0);

}  // namespace photon::midi
