#pragma once

// Typed bus messages and their payload layouts. See docs/wire.md.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "photon/calibration.hpp"
#include "photon/detection.hpp"

namespace photon::bus {

inline constexpr std::uint8_t kBroadcast = 0x00;
inline constexpr std::uint8_t kMaxBoardAddress = 31;
/// Frames travelling to the host carry 0x20 | source address.
inline constexpr std::uint8_t kHostBound = 0x20;
inline constexpr std::uint8_t kHostAddress = kHostBound;
inline constexpr std::size_t kMaxPayload = 64;
inline constexpr std::size_t kMaxBoardIdLength = 16;
inline constexpr std::size_t kMaxBatchEntries = 8;
inline constexpr std::size_t kMaxSubset = 32;
inline constexpr std::size_t kCalibChunkData = kMaxPayload - 3;

enum class MsgType : std::uint8_t {
    status_request = 0x01,
    status_response = 0x02,
    mode_set = 0x03,
    calib_push = 0x04,
    poll_request = 0x05,
    poll_response = 0x06,
    enumerate = 0x07,
    enumerate_reply = 0x08,
    ack = 0x09,
    nack = 0x0A,
    key_event_raw = 0x10,
    position_batch = 0x11,
    threshold_push = 0x12,
};

enum class NackReason : std::uint8_t {
    malformed = 0x01,
    invalid_subset = 0x02,
    unknown_sensor = 0x03,
    invalid_mode = 0x04,
    chunk_sequence = 0x05,
    calibration_invalid = 0x06,
    unsupported = 0x07,
    rate_out_of_range = 0x08,
};

enum class BoardModeKind : std::uint8_t { event = 0, full_scan_stream = 1, subset_stream = 2 };

struct SampleEntry {
    std::uint8_t sensor_id = 0;
    std::uint32_t t_us = 0;
    std::uint16_t value = 0;

    bool operator==(const SampleEntry&) const = default;
};

struct StatusRequest {
    bool operator==(const StatusRequest&) const = default;
};

struct StatusResponse {
    std::uint8_t address = 0;
    std::string board_id;
    BoardModeKind mode = BoardModeKind::event;
    std::uint32_t uptime_ms = 0;
    std::uint32_t suppressed_events = 0;
    std::uint8_t sensor_count = 0;
    std::uint8_t calibrated_count = 0;

    bool operator==(const StatusResponse&) const = default;
};

struct ModeSet {
    BoardModeKind mode = BoardModeKind::event;
    std::uint16_t stream_rate_hz = 0;
    std::vector<std::uint8_t> subset;

    bool operator==(const ModeSet&) const = default;
};

struct CalibPush {
    std::uint8_t sensor_id = 0;
    std::uint8_t chunk_index = 0;
    std::uint8_t chunk_count = 1;
    std::vector<std::uint8_t> data;

    bool operator==(const CalibPush&) const = default;
};

/// Detection thresholds in micrometres.
struct ThresholdPush {
    std::uint16_t on_from_um = 0;
    std::uint16_t on_to_um = 0;
    std::uint16_t off_from_um = 0;
    std::uint16_t off_to_um = 0;
    std::uint16_t rearm_um = 0;

    bool operator==(const ThresholdPush&) const = default;
};

struct PollRequest {
    std::vector<std::uint8_t> sensors;

    bool operator==(const PollRequest&) const = default;
};

struct PollResponse {
    std::vector<SampleEntry> samples;

    bool operator==(const PollResponse&) const = default;
};

struct Enumerate {
    bool operator==(const Enumerate&) const = default;
};

struct EnumerateReply {
    std::uint8_t address = 0;
    std::string board_id;
    std::uint8_t sensor_count = 0;

    bool operator==(const EnumerateReply&) const = default;
};

struct Ack {
    bool operator==(const Ack&) const = default;
};

struct Nack {
    NackReason reason = NackReason::malformed;

    bool operator==(const Nack&) const = default;
};

struct KeyEventRaw {
    std::uint8_t sensor_id = 0;
    host::EdgeKind kind = host::EdgeKind::on;
    std::uint32_t entry_us = 0;
    std::uint32_t exit_us = 0;

    bool operator==(const KeyEventRaw&) const = default;
};

enum class BatchKind : std::uint8_t { counts = 0, position_um = 1 };

struct PositionBatch {
    BatchKind kind = BatchKind::counts;
    std::vector<SampleEntry> samples;

    bool operator==(const PositionBatch&) const = default;
};

using Message = std::variant<StatusRequest, StatusResponse, ModeSet, CalibPush, ThresholdPush, PollRequest,
                             PollResponse, Enumerate, EnumerateReply, Ack, Nack, KeyEventRaw, PositionBatch>;

MsgType type_of(const Message& m);
const char* type_name(MsgType t);

/// Serialized payload. Throws CodecError when a field is out of range or the
/// payload would exceed kMaxPayload.
std::vector<std::uint8_t> encode_payload(const Message& m);

/// nullopt for an unknown type or a malformed payload.
std::optional<Message> decode_payload(std::uint8_t type, std::span<const std::uint8_t> payload);

std::vector<std::uint8_t> serialize_calibration(const host::CalibrationEntry& entry);
host::CalibrationEntry deserialize_calibration(int sensor_id, std::span<const std::uint8_t> bytes);

/// Splits a calibration entry into CalibPush chunks that each fit one frame.
std::vector<CalibPush> chunk_calibration(const host::CalibrationEntry& entry);

ThresholdPush threshold_push_from(const host::DetectionConfig& cfg);
host::DetectionConfig apply_thresholds(host::DetectionConfig base, const ThresholdPush& push);

}  // namespace photon::bus
