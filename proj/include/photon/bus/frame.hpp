#pragma once

// Byte framing: SOF | address | type | seq | len | payload | crc16 (big-endian).
// Every byte after SOF is escaped: 0x7E and 0x7D go out as 0x7D, byte ^ 0x20.

#include <cstdint>
#include <span>
#include <vector>

#include "photon/bus/message.hpp"

namespace photon::bus {

inline constexpr std::uint8_t kSof = 0x7E;
inline constexpr std::uint8_t kEscape = 0x7D;
inline constexpr std::uint8_t kEscapeXor = 0x20;
/// address + type + seq + len + payload + crc, unescaped.
inline constexpr std::size_t kMaxFrameBody = 4 + kMaxPayload + 2;

struct Frame {
    std::uint8_t address = 0;
    std::uint8_t type = 0;
    std::uint8_t seq = 0;
    std::vector<std::uint8_t> payload;

    bool operator==(const Frame&) const = default;
};

/// Wire bytes of one frame. Throws CodecError for payloads over kMaxPayload.
std::vector<std::uint8_t> encode_frame(const Frame& frame);

/// Wire bytes of a message. A CalibPush whose data does not fit one frame is
/// split into consecutive chunk frames with seq, seq+1, ...
std::vector<std::uint8_t> encode(const Message& message, std::uint8_t address, std::uint8_t seq);

/// Number of frames encode() emits for `message`.
std::size_t frame_count(const Message& message);

struct Received {
    std::uint8_t address = 0;
    std::uint8_t seq = 0;
    Message message;
};

struct DecoderStats {
    std::uint64_t frames_ok = 0;
    std::uint64_t bad_crc = 0;
    std::uint64_t bad_length = 0;
    std::uint64_t bad_escape = 0;
    /// Frames cut short by a new SOF.
    std::uint64_t truncated = 0;
    /// CRC passed but the payload did not parse as its declared type.
    std::uint64_t undecodable = 0;
    /// Bytes discarded while hunting for SOF.
    std::uint64_t garbage_bytes = 0;

    std::uint64_t dropped() const { return bad_crc + bad_length + bad_escape + truncated + undecodable; }
};

/// Resynchronizing stream decoder. Accepts arbitrary bytes in arbitrary
/// chunks; never throws; buffers at most kMaxFrameBody bytes.
class Decoder {
public:
    std::vector<Received> feed(std::span<const std::uint8_t> bytes);
    /// Frame-level output for callers that want raw frames.
    std::vector<Frame> feed_frames(std::span<const std::uint8_t> bytes);

    const DecoderStats& stats() const { return stats_; }
    std::size_t buffered() const { return body_.size(); }
    void reset();

private:
    enum class State { hunt, body, escaped };

    void push(std::uint8_t b, std::vector<Frame>& out);
    void finish(std::vector<Frame>& out);

    State state_ = State::hunt;
    std::vector<std::uint8_t> body_;
    DecoderStats stats_;
};

}  // namespace photon::bus
