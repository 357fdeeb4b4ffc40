#include "photon/bus/frame.hpp"

#include "photon/bus/crc.hpp"
#include "photon/error.hpp"

namespace photon::bus {
namespace {

void put_escaped(std::vector<std::uint8_t>& out, std::uint8_t b) {
    if (b == kSof || b == kEscape) {
        out.push_back(kEscape);
        out.push_back(static_cast<std::uint8_t>(b ^ kEscapeXor));
    } else {
        out.push_back(b);
    }
}

std::vector<CalibPush> split_calib(const CalibPush& push) {
    if (push.data.size() <= kCalibChunkData) return {push};
    if (push.chunk_index != 0 || push.chunk_count != 1) {
        throw CodecError("bus.codec", "oversize CalibPush must be a single unsplit record");
    }
    const std::size_t count = (push.data.size() + kCalibChunkData - 1) / kCalibChunkData;
    if (count > 255) throw CodecError("bus.codec", "calibration record too large");
    std::vector<CalibPush> chunks;
    for (std::size_t i = 0; i < count; ++i) {
        CalibPush c;
        c.sensor_id = push.sensor_id;
        c.chunk_index = static_cast<std::uint8_t>(i);
        c.chunk_count = static_cast<std::uint8_t>(count);
        const auto begin = push.data.begin() + static_cast<std::ptrdiff_t>(i * kCalibChunkData);
        const auto end = push.data.begin() +
                         static_cast<std::ptrdiff_t>(std::min(push.data.size(), (i + 1) * kCalibChunkData));
        c.data.assign(begin, end);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    if (frame.payload.size() > kMaxPayload) throw CodecError("bus.codec", "payload exceeds 64 bytes");
    std::vector<std::uint8_t> body;
    body.reserve(4 + frame.payload.size() + 2);
    body.push_back(frame.address);
    body.push_back(frame.type);
    body.push_back(frame.seq);
    body.push_back(static_cast<std::uint8_t>(frame.payload.size()));
    body.insert(body.end(), frame.payload.begin(), frame.payload.end());
    const std::uint16_t crc = crc16_ccitt_false(body);
    body.push_back(static_cast<std::uint8_t>(crc >> 8));
    body.push_back(static_cast<std::uint8_t>(crc & 0xFF));

    std::vector<std::uint8_t> wire;
    wire.reserve(body.size() * 2 + 1);
    wire.push_back(kSof);
    for (auto b : body) put_escaped(wire, b);
    return wire;
}

std::vector<std::uint8_t> encode(const Message& message, std::uint8_t address, std::uint8_t seq) {
    if (const auto* push = std::get_if<CalibPush>(&message)) {
        std::vector<std::uint8_t> wire;
        for (const auto& chunk : split_calib(*push)) {
            const auto bytes = encode_frame({address, static_cast<std::uint8_t>(MsgType::calib_push), seq++,
                                             encode_payload(chunk)});
            wire.insert(wire.end(), bytes.begin(), bytes.end());
        }
        return wire;
    }
    return encode_frame({address, static_cast<std::uint8_t>(type_of(message)), seq, encode_payload(message)});
}

std::size_t frame_count(const Message& message) {
    if (const auto* push = std::get_if<CalibPush>(&message)) {
        return push->data.size() <= kCalibChunkData ? 1 : (push->data.size() + kCalibChunkData - 1) / kCalibChunkData;
    }
    return 1;
}

void Decoder::reset() {
    state_ = State::hunt;
    body_.clear();
}

void Decoder::finish(std::vector<Frame>& out) {
    const std::size_t n = body_.size();
    const std::uint16_t want = static_cast<std::uint16_t>((body_[n - 2] << 8) | body_[n - 1]);
    const std::uint16_t got = crc16_ccitt_false(std::span<const std::uint8_t>(body_.data(), n - 2));
    if (want != got) {
        ++stats_.bad_crc;
    } else {
        Frame f;
        f.address = body_[0];
        f.type = body_[1];
        f.seq = body_[2];
        f.payload.assign(body_.begin() + 4, body_.end() - 2);
        out.push_back(std::move(f));
    }
    body_.clear();
    state_ = State::hunt;
}

void Decoder::push(std::uint8_t b, std::vector<Frame>& out) {
    if (b == kSof) {
        if (state_ == State::escaped) {
            ++stats_.bad_escape;
        } else if (state_ == State::body && !body_.empty()) {
            ++stats_.truncated;
        }
        body_.clear();
        state_ = State::body;
        return;
    }
    switch (state_) {
        case State::hunt:
            ++stats_.garbage_bytes;
            return;
        case State::body:
            if (b == kEscape) {
                state_ = State::escaped;
                return;
            }
            break;
        case State::escaped: {
            const auto v = static_cast<std::uint8_t>(b ^ kEscapeXor);
            if (v != kSof && v != kEscape) {
                ++stats_.bad_escape;
                body_.clear();
                state_ = State::hunt;
                return;
            }
            b = v;
            state_ = State::body;
            break;
        }
    }
    body_.push_back(b);
    if (body_.size() == 4 && body_[3] > kMaxPayload) {
        ++stats_.bad_length;
        body_.clear();
        state_ = State::hunt;
        return;
    }
    if (body_.size() >= 4 && body_.size() == 4u + body_[3] + 2u) finish(out);
}

std::vector<Frame> Decoder::feed_frames(std::span<const std::uint8_t> bytes) {
    std::vector<Frame> out;
    for (auto b : bytes) push(b, out);
    return out;
}

std::vector<Received> Decoder::feed(std::span<const std::uint8_t> bytes) {
    std::vector<Received> out;
    for (auto& f : feed_frames(bytes)) {
        auto msg = decode_payload(f.type, f.payload);
        if (!msg) {
            ++stats_.undecodable;
            continue;
        }
        ++stats_.frames_ok;
        out.push_back({f.address, f.seq, std::move(*msg)});
    }
    return out;
}

}  // namespace photon::bus
