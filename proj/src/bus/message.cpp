#include "photon/bus/message.hpp"

#include <bit>
#include <cmath>

#include "photon/error.hpp"

namespace photon::bus {
namespace {

constexpr std::string_view kModule = "bus.codec";

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        u8(static_cast<std::uint8_t>(v & 0xFF));
        u8(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int s = 0; s < 32; s += 8) u8(static_cast<std::uint8_t>((v >> s) & 0xFF));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int s = 0; s < 64; s += 8) u8(static_cast<std::uint8_t>((bits >> s) & 0xFF));
    }
    void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
    void text(const std::string& s) {
        if (s.size() > kMaxBoardIdLength) throw CodecError(kModule, "board id longer than 16 bytes");
        u8(static_cast<std::uint8_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }
    void entries(const std::vector<SampleEntry>& list) {
        if (list.size() > kMaxBatchEntries) throw CodecError(kModule, "too many sample entries");
        u8(static_cast<std::uint8_t>(list.size()));
        for (const auto& e : list) {
            u8(e.sensor_id);
            u32(e.t_us);
            u16(e.value);
        }
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    bool ok() const { return ok_; }
    bool done() const { return ok_ && pos_ == in_.size(); }

    std::uint8_t u8() {
        if (pos_ >= in_.size()) {
            ok_ = false;
            return 0;
        }
        return in_[pos_++];
    }
    std::uint16_t u16() {
        const std::uint16_t lo = u8();
        return static_cast<std::uint16_t>(lo | (u8() << 8));
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int s = 0; s < 32; s += 8) v |= static_cast<std::uint32_t>(u8()) << s;
        return v;
    }
    double f64() {
        std::uint64_t bits = 0;
        for (int s = 0; s < 64; s += 8) bits |= static_cast<std::uint64_t>(u8()) << s;
        return std::bit_cast<double>(bits);
    }
    std::string text() {
        const std::size_t n = u8();
        if (n > kMaxBoardIdLength || pos_ + n > in_.size()) {
            ok_ = false;
            return {};
        }
        std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::vector<std::uint8_t> ids(std::size_t limit) {
        const std::size_t n = u8();
        if (n > limit) ok_ = false;
        std::vector<std::uint8_t> v;
        for (std::size_t i = 0; ok_ && i < n; ++i) v.push_back(u8());
        return v;
    }
    std::vector<SampleEntry> entries() {
        const std::size_t n = u8();
        if (n > kMaxBatchEntries) ok_ = false;
        std::vector<SampleEntry> v;
        for (std::size_t i = 0; ok_ && i < n; ++i) {
            SampleEntry e;
            e.sensor_id = u8();
            e.t_us = u32();
            e.value = u16();
            v.push_back(e);
        }
        return v;
    }
    std::vector<std::uint8_t> rest() {
        std::vector<std::uint8_t> v(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.end());
        pos_ = in_.size();
        return v;
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

std::uint16_t to_um(double mm) {
    const double um = std::round(mm * 1000.0);
    if (!(um >= 0.0 && um <= 65535.0)) throw CodecError(kModule, "threshold outside the 0-65.535 mm range");
    return static_cast<std::uint16_t>(um);
}

}  // namespace

MsgType type_of(const Message& m) {
    return std::visit(Overloaded{
                          [](const StatusRequest&) { return MsgType::status_request; },
                          [](const StatusResponse&) { return MsgType::status_response; },
                          [](const ModeSet&) { return MsgType::mode_set; },
                          [](const CalibPush&) { return MsgType::calib_push; },
                          [](const ThresholdPush&) { return MsgType::threshold_push; },
                          [](const PollRequest&) { return MsgType::poll_request; },
                          [](const PollResponse&) { return MsgType::poll_response; },
                          [](const Enumerate&) { return MsgType::enumerate; },
                          [](const EnumerateReply&) { return MsgType::enumerate_reply; },
                          [](const Ack&) { return MsgType::ack; },
                          [](const Nack&) { return MsgType::nack; },
                          [](const KeyEventRaw&) { return MsgType::key_event_raw; },
                          [](const PositionBatch&) { return MsgType::position_batch; },
                      },
                      m);
}

const char* type_name(MsgType t) {
    switch (t) {
        case MsgType::status_request: return "StatusRequest";
        case MsgType::status_response: return "StatusResponse";
        case MsgType::mode_set: return "ModeSet";
        case MsgType::calib_push: return "CalibPush";
        case MsgType::poll_request: return "PollRequest";
        case MsgType::poll_response: return "PollResponse";
        case MsgType::enumerate: return "Enumerate";
        case MsgType::enumerate_reply: return "EnumerateReply";
        case MsgType::ack: return "Ack";
        case MsgType::nack: return "Nack";
        case MsgType::key_event_raw: return "KeyEventRaw";
        case MsgType::position_batch: return "PositionBatch";
        case MsgType::threshold_push: return "ThresholdPush";
    }
    return "Unknown";
}

std::vector<std::uint8_t> encode_payload(const Message& m) {
    Writer w;
    std::visit(Overloaded{
                   [](const StatusRequest&) {},
                   [&](const StatusResponse& r) {
                       w.u8(r.address);
                       w.u8(static_cast<std::uint8_t>(r.mode));
                       w.u32(r.uptime_ms);
                       w.u32(r.suppressed_events);
                       w.u8(r.sensor_count);
                       w.u8(r.calibrated_count);
                       w.text(r.board_id);
                   },
                   [&](const ModeSet& r) {
                       if (r.subset.size() > kMaxSubset) throw CodecError(kModule, "subset longer than 32 sensors");
                       w.u8(static_cast<std::uint8_t>(r.mode));
                       w.u16(r.stream_rate_hz);
                       w.u8(static_cast<std::uint8_t>(r.subset.size()));
                       w.bytes(r.subset);
                   },
                   [&](const CalibPush& r) {
                       if (r.data.size() > kCalibChunkData) {
                           throw CodecError(kModule, "calibration chunk too large; use chunk_calibration");
                       }
                       w.u8(r.sensor_id);
                       w.u8(r.chunk_index);
                       w.u8(r.chunk_count);
                       w.bytes(r.data);
                   },
                   [&](const ThresholdPush& r) {
                       w.u16(r.on_from_um);
                       w.u16(r.on_to_um);
                       w.u16(r.off_from_um);
                       w.u16(r.off_to_um);
                       w.u16(r.rearm_um);
                   },
                   [&](const PollRequest& r) {
                       if (r.sensors.size() > kMaxBatchEntries) throw CodecError(kModule, "poll of more than 8 sensors");
                       w.u8(static_cast<std::uint8_t>(r.sensors.size()));
                       w.bytes(r.sensors);
                   },
                   [&](const PollResponse& r) { w.entries(r.samples); },
                   [](const Enumerate&) {},
                   [&](const EnumerateReply& r) {
                       w.u8(r.address);
                       w.u8(r.sensor_count);
                       w.text(r.board_id);
                   },
                   [](const Ack&) {},
                   [&](const Nack& r) { w.u8(static_cast<std::uint8_t>(r.reason)); },
                   [&](const KeyEventRaw& r) {
                       w.u8(r.sensor_id);
                       w.u8(r.kind == host::EdgeKind::on ? 0 : 1);
                       w.u32(r.entry_us);
                       w.u32(r.exit_us);
                   },
                   [&](const PositionBatch& r) {
                       w.u8(static_cast<std::uint8_t>(r.kind));
                       w.entries(r.samples);
                   },
               },
               m);
    auto out = w.take();
    if (out.size() > kMaxPayload) throw CodecError(kModule, "payload exceeds 64 bytes");
    return out;
}

std::optional<Message> decode_payload(std::uint8_t type, std::span<const std::uint8_t> payload) {
    Reader r(payload);
    auto valid_mode = [](std::uint8_t v) { return v <= static_cast<std::uint8_t>(BoardModeKind::subset_stream); };
    std::optional<Message> out;
    switch (static_cast<MsgType>(type)) {
        case MsgType::status_request: out = StatusRequest{}; break;
        case MsgType::status_response: {
            StatusResponse m;
            m.address = r.u8();
            const auto mode = r.u8();
            if (!valid_mode(mode)) return std::nullopt;
            m.mode = static_cast<BoardModeKind>(mode);
            m.uptime_ms = r.u32();
            m.suppressed_events = r.u32();
            m.sensor_count = r.u8();
            m.calibrated_count = r.u8();
            m.board_id = r.text();
            out = m;
            break;
        }
        case MsgType::mode_set: {
            ModeSet m;
            const auto mode = r.u8();
            if (!valid_mode(mode)) return std::nullopt;
            m.mode = static_cast<BoardModeKind>(mode);
            m.stream_rate_hz = r.u16();
            m.subset = r.ids(kMaxSubset);
            out = m;
            break;
        }
        case MsgType::calib_push: {
            CalibPush m;
            m.sensor_id = r.u8();
            m.chunk_index = r.u8();
            m.chunk_count = r.u8();
            m.data = r.rest();
            if (m.chunk_count == 0 || m.chunk_index >= m.chunk_count) return std::nullopt;
            out = m;
            break;
        }
        case MsgType::threshold_push: {
            ThresholdPush m;
            m.on_from_um = r.u16();
            m.on_to_um = r.u16();
            m.off_from_um = r.u16();
            m.off_to_um = r.u16();
            m.rearm_um = r.u16();
            out = m;
            break;
        }
        case MsgType::poll_request: out = PollRequest{r.ids(kMaxBatchEntries)}; break;
        case MsgType::poll_response: out = PollResponse{r.entries()}; break;
        case MsgType::enumerate: out = Enumerate{}; break;
        case MsgType::enumerate_reply: {
            EnumerateReply m;
            m.address = r.u8();
            m.sensor_count = r.u8();
            m.board_id = r.text();
            out = m;
            break;
        }
        case MsgType::ack: out = Ack{}; break;
        case MsgType::nack: {
            const auto reason = r.u8();
            if (reason < 0x01 || reason > static_cast<std::uint8_t>(NackReason::rate_out_of_range)) return std::nullopt;
            out = Nack{static_cast<NackReason>(reason)};
            break;
        }
        case MsgType::key_event_raw: {
            KeyEventRaw m;
            m.sensor_id = r.u8();
            const auto kind = r.u8();
            if (kind > 1) return std::nullopt;
            m.kind = kind == 0 ? host::EdgeKind::on : host::EdgeKind::off;
            m.entry_us = r.u32();
            m.exit_us = r.u32();
            out = m;
            break;
        }
        case MsgType::position_batch: {
            PositionBatch m;
            const auto kind = r.u8();
            if (kind > 1) return std::nullopt;
            m.kind = static_cast<BatchKind>(kind);
            m.samples = r.entries();
            out = m;
            break;
        }
        default: return std::nullopt;
    }
    if (!r.done()) return std::nullopt;
    return out;
}

std::vector<std::uint8_t> serialize_calibration(const host::CalibrationEntry& entry) {
    Writer w;
    w.f64(entry.raw_rest);
    w.f64(entry.raw_full);
    w.f64(entry.travel_mm);
    w.f64(entry.captured_at);
    if (entry.anchors.size() > 255) throw CodecError(kModule, "too many calibration anchors");
    w.u8(static_cast<std::uint8_t>(entry.anchors.size()));
    for (const auto& a : entry.anchors) {
        w.f64(a.counts);
        w.f64(a.mm);
    }
    return w.take();
}

host::CalibrationEntry deserialize_calibration(int sensor_id, std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const double rest = r.f64();
    const double full = r.f64();
    const double travel = r.f64();
    const double captured = r.f64();
    const std::size_t n = r.u8();
    std::vector<host::Anchor> anchors;
    for (std::size_t i = 0; r.ok() && i < n; ++i) {
        host::Anchor a;
        a.counts = r.f64();
        a.mm = r.f64();
        anchors.push_back(a);
    }
    if (!r.done()) throw CodecError(kModule, "truncated calibration record");
    return host::make_entry(sensor_id, rest, full, std::move(anchors), travel, captured);
}

std::vector<CalibPush> chunk_calibration(const host::CalibrationEntry& entry) {
    if (entry.sensor_id < 0 || entry.sensor_id > 255) throw CodecError(kModule, "sensor id does not fit a byte");
    const auto bytes = serialize_calibration(entry);
    const std::size_t count = (bytes.size() + kCalibChunkData - 1) / kCalibChunkData;
    if (count > 255) throw CodecError(kModule, "calibration record too large");
    std::vector<CalibPush> chunks;
    for (std::size_t i = 0; i < count; ++i) {
        CalibPush c;
        c.sensor_id = static_cast<std::uint8_t>(entry.sensor_id);
        c.chunk_index = static_cast<std::uint8_t>(i);
        c.chunk_count = static_cast<std::uint8_t>(count);
        const std::size_t begin = i * kCalibChunkData;
        const std::size_t end = std::min(bytes.size(), begin + kCalibChunkData);
        c.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(begin), bytes.begin() + static_cast<std::ptrdiff_t>(end));
        chunks.push_back(std::move(c));
    }
    return chunks;
}

ThresholdPush threshold_push_from(const host::DetectionConfig& cfg) {
    return {to_um(cfg.on_window.from_mm), to_um(cfg.on_window.to_mm), to_um(cfg.off_window.from_mm),
            to_um(cfg.off_window.to_mm), to_um(cfg.rearm_mm)};
}

host::DetectionConfig apply_thresholds(host::DetectionConfig base, const ThresholdPush& push) {
    base.on_window = {push.on_from_um / 1000.0, push.on_to_um / 1000.0};
    base.off_window = {push.off_from_um / 1000.0, push.off_to_um / 1000.0};
    base.rearm_mm = push.rearm_um / 1000.0;
    base.validate();
    return base;
}

}  // namespace photon::bus
