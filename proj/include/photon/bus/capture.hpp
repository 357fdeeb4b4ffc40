#pragma once

// Host-side bus recordings: every byte the host received, with its arrival
// time. Text form, one chunk per line:
//
//   # photon bus capture v1
//   # t0 0.130000
//   0.131250 7e21...
//   # reset
//
// `t0` marks performance time zero; `reset` separates independent runs.

#include <cstdint>
#include <string>
#include <vector>

#include "photon/bus/transport.hpp"

namespace photon::bus {

struct Capture {
    struct Chunk {
        double t_s = 0.0;
        std::vector<std::uint8_t> bytes;
        bool reset = false;
    };
    double t0_s = 0.0;
    std::vector<Chunk> chunks;

    void mark_reset() { chunks.push_back({0.0, {}, true}); }
    std::string to_text() const;
    /// Throws CodecError on malformed lines.
    static Capture from_text(const std::string& text);
};

/// Passes everything through and appends received bytes to `sink` when set.
class RecordingTransport : public ByteTransport {
public:
    explicit RecordingTransport(ByteTransport& inner) : inner_(inner) {}

    void write(const std::vector<std::uint8_t>& bytes) override { inner_.write(bytes); }
    std::vector<std::uint8_t> read(double timeout_s) override;
    double now() const override { return inner_.now(); }

    void set_sink(Capture* sink) { sink_ = sink; }
    Capture* sink() const { return sink_; }

private:
    ByteTransport& inner_;
    Capture* sink_ = nullptr;
};

}  // namespace photon::bus
