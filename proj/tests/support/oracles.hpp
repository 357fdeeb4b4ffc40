#pragma once

// Reference implementations the tests compare the library against. None of
// them shares code with src/.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

/// CRC-16/CCITT-FALSE one bit at a time.
inline std::uint16_t crc16_bitwise(const std::vector<std::uint8_t>& data) {
    std::uint16_t crc = 0xFFFF;
    for (std::uint8_t byte : data) {
        for (int bit = 7; bit >= 0; --bit) {
            const bool in = (byte >> bit) & 1;
            const bool top = (crc >> 15) & 1;
            crc = static_cast<std::uint16_t>(crc << 1);
            if (in != top) crc ^= 0x1021;
        }
    }
    return crc;
}

/// Closed-form inverse of floor + a / (gap + x + d0)^2.
inline double optics_inverse(double counts, double a_gain, double d0_mm, double floor_counts, double rest_gap_mm) {
    return std::sqrt(a_gain / (counts - floor_counts)) - d0_mm - rest_gap_mm;
}

struct Note {
    bool on = true;
    int channel = 1;
    int note = 0;
    int velocity = 0;
    std::uint32_t tick = 0;
};

struct Smf {
    int format = -1;
    int tracks = 0;
    int division = 0;
    std::uint32_t tempo = 500000;
    bool end_of_track = false;
    std::vector<Note> notes;
};

/// Minimal Standard MIDI File reader: MThd, MTrk, VLQ deltas, running status,
/// meta and sysex skipping.
inline Smf read_smf(const std::vector<std::uint8_t>& b) {
    Smf out;
    std::size_t p = 0;
    auto need = [&](std::size_t n) {
        if (p + n > b.size()) throw std::runtime_error("smf: truncated");
    };
    auto u32 = [&] {
        need(4);
        const std::uint32_t v = (std::uint32_t(b[p]) << 24) | (std::uint32_t(b[p + 1]) << 16) |
                                (std::uint32_t(b[p + 2]) << 8) | b[p + 3];
        p += 4;
        return v;
    };
    auto u16 = [&] {
        need(2);
        const int v = (b[p] << 8) | b[p + 1];
        p += 2;
        return v;
    };
    auto vlq = [&] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            need(1);
            const std::uint8_t c = b[p++];
            v = (v << 7) | (c & 0x7F);
            if (!(c & 0x80)) return v;
        }
        throw std::runtime_error("smf: vlq too long");
    };
    need(4);
    if (std::string(b.begin(), b.begin() + 4) != "MThd") throw std::runtime_error("smf: no MThd");
    p = 4;
    if (u32() != 6) throw std::runtime_error("smf: header length");
    out.format = u16();
    out.tracks = u16();
    out.division = u16();
    for (int t = 0; t < out.tracks; ++t) {
        need(4);
        if (std::string(b.begin() + p, b.begin() + p + 4) != "MTrk") throw std::runtime_error("smf: no MTrk");
        p += 4;
        const std::size_t end = p + u32();
        if (end > b.size()) throw std::runtime_error("smf: track overruns file");
        std::uint32_t tick = 0;
        int status = 0;
        while (p < end) {
            tick += vlq();
            need(1);
            int s = b[p];
            if (s & 0x80) {
                ++p;
            } else {
                s = status;
            }
            if (s == 0xFF) {
                need(1);
                const int type = b[p++];
                const std::uint32_t len = vlq();
                need(len);
                if (type == 0x51 && len == 3) out.tempo = (b[p] << 16) | (b[p + 1] << 8) | b[p + 2];
                if (type == 0x2F) out.end_of_track = true;
                p += len;
                continue;
            }
            if (s == 0xF0 || s == 0xF7) {
                p += vlq();
                continue;
            }
            status = s;
            const int hi = s & 0xF0;
            const int data = (hi == 0xC0 || hi == 0xD0) ? 1 : 2;
            need(data);
            if (hi == 0x90 || hi == 0x80) {
                Note n;
                n.on = hi == 0x90 && b[p + 1] != 0;
                n.channel = (s & 0x0F) + 1;
                n.note = b[p];
                n.velocity = b[p + 1];
                n.tick = tick;
                out.notes.push_back(n);
            }
            p += data;
        }
        if (p != end) throw std::runtime_error("smf: track length mismatch");
    }
    return out;
}

}  // namespace oracle
