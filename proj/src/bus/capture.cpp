#include "photon/bus/capture.hpp"

#include <cstdio>
#include <sstream>

#include "photon/error.hpp"

namespace photon::bus {
namespace {

constexpr const char* kHeader = "# photon bus capture v1";

int nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string Capture::to_text() const {
    std::string out = kHeader;
    char buf[64];
    std::snprintf(buf, sizeof buf, "\n# t0 %.6f\n", t0_s);
    out += buf;
    static const char* hex = "0123456789abcdef";
    for (const auto& c : chunks) {
        if (c.reset) {
            out += "# reset\n";
            continue;
        }
        std::snprintf(buf, sizeof buf, "%.6f ", c.t_s);
        out += buf;
        for (auto b : c.bytes) {
            out += hex[b >> 4];
            out += hex[b & 0xF];
        }
        out += '\n';
    }
    return out;
}

Capture Capture::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kHeader) throw CodecError("bus.capture", "missing capture header");
    Capture cap;
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        if (line == "# reset") {
            cap.mark_reset();
            continue;
        }
        if (line.rfind("# t0 ", 0) == 0) {
            cap.t0_s = std::stod(line.substr(5));
            continue;
        }
        if (line[0] == '#') continue;
        const auto space = line.find(' ');
        if (space == std::string::npos || (line.size() - space - 1) % 2 != 0) {
            throw CodecError("bus.capture", "malformed line " + std::to_string(n));
        }
        Chunk c;
        try {
            c.t_s = std::stod(line.substr(0, space));
        } catch (const std::exception&) {
            throw CodecError("bus.capture", "bad timestamp on line " + std::to_string(n));
        }
        for (std::size_t i = space + 1; i < line.size(); i += 2) {
            const int hi = nibble(line[i]), lo = nibble(line[i + 1]);
            if (hi < 0 || lo < 0) throw CodecError("bus.capture", "bad hex on line " + std::to_string(n));
            c.bytes.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
        }
        cap.chunks.push_back(std::move(c));
    }
    return cap;
}

std::vector<std::uint8_t> RecordingTransport::read(double timeout_s) {
    auto bytes = inner_.read(timeout_s);
    if (sink_ && !bytes.empty()) sink_->chunks.push_back({inner_.now(), bytes, false});
    return bytes;
}

}  // namespace photon::bus
