#include "photon/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "photon/error.hpp"

namespace photon::midi {
namespace {

constexpr std::string_view kModule = "midi";

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = static_cast<std::uint8_t>(v & 0x7F);
    while ((v >>= 7) != 0) buf[n++] = static_cast<std::uint8_t>(0x80 | (v & 0x7F));
    while (n > 0) out.push_back(buf[--n]);
}

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(kModule, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

int MidiRoute::channel(int manual) const {
    const auto it = channels.find(manual);
    if (it == channels.end()) throw RoutingError(kModule, "no channel for manual " + std::to_string(manual));
    if (it->second < 1 || it->second > 16) throw RoutingError(kModule, "channel must be 1-16");
    return it->second;
}

int MidiRoute::note(const KeyId& key) const {
    const auto b = manual_base.find(key.manual);
    const int n = (b != manual_base.end() ? b->second : base_note) + key.key;
    if (key.key < 0 || n < 0 || n > 127) throw RoutingError(kModule, "key " + to_string(key) + " has no MIDI note");
    return n;
}

std::optional<KeyId> MidiRoute::key_for(int ch, int n) const {
    for (const auto& [manual, c] : channels) {
        if (c != ch) continue;
        const auto b = manual_base.find(manual);
        const int key = n - (b != manual_base.end() ? b->second : base_note);
        if (key >= 0) return KeyId{manual, key};
    }
    return std::nullopt;
}

void MidiRoute::validate(const Compass& compass) const {
    std::set<int> used;
    for (int m = 1; m <= compass.manuals; ++m) {
        if (!used.insert(channel(m)).second) throw RoutingError(kModule, "two manuals share a channel");
        note({m, 0});
        note({m, compass.keys_per_manual - 1});
    }
}

std::array<std::uint8_t, 3> encode_realtime(const host::KeyEvent& event, const MidiRoute& route) {
    const int ch = route.channel(event.manual);
    const int note = route.note(event.id());
    if (event.velocity < 1 || event.velocity > 127) throw ValidationError(kModule, "velocity must be 1-127");
    const std::uint8_t status = event.kind == host::KeyEvent::Kind::note_on ? 0x90 : 0x80;
    return {static_cast<std::uint8_t>(status | (ch - 1)), static_cast<std::uint8_t>(note),
            static_cast<std::uint8_t>(event.velocity)};
}

std::vector<std::uint8_t> RealtimeEncoder::feed(const host::KeyEvent& event) {
    const auto bytes = encode_realtime(event, route_);
    const std::pair<int, int> id{bytes[0] & 0x0F, bytes[1]};
    const bool on = event.kind == host::KeyEvent::Kind::note_on;
    if (on == sounding_.contains(id)) {
        ++dropped_;
        return {};
    }
    if (on) {
        sounding_[id] = true;
    } else {
        sounding_.erase(id);
    }
    return {bytes.begin(), bytes.end()};
}

std::vector<std::uint8_t> RealtimeEncoder::close() {
    std::vector<std::uint8_t> out;
    for (const auto& [id, on] : sounding_) {
        out.push_back(static_cast<std::uint8_t>(0x80 | id.first));
        out.push_back(static_cast<std::uint8_t>(id.second));
        out.push_back(1);
        ++compensated_;
    }
    sounding_.clear();
    return out;
}

double tick_seconds(const SmfOptions& options) {
    return options.tempo_us_per_quarter * 1e-6 / options.ticks_per_quarter;
}

std::vector<std::uint8_t> smf_bytes(const std::vector<host::KeyEvent>& events, const MidiRoute& route,
                                    const SmfOptions& options, SmfDiagnostics* diag) {
    if (options.ticks_per_quarter < 1 || options.ticks_per_quarter > 0x7FFF) {
        throw ValidationError(kModule, "ticks per quarter must be 1-32767");
    }
    if (options.tempo_us_per_quarter == 0 || options.tempo_us_per_quarter > 0xFFFFFF) {
        throw ValidationError(kModule, "tempo out of range");
    }
    for (std::size_t i = 1; i < events.size(); ++i) {
        if (events[i].t_s < events[i - 1].t_s) throw ValidationError(kModule, "events are not time-sorted");
    }
    const double spt = tick_seconds(options);
    std::vector<std::uint8_t> track;
    put_vlq(track, 0);
    track.insert(track.end(), {0xFF, 0x51, 0x03});
    put_be(track, options.tempo_us_per_quarter, 3);

    std::uint32_t last_tick = 0;
    std::set<std::pair<int, int>> sounding;
    auto emit = [&](std::uint32_t tick, std::array<std::uint8_t, 3> m) {
        put_vlq(track, tick - last_tick);
        last_tick = tick;
        track.insert(track.end(), m.begin(), m.end());
    };
    int compensating = 0;
    for (const auto& ev : events) {
        if (ev.t_s < 0.0) throw ValidationError(kModule, "negative event time");
        const auto tick = static_cast<std::uint32_t>(std::llround(ev.t_s / spt));
        const auto m = encode_realtime(ev, route);
        const std::pair<int, int> id{m[0] & 0x0F, m[1]};
        const bool on = ev.kind == host::KeyEvent::Kind::note_on;
        if (on == sounding.contains(id)) continue;  // keeps on/off alternation
        if (on) {
            sounding.insert(id);
        } else {
            sounding.erase(id);
        }
        emit(tick, m);
    }
    for (const auto& id : sounding) {
        emit(last_tick, {static_cast<std::uint8_t>(0x80 | id.first), static_cast<std::uint8_t>(id.second), 1});
        ++compensating;
    }
    if (diag) diag->compensating_offs = compensating;
    put_vlq(track, 0);
    track.insert(track.end(), {0xFF, 0x2F, 0x00});

    std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd'};
    put_be(out, 6, 4);
    put_be(out, 0, 2);
    put_be(out, 1, 2);
    put_be(out, static_cast<std::uint32_t>(options.ticks_per_quarter), 2);
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    put_be(out, static_cast<std::uint32_t>(track.size()), 4);
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

void write_smf(const std::vector<host::KeyEvent>& events, const MidiRoute& route, const std::string& path,
               const SmfOptions& options, SmfDiagnostics* diag) {
    write_bytes(path, smf_bytes(events, route, options, diag));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(kModule, "cannot read " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SmfFile parse_smf(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (pos + n > bytes.size()) throw CodecError(kModule, "truncated MIDI file");
    };
    auto be = [&](int n) {
        need(static_cast<std::size_t>(n));
        std::uint32_t v = 0;
        for (int i = 0; i < n; ++i) v = (v << 8) | bytes[pos++];
        return v;
    };
    auto tag = [&](const char* t) {
        need(4);
        if (!std::equal(t, t + 4, bytes.begin() + static_cast<std::ptrdiff_t>(pos))) {
            throw CodecError(kModule, std::string("expected chunk ") + t);
        }
        pos += 4;
    };
    tag("MThd");
    if (be(4) != 6) throw CodecError(kModule, "header length must be 6");
    SmfFile file;
    file.format = static_cast<int>(be(2));
    const auto tracks = be(2);
    const auto division = be(2);
    if (division & 0x8000) throw CodecError(kModule, "SMPTE time division not supported");
    file.ticks_per_quarter = static_cast<int>(division);
    if (file.format != 0 || tracks != 1) throw CodecError(kModule, "only single-track format 0 files are read");
    tag("MTrk");
    const std::size_t end = pos + be(4);
    if (end > bytes.size()) throw CodecError(kModule, "track chunk overruns file");

    std::uint32_t tick = 0;
    std::uint8_t running = 0;
    bool ended = false;
    auto vlq = [&] {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            need(1);
            const auto b = bytes[pos++];
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) return v;
        }
        throw CodecError(kModule, "variable-length quantity too long");
    };
    while (pos < end && !ended) {
        tick += vlq();
        need(1);
        std::uint8_t status = bytes[pos];
        if (status == 0xFF) {
            ++pos;
            need(1);
            const auto type = bytes[pos++];
            const auto len = vlq();
            need(len);
            if (type == 0x51 && len == 3) {
                file.tempo_us_per_quarter = (bytes[pos] << 16) | (bytes[pos + 1] << 8) | bytes[pos + 2];
            } else if (type == 0x2F) {
                ended = true;
            }
            pos += len;
            continue;
        }
        if (status == 0xF0 || status == 0xF7) {
            ++pos;
            const auto len = vlq();
            need(len);
            pos += len;
            continue;
        }
        if (status & 0x80) {
            running = status;
            ++pos;
        } else if (!running) {
            throw CodecError(kModule, "data byte without running status");
        }
        const int kind = running & 0xF0;
        const int data = (kind == 0xC0 || kind == 0xD0) ? 1 : 2;
        need(static_cast<std::size_t>(data));
        SmfEvent ev;
        ev.tick = tick;
        ev.bytes.push_back(running);
        for (int i = 0; i < data; ++i) ev.bytes.push_back(bytes[pos++]);
        file.events.push_back(std::move(ev));
    }
    if (!ended) throw CodecError(kModule, "track has no end-of-track event");
    return file;
}

std::vector<host::KeyEvent> key_events(const SmfFile& file, const MidiRoute& route) {
    const double spt = tick_seconds({file.ticks_per_quarter, file.tempo_us_per_quarter});
    std::vector<host::KeyEvent> out;
    for (const auto& e : file.events) {
        const int kind = e.bytes[0] & 0xF0;
        if (kind != 0x80 && kind != 0x90) continue;
        const auto key = route.key_for((e.bytes[0] & 0x0F) + 1, e.bytes[1]);
        if (!key) throw RoutingError(kModule, "note " + std::to_string(e.bytes[1]) + " has no key");
        host::KeyEvent ev;
        ev.kind = (kind == 0x90 && e.bytes[2] > 0) ? host::KeyEvent::Kind::note_on : host::KeyEvent::Kind::note_off;
        ev.manual = key->manual;
        ev.key = key->key;
        ev.t_s = e.tick * spt;
        ev.velocity = std::max<int>(1, e.bytes[2]);
        out.push_back(ev);
    }
    return out;
}

std::string positions_csv(std::span<const TimedBatch> stream, const host::Session& session, double t0_s) {
    struct Row {
        double t;
        int sensor;
        KeyId key;
        double mm;
    };
    std::map<std::uint8_t, host::ClockUnwrapper> clocks;
    std::vector<Row> rows;
    for (const auto& tb : stream) {
        for (const auto& s : tb.batch.samples) {
            const auto key = session.key_of(tb.address, s.sensor_id);
            const auto gid = session.global_sensor_id(tb.address, s.sensor_id);
            if (!key || !gid) {
                throw ConfigError(kModule, "sensor " + std::to_string(s.sensor_id) + " on board " +
                                                std::to_string(tb.address) + " is not in the roster");
            }
            double mm;
            if (tb.batch.kind == bus::BatchKind::position_um) {
                mm = s.value / 1000.0;
            } else {
                const auto cal = session.calibration.find(*key);
                if (cal == session.calibration.end()) {
                    throw CalibrationError(kModule, "no calibration for sensor " + std::to_string(*gid) + " (" +
                                                        to_string(*key) + ")");
                }
                mm = host::displacement(cal->second, s.value);
            }
            rows.push_back({clocks[tb.address](s.t_us) - t0_s, *gid, *key, mm});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    std::string out = "t_s,sensor_id,manual,key,displacement_mm\n";
    char line[128];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%.6f,%d,%d,%d,%.6f\n", r.t, r.sensor, r.key.manual, r.key.key, r.mm);
        out += line;
    }
    return out;
}

void export_positions(std::span<const TimedBatch> stream, const host::Session& session, const std::string& path,
                      double t0_s) {
    const auto csv = positions_csv(stream, session, t0_s);
    std::ofstream out(path);
    if (!out) throw Error(kModule, "cannot write " + path);
    out << csv;
}

}  // namespace photon::midi
