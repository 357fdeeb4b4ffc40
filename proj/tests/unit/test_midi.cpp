#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "photon/error.hpp"
#include "photon/midi.hpp"
#include "support/oracles.hpp"

using namespace photon;
using namespace photon::midi;
using host::KeyEvent;

namespace {

KeyEvent on(int manual, int key, double t, int vel = 100) {
    return {KeyEvent::Kind::note_on, manual, key, t, 0.02, vel};
}
KeyEvent off(int manual, int key, double t, int vel = 40) {
    return {KeyEvent::Kind::note_off, manual, key, t, 0.05, vel};
}

std::vector<KeyEvent> scale() {
    std::vector<KeyEvent> ev;
    for (int i = 0; i < 8; ++i) {
        ev.push_back(on(1, 24 + i, 0.5 * i, 60 + i));
        ev.push_back(off(1, 24 + i, 0.5 * i + 0.3, 30 + i));
    }
    std::stable_sort(ev.begin(), ev.end(), [](auto& a, auto& b) { return a.t_s < b.t_s; });
    return ev;
}

}  // namespace

TEST(Realtime, NoteOnChannelOne) {
    MidiRoute r;
    r.base_note = 60;
    EXPECT_EQ(encode_realtime(on(1, 0, 0, 100), r), (std::array<std::uint8_t, 3>{0x90, 0x3C, 0x64}));
}

TEST(Realtime, NoteOffChannelTwoWithReleaseVelocity) {
    MidiRoute r;
    r.base_note = 60;
    EXPECT_EQ(encode_realtime(off(2, 0, 0, 40), r), (std::array<std::uint8_t, 3>{0x81, 0x3C, 0x28}));
}

TEST(Realtime, VelocityZeroNeverEmitted) {
    EXPECT_THROW(encode_realtime(on(1, 0, 0, 0), MidiRoute{}), ValidationError);
}

TEST(Realtime, UnmappedRoutesRejected) {
    MidiRoute r;
    EXPECT_THROW(encode_realtime(on(3, 0, 0), r), RoutingError);
    r.base_note = 100;
    EXPECT_THROW(encode_realtime(on(1, 60, 0), r), RoutingError);
}

TEST(Realtime, EncoderMirrorsAlternationAndClosesDangling) {
    RealtimeEncoder enc(MidiRoute{});
    EXPECT_EQ(enc.feed(on(1, 5, 0)).size(), 3u);
    EXPECT_TRUE(enc.feed(on(1, 5, 0.1)).empty());
    EXPECT_EQ(enc.dropped(), 1u);
    EXPECT_EQ(enc.feed(on(2, 5, 0.2)).size(), 3u);
    EXPECT_EQ(enc.feed(off(1, 5, 0.3)).size(), 3u);
    const auto tail = enc.close();
    ASSERT_EQ(tail.size(), 3u);
    EXPECT_EQ(tail[0], 0x81);
    EXPECT_EQ(tail[2], 1);
    EXPECT_EQ(enc.compensated(), 1u);
}

TEST(Route, BijectiveOnCompass) {
    MidiRoute r;
    const Compass c;
    EXPECT_NO_THROW(r.validate(c));
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < c.total_keys(); ++i) {
        const auto k = c.key_at(i);
        const int ch = r.channel(k.manual);
        const int n = r.note(k);
        EXPECT_TRUE(seen.insert({ch, n}).second);
        EXPECT_EQ(r.key_for(ch, n), k);
    }
    r.channels[2] = 1;
    EXPECT_THROW(r.validate(c), RoutingError);
}

TEST(Smf, EmptyFileIsTempoAndEndOfTrack) {
    const auto b = smf_bytes({}, MidiRoute{});
    const auto o = oracle::read_smf(b);
    EXPECT_EQ(o.format, 0);
    EXPECT_EQ(o.tracks, 1);
    EXPECT_EQ(o.division, 480);
    EXPECT_EQ(o.tempo, 500000u);
    EXPECT_TRUE(o.end_of_track);
    EXPECT_TRUE(o.notes.empty());
    // MThd(14) + MTrk header(8) + tempo(7) + end(4).
    EXPECT_EQ(b.size(), 33u);
}

TEST(Smf, HalfSecondIs480Ticks) {
    const auto o = oracle::read_smf(smf_bytes({on(1, 0, 0.5), off(1, 0, 1.0)}, MidiRoute{}));
    ASSERT_EQ(o.notes.size(), 2u);
    EXPECT_EQ(o.notes[0].tick, 480u);
    EXPECT_EQ(o.notes[1].tick, 960u);
    EXPECT_FALSE(o.notes[1].on);
    EXPECT_EQ(o.notes[1].velocity, 40);
}

TEST(Smf, ScaleParsesBackThroughReferenceReader) {
    const auto ev = scale();
    MidiRoute route;
    const auto o = oracle::read_smf(smf_bytes(ev, route));
    ASSERT_EQ(o.notes.size(), ev.size());
    const double tick = 0.5 / 480;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        EXPECT_EQ(o.notes[i].on, ev[i].kind == KeyEvent::Kind::note_on);
        EXPECT_EQ(o.notes[i].channel, 1);
        EXPECT_EQ(o.notes[i].note, route.note(ev[i].id()));
        EXPECT_EQ(o.notes[i].velocity, ev[i].velocity);
        EXPECT_LE(std::abs(o.notes[i].tick * tick - ev[i].t_s), tick);
    }
}

TEST(Smf, LibraryParserAgreesWithReference) {
    const auto bytes = smf_bytes(scale(), MidiRoute{});
    const auto lib = parse_smf(bytes);
    const auto ref = oracle::read_smf(bytes);
    std::size_t notes = 0;
    for (const auto& e : lib.events) {
        if ((e.bytes[0] & 0xE0) != 0x80) continue;
        ASSERT_LT(notes, ref.notes.size());
        EXPECT_EQ(e.tick, ref.notes[notes].tick);
        EXPECT_EQ(e.bytes[1], ref.notes[notes].note);
        ++notes;
    }
    EXPECT_EQ(notes, ref.notes.size());
    const auto back = key_events(lib, MidiRoute{});
    ASSERT_EQ(back.size(), scale().size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].id(), scale()[i].id());
        EXPECT_EQ(back[i].kind, scale()[i].kind);
    }
}

TEST(Smf, WriteParseWriteIsByteIdentical) {
    const auto first = smf_bytes(scale(), MidiRoute{});
    const auto again = smf_bytes(key_events(parse_smf(first), MidiRoute{}), MidiRoute{});
    EXPECT_EQ(first, again);
}

TEST(Smf, UnsortedRejected) {
    EXPECT_THROW(smf_bytes({on(1, 0, 1.0), on(1, 1, 0.5)}, MidiRoute{}), ValidationError);
}

TEST(Smf, DanglingNoteClosedWithVelocityOne) {
    SmfDiagnostics d;
    const auto o = oracle::read_smf(smf_bytes({on(1, 0, 0.1), on(1, 1, 0.2), off(1, 0, 0.3)}, MidiRoute{}, {}, &d));
    EXPECT_EQ(d.compensating_offs, 1);
    ASSERT_EQ(o.notes.size(), 4u);
    EXPECT_FALSE(o.notes.back().on);
    EXPECT_EQ(o.notes.back().velocity, 1);
    EXPECT_EQ(o.notes.back().note, MidiRoute{}.note({1, 1}));
}

TEST(Smf, NoteOffUsesStatus0x80) {
    const auto b = smf_bytes({on(1, 0, 0), off(1, 0, 0.1)}, MidiRoute{});
    const auto lib = parse_smf(b);
    bool saw_off = false;
    for (const auto& e : lib.events) {
        if (e.bytes[0] == 0x80) saw_off = true;
        EXPECT_FALSE(e.bytes[0] == 0x90 && e.bytes.size() == 3 && e.bytes[2] == 0);
    }
    EXPECT_TRUE(saw_off);
}

TEST(Smf, MalformedInputRejected) {
    auto b = smf_bytes(scale(), MidiRoute{});
    b.resize(b.size() - 5);
    EXPECT_THROW(parse_smf(b), CodecError);
    std::vector<std::uint8_t> junk = {'M', 'T', 'h', 'x'};
    EXPECT_THROW(parse_smf(junk), CodecError);
}

TEST(Positions, EmptyStreamHeaderOnly) {
    EXPECT_EQ(positions_csv({}, host::Session{}), "t_s,sensor_id,manual,key,displacement_mm\n");
}

TEST(Positions, RowsMatchHostDisplacementExactly) {
    host::Session s;
    const std::vector<double> rest(20, 3800), full(20, 2310);
    s.calibration[{1, 3}] = host::calibrate_sensor(3, rest, full);
    std::vector<TimedBatch> stream;
    // 250 Hz for one second.
    for (int i = 0; i < 250; i += 8) {
        TimedBatch tb{1, {bus::BatchKind::counts, {}}};
        for (int k = i; k < std::min(250, i + 8); ++k) {
            tb.batch.samples.push_back({3, static_cast<std::uint32_t>(k * 4000), static_cast<std::uint16_t>(3800 - 6 * k)});
        }
        stream.push_back(tb);
    }
    const auto csv = positions_csv(stream, s);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        double t, mm;
        int sensor, manual, key;
        ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%d,%d,%d,%lf", &t, &sensor, &manual, &key, &mm), 5);
        char expect[32];
        std::snprintf(expect, sizeof expect, "%.6f", host::displacement(s.calibration.at({1, 3}), 3800 - 6 * rows));
        EXPECT_EQ(line.substr(line.rfind(',') + 1), expect);
        EXPECT_EQ(sensor, 3);
        ++rows;
    }
    EXPECT_EQ(rows, 250);
}

TEST(Positions, MissingCalibrationNamesSensor) {
    std::vector<TimedBatch> stream = {{2, {bus::BatchKind::counts, {{4, 0, 3000}}}}};
    try {
        positions_csv(stream, host::Session{});
        FAIL();
    } catch (const CalibrationError& e) {
        EXPECT_NE(std::string(e.what()).find("29"), std::string::npos) << e.what();
    }
}
