#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "photon/bus/crc.hpp"
#include "photon/bus/frame.hpp"
#include "photon/calibration.hpp"
#include "photon/detection.hpp"
#include "photon/error.hpp"
#include "photon/io.hpp"
#include "photon/midi.hpp"
#include "photon/optics.hpp"
#include "photon/simulate.hpp"

namespace py = pybind11;
using namespace photon;

namespace {

std::vector<std::uint8_t> as_bytes(const py::bytes& b) {
    const std::string s = b;
    return {s.begin(), s.end()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

action::ActionConfig action_named(const std::string& name) {
    if (name == "disengaged") return action::ActionConfig::disengaged();
    if (name == "single_manual") return action::ActionConfig::single_manual();
    if (name == "double_manual") return action::ActionConfig::double_manual();
    throw ConfigError("python", "unknown action " + name);
}

py::dict event_dict(const host::KeyEvent& e) {
    py::dict d;
    d["kind"] = e.kind == host::KeyEvent::Kind::note_on ? "note_on" : "note_off";
    d["key"] = to_string(e.id());
    d["t_s"] = e.t_s;
    d["velocity"] = e.velocity;
    return d;
}

}  // namespace

PYBIND11_MODULE(_photon, m) {
    m.doc() = "PHOTON optical key-motion sensing";

    static py::exception<Error> error(m, "PhotonError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            error(e.what());
        }
    });

    m.def("crc16", [](const py::bytes& data) { return bus::crc16_ccitt_false(as_bytes(data)); },
          "CRC-16/CCITT-FALSE of a byte string.");

    m.def(
        "encode_poll",
        [](int address, int seq, const std::vector<int>& sensors) {
            bus::PollRequest req;
            for (int s : sensors) req.sensors.push_back(static_cast<std::uint8_t>(s));
            return to_bytes(bus::encode(req, static_cast<std::uint8_t>(address), static_cast<std::uint8_t>(seq)));
        },
        py::arg("address"), py::arg("seq"), py::arg("sensors"));
    m.def("encode_enumerate", [](int seq) {
        return to_bytes(bus::encode(bus::Enumerate{}, bus::kBroadcast, static_cast<std::uint8_t>(seq)));
    });

    py::class_<bus::Decoder>(m, "Decoder")
        .def(py::init<>())
        .def("feed",
             [](bus::Decoder& d, const py::bytes& data) {
                 py::list out;
                 for (const auto& r : d.feed(as_bytes(data))) {
                     out.append(py::make_tuple(r.address, r.seq, std::string(bus::type_name(bus::type_of(r.message)))));
                 }
                 return out;
             })
        .def("stats", [](const bus::Decoder& d) {
            const auto& s = d.stats();
            py::dict out;
            out["frames_ok"] = s.frames_ok;
            out["bad_crc"] = s.bad_crc;
            out["bad_length"] = s.bad_length;
            out["bad_escape"] = s.bad_escape;
            out["truncated"] = s.truncated;
            out["undecodable"] = s.undecodable;
            out["garbage_bytes"] = s.garbage_bytes;
            return out;
        });

    py::class_<optics::SensorModel>(m, "SensorModel")
        .def(py::init<>())
        .def_readwrite("a_gain", &optics::SensorModel::a_gain)
        .def_readwrite("d0_mm", &optics::SensorModel::d0_mm)
        .def_readwrite("floor_counts", &optics::SensorModel::floor_counts)
        .def_readwrite("noise_sigma_counts", &optics::SensorModel::noise_sigma_counts)
        .def_readwrite("adc_bits", &optics::SensorModel::adc_bits)
        .def_readwrite("rest_gap_mm", &optics::SensorModel::rest_gap_mm);
    m.def("expected_counts", &optics::expected_counts_at_displacement, py::arg("model"), py::arg("displacement_mm"));
    m.def("distinguishable_levels", &optics::distinguishable_levels, py::arg("model"), py::arg("travel_mm") = 9.0,
          py::arg("k") = 2.0);

    py::class_<host::CalibrationEntry>(m, "CalibrationEntry")
        .def_readonly("raw_rest", &host::CalibrationEntry::raw_rest)
        .def_readonly("raw_full", &host::CalibrationEntry::raw_full)
        .def_readonly("travel_mm", &host::CalibrationEntry::travel_mm)
        .def("displacement", [](const host::CalibrationEntry& e, double counts) { return host::displacement(e, counts); });
    m.def(
        "calibrate_sensor",
        [](const std::vector<double>& rest, const std::vector<double>& full,
           const std::vector<std::pair<double, double>>& anchors, double travel) {
            std::vector<host::Anchor> a;
            for (const auto& [c, mm] : anchors) a.push_back({c, mm});
            return host::calibrate_sensor(0, rest, full, a, travel);
        },
        py::arg("rest"), py::arg("full"), py::arg("anchors") = std::vector<std::pair<double, double>>{},
        py::arg("travel_mm") = 9.0);

    m.def(
        "velocity_from_time",
        [](double t, const std::string& shape, double gamma) {
            host::VelocityCurve c;
            c.shape = shape == "gamma" ? host::CurveShape::gamma : host::CurveShape::linear;
            c.gamma = gamma;
            return host::velocity_from_time(c, t);
        },
        py::arg("traversal_s"), py::arg("shape") = "linear", py::arg("gamma") = 1.0);

    m.def(
        "simulate_keystroke",
        [](const std::string& action, double press, double hold, double release, bool rapid, double rate,
           std::uint64_t seed) {
            action::GestureSpec g;
            g.press_duration_s = press;
            g.hold_s = hold;
            g.release_duration_s = release;
            g.release_style = rapid ? action::ReleaseStyle::rapid : action::ReleaseStyle::held;
            const auto r = action::simulate_keystroke(action_named(action), g, rate, seed);
            py::dict out;
            out["t0_s"] = r.trace.t0_s;
            out["rate_hz"] = r.trace.rate_hz;
            out["samples_mm"] = r.trace.samples_mm;
            out["pluck_mm"] = r.truth.pluck_displacements_mm;
            out["pluck_t_s"] = r.truth.pluck_times_s;
            return out;
        },
        py::arg("action") = "single_manual", py::arg("press_s") = 0.1, py::arg("hold_s") = 0.1,
        py::arg("release_s") = 0.06, py::arg("rapid") = false, py::arg("rate_hz") = 250.0, py::arg("seed") = 1);

    m.def(
        "detect_pluck_features",
        [](const std::vector<double>& samples, double rate, double t0) {
            action::DisplacementTrace tr;
            tr.rate_hz = rate;
            tr.t0_s = t0;
            tr.samples_mm = samples;
            py::list out;
            for (const auto& f : host::detect_pluck_features(tr)) {
                out.append(py::make_tuple(f.t_s, f.displacement_mm, f.slope_ratio));
            }
            return out;
        },
        py::arg("samples_mm"), py::arg("rate_hz") = 250.0, py::arg("t0_s") = 0.0);

    m.def(
        "simulate",
        [](const std::string& session_json, const std::string& score_json, std::uint64_t seed, const std::string& action,
           bool midi_only) {
            auto file = io::session_from_json(session_json);
            auto score = io::score_from_json(score_json);
            if (score.action) file.session.action = *score.action;
            if (!action.empty()) file.session.action = action_named(action);
            sim::SimulationOptions o;
            o.seed = seed;
            o.midi_only = midi_only;
            sim::SimulationResult r;
            {
                py::gil_scoped_release release;
                r = sim::simulate(file, score.entries, o);
            }
            py::dict out;
            out["report"] = r.report.to_json();
            out["smf"] = to_bytes(midi::smf_bytes(r.events, r.file.route));
            py::list events;
            for (const auto& e : r.events) events.append(event_dict(e));
            out["events"] = events;
            out["trace_csv"] = midi_only ? std::string() : midi::positions_csv(r.stream, r.file.session, r.stream_offset_s);
            return out;
        },
        py::arg("session_json"), py::arg("score_json"), py::arg("seed") = 1, py::arg("action") = "",
        py::arg("midi_only") = false);

    m.def("default_session_json", [](const std::string& action) {
        io::SessionFile f;
        f.session = host::Session::standard(action_named(action));
        return io::session_to_json(f);
    }, py::arg("action") = "single_manual");

    m.def("parse_smf", [](const py::bytes& data) {
        const auto file = midi::parse_smf(as_bytes(data));
        py::list out;
        for (const auto& e : file.events) out.append(py::make_tuple(e.tick, to_bytes(e.bytes)));
        return py::make_tuple(file.format, file.ticks_per_quarter, out);
    });
}
