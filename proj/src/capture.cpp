#include "photon/capture.hpp"

#include "photon/error.hpp"

namespace photon::host {

std::vector<double> capture_counts(HostController& host, const KeyId& key, int samples) {
    const auto ref = host.session().sensor_of(key);
    if (!ref) throw CalibrationError("host", "key " + to_string(key) + " is not on any board");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) {
        for (const auto& s : host.poll(ref->address, {static_cast<std::uint8_t>(ref->sensor)})) {
            out.push_back(s.value);
        }
    }
    return out;
}

namespace {

void settle(HostController& host, double s) {
    const double until = host.now() + s;
    while (host.now() < until) host.pump(until - host.now());
}

}  // namespace

const char* phase_name(KeyCapture::Phase phase) {
    switch (phase) {
        case KeyCapture::Phase::rest: return "capture_rest";
        case KeyCapture::Phase::full: return "capture_full";
        case KeyCapture::Phase::anchor: return "capture_anchor";
        case KeyCapture::Phase::done: return "done";
    }
    return "?";
}

KeyCapture::KeyCapture(HostController& host, const KeyId& key, const CapturePlan& plan)
    : host_(host), key_(key), plan_(plan) {
    const auto ref = host.session().sensor_of(key);
    if (!ref) throw CalibrationError("host", "key " + to_string(key) + " is not on any board");
    if (plan.samples < 1) throw ValidationError("host", "capture needs at least one sample");
    ref_ = *ref;
    host.session().begin_capture(key);
}

KeyCapture::~KeyCapture() {
    if (phase_ != Phase::done) host_.session().end_capture();
}

std::vector<double> KeyCapture::capture() {
    settle(host_, plan_.settle_s);
    return capture_counts(host_, key_, plan_.samples);
}

double KeyCapture::capture_rest() {
    if (phase_ != Phase::rest) throw ValidationError("host", std::string("rest capture during ") + phase_name(phase_));
    rest_ = capture();
    phase_ = Phase::full;
    return median(rest_);
}

double KeyCapture::capture_full() {
    if (phase_ != Phase::full) throw ValidationError("host", std::string("full capture during ") + phase_name(phase_));
    auto full = capture();
    // Endpoint checks now, so a bad span is reported at this step.
    (void)calibrate_sensor(ref_.sensor, rest_, full, {}, host_.session().detection.travel_mm, host_.now());
    full_ = std::move(full);
    phase_ = Phase::anchor;
    return median(full_);
}

double KeyCapture::capture_anchor(double mm) {
    if (phase_ != Phase::anchor) throw ValidationError("host", std::string("anchor capture during ") + phase_name(phase_));
    const double travel = host_.session().detection.travel_mm;
    if (!(mm > 0.0 && mm < travel)) throw ValidationError("host", "anchor must lie strictly inside the travel");
    const double m = median(capture());
    anchors_.push_back({m, mm});
    return m;
}

CalibrationEntry KeyCapture::commit() {
    if (phase_ != Phase::anchor) throw ValidationError("host", std::string("commit during ") + phase_name(phase_));
    auto& session = host_.session();
    auto entry = calibrate_sensor(ref_.sensor, rest_, full_, anchors_, session.detection.travel_mm, host_.now());
    session.calibration[key_] = entry;
    session.end_capture();
    host_.push_calibration(key_);
    phase_ = Phase::done;
    return entry;
}

CalibrationEntry calibrate_key(HostController& host, Fixture& fixture, const KeyId& key, const CapturePlan& plan) {
    struct Release {
        Fixture& fixture;
        KeyId key;
        ~Release() { fixture.release(key); }
    };
    KeyCapture cap(host, key, plan);
    Release guard{fixture, key};
    auto place = [&](double mm, const char* label) {
        if (!fixture.position(key, mm, label)) throw CalibrationError("host", "operator skipped " + to_string(key));
    };
    place(0.0, "rest");
    cap.capture_rest();
    place(host.session().detection.travel_mm, "full");
    cap.capture_full();
    for (double mm : plan.anchor_mm) {
        place(mm, "anchor");
        cap.capture_anchor(mm);
    }
    return cap.commit();
}

CalibrationRun calibrate_keys(HostController& host, Fixture& fixture, const std::vector<KeyId>& keys,
                              const CapturePlan& plan, const RunOptions& options) {
    CalibrationRun run;
    for (const auto& key : keys) {
        if (options.limit > 0 && run.calibrated >= options.limit) {
            run.interrupted = true;
            break;
        }
        if (options.resume && host.session().calibration.contains(key)) {
            ++run.skipped;
            continue;
        }
        try {
            calibrate_key(host, fixture, key, plan);
            ++run.calibrated;
        } catch (const CalibrationError& e) {
            run.failures.emplace_back(key, e.what());
        }
        if (options.after_key) options.after_key(key);
    }
    return run;
}

}  // namespace photon::host
