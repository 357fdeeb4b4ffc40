#pragma once

// Per-key calibration capture. The same code drives a human operator
// (interactive fixture) and the simulator (scripted fixture, which can hold a
// key at an exact displacement).

#include <functional>
#include <string>
#include <vector>

#include "photon/host_controller.hpp"

namespace photon::host {

class Fixture {
public:
    virtual ~Fixture() = default;
    /// Brings `key` to `mm` and returns once it is held there. Returns false
    /// if the operator skipped the key.
    virtual bool position(const KeyId& key, double mm, const std::string& label) = 0;
    /// Lets the key return to rest.
    virtual void release(const KeyId& key) = 0;
};

struct CapturePlan {
    std::vector<double> anchor_mm = {2.25, 4.5, 6.75};
    int samples = 24;
    /// Wait after the fixture reports the key in place.
    double settle_s = 0.002;
};

/// `samples` single-sensor polls of the sensor under `key`.
std::vector<double> capture_counts(HostController& host, const KeyId& key, int samples);

/// One key's capture, step by step: rest, full, any anchors, then commit.
/// The capture flag on the session is held for the object's lifetime;
/// destroying it without commit discards everything captured.
class KeyCapture {
public:
    enum class Phase { rest, full, anchor, done };

    KeyCapture(HostController& host, const KeyId& key, const CapturePlan& plan = {});
    ~KeyCapture();
    KeyCapture(const KeyCapture&) = delete;
    KeyCapture& operator=(const KeyCapture&) = delete;

    /// Median counts of the step. Throws ValidationError out of order;
    /// capture_full throws CalibrationError for a span too small against
    /// the capture noise and stays at the full phase.
    double capture_rest();
    double capture_full();
    double capture_anchor(double mm);
    /// Builds the entry, stores it in the session and pushes it to the board.
    /// Throws CalibrationError (capture stays open at the anchor phase).
    CalibrationEntry commit();

    const KeyId& key() const { return key_; }
    Phase phase() const { return phase_; }
    const std::vector<Anchor>& anchors() const { return anchors_; }

private:
    std::vector<double> capture();

    HostController& host_;
    KeyId key_;
    CapturePlan plan_;
    SensorRef ref_;
    Phase phase_ = Phase::rest;
    std::vector<double> rest_, full_;
    std::vector<Anchor> anchors_;
};

const char* phase_name(KeyCapture::Phase phase);

/// Captures rest, full travel and the plan's anchors, builds the entry,
/// stores it in the session and pushes it to the board. Throws
/// CalibrationError on capture failure; the session keeps its previous entry.
CalibrationEntry calibrate_key(HostController& host, Fixture& fixture, const KeyId& key, const CapturePlan& plan);

struct CalibrationRun {
    int calibrated = 0;
    int skipped = 0;
    std::vector<std::pair<KeyId, std::string>> failures;
    /// Stopped by the key limit before the list was exhausted.
    bool interrupted = false;
};

struct RunOptions {
    /// Keep keys that already have an entry.
    bool resume = false;
    /// Stop after this many newly calibrated keys (0 = no limit).
    int limit = 0;
    /// Called after every key, e.g. to persist the session.
    std::function<void(const KeyId&)> after_key;
};

CalibrationRun calibrate_keys(HostController& host, Fixture& fixture, const std::vector<KeyId>& keys,
                              const CapturePlan& plan, const RunOptions& options = {});

}  // namespace photon::host
