#pragma once

// Sensor-board emulator. Sensors are grouped into banks of up to four that
// share one ADC; within a bank only one emitter is enabled at a time, and all
// banks convert in parallel. The board runs on an injected simulated clock.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "photon/bus/frame.hpp"
#include "photon/calibration.hpp"
#include "photon/detection.hpp"
#include "photon/key.hpp"
#include "photon/optics.hpp"

namespace photon::board {

inline constexpr int kMaxBankSize = 4;
inline constexpr double kMinSubsetRateHz = 250.0;

struct BoardConfig {
    std::uint8_t address = 1;
    std::string board_id = "photon-01";
    int sensor_count = 25;
    /// Sensor ids per bank. Empty means consecutive groups of four.
    std::vector<std::vector<int>> banks;
    /// sensor id -> key. Empty means unmapped (the host roster maps keys).
    std::vector<KeyId> key_map;
    double scan_rate_hz = 1000.0;
    double dwell_s = 200e-6;
    /// Factory counts used to track uncalibrated sensors, whose events are
    /// suppressed and counted rather than sent.
    double nominal_rest_counts = 3800.0;
    double nominal_full_counts = 2310.0;

    static std::vector<std::vector<int>> default_banks(int sensor_count);
    /// Banks as configured, or the default partition.
    std::vector<std::vector<int>> effective_banks() const;
    int largest_bank() const;
    double sweep_s() const { return largest_bank() * dwell_s; }
    void validate() const;
};

/// `address=<n>`, `board_id=<s>`, `sensor_count=<n>` lines.
std::string firmware_doc(const BoardConfig& cfg);
/// Throws ConfigError for missing or malformed fields. Other fields keep `base`.
BoardConfig parse_firmware_doc(const std::string& text, BoardConfig base = {});

struct BoardMode {
    bus::BoardModeKind kind = bus::BoardModeKind::event;
    std::vector<int> subset;
    double stream_rate_hz = 0.0;
};

/// Ground-truth displacement of the key over `sensor_id` at time `t_s`.
using World = std::function<double(int sensor_id, double t_s)>;

struct EnableInterval {
    int bank = 0;
    int sensor = 0;
    double on_s = 0.0;
    double off_s = 0.0;
};

struct Outgoing {
    double t_s = 0.0;
    std::vector<std::uint8_t> bytes;
};

class Board {
public:
    /// One sensor model per sensor, or a single model shared by all.
    Board(BoardConfig config, std::vector<optics::SensorModel> models, std::uint64_t seed);

    const BoardConfig& config() const { return config_; }
    const BoardMode& mode() const { return mode_; }

    /// One full sweep starting at `t_start`. Sensor at position j of its
    /// bank is sampled at t_start + j * dwell.
    std::vector<optics::RawSample> scan_cycle(const World& world, double t_start);
    /// One pass over the streaming subset. Throws ConfigError outside subset mode.
    std::vector<optics::RawSample> subset_stream_tick(const World& world, double t_start);
    /// Runs the local window detectors over samples in time order.
    std::vector<bus::Message> detect_local_events(std::span<const optics::RawSample> samples);
    /// Replies to one decoded command. `address` is the frame's address byte.
    std::vector<bus::Message> handle_command(const bus::Message& message, std::uint8_t address, double t_s,
                                             const World& world);

    /// Validates and applies a mode; throws ConfigError with the reason.
    void set_mode(const BoardMode& mode);
    std::optional<bus::NackReason> check_mode(const BoardMode& mode) const;
    void install_calibration(const host::CalibrationEntry& entry);
    void set_detection(const host::DetectionConfig& cfg);

    /// Bus side: bytes delivered by the wire at `t_s`.
    void receive(std::span<const std::uint8_t> bytes, double t_s, const World& world);
    /// Executes every scan or stream tick that starts before `t_s`.
    void run_until(const World& world, double t_s);
    std::vector<Outgoing> take_outgoing();

    void set_enable_log(bool on) { log_enables_ = on; }
    const std::vector<EnableInterval>& enable_log() const { return enable_log_; }
    void clear_enable_log() { enable_log_.clear(); }

    std::uint32_t suppressed_events() const { return suppressed_; }
    int calibrated_count() const { return static_cast<int>(calibration_.size()); }
    bool calibrated(int sensor) const { return calibration_.contains(sensor); }
    const std::map<int, host::CalibrationEntry>& calibration() const { return calibration_; }
    const host::DetectionConfig& detection() const { return detection_; }
    const bus::DecoderStats& decoder_stats() const { return decoder_.stats(); }
    std::uint64_t sweeps() const { return sweeps_; }

private:
    optics::RawSample read_sensor(const World& world, int sensor, double t_s);
    void emit(const bus::Message& m, double t_s);
    void emit_batch(const std::vector<optics::RawSample>& samples, double t_s);
    double period_s() const;
    void reset_detectors();

    BoardConfig config_;
    std::vector<std::vector<int>> banks_;
    double sweep_s_ = 0.0;
    std::vector<int> bank_of_;
    std::vector<int> slot_of_;
    std::vector<optics::SensorModel> models_;
    std::vector<std::mt19937_64> rngs_;
    BoardMode mode_;
    host::DetectionConfig detection_;
    std::vector<host::WindowDetector> detectors_;
    std::map<int, host::CalibrationEntry> calibration_;
    struct Assembly {
        std::uint8_t next = 0;
        std::uint8_t count = 0;
        std::vector<std::uint8_t> data;
    };
    std::map<int, Assembly> assembly_;
    bus::Decoder decoder_;
    struct Pending {
        double t_s;
        bus::Message message;
    };
    std::vector<Pending> pending_;
    std::uint8_t seq_ = 0;
    double next_start_s_ = 0.0;
    double busy_until_s_ = 0.0;
    std::uint32_t suppressed_ = 0;
    std::uint64_t sweeps_ = 0;
    bool log_enables_ = false;
    std::vector<EnableInterval> enable_log_;
};

/// Board-clock microseconds, wrapping at 2^32.
std::uint32_t to_board_us(double t_s);

}  // namespace photon::board
