#include "photon/board.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "photon/error.hpp"

namespace photon::board {
namespace {

constexpr std::string_view kModule = "board";

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};

}  // namespace

std::uint32_t to_board_us(double t_s) {
    const auto us = static_cast<std::int64_t>(std::llround(t_s * 1e6));
    return static_cast<std::uint32_t>(static_cast<std::uint64_t>(us) & 0xFFFFFFFFull);
}

std::vector<std::vector<int>> BoardConfig::default_banks(int sensor_count) {
    std::vector<std::vector<int>> banks;
    for (int s = 0; s < sensor_count; ++s) {
        if (s % kMaxBankSize == 0) banks.emplace_back();
        banks.back().push_back(s);
    }
    return banks;
}

std::vector<std::vector<int>> BoardConfig::effective_banks() const {
    return banks.empty() ? default_banks(sensor_count) : banks;
}

int BoardConfig::largest_bank() const {
    std::size_t n = 0;
    for (const auto& b : effective_banks()) n = std::max(n, b.size());
    return static_cast<int>(n);
}

void BoardConfig::validate() const {
    if (address < 1 || address > bus::kMaxBoardAddress) throw ConfigError(kModule, "address must be 1-31");
    if (board_id.empty() || board_id.size() > bus::kMaxBoardIdLength) {
        throw ConfigError(kModule, "board_id must be 1-16 characters");
    }
    if (sensor_count < 1 || sensor_count > 255) throw ConfigError(kModule, "sensor_count must be 1-255");
    if (!(scan_rate_hz > 0.0) || !(dwell_s > 0.0)) throw ConfigError(kModule, "scan rate and dwell must be positive");
    std::vector<int> seen(static_cast<std::size_t>(sensor_count), 0);
    for (const auto& bank : effective_banks()) {
        if (bank.empty() || bank.size() > kMaxBankSize) throw ConfigError(kModule, "every bank needs 1-4 sensors");
        for (int s : bank) {
            if (s < 0 || s >= sensor_count) throw ConfigError(kModule, "bank lists unknown sensor " + std::to_string(s));
            if (seen[static_cast<std::size_t>(s)]++) {
                throw ConfigError(kModule, "sensor " + std::to_string(s) + " appears in two banks");
            }
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw ConfigError(kModule, "banks must cover every sensor");
    if (largest_bank() * dwell_s > 1.0 / scan_rate_hz) throw ConfigError(kModule, "sweep longer than the scan period");
    if (!key_map.empty()) {
        if (static_cast<int>(key_map.size()) != sensor_count) throw ConfigError(kModule, "key_map size != sensor_count");
        std::set<KeyId> keys(key_map.begin(), key_map.end());
        if (keys.size() != key_map.size()) throw ConfigError(kModule, "key_map maps two sensors to one key");
    }
    if (nominal_rest_counts == nominal_full_counts) throw ConfigError(kModule, "nominal endpoints must differ");
}

std::string firmware_doc(const BoardConfig& cfg) {
    std::ostringstream out;
    out << "address=" << static_cast<int>(cfg.address) << "\n"
        << "board_id=" << cfg.board_id << "\n"
        << "sensor_count=" << cfg.sensor_count << "\n";
    return out.str();
}

BoardConfig parse_firmware_doc(const std::string& text, BoardConfig base) {
    std::istringstream in(text);
    std::string line;
    bool have_addr = false, have_id = false, have_count = false;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(kModule, "firmware doc line without '=': " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "address") {
                const int a = std::stoi(value);
                if (a < 1 || a > bus::kMaxBoardAddress) throw ConfigError(kModule, "address must be 1-31");
                base.address = static_cast<std::uint8_t>(a);
                have_addr = true;
            } else if (key == "board_id") {
                base.board_id = value;
                have_id = true;
            } else if (key == "sensor_count") {
                base.sensor_count = std::stoi(value);
                have_count = true;
            }
        } catch (const std::logic_error&) {
            throw ConfigError(kModule, "bad value for " + key + ": " + value);
        }
    }
    if (!have_addr || !have_id || !have_count) {
        throw ConfigError(kModule, "firmware doc needs address, board_id and sensor_count");
    }
    if (!base.banks.empty()) base.banks.clear();
    if (!base.key_map.empty() && static_cast<int>(base.key_map.size()) != base.sensor_count) base.key_map.clear();
    base.validate();
    return base;
}

Board::Board(BoardConfig config, std::vector<optics::SensorModel> models, std::uint64_t seed)
    : config_(std::move(config)) {
    config_.validate();
    banks_ = config_.effective_banks();
    sweep_s_ = config_.sweep_s();
    bank_of_.assign(static_cast<std::size_t>(config_.sensor_count), 0);
    slot_of_.assign(static_cast<std::size_t>(config_.sensor_count), 0);
    for (std::size_t b = 0; b < banks_.size(); ++b) {
        for (std::size_t j = 0; j < banks_[b].size(); ++j) {
            bank_of_[static_cast<std::size_t>(banks_[b][j])] = static_cast<int>(b);
            slot_of_[static_cast<std::size_t>(banks_[b][j])] = static_cast<int>(j);
        }
    }
    if (models.empty()) models.emplace_back();
    if (models.size() == 1) models.resize(static_cast<std::size_t>(config_.sensor_count), models.front());
    if (static_cast<int>(models.size()) != config_.sensor_count) {
        throw ConfigError(kModule, "need one sensor model per sensor");
    }
    for (const auto& m : models) m.validate();
    models_ = std::move(models);
    std::seed_seq root{seed, static_cast<std::uint64_t>(config_.address)};
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config_.sensor_count));
    root.generate(seeds.begin(), seeds.end());
    for (auto s : seeds) rngs_.emplace_back(s);
    detectors_.assign(static_cast<std::size_t>(config_.sensor_count), host::WindowDetector(detection_));
}

optics::RawSample Board::read_sensor(const World& world, int sensor, double t_s) {
    const auto idx = static_cast<std::size_t>(sensor);
    if (log_enables_) enable_log_.push_back({bank_of_[idx], sensor, t_s, t_s + config_.dwell_s});
    return optics::sample(models_[idx], world(sensor, t_s), rngs_[idx], t_s, sensor);
}

std::vector<optics::RawSample> Board::scan_cycle(const World& world, double t_start) {
    std::vector<optics::RawSample> out;
    out.reserve(static_cast<std::size_t>(config_.sensor_count));
    const int depth = static_cast<int>(std::lround(sweep_s_ / config_.dwell_s));
    for (int j = 0; j < depth; ++j) {
        for (const auto& bank : banks_) {
            if (j < static_cast<int>(bank.size())) {
                out.push_back(read_sensor(world, bank[static_cast<std::size_t>(j)], t_start + j * config_.dwell_s));
            }
        }
    }
    busy_until_s_ = std::max(busy_until_s_, t_start + depth * config_.dwell_s);
    ++sweeps_;
    return out;
}

std::vector<optics::RawSample> Board::subset_stream_tick(const World& world, double t_start) {
    if (mode_.kind != bus::BoardModeKind::subset_stream) throw ConfigError(kModule, "board is not in subset_stream mode");
    std::vector<int> slot(banks_.size(), 0);
    std::vector<optics::RawSample> out;
    int depth = 0;
    for (int s : mode_.subset) {
        const int b = bank_of_[static_cast<std::size_t>(s)];
        const int j = slot[static_cast<std::size_t>(b)]++;
        depth = std::max(depth, j + 1);
        out.push_back(read_sensor(world, s, t_start + j * config_.dwell_s));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });
    busy_until_s_ = std::max(busy_until_s_, t_start + depth * config_.dwell_s);
    return out;
}

std::vector<bus::Message> Board::detect_local_events(std::span<const optics::RawSample> samples) {
    std::vector<bus::Message> out;
    for (const auto& s : samples) {
        const auto idx = static_cast<std::size_t>(s.sensor_id);
        const auto cal = calibration_.find(s.sensor_id);
        double x;
        if (cal != calibration_.end()) {
            x = host::displacement(cal->second, s.counts);
        } else {
            const double u = (s.counts - config_.nominal_rest_counts) /
                             (config_.nominal_full_counts - config_.nominal_rest_counts);
            x = std::clamp(u, 0.0, 1.0) * detection_.travel_mm;
        }
        const auto ev = detectors_[idx].update(s.t_s, x);
        if (!ev) continue;
        if (cal == calibration_.end()) {
            ++suppressed_;
            continue;
        }
        out.push_back(bus::KeyEventRaw{static_cast<std::uint8_t>(s.sensor_id), ev->kind, to_board_us(ev->entry_s),
                                       to_board_us(ev->exit_s)});
    }
    return out;
}

std::optional<bus::NackReason> Board::check_mode(const BoardMode& mode) const {
    using bus::BoardModeKind;
    using bus::NackReason;
    switch (mode.kind) {
        case BoardModeKind::event: return std::nullopt;
        case BoardModeKind::full_scan_stream: {
            const double rate = mode.stream_rate_hz > 0.0 ? mode.stream_rate_hz : config_.scan_rate_hz;
            if (rate * sweep_s_ > 1.0) return NackReason::rate_out_of_range;
            return std::nullopt;
        }
        case BoardModeKind::subset_stream: {
            if (mode.subset.empty() || mode.subset.size() > bus::kMaxSubset) return NackReason::invalid_subset;
            std::set<int> seen;
            std::vector<int> per_bank(banks_.size(), 0);
            for (int s : mode.subset) {
                if (s < 0 || s >= config_.sensor_count || !seen.insert(s).second) return NackReason::invalid_subset;
                ++per_bank[static_cast<std::size_t>(bank_of_[static_cast<std::size_t>(s)])];
            }
            const int depth = *std::max_element(per_bank.begin(), per_bank.end());
            if (mode.stream_rate_hz < kMinSubsetRateHz || mode.stream_rate_hz * depth * config_.dwell_s > 1.0) {
                return NackReason::rate_out_of_range;
            }
            return std::nullopt;
        }
    }
    return NackReason::invalid_mode;
}

void Board::reset_detectors() {
    for (auto& d : detectors_) {
        d.set_config(detection_);
        d.reset();
    }
}

void Board::set_mode(const BoardMode& mode) {
    if (const auto reason = check_mode(mode)) {
        throw ConfigError(kModule, *reason == bus::NackReason::invalid_subset ? "invalid subset"
                                                                              : "stream rate out of range");
    }
    mode_ = mode;
    if (mode_.kind == bus::BoardModeKind::full_scan_stream && mode_.stream_rate_hz <= 0.0) {
        mode_.stream_rate_hz = config_.scan_rate_hz;
    }
    next_start_s_ = std::max(next_start_s_, busy_until_s_);
    reset_detectors();
}

void Board::install_calibration(const host::CalibrationEntry& entry) {
    if (entry.sensor_id < 0 || entry.sensor_id >= config_.sensor_count) {
        throw ConfigError(kModule, "calibration for unknown sensor " + std::to_string(entry.sensor_id));
    }
    calibration_[entry.sensor_id] = entry;
}

void Board::set_detection(const host::DetectionConfig& cfg) {
    cfg.validate();
    detection_ = cfg;
    reset_detectors();
}

double Board::period_s() const {
    switch (mode_.kind) {
        case bus::BoardModeKind::event: return 1.0 / config_.scan_rate_hz;
        default: return 1.0 / mode_.stream_rate_hz;
    }
}

std::vector<bus::Message> Board::handle_command(const bus::Message& message, std::uint8_t address, double t_s,
                                                const World& world) {
    using namespace bus;
    const bool broadcast = address == kBroadcast;
    if (!broadcast && address != config_.address) return {};
    std::vector<Message> replies;
    auto reply = [&](Message m) {
        if (!broadcast) replies.push_back(std::move(m));
    };
    std::visit(
        Overloaded{
            [&](const StatusRequest&) {
                StatusResponse r;
                r.address = config_.address;
                r.board_id = config_.board_id;
                r.mode = mode_.kind;
                r.uptime_ms = static_cast<std::uint32_t>(static_cast<std::uint64_t>(t_s * 1000.0) & 0xFFFFFFFFull);
                r.suppressed_events = suppressed_;
                r.sensor_count = static_cast<std::uint8_t>(config_.sensor_count);
                r.calibrated_count = static_cast<std::uint8_t>(calibration_.size());
                reply(r);
            },
            [&](const ModeSet& m) {
                BoardMode mode{m.mode, {m.subset.begin(), m.subset.end()}, static_cast<double>(m.stream_rate_hz)};
                if (const auto reason = check_mode(mode)) {
                    reply(Nack{*reason});
                    return;
                }
                next_start_s_ = std::max(t_s, busy_until_s_);
                set_mode(mode);
                reply(Ack{});
            },
            [&](const CalibPush& c) {
                if (c.sensor_id >= config_.sensor_count) {
                    reply(Nack{NackReason::unknown_sensor});
                    return;
                }
                auto& a = assembly_[c.sensor_id];
                if (c.chunk_index == 0) a = Assembly{0, c.chunk_count, {}};
                if (c.chunk_index != a.next || c.chunk_count != a.count) {
                    assembly_.erase(c.sensor_id);
                    reply(Nack{NackReason::chunk_sequence});
                    return;
                }
                a.data.insert(a.data.end(), c.data.begin(), c.data.end());
                ++a.next;
                if (a.next == a.count) {
                    const auto data = std::move(a.data);
                    assembly_.erase(c.sensor_id);
                    try {
                        install_calibration(deserialize_calibration(c.sensor_id, data));
                    } catch (const Error&) {
                        reply(Nack{NackReason::calibration_invalid});
                        return;
                    }
                }
                reply(Ack{});
            },
            [&](const ThresholdPush& p) {
                try {
                    set_detection(apply_thresholds(detection_, p));
                } catch (const Error&) {
                    reply(Nack{NackReason::malformed});
                    return;
                }
                reply(Ack{});
            },
            [&](const PollRequest& p) {
                std::vector<std::uint8_t> ids = p.sensors;
                std::sort(ids.begin(), ids.end());
                for (auto id : ids) {
                    if (id >= config_.sensor_count) {
                        reply(Nack{NackReason::unknown_sensor});
                        return;
                    }
                }
                // One sensor at a time, after any conversion still in progress.
                double t = std::max(t_s, busy_until_s_);
                PollResponse r;
                for (auto id : ids) {
                    const auto s = read_sensor(world, id, t);
                    r.samples.push_back({id, to_board_us(t), static_cast<std::uint16_t>(s.counts)});
                    t += config_.dwell_s;
                }
                busy_until_s_ = t;
                reply(r);
            },
            [&](const Enumerate&) {
                replies.push_back(EnumerateReply{config_.address, config_.board_id,
                                                 static_cast<std::uint8_t>(config_.sensor_count)});
            },
            [&](const auto&) { reply(Nack{NackReason::unsupported}); },
        },
        message);
    return replies;
}

void Board::emit(const bus::Message& m, double t_s) {
    pending_.push_back({t_s, m});
}

void Board::emit_batch(const std::vector<optics::RawSample>& samples, double t_s) {
    for (std::size_t i = 0; i < samples.size(); i += bus::kMaxBatchEntries) {
        bus::PositionBatch batch;
        batch.kind = bus::BatchKind::counts;
        for (std::size_t k = i; k < std::min(samples.size(), i + bus::kMaxBatchEntries); ++k) {
            batch.samples.push_back({static_cast<std::uint8_t>(samples[k].sensor_id), to_board_us(samples[k].t_s),
                                     static_cast<std::uint16_t>(samples[k].counts)});
        }
        emit(batch, t_s);
    }
}

void Board::receive(std::span<const std::uint8_t> bytes, double t_s, const World& world) {
    for (const auto& f : decoder_.feed_frames(bytes)) {
        if (f.address & bus::kHostBound) continue;
        if (f.address != bus::kBroadcast && f.address != config_.address) continue;
        const auto msg = bus::decode_payload(f.type, f.payload);
        if (!msg) {
            if (f.address != bus::kBroadcast) emit(bus::Nack{bus::NackReason::malformed}, t_s);
            continue;
        }
        const auto replies = handle_command(*msg, f.address, t_s, world);
        const double ready = std::holds_alternative<bus::PollRequest>(*msg) ? std::max(t_s, busy_until_s_) : t_s;
        for (const auto& r : replies) emit(r, ready);
    }
}

void Board::run_until(const World& world, double t_s) {
    const double period = period_s();
    while (next_start_s_ < t_s) {
        const double start = std::max(next_start_s_, busy_until_s_);
        if (start >= t_s) break;
        switch (mode_.kind) {
            case bus::BoardModeKind::event: {
                const auto samples = scan_cycle(world, start);
                for (const auto& m : detect_local_events(samples)) emit(m, start + sweep_s_);
                break;
            }
            case bus::BoardModeKind::full_scan_stream:
                emit_batch(scan_cycle(world, start), start + sweep_s_);
                break;
            case bus::BoardModeKind::subset_stream: {
                const auto samples = subset_stream_tick(world, start);
                emit_batch(samples, busy_until_s_);
                break;
            }
        }
        next_start_s_ += period;
        if (next_start_s_ < start) next_start_s_ = start + period;
    }
}

std::vector<Outgoing> Board::take_outgoing() {
    std::stable_sort(pending_.begin(), pending_.end(), [](const auto& a, const auto& b) { return a.t_s < b.t_s; });
    std::vector<Outgoing> out;
    out.reserve(pending_.size());
    const auto address = static_cast<std::uint8_t>(bus::kHostBound | config_.address);
    for (const auto& p : pending_) {
        out.push_back({p.t_s, bus::encode(p.message, address, seq_)});
        seq_ = static_cast<std::uint8_t>(seq_ + bus::frame_count(p.message));
    }
    pending_.clear();
    return out;
}

}  // namespace photon::board
