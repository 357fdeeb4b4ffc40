#include "photon/session.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "photon/error.hpp"

namespace photon::host {
namespace {

constexpr std::string_view kModule = "host";

}  // namespace

std::vector<RosterEntry> standard_roster(const Compass& compass, const std::vector<int>& board_sizes) {
    std::vector<int> sizes = board_sizes;
    const int total = compass.total_keys();
    if (sizes.empty()) {
        // Five boards for the two-manual instrument: 25, 25, 24, 24, 24.
        const int boards = (total + 24) / 25;
        const int base = total / boards;
        int extra = total % boards;
        for (int b = 0; b < boards; ++b) sizes.push_back(base + (extra-- > 0 ? 1 : 0));
    }
    int sum = 0;
    for (int s : sizes) sum += s;
    if (sum != total) throw ConfigError(kModule, "board sizes do not cover the compass");
    if (sizes.size() > bus::kMaxBoardAddress) throw ConfigError(kModule, "more boards than addresses");
    std::vector<RosterEntry> roster;
    int next = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        RosterEntry e;
        e.address = static_cast<std::uint8_t>(b + 1);
        e.board_id = "photon-" + std::string(b + 1 < 10 ? "0" : "") + std::to_string(b + 1);
        e.sensor_count = sizes[b];
        for (int s = 0; s < sizes[b]; ++s) e.keys.push_back(compass.key_at(next++));
        roster.push_back(std::move(e));
    }
    return roster;
}

double ClockUnwrapper::operator()(std::uint32_t us) {
    if (!started_) {
        started_ = true;
        last_ = us;
        return static_cast<double>(us) * 1e-6;
    }
    const auto diff = static_cast<std::int32_t>(us - static_cast<std::uint32_t>(last_));
    const std::int64_t value = last_ + diff;
    if (diff > 0) last_ = value;
    return static_cast<double>(value) * 1e-6;
}

Session::Session() : action(action::ActionConfig::single_manual()), roster(standard_roster(compass)) {}

Session Session::standard(const action::ActionConfig& action) {
    Session s;
    s.action = action;
    return s;
}

void Session::validate() const {
    action.validate();
    detection.validate();
    velocity.validate();
    if (compass.manuals < 1 || compass.keys_per_manual < 1) throw ConfigError(kModule, "empty compass");
    std::set<int> addresses;
    std::set<KeyId> keys;
    for (const auto& b : roster) {
        if (b.address < 1 || b.address > bus::kMaxBoardAddress) throw ConfigError(kModule, "roster address out of range");
        if (!addresses.insert(b.address).second) {
            throw ConfigError(kModule, "roster lists address " + std::to_string(b.address) + " twice");
        }
        if (static_cast<int>(b.keys.size()) != b.sensor_count) {
            throw ConfigError(kModule, "board " + b.board_id + " key list does not match sensor_count");
        }
        for (const auto& k : b.keys) {
            if (!compass.contains(k)) throw ConfigError(kModule, "roster key " + to_string(k) + " outside compass");
            if (!keys.insert(k).second) throw ConfigError(kModule, "roster maps " + to_string(k) + " twice");
        }
    }
    for (const auto& [key, entry] : calibration) {
        const auto ref = sensor_of(key);
        if (!ref) throw ConfigError(kModule, "calibration for unmapped key " + to_string(key));
        if (ref->sensor != entry.sensor_id) {
            throw ConfigError(kModule, "calibration sensor id for " + to_string(key) + " disagrees with roster");
        }
        if (entry.travel_mm != detection.travel_mm) {
            throw ConfigError(kModule, "calibration travel for " + to_string(key) + " differs from detection travel");
        }
    }
}

std::optional<SensorRef> Session::sensor_of(const KeyId& key) const {
    for (const auto& b : roster) {
        for (std::size_t s = 0; s < b.keys.size(); ++s) {
            if (b.keys[s] == key) return SensorRef{b.address, static_cast<int>(s)};
        }
    }
    return std::nullopt;
}

const RosterEntry* Session::board(std::uint8_t address) const {
    for (const auto& b : roster) {
        if (b.address == address) return &b;
    }
    return nullptr;
}

std::optional<KeyId> Session::key_of(std::uint8_t address, int sensor) const {
    const auto* b = board(address);
    if (!b || sensor < 0 || sensor >= static_cast<int>(b->keys.size())) return std::nullopt;
    return b->keys[static_cast<std::size_t>(sensor)];
}

std::optional<int> Session::global_sensor_id(std::uint8_t address, int sensor) const {
    int base = 0;
    for (const auto& b : roster) {
        if (b.address == address) {
            if (sensor < 0 || sensor >= b.sensor_count) return std::nullopt;
            return base + sensor;
        }
        base += b.sensor_count;
    }
    return std::nullopt;
}

int Session::total_sensors() const {
    int n = 0;
    for (const auto& b : roster) n += b.sensor_count;
    return n;
}

ModeCommands Session::plan_mode(const HostMode& mode) const {
    ModeCommands out;
    std::vector<const RosterEntry*> boards;
    for (const auto& b : roster) boards.push_back(&b);
    std::sort(boards.begin(), boards.end(), [](auto* a, auto* b) { return a->address < b->address; });
    if (mode.kind == HostModeKind::midi) {
        for (auto* b : boards) out.emplace_back(b->address, bus::ModeSet{bus::BoardModeKind::event, 0, {}});
        return out;
    }
    if (mode.subset.empty()) throw ValidationError(kModule, "position_stream needs a non-empty subset");
    if (!(mode.stream_rate_hz >= 250.0) || mode.stream_rate_hz > 65535.0) {
        throw ValidationError(kModule, "stream rate must be at least 250 Hz");
    }
    std::map<std::uint8_t, std::vector<std::uint8_t>> per_board;
    std::set<KeyId> seen;
    for (const auto& k : mode.subset) {
        if (!seen.insert(k).second) throw ValidationError(kModule, "subset lists " + to_string(k) + " twice");
        const auto ref = sensor_of(k);
        if (!ref) throw ValidationError(kModule, "subset key " + to_string(k) + " is not on any board");
        per_board[ref->address].push_back(static_cast<std::uint8_t>(ref->sensor));
    }
    for (auto* b : boards) {
        auto it = per_board.find(b->address);
        if (it == per_board.end()) {
            out.emplace_back(b->address, bus::ModeSet{bus::BoardModeKind::event, 0, {}});
            continue;
        }
        auto ids = it->second;
        std::sort(ids.begin(), ids.end());
        if (ids.size() > bus::kMaxSubset) throw ValidationError(kModule, "more than 32 subset sensors on one board");
        out.emplace_back(b->address, bus::ModeSet{bus::BoardModeKind::subset_stream,
                                                  static_cast<std::uint16_t>(mode.stream_rate_hz), ids});
    }
    return out;
}

ModeCommands Session::set_mode(const HostMode& mode) {
    if (capture_) throw ValidationError(kModule, "mode change rejected during calibration capture of " + to_string(*capture_));
    auto commands = plan_mode(mode);
    mode_ = mode;
    return commands;
}

void Session::begin_capture(const KeyId& key) {
    if (capture_) throw ValidationError(kModule, "capture already active for " + to_string(*capture_));
    if (!sensor_of(key)) throw ValidationError(kModule, "cannot capture unmapped key " + to_string(key));
    capture_ = key;
}

void Session::end_capture() { capture_.reset(); }

double Session::board_time(std::uint8_t address, std::uint32_t us) {
    const double t = clocks_[address](us);
    latest_ = std::max(latest_, t);
    return t;
}

std::optional<KeyEvent> Session::aggregate(std::uint8_t address, const bus::KeyEventRaw& raw) {
    const auto key = key_of(address, raw.sensor_id);
    if (!key) {
        ++stats_.unknown_sensor;
        return std::nullopt;
    }
    const double entry = board_time(address, raw.entry_us);
    const double exit = board_time(address, raw.exit_us);
    if (mode_.kind != HostModeKind::midi) {
        ++stats_.suppressed_by_mode;
        return std::nullopt;
    }
    if (action.pluck_points_mm.empty()) {
        ++stats_.silent_register;
        return std::nullopt;
    }
    KeyEvent ev;
    ev.manual = key->manual;
    ev.key = key->key;
    ev.t_s = exit;
    // Board timestamps are whole microseconds; a window crossed inside one
    // tick still has a positive traversal.
    ev.traversal_s = std::max(exit - entry, 1e-6);
    ev.velocity = velocity_from_time(velocity, ev.traversal_s);
    if (raw.kind == EdgeKind::on) {
        if (!sounding_.insert(*key).second) {
            ++stats_.stuck_notes;
            return std::nullopt;
        }
        ev.kind = KeyEvent::Kind::note_on;
    } else {
        if (sounding_.erase(*key) == 0) {
            ++stats_.orphan_offs;
            return std::nullopt;
        }
        ev.kind = KeyEvent::Kind::note_off;
    }
    return ev;
}

std::vector<KeyEvent> Session::aggregate_events(const std::vector<std::pair<std::uint8_t, bus::Message>>& messages) {
    std::vector<KeyEvent> out;
    for (const auto& [address, m] : messages) {
        if (const auto* raw = std::get_if<bus::KeyEventRaw>(&m)) {
            if (auto ev = aggregate(address, *raw)) out.push_back(*ev);
        }
    }
    return out;
}

std::vector<PositionFrame> Session::positions(std::uint8_t address, const bus::PositionBatch& batch) {
    std::vector<PositionFrame> out;
    for (const auto& s : batch.samples) {
        const auto key = key_of(address, s.sensor_id);
        if (!key) {
            ++stats_.unknown_sensor;
            continue;
        }
        PositionFrame f;
        f.key = *key;
        f.sensor_id = *global_sensor_id(address, s.sensor_id);
        f.t_s = board_time(address, s.t_us);
        if (batch.kind == bus::BatchKind::position_um) {
            f.counts = -1;
            f.displacement_mm = s.value / 1000.0;
        } else {
            const auto cal = calibration.find(*key);
            if (cal == calibration.end()) {
                ++stats_.uncalibrated_frames;
                continue;
            }
            f.counts = s.value;
            f.displacement_mm = displacement(cal->second, s.value);
        }
        out.push_back(f);
    }
    return out;
}

std::vector<KeyEvent> Session::release_all(double t_s) {
    std::vector<KeyEvent> out;
    for (const auto& k : sounding_) {
        out.push_back({KeyEvent::Kind::note_off, k.manual, k.key, t_s, velocity.t_max_s, velocity.v_min});
    }
    sounding_.clear();
    return out;
}

void Session::reset_runtime() {
    sounding_.clear();
    clocks_.clear();
    stats_ = {};
    latest_ = 0.0;
}

}  // namespace photon::host
