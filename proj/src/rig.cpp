#include "photon/rig.hpp"

#include <algorithm>
#include <cmath>

#include "photon/error.hpp"

namespace photon::sim {

void KeyWorld::set_performance(std::map<KeyId, action::Trajectory> performance) {
    performance_ = std::move(performance);
}

void KeyWorld::add_performance(const std::map<KeyId, action::KeyTrack>& tracks) {
    for (const auto& [key, track] : tracks) performance_[key] = track.trajectory;
}

void KeyWorld::hold(const KeyId& key, double mm) { holds_[key] = mm; }
void KeyWorld::release(const KeyId& key) { holds_.erase(key); }
void KeyWorld::clear_holds() { holds_.clear(); }

double KeyWorld::operator()(const KeyId& key, double t_s) const {
    if (auto h = holds_.find(key); h != holds_.end()) return h->second;
    if (auto p = performance_.find(key); p != performance_.end()) return p->second.position(t_s - offset_s_);
    return 0.0;
}

std::vector<board::BoardConfig> board_configs(const host::Session& session, const RigOptions& options) {
    std::vector<board::BoardConfig> out;
    for (const auto& r : session.roster) {
        board::BoardConfig c;
        c.address = r.address;
        c.board_id = r.board_id;
        c.sensor_count = r.sensor_count;
        c.key_map = r.keys;
        c.scan_rate_hz = options.scan_rate_hz;
        c.dwell_s = options.dwell_s;
        c.nominal_rest_counts = optics::expected_counts_at_displacement(options.default_model, 0.0);
        c.nominal_full_counts = optics::expected_counts_at_displacement(options.default_model, session.detection.travel_mm);
        out.push_back(std::move(c));
    }
    return out;
}

class Rig::HostPort : public bus::ByteTransport {
public:
    explicit HostPort(Rig& rig) : rig_(rig) {}

    void write(const std::vector<std::uint8_t>& bytes) override { rig_.wire_.host_send(bytes, rig_.now_); }

    std::vector<std::uint8_t> read(double timeout_s) override {
        const double target = rig_.now_ + std::max(0.0, timeout_s);
        auto out = rig_.wire_.host_receive(rig_.now_);
        while (out.empty() && rig_.now_ < target) {
            rig_.step_to(std::min(target, rig_.now_ + rig_.options_.tick_s));
            out = rig_.wire_.host_receive(rig_.now_);
        }
        return out;
    }

    double now() const override { return rig_.now_; }

private:
    Rig& rig_;
};

bus::ByteTransport& Rig::host() { return *host_; }

Rig::Rig(std::vector<board::BoardConfig> boards, const RigOptions& options, const KeyWorld* world)
    : options_(options), keys_(world), wire_(options.wire) {
    if (!(options_.tick_s > 0.0)) throw ConfigError("sim", "tick must be positive");
    std::seed_seq seq{options_.seed};
    std::vector<std::uint64_t> seeds(boards.size());
    seq.generate(seeds.begin(), seeds.end());
    for (std::size_t i = 0; i < boards.size(); ++i) {
        const auto& cfg = boards[i];
        std::vector<optics::SensorModel> models;
        for (int s = 0; s < cfg.sensor_count; ++s) {
            const KeyId* key = cfg.key_map.empty() ? nullptr : &cfg.key_map[static_cast<std::size_t>(s)];
            auto it = key ? options_.models.find(*key) : options_.models.end();
            models.push_back(it != options_.models.end() ? it->second : options_.default_model);
        }
        Node n;
        n.board = std::make_unique<board::Board>(cfg, std::move(models), seeds[i]);
        const auto keys = cfg.key_map;
        const KeyWorld* kw = keys_;
        n.world = [keys, kw](int sensor, double t) {
            if (!kw || keys.empty()) return 0.0;
            return (*kw)(keys[static_cast<std::size_t>(sensor)], t);
        };
        nodes_.push_back(std::move(n));
    }
    chain_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) chain_[i] = static_cast<int>(i);
    if (options_.reverse_chain) std::reverse(chain_.begin(), chain_.end());
    for (int idx : chain_) nodes_[static_cast<std::size_t>(idx)].port = wire_.attach();
    host_ = std::make_unique<HostPort>(*this);
    if (options_.parallel && nodes_.size() > 1) start_workers();
}

Rig::Rig(const host::Session& session, const RigOptions& options, const KeyWorld* world)
    : Rig(board_configs(session, options), options, world) {}

Rig::~Rig() {
    if (!workers_.empty()) {
        stopping_ = true;
        start_->arrive_and_wait();
        workers_.clear();
    }
}

void Rig::start_workers() {
    const std::size_t n = nodes_.size();
    start_ = std::make_unique<std::barrier<>>(static_cast<std::ptrdiff_t>(n + 1));
    done_ = std::make_unique<std::barrier<>>(static_cast<std::ptrdiff_t>(n + 1));
    for (std::size_t i = 0; i < n; ++i) {
        workers_.emplace_back([this, i] {
            while (true) {
                start_->arrive_and_wait();
                if (stopping_) return;
                work(i, tick_target_);
                done_->arrive_and_wait();
            }
        });
    }
}

void Rig::work(std::size_t i, double t_next) {
    auto& n = nodes_[i];
    n.board->run_until(n.world, t_next);
    const auto bytes = wire_.board_receive(n.port, t_next);
    if (!bytes.empty()) n.board->receive(bytes, t_next, n.world);
}

void Rig::collect() {
    struct Item {
        double t;
        int port;
        std::vector<std::uint8_t> bytes;
    };
    std::vector<Item> items;
    for (auto& n : nodes_) {
        for (auto& o : n.board->take_outgoing()) items.push_back({o.t_s, n.port, std::move(o.bytes)});
    }
    std::stable_sort(items.begin(), items.end(),
                     [](const Item& a, const Item& b) { return a.t != b.t ? a.t < b.t : a.port < b.port; });
    for (const auto& it : items) wire_.board_send(it.port, it.bytes, it.t);
}

void Rig::step_to(double t_next) {
    if (workers_.empty()) {
        for (std::size_t i = 0; i < nodes_.size(); ++i) work(i, t_next);
    } else {
        tick_target_ = t_next;
        start_->arrive_and_wait();
        done_->arrive_and_wait();
    }
    collect();
    now_ = t_next;
}

void Rig::step() { step_to(now_ + options_.tick_s); }

void Rig::advance_to(double t_s) {
    while (now_ < t_s) step_to(std::min(t_s, now_ + options_.tick_s));
}

board::Board& Rig::board(std::uint8_t address) {
    for (auto& n : nodes_) {
        if (n.board->config().address == address) return *n.board;
    }
    throw ConfigError("sim", "no board at address " + std::to_string(address));
}

std::vector<board::Board*> Rig::boards() {
    std::vector<board::Board*> out;
    for (auto& n : nodes_) out.push_back(n.board.get());
    return out;
}

}  // namespace photon::sim
