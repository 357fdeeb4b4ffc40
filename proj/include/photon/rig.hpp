#pragma once

// Desk-scale instrument: simulated keys, boards on a simulated wire, and a
// host-side transport whose clock is the simulation clock. Boards can be
// stepped round-robin on the caller's thread or in parallel worker threads;
// both schedules produce identical traffic.

#include <barrier>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "photon/action_sim.hpp"
#include "photon/board.hpp"
#include "photon/bus/transport.hpp"
#include "photon/bus/wire.hpp"
#include "photon/optics.hpp"
#include "photon/session.hpp"

namespace photon::sim {

/// Ground-truth key positions: scripted trajectories, overridden by fixture
/// holds.
class KeyWorld {
public:
    void set_performance(std::map<KeyId, action::Trajectory> performance);
    void add_performance(const std::map<KeyId, action::KeyTrack>& tracks);
    void hold(const KeyId& key, double mm);
    void release(const KeyId& key);
    void clear_holds();
    /// Performance time zero on the simulation clock.
    void set_offset(double t_s) { offset_s_ = t_s; }
    double offset() const { return offset_s_; }

    double operator()(const KeyId& key, double t_s) const;

private:
    std::map<KeyId, action::Trajectory> performance_;
    std::map<KeyId, double> holds_;
    double offset_s_ = 0.0;
};

struct RigOptions {
    bus::WireConfig wire;
    double tick_s = 250e-6;
    bool reverse_chain = false;
    bool parallel = false;
    std::uint64_t seed = 1;
    optics::SensorModel default_model;
    std::map<KeyId, optics::SensorModel> models;
    double scan_rate_hz = 1000.0;
    double dwell_s = 200e-6;
};

/// Board configs matching a session roster.
std::vector<board::BoardConfig> board_configs(const host::Session& session, const RigOptions& options = {});

class Rig {
public:
    Rig(std::vector<board::BoardConfig> boards, const RigOptions& options, const KeyWorld* world);
    Rig(const host::Session& session, const RigOptions& options, const KeyWorld* world);
    ~Rig();
    Rig(const Rig&) = delete;
    Rig& operator=(const Rig&) = delete;

    double now() const { return now_; }
    /// Steps whole ticks (the last one may be shorter) until now() == t_s.
    void advance_to(double t_s);
    void step();

    bus::ByteTransport& host();
    bus::WireSim& wire() { return wire_; }
    board::Board& board(std::uint8_t address);
    std::vector<board::Board*> boards();
    /// Boards in physical chain order.
    const std::vector<int>& chain() const { return chain_; }

private:
    class HostPort;
    struct Node {
        std::unique_ptr<board::Board> board;
        board::World world;
        int port = 0;
    };

    void step_to(double t_next);
    void work(std::size_t node, double t_next);
    void collect();
    void start_workers();

    RigOptions options_;
    const KeyWorld* keys_;
    bus::WireSim wire_;
    std::vector<Node> nodes_;
    std::vector<int> chain_;
    std::unique_ptr<HostPort> host_;
    double now_ = 0.0;

    // Parallel schedule.
    std::vector<std::jthread> workers_;
    std::unique_ptr<std::barrier<>> start_, done_;
    double tick_target_ = 0.0;
    bool stopping_ = false;
};

}  // namespace photon::sim
