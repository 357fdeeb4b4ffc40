#pragma once

// Simulated multi-drop wire. One host port and boards in physical chain
// order. Downstream bytes reach every board; upstream transmissions are
// serialized by carrier sense so bytes from different boards never
// interleave. Delivery is in order per direction; the wire may flip or drop
// bytes but never reorders them.

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

namespace photon::bus {

struct WireConfig {
    double base_latency_s = 20e-6;
    /// Extra propagation and repeater delay per board position along the chain.
    double hop_latency_s = 2e-6;
    /// Per-byte occupancy of the wire. Zero models latency only.
    double byte_time_s = 0.0;
    double corrupt_rate_down = 0.0;
    double corrupt_rate_up = 0.0;
    double drop_rate_down = 0.0;
    double drop_rate_up = 0.0;
    std::uint64_t seed = 1;

    void validate() const;
};

struct WireStats {
    std::uint64_t bytes_down = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t corrupted = 0;
    std::uint64_t dropped = 0;
};

class WireSim {
public:
    explicit WireSim(const WireConfig& config = {});

    /// Adds a board at the far end of the chain; returns its port index.
    int attach();
    int ports() const { return static_cast<int>(boards_.size()); }

    void host_send(const std::vector<std::uint8_t>& bytes, double t_s);
    void board_send(int port, const std::vector<std::uint8_t>& bytes, double t_s);

    /// Bytes that have arrived by `t_s`, in order.
    std::vector<std::uint8_t> host_receive(double t_s);
    std::vector<std::uint8_t> board_receive(int port, double t_s);

    /// Earliest pending arrival time, or +inf.
    double next_arrival_host() const;
    double next_arrival_board(int port) const;

    const WireStats& stats() const { return stats_; }
    const WireConfig& config() const { return config_; }

private:
    struct Timed {
        double t;
        std::uint8_t b;
    };
    void impair(std::vector<std::uint8_t>& bytes, double corrupt, double drop);
    double latency(int port) const { return config_.base_latency_s + config_.hop_latency_s * port; }

    WireConfig config_;
    std::mt19937_64 rng_;
    std::vector<std::deque<Timed>> boards_;
    std::deque<Timed> host_;
    double up_free_at_ = 0.0;
    double down_free_at_ = 0.0;
    WireStats stats_;
};

}  // namespace photon::bus
