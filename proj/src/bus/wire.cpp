#include "photon/bus/wire.hpp"

#include <algorithm>
#include <limits>

#include "photon/error.hpp"

namespace photon::bus {

void WireConfig::validate() const {
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (base_latency_s < 0.0 || hop_latency_s < 0.0 || byte_time_s < 0.0) {
        throw ValidationError("bus.wire", "latencies must be non-negative");
    }
    if (!rate_ok(corrupt_rate_down) || !rate_ok(corrupt_rate_up) || !rate_ok(drop_rate_down) ||
        !rate_ok(drop_rate_up)) {
        throw ValidationError("bus.wire", "impairment rates must lie in [0, 1]");
    }
}

WireSim::WireSim(const WireConfig& config) : config_(config), rng_(config.seed) { config_.validate(); }

int WireSim::attach() {
    boards_.emplace_back();
    return static_cast<int>(boards_.size()) - 1;
}

void WireSim::impair(std::vector<std::uint8_t>& bytes, double corrupt, double drop) {
    if (corrupt <= 0.0 && drop <= 0.0) return;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> bit(0, 7);
    std::vector<std::uint8_t> out;
    out.reserve(bytes.size());
    for (auto b : bytes) {
        if (drop > 0.0 && u(rng_) < drop) {
            ++stats_.dropped;
            continue;
        }
        if (corrupt > 0.0 && u(rng_) < corrupt) {
            b = static_cast<std::uint8_t>(b ^ (1u << bit(rng_)));
            ++stats_.corrupted;
        }
        out.push_back(b);
    }
    bytes.swap(out);
}

void WireSim::host_send(const std::vector<std::uint8_t>& bytes, double t_s) {
    stats_.bytes_down += bytes.size();
    double start = std::max(t_s, down_free_at_);
    down_free_at_ = start + config_.byte_time_s * static_cast<double>(bytes.size());
    // Every board taps the same pair; each sees its own copy of the impairments.
    for (int p = 0; p < ports(); ++p) {
        auto copy = bytes;
        impair(copy, config_.corrupt_rate_down, config_.drop_rate_down);
        auto& q = boards_[static_cast<std::size_t>(p)];
        double t = start + latency(p);
        if (!q.empty()) t = std::max(t, q.back().t);
        for (std::size_t i = 0; i < copy.size(); ++i) {
            q.push_back({t + config_.byte_time_s * static_cast<double>(i + 1), copy[i]});
        }
    }
}

void WireSim::board_send(int port, const std::vector<std::uint8_t>& bytes, double t_s) {
    if (port < 0 || port >= ports()) throw ValidationError("bus.wire", "no such port");
    stats_.bytes_up += bytes.size();
    auto copy = bytes;
    impair(copy, config_.corrupt_rate_up, config_.drop_rate_up);
    const double arrive = std::max(t_s + latency(port), up_free_at_);
    double t = arrive;
    for (auto b : copy) {
        t += config_.byte_time_s;
        host_.push_back({t, b});
    }
    up_free_at_ = std::max(up_free_at_, t);
}

std::vector<std::uint8_t> WireSim::host_receive(double t_s) {
    std::vector<std::uint8_t> out;
    while (!host_.empty() && host_.front().t <= t_s) {
        out.push_back(host_.front().b);
        host_.pop_front();
    }
    return out;
}

std::vector<std::uint8_t> WireSim::board_receive(int port, double t_s) {
    auto& q = boards_.at(static_cast<std::size_t>(port));
    std::vector<std::uint8_t> out;
    while (!q.empty() && q.front().t <= t_s) {
        out.push_back(q.front().b);
        q.pop_front();
    }
    return out;
}

double WireSim::next_arrival_host() const {
    return host_.empty() ? std::numeric_limits<double>::infinity() : host_.front().t;
}

double WireSim::next_arrival_board(int port) const {
    const auto& q = boards_.at(static_cast<std::size_t>(port));
    return q.empty() ? std::numeric_limits<double>::infinity() : q.front().t;
}

}  // namespace photon::bus
