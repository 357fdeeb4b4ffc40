#pragma once

// Main-controller task: drives the bus through a ByteTransport, matches
// replies to requests, and feeds asynchronous board traffic into the session.

#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "photon/bus/frame.hpp"
#include "photon/bus/transport.hpp"
#include "photon/session.hpp"

namespace photon::host {

struct EnumeratedBoard {
    std::uint8_t address = 0;
    std::string board_id;
    int sensor_count = 0;

    bool operator==(const EnumeratedBoard&) const = default;
};

struct ControllerOptions {
    double reply_timeout_s = 0.02;
    int retries = 3;
    /// How long enumeration listens for replies after the broadcast.
    double enumerate_window_s = 0.02;
};

struct ControllerStats {
    std::uint64_t requests = 0;
    std::uint64_t retries = 0;
    std::uint64_t timeouts = 0;
    /// Accepted frames whose seq went backwards relative to the sender's last.
    std::uint64_t seq_regressions = 0;
    std::uint64_t unexpected = 0;
};

/// Broadcast Enumerate and collect replies, sorted by address. Throws
/// EnumerationError when two boards answer with the same address.
std::vector<EnumeratedBoard> enumerate(bus::ByteTransport& transport, double window_s = 0.02);

class HostController {
public:
    HostController(bus::ByteTransport& transport, Session& session, ControllerOptions options = {});

    std::vector<EnumeratedBoard> enumerate();
    /// Enumerates and checks the result against the session roster.
    void verify_roster();

    /// Sends and waits for the reply, retrying on timeout. Throws Error after
    /// the last retry.
    bus::Message request(std::uint8_t address, const bus::Message& message);

    bus::StatusResponse status(std::uint8_t address);
    std::vector<bus::SampleEntry> poll(std::uint8_t address, const std::vector<std::uint8_t>& sensors);
    void push_thresholds();
    void push_calibration(const KeyId& key);
    void push_all_calibration();
    /// Session mode change plus the board commands. Closing events for
    /// sounding notes are delivered through the key-event callback.
    void apply_mode(const HostMode& mode);

    /// Reads for up to `timeout_s` and dispatches everything received.
    void pump(double timeout_s);
    double now() const { return transport_.now(); }

    std::function<void(const KeyEvent&)> on_key_event;
    std::function<void(const PositionFrame&)> on_position;
    std::function<void(std::uint8_t, const bus::PositionBatch&)> on_batch;

    Session& session() { return session_; }
    const ControllerStats& stats() const { return stats_; }
    const bus::DecoderStats& decoder_stats() const { return decoder_.stats(); }

private:
    void dispatch(const bus::Received& r);
    void send(std::uint8_t address, const bus::Message& m);

    bus::ByteTransport& transport_;
    Session& session_;
    ControllerOptions options_;
    bus::Decoder decoder_;
    std::uint8_t seq_ = 0;
    std::map<std::uint8_t, std::uint8_t> last_seq_;
    /// Replies waiting for the current request, by source address.
    std::vector<std::pair<std::uint8_t, bus::Message>> replies_;
    ControllerStats stats_;
};

/// True for message types that only ever travel as replies.
bool is_reply(const bus::Message& m);

}  // namespace photon::host
