#pragma once

// `photon serve`: the host task on a simulated instrument behind an HTTP
// endpoint. Commands are JSON documents posted to /api/command and executed
// one at a time on the host thread; everything the host observes is
// broadcast to /api/stream readers as server-sent events. See docs/api.md.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "photon/io.hpp"

namespace photon::serve {

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8750;
    /// Simulated seconds per wall-clock second.
    double time_scale = 1.0;
    std::uint64_t seed = 1;
    /// Played once after bring-up, or repeatedly with `loop`.
    std::optional<io::Score> score;
    bool loop = false;
    /// Written after every committed calibration when set.
    std::string save_path;
    /// Recordings go here; recording commands fail when empty.
    std::string record_dir;
    /// Stream events kept for late readers.
    std::size_t history = 4096;
    double status_interval_s = 1.0;
};

struct Event {
    std::uint64_t id = 0;
    std::string type;
    std::string data;
};

/// Fan-out log: writers append, each reader follows at its own pace.
class Broadcaster {
public:
    explicit Broadcaster(std::size_t history) : history_(history) {}

    void publish(std::string type, std::string data);
    /// Events after `after`, waiting up to `timeout_s` for at least one.
    /// Readers that fell behind the history skip ahead.
    std::vector<Event> wait(std::uint64_t after, double timeout_s);
    std::uint64_t last_id() const;
    void close();
    bool closed() const;

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Event> log_;
    std::size_t history_;
    std::uint64_t next_ = 1;
    bool closed_ = false;
};

struct Reply {
    int http_status = 200;
    std::string body;
};

class Server {
public:
    Server(io::SessionFile file, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Brings the instrument up and starts listening. Returns the bound
    /// port. Throws ConfigError on bind failure.
    int start();
    /// Blocks until stop() is called or a signal handler calls it.
    void wait();
    void stop();

    /// Same path as POST /api/command.
    Reply command(const std::string& body);
    Broadcaster& events() { return events_; }
    /// Drops any capture owned by a disconnected stream client.
    void client_gone(const std::string& client);

private:
    struct Impl;
    struct Job {
        std::string body;
        std::promise<Reply> reply;
    };

    void host_loop(std::promise<void> ready);

    io::SessionFile file_;
    ServerOptions options_;
    Broadcaster events_;
    std::unique_ptr<Impl> impl_;
    std::mutex jobs_mu_;
    std::deque<std::shared_ptr<Job>> jobs_;
    std::atomic<bool> running_{false};
    std::thread host_thread_;
    std::thread http_thread_;
    std::exception_ptr bring_up_error_;
};

}  // namespace photon::serve
