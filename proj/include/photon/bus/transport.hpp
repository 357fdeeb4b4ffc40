#pragma once

// Byte transports. The codec is identical over all of them.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace photon::bus {

class ByteTransport {
public:
    virtual ~ByteTransport() = default;
    virtual void write(const std::vector<std::uint8_t>& bytes) = 0;
    /// Waits up to `timeout_s` for bytes; returns whatever has arrived (maybe none).
    virtual std::vector<std::uint8_t> read(double timeout_s) = 0;
    /// Seconds on the transport's clock. Simulated transports return simulated time.
    virtual double now() const = 0;
};

/// Connected stream socket. Owns the descriptor.
class TcpTransport : public ByteTransport {
public:
    explicit TcpTransport(int fd);
    ~TcpTransport() override;
    TcpTransport(const TcpTransport&) = delete;
    TcpTransport& operator=(const TcpTransport&) = delete;

    /// "host:port"; throws ConfigError on failure.
    static std::unique_ptr<TcpTransport> connect(const std::string& address, double timeout_s = 5.0);

    void write(const std::vector<std::uint8_t>& bytes) override;
    std::vector<std::uint8_t> read(double timeout_s) override;
    double now() const override;
    bool closed() const { return closed_; }

private:
    int fd_;
    bool closed_ = false;
};

class TcpListener {
public:
    /// "host:port"; port 0 picks a free port.
    explicit TcpListener(const std::string& address);
    ~TcpListener();
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;

    int port() const { return port_; }
    /// nullptr on timeout.
    std::unique_ptr<TcpTransport> accept(double timeout_s);

private:
    int fd_ = -1;
    int port_ = 0;
};

/// Raw serial device (RS-485 adaptor), 8N1, no flow control.
class SerialTransport : public ByteTransport {
public:
    SerialTransport(const std::string& device, int baud);
    /// Wraps an already open descriptor, e.g. a pty in tests. Takes ownership.
    SerialTransport(int fd, int baud);
    ~SerialTransport() override;
    SerialTransport(const SerialTransport&) = delete;
    SerialTransport& operator=(const SerialTransport&) = delete;

    void write(const std::vector<std::uint8_t>& bytes) override;
    std::vector<std::uint8_t> read(double timeout_s) override;
    double now() const override;

private:
    void configure(int baud);
    int fd_;
};

}  // namespace photon::bus
