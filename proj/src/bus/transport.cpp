#include "photon/bus/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "photon/error.hpp"

namespace photon::bus {
namespace {

double steady_now() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

std::pair<std::string, std::string> split_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw ConfigError("bus.transport", "address must be host:port: " + address);
    return {address.substr(0, colon), address.substr(colon + 1)};
}

int timeout_ms(double timeout_s) { return timeout_s <= 0.0 ? 0 : static_cast<int>(timeout_s * 1000.0 + 0.5); }

std::vector<std::uint8_t> read_fd(int fd, double timeout_s, bool* closed) {
    std::vector<std::uint8_t> out;
    pollfd p{fd, POLLIN, 0};
    int rc = ::poll(&p, 1, timeout_ms(timeout_s));
    while (rc > 0) {
        std::uint8_t buf[4096];
        const ssize_t n = ::read(fd, buf, sizeof buf);
        if (n <= 0) {
            if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
                if (closed) *closed = true;
            }
            break;
        }
        out.insert(out.end(), buf, buf + n);
        rc = ::poll(&p, 1, 0);
    }
    return out;
}

void write_fd(int fd, const std::vector<std::uint8_t>& bytes, const char* module) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == EAGAIN) {
                pollfd p{fd, POLLOUT, 0};
                ::poll(&p, 1, 100);
                continue;
            }
            throw Error(module, std::string("write failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

speed_t to_speed(int baud) {
    switch (baud) {
        case 9600: return B9600;
        case 19200: return B19200;
        case 38400: return B38400;
        case 57600: return B57600;
        case 115200: return B115200;
        case 230400: return B230400;
        case 460800: return B460800;
        case 921600: return B921600;
        case 1000000: return B1000000;
        default: throw ConfigError("bus.serial", "unsupported baud rate " + std::to_string(baud));
    }
}

}  // namespace

TcpTransport::TcpTransport(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpTransport::~TcpTransport() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpTransport::connect(const std::string& address, double timeout_s) {
    auto [host, port] = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
        throw ConfigError("bus.transport", "cannot resolve " + address);
    }
    const double deadline = steady_now() + timeout_s;
    int fd = -1;
    while (fd < 0) {
        for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
            fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
            ::close(fd);
            fd = -1;
        }
        if (fd >= 0 || steady_now() > deadline) break;
        ::usleep(20000);
    }
    ::freeaddrinfo(res);
    if (fd < 0) throw ConfigError("bus.transport", "cannot connect to " + address);
    return std::make_unique<TcpTransport>(fd);
}

void TcpTransport::write(const std::vector<std::uint8_t>& bytes) { write_fd(fd_, bytes, "bus.transport"); }

std::vector<std::uint8_t> TcpTransport::read(double timeout_s) { return read_fd(fd_, timeout_s, &closed_); }

double TcpTransport::now() const { return steady_now(); }

TcpListener::TcpListener(const std::string& address) {
    auto [host, port] = split_address(address);
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ConfigError("bus.transport", "socket failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(std::stoi(port)));
    if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw ConfigError("bus.transport", "bad IPv4 address " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 4) != 0) {
        ::close(fd_);
        throw ConfigError("bus.transport", "cannot bind " + address + ": " + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpListener::accept(double timeout_s) {
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, timeout_ms(timeout_s)) <= 0) return nullptr;
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd < 0) return nullptr;
    return std::make_unique<TcpTransport>(fd);
}

SerialTransport::SerialTransport(const std::string& device, int baud) {
    fd_ = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
    if (fd_ < 0) throw ConfigError("bus.serial", "cannot open " + device + ": " + std::strerror(errno));
    configure(baud);
}

SerialTransport::SerialTransport(int fd, int baud) : fd_(fd) {
    ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL) | O_NONBLOCK);
    configure(baud);
}

SerialTransport::~SerialTransport() {
    if (fd_ >= 0) ::close(fd_);
}

void SerialTransport::configure(int baud) {
    termios tio{};
    if (::tcgetattr(fd_, &tio) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ConfigError("bus.serial", "not a terminal device");
    }
    ::cfmakeraw(&tio);
    tio.c_cflag |= CLOCAL | CREAD;
    tio.c_cflag &= ~static_cast<tcflag_t>(CSTOPB | PARENB | CRTSCTS);
    tio.c_cc[VMIN] = 0;
    tio.c_cc[VTIME] = 0;
    const speed_t speed = to_speed(baud);
    ::cfsetispeed(&tio, speed);
    ::cfsetospeed(&tio, speed);
    ::tcsetattr(fd_, TCSANOW, &tio);
}

void SerialTransport::write(const std::vector<std::uint8_t>& bytes) { write_fd(fd_, bytes, "bus.serial"); }

std::vector<std::uint8_t> SerialTransport::read(double timeout_s) { return read_fd(fd_, timeout_s, nullptr); }

double SerialTransport::now() const { return steady_now(); }

}  // namespace photon::bus
