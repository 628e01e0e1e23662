#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tdcsim {

// Wire protocol, little-endian throughout:
//   data frame    = u32 record count, then count * 8-byte records
//   request frame = u8 opcode (1 = fetch), u64 last-acknowledged sequence
// Continuous mode pushes data frames as records arrive; request mode answers
// each request with every record after the acknowledged sequence number.

namespace net {

inline void write_all(int fd, const void* buf, size_t len) {
    const char* p = static_cast<const char*>(buf);
    while (len > 0) {
        const ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL);
        if (n <= 0) throw std::runtime_error("socket write failed");
        p += n;
        len -= static_cast<size_t>(n);
    }
}

inline bool read_all(int fd, void* buf, size_t len) {
    char* p = static_cast<char*>(buf);
    while (len > 0) {
        const ssize_t n = ::recv(fd, p, len, 0);
        if (n == 0) return false;  // orderly shutdown
        if (n < 0) throw std::runtime_error("socket read failed");
        p += n;
        len -= static_cast<size_t>(n);
    }
    return true;
}

class Socket {
  public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            close();
            fd_ = o.fd_;
            o.fd_ = -1;
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

  private:
    int fd_ = -1;
};

}  // namespace net

struct ServerConfig {
    std::string host = "127.0.0.1";
    uint16_t port = 0;  // 0 = ephemeral
    enum class Mode { kContinuous, kRequest } mode = Mode::kContinuous;
    size_t buffer_records = size_t{1} << 16;
    size_t frame_records = size_t{1} << 14;  // max records per pushed frame
};

struct ServerStats {
    uint64_t accepted_clients = 0;
    uint64_t records_in = 0;
    uint64_t records_sent = 0;
    uint64_t records_dropped = 0;  // bounded-buffer overruns, counted never silent
};

// Streaming service for tag records. One producer pushes records; the server
// retains a bounded ring (sequence-numbered from 0) and either pushes frames
// to every connected client or answers explicit requests. A stalled client
// never grows server memory: the ring overwrites the oldest records and the
// drop counter advances.
class TagServer {
  public:
    explicit TagServer(ServerConfig cfg) : cfg_(std::move(cfg)), ring_(cfg_.buffer_records) {}

    ~TagServer() { stop(); }

    void start() {
        listen_sock_ = net::Socket(::socket(AF_INET, SOCK_STREAM, 0));
        if (!listen_sock_.valid()) throw std::runtime_error("server: socket() failed");
        int one = 1;
        ::setsockopt(listen_sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(cfg_.port);
        if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1)
            throw std::runtime_error("server: bad host address");
        if (::bind(listen_sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw std::runtime_error("server: bind failed");
        if (::listen(listen_sock_.fd(), 8) != 0) throw std::runtime_error("server: listen failed");
        socklen_t len = sizeof(addr);
        ::getsockname(listen_sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        bound_port_ = ntohs(addr.sin_port);
        running_ = true;
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    void stop() {
        if (!running_.exchange(false)) return;
        {
            std::lock_guard lk(mu_);
            closing_ = true;
        }
        cv_.notify_all();
        listen_sock_.close();
        if (acceptor_.joinable()) acceptor_.join();
        for (auto& t : workers_)
            if (t.joinable()) t.join();
        workers_.clear();
    }

    uint16_t port() const { return bound_port_; }

    ServerStats stats() const {
        std::lock_guard lk(mu_);
        return stats_;
    }

    // Producer side. Appends to the ring; oldest records are overwritten once
    // the ring is full and their loss is counted against clients that had not
    // consumed them yet.
    void push(std::span<const uint64_t> records) {
        {
            std::lock_guard lk(mu_);
            for (uint64_t r : records) {
                ring_[static_cast<size_t>(seq_ % ring_.size())] = r;
                ++seq_;
            }
            stats_.records_in += records.size();
        }
        cv_.notify_all();
    }

    // Mark the end of the stream: clients drain what is buffered, then the
    // connection closes.
    void finish() {
        {
            std::lock_guard lk(mu_);
            finished_ = true;
        }
        cv_.notify_all();
    }

  private:
    void accept_loop() {
        while (running_) {
            sockaddr_in peer{};
            socklen_t len = sizeof(peer);
            const int fd =
                ::accept(listen_sock_.fd(), reinterpret_cast<sockaddr*>(&peer), &len);
            if (fd < 0) break;  // listener closed
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            {
                std::lock_guard lk(mu_);
                stats_.accepted_clients++;
            }
            if (cfg_.mode == ServerConfig::Mode::kContinuous)
                workers_.emplace_back([this, fd] { continuous_client(net::Socket(fd)); });
            else
                workers_.emplace_back([this, fd] { request_client(net::Socket(fd)); });
        }
    }

    void continuous_client(net::Socket sock) {
        uint64_t pos = 0;
        {
            std::lock_guard lk(mu_);
            pos = oldest_available();
        }
        std::vector<uint64_t> batch;
        batch.reserve(cfg_.frame_records);
        try {
            for (;;) {
                {
                    std::unique_lock lk(mu_);
                    cv_.wait(lk, [&] { return closing_ || finished_ || seq_ > pos; });
                    if (closing_ && seq_ <= pos) return;
                    if (seq_ <= pos && finished_) return;
                    const uint64_t oldest = oldest_available();
                    if (pos < oldest) {
                        stats_.records_dropped += oldest - pos;  // client fell behind the ring
                        pos = oldest;
                    }
                    const uint64_t n =
                        std::min<uint64_t>(seq_ - pos, cfg_.frame_records);
                    batch.clear();
                    for (uint64_t i = 0; i < n; ++i)
                        batch.push_back(ring_[static_cast<size_t>((pos + i) % ring_.size())]);
                    pos += n;
                    stats_.records_sent += n;
                }
                send_frame(sock.fd(), batch);
            }
        } catch (const std::exception&) {
            // connection lost; service continues for other clients
        }
    }

    void request_client(net::Socket sock) {
        try {
            for (;;) {
                uint8_t opcode = 0;
                if (!net::read_all(sock.fd(), &opcode, 1)) return;
                uint64_t acked = 0;
                if (!net::read_all(sock.fd(), &acked, 8)) return;
                if (opcode != 1) throw std::runtime_error("bad request opcode");
                std::vector<uint64_t> batch;
                {
                    std::lock_guard lk(mu_);
                    uint64_t pos = acked;
                    const uint64_t oldest = oldest_available();
                    if (pos < oldest) {
                        stats_.records_dropped += oldest - pos;
                        pos = oldest;
                    }
                    const uint64_t n = seq_ - pos;
                    batch.reserve(static_cast<size_t>(n));
                    for (uint64_t i = 0; i < n; ++i)
                        batch.push_back(ring_[static_cast<size_t>((pos + i) % ring_.size())]);
                    stats_.records_sent += n;
                }
                send_frame(sock.fd(), batch);
            }
        } catch (const std::exception&) {
        }
    }

    static void send_frame(int fd, std::span<const uint64_t> records) {
        const uint32_t count = static_cast<uint32_t>(records.size());
        net::write_all(fd, &count, 4);
        if (count) net::write_all(fd, records.data(), records.size() * 8);
    }

    uint64_t oldest_available() const {
        return seq_ > ring_.size() ? seq_ - ring_.size() : 0;
    }

    ServerConfig cfg_;
    net::Socket listen_sock_;
    std::thread acceptor_;
    std::vector<std::thread> workers_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::vector<uint64_t> ring_;
    uint64_t seq_ = 0;
    bool closing_ = false;
    bool finished_ = false;
    std::atomic<bool> running_{false};
    ServerStats stats_;
};

// --- client helpers ---

inline net::Socket connect_to(const std::string& host, uint16_t port) {
    net::Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock.valid()) throw std::runtime_error("client: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw std::runtime_error("client: bad host address");
    if (::connect(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
        throw std::runtime_error("client: connect failed");
    int one = 1;
    ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return sock;
}

// Read pushed frames until `expected` records arrive or the stream ends.
inline std::vector<uint64_t> capture_continuous(const std::string& host, uint16_t port,
                                                size_t expected) {
    net::Socket sock = connect_to(host, port);
    std::vector<uint64_t> out;
    out.reserve(expected);
    while (out.size() < expected) {
        uint32_t count = 0;
        if (!net::read_all(sock.fd(), &count, 4)) break;
        const size_t base = out.size();
        out.resize(base + count);
        if (count && !net::read_all(sock.fd(), out.data() + base, count * size_t{8})) {
            out.resize(base);
            break;
        }
    }
    return out;
}

class RequestClient {
  public:
    RequestClient(const std::string& host, uint16_t port) : sock_(connect_to(host, port)) {}

    // Fetch everything after the last acknowledged position.
    std::vector<uint64_t> poll() {
        const uint8_t opcode = 1;
        net::write_all(sock_.fd(), &opcode, 1);
        net::write_all(sock_.fd(), &acked_, 8);
        uint32_t count = 0;
        if (!net::read_all(sock_.fd(), &count, 4))
            throw std::runtime_error("request client: connection closed");
        std::vector<uint64_t> out(count);
        if (count && !net::read_all(sock_.fd(), out.data(), count * size_t{8}))
            throw std::runtime_error("request client: truncated frame");
        acked_ += count;
        return out;
    }

    uint64_t acked() const { return acked_; }

  private:
    net::Socket sock_;
    uint64_t acked_ = 0;
};

}  // namespace tdcsim
