#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>

#include "epsolute/server.hpp"
#include "epsolute/storage.hpp"

namespace epsolute {

namespace {

void send_all(int fd, ByteView data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const auto n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(std::string("send: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }
}

// Returns false on clean EOF before the first byte.
bool recv_all(int fd, std::uint8_t* data, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
        const auto n = ::recv(fd, data + got, size - got, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(std::string("recv: ") + std::strerror(errno));
        }
        if (n == 0) {
            if (got == 0) return false;
            throw StorageError("connection closed mid-frame");
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

// Reads one frame body; nullopt on clean EOF.
std::optional<Bytes> read_frame(int fd) {
    std::uint8_t prefix[4];
    if (!recv_all(fd, prefix, 4)) return std::nullopt;
    const auto len = get_u32_be(prefix);
    if (len == 0 || len > kMaxFrame) {
        throw FormatError("frame length " + std::to_string(len) + " out of range");
    }
    Bytes body(len);
    if (!recv_all(fd, body.data(), len)) throw StorageError("connection closed mid-frame");
    return body;
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

} // namespace

// ---- client ---------------------------------------------------------------

RemoteStore::RemoteStore(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const auto service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
        throw StorageError("resolve " + host + ": " + ::gai_strerror(rc));
    }
    for (auto* ai = found; ai != nullptr; ai = ai->ai_next) {
        fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd_ < 0) continue;
        if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd_);
        fd_ = -1;
    }
    ::freeaddrinfo(found);
    if (fd_ < 0) {
        throw StorageError("cannot connect to " + host + ":" + service);
    }
    set_nodelay(fd_);
}

RemoteStore::~RemoteStore() {
    if (fd_ >= 0) ::close(fd_);
}

WireResponse RemoteStore::exchange(const WireRequest& request) {
    const auto frame = encode_request(request);
    send_all(fd_, frame);
    wire_up_ += frame.size();
    auto body = read_frame(fd_);
    if (!body) throw StorageError("server closed the connection");
    wire_down_ += body->size() + 4;
    auto response = decode_response(*body);
    if (response.op != request.op) {
        throw FormatError("response opcode does not match request");
    }
    if (response.status == Status::bad_request) throw StorageError("server rejected request");
    if (response.status == Status::server_error) throw StorageError("server error");
    return response;
}

void RemoteStore::do_put(std::uint64_t key, ByteView value) {
    exchange({Opcode::put, {key}, {Bytes(value.begin(), value.end())}});
}

std::optional<Bytes> RemoteStore::do_get(std::uint64_t key) {
    auto resp = exchange({Opcode::get, {key}, {}});
    if (resp.status == Status::not_found) return std::nullopt;
    return std::move(resp.values.at(0));
}

std::vector<Bytes> RemoteStore::do_batch_get(std::span<const std::uint64_t> keys) {
    auto resp = exchange({Opcode::batch_get, {keys.begin(), keys.end()}, {}});
    if (resp.status == Status::not_found) throw MissingKeysError(std::move(resp.missing));
    if (resp.values.size() != keys.size()) throw FormatError("batch_get response size mismatch");
    return std::move(resp.values);
}

void RemoteStore::do_batch_put(std::span<const KeyValue> pairs) {
    WireRequest req{Opcode::batch_put, {}, {}};
    req.keys.reserve(pairs.size());
    req.values.reserve(pairs.size());
    for (const auto& kv : pairs) {
        req.keys.push_back(kv.key);
        req.values.push_back(kv.value);
    }
    exchange(req);
}

void RemoteStore::do_clear() { exchange({Opcode::clear, {}, {}}); }

void RemoteStore::do_close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

// ---- server ---------------------------------------------------------------

WireResponse handle_request(KeyValueStore& store, const WireRequest& request) {
    WireResponse resp;
    resp.op = request.op;
    switch (request.op) {
    case Opcode::get: {
        auto value = store.get(request.keys.at(0));
        if (value) {
            resp.values.push_back(std::move(*value));
        } else {
            resp.status = Status::not_found;
        }
        break;
    }
    case Opcode::put:
        store.put(request.keys.at(0), request.values.at(0));
        break;
    case Opcode::batch_get:
        try {
            resp.values = store.batch_get(request.keys);
        } catch (const MissingKeysError& e) {
            resp.status = Status::not_found;
            resp.missing = e.missing();
        }
        break;
    case Opcode::batch_put: {
        std::vector<KeyValue> pairs;
        pairs.reserve(request.keys.size());
        for (std::size_t i = 0; i < request.keys.size(); ++i) {
            pairs.push_back({request.keys[i], request.values[i]});
        }
        store.batch_put(pairs);
        break;
    }
    case Opcode::clear:
        store.clear();
        break;
    }
    return resp;
}

KvsServer::KvsServer(std::unique_ptr<KeyValueStore> backing, std::string host, std::uint16_t port)
    : backing_(std::move(backing)), host_(std::move(host)), port_(port) {}

KvsServer::~KvsServer() { stop(); }

void KvsServer::start() {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* found = nullptr;
    const auto service = std::to_string(port_);
    if (const int rc = ::getaddrinfo(host_.c_str(), service.c_str(), &hints, &found); rc != 0) {
        throw StorageError("resolve " + host_ + ": " + ::gai_strerror(rc));
    }
    listen_fd_ = ::socket(found->ai_family, found->ai_socktype, found->ai_protocol);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const bool bound = listen_fd_ >= 0 && ::bind(listen_fd_, found->ai_addr, found->ai_addrlen) == 0 &&
                       ::listen(listen_fd_, 64) == 0;
    ::freeaddrinfo(found);
    if (!bound) {
        const std::string reason = std::strerror(errno);
        if (listen_fd_ >= 0) ::close(listen_fd_);
        listen_fd_ = -1;
        throw StorageError("cannot listen on " + host_ + ":" + service + ": " + reason);
    }
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void KvsServer::accept_loop() {
    while (running_) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) {
            if (errno == EINTR) continue;
            break; // listening socket shut down
        }
        set_nodelay(fd);
        std::lock_guard lock(conn_mutex_);
        if (!running_) {
            ::close(fd);
            break;
        }
        connection_fds_.push_back(fd);
        connections_.emplace_back([this, fd] { serve(fd); });
    }
}

void KvsServer::serve(int fd) {
    try {
        while (auto body = read_frame(fd)) {
            WireResponse resp;
            try {
                const auto request = decode_request(*body);
                std::lock_guard lock(store_mutex_);
                resp = handle_request(*backing_, request);
            } catch (const FormatError&) {
                resp.op = body->empty() || (*body)[0] < 1 || (*body)[0] > 5
                              ? Opcode::get
                              : static_cast<Opcode>((*body)[0]);
                resp.status = Status::bad_request;
            } catch (const std::exception& e) {
                resp.op = static_cast<Opcode>((*body)[0]);
                resp.status = Status::server_error;
                std::cerr << "kvs: " << e.what() << '\n';
            }
            send_all(fd, encode_response(resp));
        }
    } catch (const std::exception&) {
        // connection dropped or sent garbage framing
    }
    ::shutdown(fd, SHUT_RDWR);
}

void KvsServer::stop() {
    if (!running_.exchange(false)) return;
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
    }
    if (acceptor_.joinable()) acceptor_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(conn_mutex_);
        for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
        threads.swap(connections_);
    }
    for (auto& t : threads) t.join();
    for (int fd : connection_fds_) ::close(fd);
    connection_fds_.clear();
    listen_fd_ = -1;
}

void KvsServer::wait() {
    while (running_) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
}

} // namespace epsolute
