#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "epsolute/storage.hpp"
#include "epsolute/wire.hpp"

namespace epsolute {

// Executes one decoded request against a store. Shared by the TCP server and
// tests that want to exercise request handling without sockets.
WireResponse handle_request(KeyValueStore& store, const WireRequest& request);

// TCP server speaking the wire protocol. One thread per connection; requests
// from all connections are serialized against the backing store.
class KvsServer {
  public:
    KvsServer(std::unique_ptr<KeyValueStore> backing, std::string host, std::uint16_t port);
    ~KvsServer();
    KvsServer(const KvsServer&) = delete;
    KvsServer& operator=(const KvsServer&) = delete;

    void start();
    void stop();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();

    // The bound port; differs from the requested one when that was 0.
    std::uint16_t port() const { return port_; }
    const std::string& host() const { return host_; }

  private:
    void accept_loop();
    void serve(int fd);

    std::unique_ptr<KeyValueStore> backing_;
    std::mutex store_mutex_;
    std::string host_;
    std::uint16_t port_;
    int listen_fd_ = -1;
    std::atomic<bool> running_{false};
    std::thread acceptor_;
    std::mutex conn_mutex_;
    std::vector<std::thread> connections_;
    std::vector<int> connection_fds_;
};

} // namespace epsolute
