// Key-value server for the remote storage backend.
//
//   epsolute-server --listen 127.0.0.1:7400 --data-dir /var/lib/epsolute

#include <csignal>
#include <chrono>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "epsolute/server.hpp"
#include "epsolute/storage.hpp"

using namespace epsolute;

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Epsolute key-value server"};
    std::string listen = "127.0.0.1:7400";
    std::string data_dir;
    bool sync = false;
    app.add_option("--listen", listen, "HOST:PORT to bind; port 0 picks a free one")->capture_default_str();
    app.add_option("--data-dir", data_dir, "keep data in a log file here instead of memory");
    app.add_flag("--sync", sync, "fsync every write (disk backend)");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto [host, port] = parse_endpoint(listen);
        std::unique_ptr<KeyValueStore> backing;
        if (data_dir.empty()) {
            backing = std::make_unique<MemoryStore>();
        } else {
            std::filesystem::create_directories(data_dir);
            backing = std::make_unique<DiskStore>(std::filesystem::path(data_dir) / "server.log", sync);
        }
        KvsServer server(std::move(backing), host, port);
        server.start();
        std::cout << "listening on " << server.host() << ':' << server.port() << std::endl;

        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        server.stop();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
