#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <mutex>
#include <random>
#include <thread>
#include <vector>

#include "turbo/profiles.hpp"
#include "turbo/runtime/transport.hpp"
#include "turbo/runtime/wire.hpp"

namespace turbo::runtime {

// Cloud worker: per connection, mock inference for requests (timed delay,
// output-sized payload) and immediate probe acks. Connections are served on
// independent threads, so one service's stream never blocks another's.
class OffloadServer {
 public:
  OffloadServer(ProfileSet profiles, const std::string& listen_host, uint16_t listen_port)
      : profiles_(std::move(profiles)) {
    listen_fd_ = tcp_listen(listen_host, listen_port);
    port_ = local_port(listen_fd_);
    prepare_result_payloads();
  }

  ~OffloadServer() { stop(); }

  uint16_t port() const { return port_; }

  void start() {
    if (running_.exchange(true)) return;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [fd, th] : conns_) {
      ::shutdown(fd, SHUT_RDWR);
      ::close(fd);
      if (th.joinable()) th.join();
    }
    conns_.clear();
  }

  // Blocks until stop(); convenience for the CLI `server` subcommand.
  void serve_forever() {
    start();
    while (running_.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }

  uint64_t requests_served() const { return requests_served_.load(); }

 private:
  void prepare_result_payloads() {
    // one cached pseudo-random result buffer per config, sized output_kbit
    std::mt19937_64 rng(0x7472626f);
    for (const auto& [id, cfg] : profiles_.configs()) {
      std::vector<uint8_t> buf(static_cast<size_t>(cfg.output_size_kbit * 1000.0 / 8.0));
      for (auto& b : buf) b = static_cast<uint8_t>(rng());
      results_.push_back(std::move(buf));
    }
  }

  void accept_loop() {
    while (running_.load()) {
      sockaddr_in peer{};
      socklen_t len = sizeof(peer);
      int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
      if (fd < 0) {
        if (!running_.load()) return;
        continue;
      }
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard<std::mutex> lock(mu_);
      conns_.emplace_back(fd, std::thread([this, fd] { connection_loop(fd); }));
    }
  }

  void connection_loop(int fd) {
    while (running_.load()) {
      ReadResult r = read_envelope(fd);
      if (r.status == ReadResult::Status::Closed) return;
      if (r.status == ReadResult::Status::Malformed) {
        std::fprintf(stderr, "offload server: malformed envelope, dropping connection\n");
        ::shutdown(fd, SHUT_RDWR);
        return;
      }
      handle(fd, std::move(r.env));
    }
  }

  void handle(int fd, OffloadEnvelope env) {
    if (env.msg_type == MsgType::Probe) {
      env.msg_type = MsgType::ProbeAck;
      env.payload.clear();  // header-only ack; ids identify the probe
      write_envelope(fd, env);
      return;
    }
    if (env.msg_type != MsgType::Request) return;

    const ModelConfig* cfg = profiles_.config_by_wire_id(env.config_id);
    OffloadEnvelope resp;
    resp.service_id = env.service_id;
    resp.frame_id = env.frame_id;
    resp.config_id = env.config_id;
    if (cfg == nullptr) {
      resp.msg_type = MsgType::Error;
      write_envelope(fd, resp);
      return;
    }
    // mock inference: hold the request for the config's compute time
    const auto delay = std::chrono::duration<double, std::milli>(exec_time_ms(*cfg));
    std::this_thread::sleep_for(std::chrono::duration_cast<std::chrono::nanoseconds>(delay));
    resp.msg_type = MsgType::Response;
    resp.deadline_unix_micros = static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count());
    resp.payload = results_[env.config_id];
    write_envelope(fd, resp);
    requests_served_.fetch_add(1);
  }

  ProfileSet profiles_;
  std::vector<std::vector<uint8_t>> results_;  // indexed by config wire id
  int listen_fd_ = -1;
  uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex mu_;
  std::vector<std::pair<int, std::thread>> conns_;
  std::atomic<uint64_t> requests_served_{0};
};

}  // namespace turbo::runtime
