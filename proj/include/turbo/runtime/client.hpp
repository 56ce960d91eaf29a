#pragma once

#include <pthread.h>
#include <sched.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "turbo/allocator.hpp"
#include "turbo/profiles.hpp"
#include "turbo/runtime/link_monitor.hpp"
#include "turbo/runtime/shaper.hpp"
#include "turbo/runtime/token_bucket.hpp"
#include "turbo/runtime/transport.hpp"
#include "turbo/runtime/wire.hpp"
#include "turbo/utility.hpp"

namespace turbo::runtime {

struct FrameResult {
  std::string service_id;
  uint64_t frame_id = 0;
  bool used_remote = false;
  std::string remote_config;  // chosen config, when a remote attempt was made
  // unix microseconds; 0 where the stage did not happen
  uint64_t t_capture_us = 0;
  uint64_t t_serialized_us = 0;
  uint64_t t_queued_us = 0;
  uint64_t t_sent_us = 0;
  uint64_t t_server_done_us = 0;
  uint64_t t_received_us = 0;
  std::chrono::steady_clock::time_point capture_steady{};
  std::chrono::steady_clock::time_point deadline_steady{};
  std::chrono::steady_clock::time_point finalized_steady{};
  size_t result_bytes = 0;
};

struct ClientConfig {
  std::string server_host = "127.0.0.1";
  uint16_t server_port = 0;
  std::vector<std::string> services;  // lanes to run; empty = every service
  double realloc_period_ms = 500.0;
  double hysteresis = 0.0;
  double granularity_mbps = 1.0;
  double probe_interval_ms = 200.0;
  double train_interval_ms = 1000.0;
  size_t train_probes = 5;
  size_t train_probe_bytes = 16 * 1024;
  std::string log_path;                // optional per-frame timestamp CSV
  std::shared_ptr<LinkShaper> shaper;  // optional netem emulation (loopback only)
  std::function<void(const FrameResult&)> on_result;
  // optional real local executor; default is a timed mock
  std::function<std::vector<uint8_t>(const std::string& service_id,
                                     const std::vector<uint8_t>& frame)>
      local_executor;
};

// On-vehicle side of the offload loop. One lane per service: its own TCP
// stream, token-bucket pacer, in-flight tracking and deadline finalizer, so
// lanes never block each other. A monitor task probes RTT and link capacity
// and a periodic allocator republishes per-lane model choices and pacing
// rates.
class OffloadClient {
 public:
  using clock = std::chrono::steady_clock;

  OffloadClient(ProfileSet profiles, ClientConfig cfg)
      : profiles_(std::move(profiles)), cfg_(std::move(cfg)) {
    const auto& svc_ids = cfg_.services;
    for (const auto& svc : profiles_.services()) {
      if (!svc_ids.empty() &&
          std::find(svc_ids.begin(), svc_ids.end(), svc.service_id) == svc_ids.end())
        continue;
      auto lane = std::make_unique<Lane>();
      lane->spec = &profiles_.service(svc.service_id);
      lane->wire_id = profiles_.service_wire_id(svc.service_id);
      lane->local_exec_ms = exec_time_ms(profiles_.config(svc.local_config));
      lanes_.push_back(std::move(lane));
    }
    if (lanes_.empty()) throw transport_error("no lanes configured");
  }

  ~OffloadClient() { stop(); }

  void start() {
    if (cfg_.shaper && cfg_.server_host.rfind("127.", 0) != 0)
      throw capability_error("netem shaping requires a loopback transport");
    if (running_.exchange(true)) return;
    if (cfg_.shaper) cfg_.shaper->start();
    if (!cfg_.log_path.empty()) {
      log_.open(cfg_.log_path);
      log_ << "frame_id,service_id,t_capture,t_serialized,t_queued,t_sent,t_server_done,"
              "t_received,used_remote\n";
    }
    for (auto& lane : lanes_) {
      lane->fd = tcp_connect(cfg_.server_host, cfg_.server_port);
      lane->connected.store(true);
      lane->pacer = TokenBucket(0.0, 0.0, clock::now());
    }
    probe_fd_ = tcp_connect(cfg_.server_host, cfg_.server_port);
    for (auto& lane : lanes_) {
      Lane* l = lane.get();
      l->pacer_thread = std::thread([this, l] { pacer_loop(*l); });
      l->reader_thread = std::thread([this, l] { reader_loop(*l); });
      l->finalizer_thread = std::thread([this, l] { finalizer_loop(*l); });
      if (cfg_.local_executor) l->executor_thread = std::thread([this, l] { executor_loop(*l); });
    }
    probe_reader_thread_ = std::thread([this] { probe_reader_loop(); });
    monitor_thread_ = std::thread([this] { monitor_loop(); });
    allocator_thread_ = std::thread([this] { allocator_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    for (auto& lane : lanes_) {
      lane->send_cv.notify_all();
      lane->fin_cv.notify_all();
      lane->exec_cv.notify_all();
      if (lane->fd >= 0) ::shutdown(lane->fd, SHUT_RDWR);
    }
    if (probe_fd_ >= 0) ::shutdown(probe_fd_, SHUT_RDWR);
    wake_cv_.notify_all();
    for (auto& lane : lanes_) {
      if (lane->pacer_thread.joinable()) lane->pacer_thread.join();
      if (lane->reader_thread.joinable()) lane->reader_thread.join();
      if (lane->finalizer_thread.joinable()) lane->finalizer_thread.join();
      if (lane->executor_thread.joinable()) lane->executor_thread.join();
      if (lane->fd >= 0) ::close(lane->fd);
      lane->fd = -1;
    }
    if (probe_reader_thread_.joinable()) probe_reader_thread_.join();
    if (monitor_thread_.joinable()) monitor_thread_.join();
    if (allocator_thread_.joinable()) allocator_thread_.join();
    if (probe_fd_ >= 0) ::close(probe_fd_);
    probe_fd_ = -1;
    if (cfg_.shaper) cfg_.shaper->stop();
    if (log_.is_open()) log_.close();
  }

  // Ingest one frame for a service. The local path starts unconditionally;
  // if the current allocation gives this lane a remote config, a paced
  // envelope goes out with deadline = capture + SLO. Exactly one FrameResult
  // is produced per frame, no later than the deadline.
  uint64_t submit_frame(const std::string& service_id, const std::vector<uint8_t>& frame) {
    Lane& lane = lane_for(service_id);
    const auto capture = clock::now();
    const uint64_t capture_us = unix_micros();

    std::unique_lock<std::mutex> lock(lane.mu);
    const uint64_t frame_id = lane.next_frame_id++;
    Pending p;
    p.frame_id = frame_id;
    p.capture = capture;
    p.deadline = capture + to_duration(lane.spec->slo_ms);
    p.t_capture_us = capture_us;

    if (cfg_.local_executor) {
      p.local_ready = p.deadline;  // unknown until the hook completes
      lane.exec_queue.push_back({frame_id, frame});
      lane.exec_cv.notify_one();
    } else {
      p.local_ready = capture + to_duration(lane.local_exec_ms);  // timed mock
    }

    const LaneChoice choice = lane.choice;  // published by the allocator
    if (choice.active && lane.connected.load()) {
      OffloadEnvelope env;
      env.msg_type = MsgType::Request;
      env.service_id = lane.wire_id;
      env.frame_id = frame_id;
      env.config_id = choice.config_wire_id;
      env.deadline_unix_micros = capture_us + static_cast<uint64_t>(lane.spec->slo_ms * 1000.0);
      env.payload = make_payload(frame, choice.payload_bytes);
      std::vector<uint8_t> bytes = encode(env);
      p.t_serialized_us = unix_micros();
      p.attempted_remote = true;
      p.remote_config = choice.config_id;
      p.request_bits = 8.0 * static_cast<double>(bytes.size());
      p.t_queued_us = p.t_serialized_us;
      lane.send_queue.push_back({std::move(bytes), frame_id, p.deadline});
      lane.send_cv.notify_one();
    }

    lane.in_flight.emplace(frame_id, std::move(p));
    lane.fin_queue.push_back(frame_id);
    lane.fin_cv.notify_one();
    stats_submitted_.fetch_add(1);
    return frame_id;
  }

  // True once every submitted frame has produced a result.
  bool drain(std::chrono::milliseconds timeout) {
    const auto until = clock::now() + timeout;
    while (clock::now() < until) {
      if (stats_finalized_.load() == stats_submitted_.load()) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return stats_finalized_.load() == stats_submitted_.load();
  }

  std::vector<FrameResult> take_results() {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<FrameResult> out;
    out.swap(results_);
    return out;
  }

  LinkMonitor& monitor() { return monitor_; }

  std::shared_ptr<const Allocation> current_allocation() const {
    std::lock_guard<std::mutex> lock(alloc_mu_);
    return allocation_;
  }

  // Largest rate ever published to the lane's pacer; the pacing-conformance
  // bound is checked against this.
  double max_allocated_mbps(const std::string& service_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = max_alloc_mbps_.find(service_id);
    return it == max_alloc_mbps_.end() ? 0.0 : it->second;
  }

  struct Stats {
    uint64_t submitted = 0;
    uint64_t finalized = 0;
    uint64_t remote_used = 0;
    uint64_t stale_responses = 0;
    uint64_t dropped_before_send = 0;
    uint64_t alloc_runs = 0;
    double alloc_mean_ms = 0.0;
    double alloc_max_ms = 0.0;
  };

  Stats stats() const {
    std::lock_guard<std::mutex> lock(mu_);
    Stats s;
    s.submitted = stats_submitted_.load();
    s.finalized = stats_finalized_.load();
    s.remote_used = stats_remote_used_.load();
    s.stale_responses = stats_stale_.load();
    s.dropped_before_send = stats_dropped_send_.load();
    s.alloc_runs = alloc_runs_;
    s.alloc_mean_ms = alloc_runs_ ? alloc_total_ms_ / static_cast<double>(alloc_runs_) : 0.0;
    s.alloc_max_ms = alloc_max_ms_;
    return s;
  }

  const std::vector<std::string> lane_ids() const {
    std::vector<std::string> ids;
    for (const auto& l : lanes_) ids.push_back(l->spec->service_id);
    return ids;
  }

 private:
  struct LaneChoice {
    bool active = false;
    std::string config_id;
    uint16_t config_wire_id = 0;
    size_t payload_bytes = 0;
    double b_c_mbps = 0.0;
  };

  struct Pending {
    uint64_t frame_id = 0;
    clock::time_point capture{};
    clock::time_point deadline{};
    clock::time_point local_ready{};  // when the local result is available
    uint64_t t_capture_us = 0, t_serialized_us = 0, t_queued_us = 0, t_sent_us = 0,
             t_server_done_us = 0, t_received_us = 0;
    bool attempted_remote = false;
    bool remote_arrived = false;
    bool remote_impossible = false;  // envelope dropped or lane disconnected
    std::string remote_config;
    double request_bits = 0.0;
    size_t result_bytes = 0;
  };

  struct SendJob {
    std::vector<uint8_t> bytes;
    uint64_t frame_id = 0;
    clock::time_point deadline{};
  };

  struct ExecJob {
    uint64_t frame_id = 0;
    std::vector<uint8_t> frame;
  };

  struct Lane {
    const ServiceSpec* spec = nullptr;
    uint16_t wire_id = 0;
    double local_exec_ms = 0.0;
    int fd = -1;
    std::atomic<bool> connected{false};

    std::mutex mu;
    std::condition_variable send_cv, fin_cv, exec_cv;
    std::deque<SendJob> send_queue;
    std::deque<uint64_t> fin_queue;
    std::deque<ExecJob> exec_queue;
    std::map<uint64_t, Pending> in_flight;
    uint64_t next_frame_id = 0;
    LaneChoice choice;
    TokenBucket pacer;

    std::thread pacer_thread, reader_thread, finalizer_thread, executor_thread;
  };

  static std::chrono::nanoseconds to_duration(double ms) {
    return std::chrono::nanoseconds(static_cast<int64_t>(ms * 1e6));
  }

  // Deadline finalization cannot tolerate scheduler tail latency; take
  // real-time priority when the platform grants it, live without otherwise.
  static void elevate_to_realtime() {
    sched_param param{};
    param.sched_priority = 20;
    (void)pthread_setschedparam(pthread_self(), SCHED_FIFO, &param);
  }

  static uint64_t unix_micros() {
    return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::microseconds>(
                                     std::chrono::system_clock::now().time_since_epoch())
                                     .count());
  }

  Lane& lane_for(const std::string& service_id) {
    for (auto& l : lanes_)
      if (l->spec->service_id == service_id) return *l;
    throw transport_error("no lane for service " + service_id);
  }

  // Mock preprocessing/compression: the transmitted bytes are the config's
  // profiled input size, derived from the captured frame.
  static std::vector<uint8_t> make_payload(const std::vector<uint8_t>& frame, size_t bytes) {
    std::vector<uint8_t> out(bytes);
    if (frame.empty()) return out;
    for (size_t i = 0; i < bytes; i += frame.size()) {
      const size_t n = std::min(frame.size(), bytes - i);
      std::memcpy(out.data() + i, frame.data(), n);
    }
    return out;
  }

  void pacer_loop(Lane& lane) {
    std::unique_lock<std::mutex> lock(lane.mu);
    while (true) {
      lane.send_cv.wait(lock, [&] { return !running_.load() || !lane.send_queue.empty(); });
      if (!running_.load()) return;

      // pace the head-of-line job; rate changes are picked up while polling
      SendJob& job = lane.send_queue.front();
      const double bits = 8.0 * static_cast<double>(job.bytes.size());
      const auto now = clock::now();
      if (now > job.deadline || !lane.connected.load()) {
        const uint64_t dropped_id = job.frame_id;
        lane.send_queue.pop_front();
        stats_dropped_send_.fetch_add(1);
        auto it = lane.in_flight.find(dropped_id);
        if (it != lane.in_flight.end()) {
          it->second.remote_impossible = true;
          lane.fin_cv.notify_all();
        }
        continue;
      }
      const auto wait = lane.pacer.ready_in(bits, now);
      if (wait.count() > 0) {
        lock.unlock();
        {
          std::unique_lock<std::mutex> wl(wake_mu_);
          wake_cv_.wait_for(wl, std::min<std::chrono::nanoseconds>(
                                    wait, std::chrono::milliseconds(20)),
                            [&] { return !running_.load(); });
        }
        lock.lock();
        continue;
      }
      lane.pacer.consume(bits, now);
      SendJob out = std::move(lane.send_queue.front());
      lane.send_queue.pop_front();
      lock.unlock();

      if (cfg_.shaper) {
        const uint64_t sent_frame = out.frame_id;
        Lane* lp = &lane;
        cfg_.shaper->send(lane.fd, std::move(out.bytes), out.deadline, false,
                          [this, lp, sent_frame] { mark_remote_impossible(*lp, sent_frame); });
      } else {
        if (!send_all(lane.fd, out.bytes.data(), out.bytes.size()))
          lane.connected.store(false);
      }
      const uint64_t sent_us = unix_micros();
      lock.lock();
      auto it = lane.in_flight.find(out.frame_id);
      if (it != lane.in_flight.end()) it->second.t_sent_us = sent_us;
    }
  }

  void reader_loop(Lane& lane) {
    while (running_.load()) {
      ReadResult r = read_envelope(lane.fd);
      if (r.status != ReadResult::Status::Ok) {
        lane.connected.store(false);
        return;  // blackouts are emulated above the socket, so no reconnect loop
      }
      if (cfg_.shaper) {
        cfg_.shaper->deliver(std::move(r.env), [this, &lane](OffloadEnvelope env,
                                                             clock::time_point at) {
          dispatch_lane(lane, std::move(env), at);
        });
      } else {
        dispatch_lane(lane, std::move(r.env), clock::now());
      }
    }
  }

  void mark_remote_impossible(Lane& lane, uint64_t frame_id) {
    std::lock_guard<std::mutex> lock(lane.mu);
    auto it = lane.in_flight.find(frame_id);
    if (it == lane.in_flight.end()) return;
    it->second.remote_impossible = true;
    lane.fin_cv.notify_all();
  }

  void dispatch_lane(Lane& lane, OffloadEnvelope env, clock::time_point arrival) {
    std::lock_guard<std::mutex> lock(lane.mu);
    auto it = lane.in_flight.find(env.frame_id);
    if (it == lane.in_flight.end()) {
      stats_stale_.fetch_add(1);  // response after fallback already fired
      return;
    }
    // a response confirms delivery of its request's uplink bytes
    monitor_.record_delivered(it->second.request_bits, arrival);
    Pending& p = it->second;
    p.t_received_us = unix_micros();
    p.t_server_done_us = env.deadline_unix_micros;
    if (env.msg_type == MsgType::Response && arrival <= p.deadline) {
      p.remote_arrived = true;
      p.result_bytes = env.payload.size();
      lane.fin_cv.notify_all();
    } else {
      stats_stale_.fetch_add(1);
    }
  }

  void finalizer_loop(Lane& lane) {
    elevate_to_realtime();
    std::unique_lock<std::mutex> lock(lane.mu);
    while (true) {
      lane.fin_cv.wait(lock, [&] { return !running_.load() || !lane.fin_queue.empty(); });
      if (!running_.load()) return;
      const uint64_t frame_id = lane.fin_queue.front();
      Pending& p = lane.in_flight.at(frame_id);
      // A frame is done at the earliest of: remote result arrival, local
      // result availability once no remote can come, or the deadline. The
      // final 2 ms before the bound are polled so a late condvar wakeup
      // cannot blow the jitter bound.
      for (;;) {
        if (!running_.load()) return;
        if (p.remote_arrived) break;
        const bool no_remote = !p.attempted_remote || p.remote_impossible;
        const auto bound = no_remote ? std::min(p.deadline, p.local_ready) : p.deadline;
        const auto now = clock::now();
        if (now >= bound) break;
        if (now >= bound - std::chrono::milliseconds(2)) {
          lock.unlock();
          std::this_thread::yield();
          lock.lock();
          continue;
        }
        lane.fin_cv.wait_until(lock, bound - std::chrono::milliseconds(2));
      }

      FrameResult res;
      res.service_id = lane.spec->service_id;
      res.frame_id = frame_id;
      res.used_remote = p.remote_arrived;
      res.remote_config = p.remote_config;
      res.t_capture_us = p.t_capture_us;
      res.t_serialized_us = p.t_serialized_us;
      res.t_queued_us = p.t_queued_us;
      res.t_sent_us = p.t_sent_us;
      res.t_server_done_us = p.remote_arrived ? p.t_server_done_us : 0;
      res.t_received_us = p.remote_arrived ? p.t_received_us : 0;
      res.capture_steady = p.capture;
      res.deadline_steady = p.deadline;
      res.finalized_steady = clock::now();
      res.result_bytes = p.result_bytes;
      lane.in_flight.erase(frame_id);
      lane.fin_queue.pop_front();
      lock.unlock();

      if (res.used_remote) stats_remote_used_.fetch_add(1);
      stats_finalized_.fetch_add(1);
      emit(res);
      lock.lock();
    }
  }

  void executor_loop(Lane& lane) {
    std::unique_lock<std::mutex> lock(lane.mu);
    while (true) {
      lane.exec_cv.wait(lock, [&] { return !running_.load() || !lane.exec_queue.empty(); });
      if (!running_.load()) return;
      ExecJob job = std::move(lane.exec_queue.front());
      lane.exec_queue.pop_front();
      lock.unlock();
      cfg_.local_executor(lane.spec->service_id, job.frame);
      lock.lock();
      auto it = lane.in_flight.find(job.frame_id);
      if (it != lane.in_flight.end()) {
        it->second.local_ready = clock::now();
        lane.fin_cv.notify_all();
      }
    }
  }

  void emit(const FrameResult& res) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (log_.is_open()) {
        log_ << res.frame_id << ',' << res.service_id << ',' << res.t_capture_us << ','
             << res.t_serialized_us << ',' << res.t_queued_us << ',' << res.t_sent_us << ','
             << res.t_server_done_us << ',' << res.t_received_us << ','
             << (res.used_remote ? 1 : 0) << '\n';
      }
      results_.push_back(res);
    }
    if (cfg_.on_result) cfg_.on_result(res);
  }

  // ---- probing ----

  static constexpr uint64_t kTrainFlag = 1ull << 63;

  void send_probe(uint64_t id, size_t payload_bytes, double expiry_ms, bool priority) {
    OffloadEnvelope env;
    env.msg_type = MsgType::Probe;
    env.service_id = 0xFFFF;
    env.frame_id = id;
    env.payload.assign(payload_bytes, 0xAB);
    std::vector<uint8_t> bytes = encode(env);
    const auto expiry = clock::now() + to_duration(expiry_ms);
    if (cfg_.shaper) {
      cfg_.shaper->send(probe_fd_, std::move(bytes), expiry, priority);
    } else {
      send_all(probe_fd_, bytes.data(), bytes.size());
    }
  }

  void monitor_loop() {
    uint64_t rtt_seq = 0, train_seq = 0;
    auto next_rtt = clock::now();
    auto next_train = clock::now();
    while (running_.load()) {
      const auto now = clock::now();
      if (now >= next_rtt) {
        {
          std::lock_guard<std::mutex> lock(mu_);
          rtt_probe_sent_[rtt_seq] = now;  // enqueue time; a tiny probe hits the wire at once
        }
        send_probe(rtt_seq, 8, 2.0 * cfg_.probe_interval_ms, /*priority=*/true);
        ++rtt_seq;
        next_rtt = now + to_duration(cfg_.probe_interval_ms);
      }
      if (now >= next_train) {
        {
          std::lock_guard<std::mutex> lock(mu_);
          trains_[train_seq] = {};
          trains_[train_seq].started = now;
        }
        // trains ride at normal priority so ack spacing reflects serialization
        for (size_t i = 0; i < cfg_.train_probes; ++i)
          send_probe(kTrainFlag | (train_seq << 16) | i, cfg_.train_probe_bytes,
                     cfg_.train_interval_ms, /*priority=*/false);
        ++train_seq;
        next_train = now + to_duration(cfg_.train_interval_ms);
        // garbage-collect incomplete trains
        std::lock_guard<std::mutex> lock(mu_);
        for (auto it = trains_.begin(); it != trains_.end();) {
          if (std::chrono::duration<double>(now - it->second.started).count() > 5.0)
            it = trains_.erase(it);
          else
            ++it;
        }
      }
      std::unique_lock<std::mutex> wl(wake_mu_);
      wake_cv_.wait_until(wl, std::min(next_rtt, next_train),
                          [&] { return !running_.load(); });
    }
  }

  void probe_reader_loop() {
    while (running_.load()) {
      ReadResult r = read_envelope(probe_fd_);
      if (r.status != ReadResult::Status::Ok) return;
      if (cfg_.shaper) {
        cfg_.shaper->deliver(std::move(r.env),
                             [this](OffloadEnvelope env, clock::time_point at) {
                               handle_probe_ack(std::move(env), at);
                             });
      } else {
        handle_probe_ack(std::move(r.env), clock::now());
      }
    }
  }

  // Acks are header-only; the uplink bits they confirm are the request sizes.
  void handle_probe_ack(OffloadEnvelope env, clock::time_point arrival) {
    std::lock_guard<std::mutex> lock(mu_);
    if ((env.frame_id & kTrainFlag) == 0) {
      monitor_.record_delivered(8.0 * (kHeaderBytes + 8.0), arrival);
      auto it = rtt_probe_sent_.find(env.frame_id);
      if (it == rtt_probe_sent_.end()) return;
      monitor_.record_rtt_sample(
          std::chrono::duration<double, std::milli>(arrival - it->second).count());
      rtt_probe_sent_.erase(it);
      return;
    }
    const double probe_bits =
        8.0 * static_cast<double>(kHeaderBytes + cfg_.train_probe_bytes);
    monitor_.record_delivered(probe_bits, arrival);
    const uint64_t train_id = (env.frame_id & ~kTrainFlag) >> 16;
    auto it = trains_.find(train_id);
    if (it == trains_.end()) return;
    it->second.arrivals.push_back(arrival);
    if (it->second.arrivals.size() == cfg_.train_probes) {
      // ack spacing mirrors the probes' serialization on the bottleneck link
      std::vector<double> rates;
      for (size_t i = 1; i < it->second.arrivals.size(); ++i) {
        const double gap_s =
            std::chrono::duration<double>(it->second.arrivals[i] - it->second.arrivals[i - 1])
                .count();
        if (gap_s > 1e-6) rates.push_back(probe_bits / gap_s / 1e6);
      }
      if (!rates.empty()) {
        std::sort(rates.begin(), rates.end());
        monitor_.record_bandwidth_probe(rates[rates.size() / 2], arrival);
      }
      trains_.erase(it);
    }
  }

  // ---- periodic reallocation ----

  void allocator_loop() {
    auto next = clock::now();
    while (running_.load()) {
      next += to_duration(cfg_.realloc_period_ms);
      {
        std::unique_lock<std::mutex> wl(wake_mu_);
        wake_cv_.wait_until(wl, next, [&] { return !running_.load(); });
      }
      if (!running_.load()) return;
      reallocate_once();
    }
  }

  void reallocate_once() {
    const auto now = clock::now();
    const NetworkEstimate est = monitor_.estimate(now);
    AllocationProblem problem;
    problem.total_bandwidth_mbps = monitor_.has_rtt() ? est.bandwidth_mbps : 0.0;
    for (const auto& lane : lanes_)
      problem.entries.push_back(
          {build_service_curve(*lane->spec, profiles_, est.rtt_ms), lane->spec->transform});

    const auto t0 = clock::now();
    Allocation fresh;
    {
      std::lock_guard<std::mutex> lock(alloc_mu_);
      fresh = allocation_ ? realloc_decision(*allocation_, problem, cfg_.hysteresis,
                                             cfg_.granularity_mbps)
                          : solve_dp(problem, cfg_.granularity_mbps);
    }
    const double solve_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++alloc_runs_;
      alloc_total_ms_ += solve_ms;
      alloc_max_ms_ = std::max(alloc_max_ms_, solve_ms);
    }

    auto published = std::make_shared<const Allocation>(std::move(fresh));
    {
      std::lock_guard<std::mutex> lock(alloc_mu_);
      allocation_ = published;
    }
    for (auto& lane : lanes_) {
      LaneChoice choice;
      auto it = published->choices.find(lane->spec->service_id);
      if (it != published->choices.end() && it->second.has_value()) {
        const ModelConfig& cfg = profiles_.config(*it->second);
        choice.active = true;
        choice.config_id = cfg.config_id;
        choice.config_wire_id = profiles_.config_wire_id(cfg.config_id);
        choice.payload_bytes = static_cast<size_t>(cfg.input_size_mbit * 1e6 / 8.0);
        choice.b_c_mbps = published->bandwidth_mbps.at(lane->spec->service_id);
      }
      {
        std::lock_guard<std::mutex> lock(mu_);
        auto& peak = max_alloc_mbps_[lane->spec->service_id];
        peak = std::max(peak, choice.b_c_mbps);
      }
      std::lock_guard<std::mutex> lock(lane->mu);
      lane->choice = choice;
      // pacing: rate = allocated bandwidth, burst = one frame envelope
      lane->pacer.set_rate(choice.b_c_mbps * 1e6,
                           8.0 * static_cast<double>(choice.payload_bytes + kHeaderBytes), now);
    }
  }

  ProfileSet profiles_;
  ClientConfig cfg_;
  std::vector<std::unique_ptr<Lane>> lanes_;
  int probe_fd_ = -1;
  std::atomic<bool> running_{false};

  LinkMonitor monitor_;
  mutable std::mutex alloc_mu_;
  std::shared_ptr<const Allocation> allocation_;

  mutable std::mutex mu_;
  std::ofstream log_;
  std::vector<FrameResult> results_;
  std::map<uint64_t, clock::time_point> rtt_probe_sent_;
  struct Train {
    clock::time_point started{};
    std::vector<clock::time_point> arrivals;
  };
  std::map<uint64_t, Train> trains_;
  uint64_t alloc_runs_ = 0;
  double alloc_total_ms_ = 0.0, alloc_max_ms_ = 0.0;
  std::map<std::string, double> max_alloc_mbps_;

  std::mutex wake_mu_;
  std::condition_variable wake_cv_;

  std::thread probe_reader_thread_, monitor_thread_, allocator_thread_;

  std::atomic<uint64_t> stats_submitted_{0}, stats_finalized_{0}, stats_remote_used_{0},
      stats_stale_{0}, stats_dropped_send_{0};
};

}  // namespace turbo::runtime
