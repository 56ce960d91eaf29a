#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>
#include <vector>

#include "turbo/runtime/transport.hpp"
#include "turbo/runtime/wire.hpp"
#include "turbo/simulator.hpp"

namespace turbo::runtime {

struct capability_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Replays a NetworkTrace against live traffic on loopback: every message is
// serialized onto a virtual link (bandwidth cap shared across all lanes, per
// direction) and delivered after half the trace RTT. Messages whose expiry
// passes before their transmission would start are dropped and counted, the
// way a blackout kills queued uplink frames.
class LinkShaper {
 public:
  using clock = std::chrono::steady_clock;
  using DeliverFn = std::function<void(OffloadEnvelope, clock::time_point)>;

  explicit LinkShaper(NetworkTrace trace) : trace_(std::move(trace)) {}

  ~LinkShaper() { stop(); }

  void start() {
    std::lock_guard<std::mutex> lock(mu_);
    if (running_) return;
    running_ = true;
    t0_ = clock::now();
    up_worker_ = std::thread([this] { direction_loop(uplink_); });
    down_worker_ = std::thread([this] { direction_loop(downlink_); });
    delivery_worker_ = std::thread([this] { delivery_loop(); });
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!running_) return;
      running_ = false;
    }
    uplink_.cv.notify_all();
    downlink_.cv.notify_all();
    delivery_cv_.notify_all();
    if (up_worker_.joinable()) up_worker_.join();
    if (down_worker_.joinable()) down_worker_.join();
    if (delivery_worker_.joinable()) delivery_worker_.join();
  }

  // Uplink: write `bytes` to fd once the shared link has carried them.
  // Priority jobs (tiny control packets) jump the queue but still wait for
  // the in-flight transmission, like a packet squeezing between messages.
  // on_drop fires if the message expires before its transmission starts.
  void send(int fd, std::vector<uint8_t> bytes, std::optional<clock::time_point> expiry,
            bool priority = false, std::function<void()> on_drop = {}) {
    Job job;
    job.fd = fd;
    job.bytes = std::move(bytes);
    job.expiry = expiry;
    job.priority = priority;
    job.on_drop = std::move(on_drop);
    enqueue(uplink_, std::move(job));
  }

  // Downlink: hand an already-received envelope to `sink` after shaping.
  void deliver(OffloadEnvelope env, DeliverFn sink) {
    Job job;
    job.env = std::move(env);
    job.sink = std::move(sink);
    enqueue(downlink_, std::move(job));
  }

  uint64_t dropped_expired() const { return dropped_expired_.load(); }

 private:
  struct Job {
    int fd = -1;
    std::vector<uint8_t> bytes;                 // uplink
    OffloadEnvelope env;                        // downlink
    DeliverFn sink;                             // downlink
    std::optional<clock::time_point> expiry;    // uplink
    bool priority = false;
    std::function<void()> on_drop;              // uplink
  };

  struct Direction {
    std::deque<Job> queue;
    std::condition_variable cv;
    double busy_until_ms = 0.0;  // relative to t0_
  };

  struct Scheduled {
    clock::time_point due;
    uint64_t seq;
    Job job;
    bool operator>(const Scheduled& o) const {
      return due != o.due ? due > o.due : seq > o.seq;
    }
  };

  void enqueue(Direction& dir, Job job) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!running_) return;
      if (job.priority)
        dir.queue.push_front(std::move(job));
      else
        dir.queue.push_back(std::move(job));
    }
    dir.cv.notify_one();
  }

  double rel_ms(clock::time_point t) const {
    return std::chrono::duration<double, std::milli>(t - t0_).count();
  }

  // First instant at or after t where the link carries bits (positive rate).
  // Absent when the trace has gone dark for good.
  std::optional<double> first_carry_ms(double t) const {
    const auto& samples = trace_.samples();
    size_t i = 0;
    while (i + 1 < samples.size() && samples[i + 1].t_ms <= t) ++i;
    for (;; ++i) {
      if (samples[i].bandwidth_mbps > 0.0) return t;
      if (i + 1 == samples.size()) return std::nullopt;
      t = samples[i + 1].t_ms;
    }
  }

  // Time at which `bits` finish crossing the link when transmission starts at
  // start_ms, integrating the step-hold trace rate. Absent when the trace
  // ends at zero bandwidth with bits still pending.
  std::optional<double> transmit_end_ms(double start_ms, double bits) const {
    const auto& samples = trace_.samples();
    double t = start_ms;
    size_t i = 0;
    while (i + 1 < samples.size() && samples[i + 1].t_ms <= t) ++i;
    for (;; ++i) {
      const double rate_bits_per_ms = samples[i].bandwidth_mbps * 1000.0;
      const bool last = i + 1 == samples.size();
      if (rate_bits_per_ms <= 0.0) {
        if (last) return std::nullopt;
        t = samples[i + 1].t_ms;
        continue;
      }
      if (last) return t + bits / rate_bits_per_ms;
      const double capacity = (samples[i + 1].t_ms - t) * rate_bits_per_ms;
      if (bits <= capacity) return t + bits / rate_bits_per_ms;
      bits -= capacity;
      t = samples[i + 1].t_ms;
    }
  }

  void direction_loop(Direction& dir) {
    std::unique_lock<std::mutex> lock(mu_);
    while (true) {
      dir.cv.wait(lock, [&] { return !running_ || !dir.queue.empty(); });
      if (!running_) return;
      Job job = std::move(dir.queue.front());
      dir.queue.pop_front();

      const double now_ms = rel_ms(clock::now());
      const double queue_head_ms = std::max(now_ms, dir.busy_until_ms);
      // transmission starts when the link first carries bits; a message whose
      // start slips past its expiry (blackout backlog) never goes out
      auto start_ms = first_carry_ms(queue_head_ms);
      const bool expired =
          start_ms && job.expiry &&
          t0_ + std::chrono::duration_cast<clock::duration>(
                    std::chrono::duration<double, std::milli>(*start_ms)) > *job.expiry;
      if (!start_ms || expired) {
        dropped_expired_.fetch_add(1);
        if (job.on_drop) {
          lock.unlock();
          job.on_drop();
          lock.lock();
        }
        continue;
      }
      const double bits =
          8.0 * static_cast<double>(job.fd >= 0 ? job.bytes.size()
                                                : kHeaderBytes + job.env.payload.size());
      auto end_ms = transmit_end_ms(*start_ms, bits);
      if (!end_ms) {
        dropped_expired_.fetch_add(1);
        if (job.on_drop) {
          lock.unlock();
          job.on_drop();
          lock.lock();
        }
        continue;
      }
      dir.busy_until_ms = *end_ms;
      const double one_way_ms = trace_.at(*start_ms).rtt_ms / 2.0;
      const auto due = t0_ + std::chrono::duration_cast<clock::duration>(
                                 std::chrono::duration<double, std::milli>(*end_ms + one_way_ms));
      schedule_locked({due, seq_++, std::move(job)});
    }
  }

  void schedule_locked(Scheduled s) {
    delivery_.push(std::move(s));
    delivery_cv_.notify_one();
  }

  void delivery_loop() {
    std::unique_lock<std::mutex> lock(mu_);
    while (true) {
      if (!running_) return;
      if (delivery_.empty()) {
        delivery_cv_.wait(lock, [&] { return !running_ || !delivery_.empty(); });
        continue;
      }
      const auto due = delivery_.top().due;
      if (clock::now() < due) {
        delivery_cv_.wait_until(lock, due);
        continue;
      }
      Job job = std::move(const_cast<Scheduled&>(delivery_.top()).job);
      delivery_.pop();
      lock.unlock();
      if (job.fd >= 0) {
        send_all(job.fd, job.bytes.data(), job.bytes.size());
      } else if (job.sink) {
        job.sink(std::move(job.env), clock::now());
      }
      lock.lock();
    }
  }

  NetworkTrace trace_;
  clock::time_point t0_{};
  mutable std::mutex mu_;
  bool running_ = false;
  Direction uplink_, downlink_;
  std::priority_queue<Scheduled, std::vector<Scheduled>, std::greater<Scheduled>> delivery_;
  std::condition_variable delivery_cv_;
  std::thread up_worker_, down_worker_, delivery_worker_;
  uint64_t seq_ = 0;
  std::atomic<uint64_t> dropped_expired_{0};
};

// Builds the emulation handle for a reproducible test bench. Requires a
// loopback transport; OffloadClient rejects a shaped connection to any other
// host with a capability_error.
inline std::shared_ptr<LinkShaper> netem_shape(const NetworkTrace& trace) {
  return std::make_shared<LinkShaper>(trace);
}

}  // namespace turbo::runtime
