#pragma once

#include <algorithm>
#include <chrono>
#include <deque>
#include <mutex>

#include "turbo/utility.hpp"

namespace turbo::runtime {

// Live link estimates: EWMA-smoothed RTT and delivered bandwidth over a
// sliding 1 s window, supplemented by packet-train probe estimates. The
// bandwidth estimate is the larger of the delivered rate and a fresh train
// estimate; both decay when acknowledgements stop flowing (blackout).
class LinkMonitor {
 public:
  using clock = std::chrono::steady_clock;

  static constexpr double kRttAlpha = 0.125;
  static constexpr double kWindowSec = 1.0;
  static constexpr double kProbeFreshSec = 3.0;

  void record_rtt_sample(double rtt_ms) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!has_rtt_) {
      srtt_ms_ = rtt_ms;
      has_rtt_ = true;
    } else {
      srtt_ms_ = (1.0 - kRttAlpha) * srtt_ms_ + kRttAlpha * rtt_ms;
    }
  }

  // Bits confirmed delivered (a response or ack arrived for them).
  void record_delivered(double bits, clock::time_point now) {
    std::lock_guard<std::mutex> lock(mu_);
    delivered_.push_back({now, bits});
    trim(now);
    last_update_ = now;
  }

  void record_bandwidth_probe(double mbps, clock::time_point now) {
    std::lock_guard<std::mutex> lock(mu_);
    probe_mbps_ = mbps;
    probe_at_ = now;
    last_update_ = now;
  }

  bool has_rtt() const {
    std::lock_guard<std::mutex> lock(mu_);
    return has_rtt_;
  }

  double smoothed_rtt_ms() const {
    std::lock_guard<std::mutex> lock(mu_);
    return srtt_ms_;
  }

  double delivered_mbps(clock::time_point now) const {
    std::lock_guard<std::mutex> lock(mu_);
    return delivered_mbps_locked(now);
  }

  double bandwidth_estimate_mbps(clock::time_point now) const {
    std::lock_guard<std::mutex> lock(mu_);
    double est = delivered_mbps_locked(now);
    if (probe_at_ != clock::time_point{} &&
        std::chrono::duration<double>(now - probe_at_).count() <= kProbeFreshSec)
      est = std::max(est, probe_mbps_);
    return est;
  }

  NetworkEstimate estimate(clock::time_point now) const {
    NetworkEstimate e;
    e.bandwidth_mbps = bandwidth_estimate_mbps(now);
    e.rtt_ms = smoothed_rtt_ms();
    return e;
  }

  clock::time_point last_update() const {
    std::lock_guard<std::mutex> lock(mu_);
    return last_update_;
  }

 private:
  double delivered_mbps_locked(clock::time_point now) const {
    double bits = 0.0;
    for (const auto& [t, b] : delivered_) {
      if (std::chrono::duration<double>(now - t).count() <= kWindowSec) bits += b;
    }
    return bits / kWindowSec / 1e6;
  }

  void trim(clock::time_point now) {
    while (!delivered_.empty() &&
           std::chrono::duration<double>(now - delivered_.front().first).count() > kWindowSec)
      delivered_.pop_front();
  }

  mutable std::mutex mu_;
  double srtt_ms_ = 0.0;
  bool has_rtt_ = false;
  std::deque<std::pair<clock::time_point, double>> delivered_;
  double probe_mbps_ = 0.0;
  clock::time_point probe_at_{};
  clock::time_point last_update_{};
};

}  // namespace turbo::runtime
