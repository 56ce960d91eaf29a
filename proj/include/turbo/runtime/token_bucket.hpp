#pragma once

#include <algorithm>
#include <chrono>

namespace turbo::runtime {

// Token bucket pacer. Tokens are bits; the bucket holds at most burst_bits.
// acquire() may run the balance negative (a whole frame is released as one
// unit) and reports how long the caller must wait before sending, which
// bounds any 1 s window to rate * 1s + burst bits.
class TokenBucket {
 public:
  using clock = std::chrono::steady_clock;

  TokenBucket() = default;
  TokenBucket(double rate_bits_per_sec, double burst_bits, clock::time_point now)
      : rate_(rate_bits_per_sec), burst_(burst_bits), tokens_(burst_bits), last_(now) {}

  void set_rate(double rate_bits_per_sec, double burst_bits, clock::time_point now) {
    refill(now);
    rate_ = rate_bits_per_sec;
    burst_ = burst_bits;
    tokens_ = std::min(tokens_, burst_);
  }

  double rate_bits_per_sec() const { return rate_; }

  // Delay until size_bits may be sent; does not consume. An oversized unit
  // goes once the bucket is full. A zero rate never becomes ready (callers
  // poll for rate changes).
  std::chrono::nanoseconds ready_in(double size_bits, clock::time_point now) {
    refill(now);
    const double need = burst_ > 0.0 ? std::min(size_bits, burst_) : size_bits;
    if (tokens_ >= need) return std::chrono::nanoseconds(0);
    if (rate_ <= 0.0) return std::chrono::hours(24);
    const double wait_s = (need - tokens_) / rate_;
    return std::chrono::nanoseconds(static_cast<int64_t>(wait_s * 1e9));
  }

  // Consumes size_bits; may run the balance negative when releasing a whole
  // frame whose size exceeds the burst.
  void consume(double size_bits, clock::time_point now) {
    refill(now);
    tokens_ -= size_bits;
  }

  double tokens() const { return tokens_; }

 private:
  void refill(clock::time_point now) {
    if (now <= last_) return;
    const double dt = std::chrono::duration<double>(now - last_).count();
    tokens_ = std::min(burst_, tokens_ + rate_ * dt);
    last_ = now;
  }

  double rate_ = 0.0;
  double burst_ = 0.0;
  double tokens_ = 0.0;
  clock::time_point last_{};
};

}  // namespace turbo::runtime
