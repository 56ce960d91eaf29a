#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "turbo/policy.hpp"
#include "turbo/profiles.hpp"
#include "turbo/simulator.hpp"

namespace turbo {

// Synthetic per-frame accuracy model: a slowly varying environment-difficulty
// drift shared by every config of a service (scenario offset + one sinusoid
// cycle per scenario), scaled multiplicatively, plus tiny per-config jitter.
// Shared multiplicative drift preserves the profile's config ordering
// pointwise while still shifting cross-service allocation tradeoffs.
struct AccuracyGenParams {
  uint32_t scenarios = 4;
  uint32_t frames = 50;
  double spread = 0.1;   // relative drift amplitude (0 = static trace)
  double noise = 0.002;  // absolute per-config jitter bound
  uint64_t seed = 1;
  std::vector<std::string> services;  // empty = every profile service
};

inline AccuracyTrace gen_accuracy_trace(const ProfileSet& profiles,
                                        const AccuracyGenParams& params) {
  if (params.scenarios == 0 || params.frames == 0)
    throw trace_error("generator counts must be > 0");
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto clamp01 = [](double x) { return std::min(1.0, std::max(0.0, x)); };

  std::vector<const ServiceSpec*> services;
  for (const auto& svc : profiles.services()) {
    if (params.services.empty() ||
        std::find(params.services.begin(), params.services.end(), svc.service_id) !=
            params.services.end())
      services.push_back(&svc);
  }
  if (services.empty()) throw trace_error("no services selected for generation");

  std::vector<AccuracyRecord> records;
  char scen[16];
  for (uint32_t s = 0; s < params.scenarios; ++s) {
    std::snprintf(scen, sizeof(scen), "s%03u", s);
    for (const ServiceSpec* svc : services) {
      const double offset = uniform(-0.5, 0.5) * params.spread;
      const double phase = uniform(0.0, 2.0 * M_PI);
      const double amp = 0.5 * params.spread;

      std::vector<std::string> config_ids;
      config_ids.push_back(svc->local_config);
      for (const auto& rc : svc->remote_configs) config_ids.push_back(rc);

      for (uint32_t f = 0; f < params.frames; ++f) {
        const double drift =
            offset + amp * std::sin(2.0 * M_PI * static_cast<double>(f) /
                                        static_cast<double>(params.frames) +
                                    phase);
        for (const auto& cfg_id : config_ids) {
          const double base = profiles.config(cfg_id).accuracy;
          const double eps = params.noise > 0.0 ? uniform(-params.noise, params.noise) : 0.0;
          records.push_back(
              {scen, f, svc->service_id, cfg_id, clamp01(base * (1.0 + drift) + eps)});
        }
      }
    }
  }
  return AccuracyTrace(std::move(records));
}

// Bounded-random-walk network conditions.
struct NetworkGenParams {
  double duration_ms = 60000.0;
  double step_ms = 500.0;
  double bandwidth_mean_mbps = 500.0;
  double bandwidth_spread = 0.3;  // relative
  double rtt_mean_ms = 30.0;
  double rtt_spread = 0.2;  // relative
  uint64_t seed = 1;
};

inline NetworkTrace gen_network_trace(const NetworkGenParams& params) {
  if (params.duration_ms <= 0.0 || params.step_ms <= 0.0)
    throw trace_error("generator durations must be > 0");
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto walk_step = [&](double x) {
    x += (unit(rng) - 0.5) * 0.6;
    return std::min(1.0, std::max(-1.0, x));
  };
  std::vector<NetSample> samples;
  double bx = 0.0, rx = 0.0;
  for (double t = 0.0; t < params.duration_ms; t += params.step_ms) {
    bx = walk_step(bx);
    rx = walk_step(rx);
    const double bw = std::max(0.0, params.bandwidth_mean_mbps * (1.0 + params.bandwidth_spread * bx));
    const double rtt = std::max(0.0, params.rtt_mean_ms * (1.0 + params.rtt_spread * rx));
    samples.push_back({t, bw, rtt});
  }
  return NetworkTrace(std::move(samples));
}

}  // namespace turbo
