#pragma once

#include <algorithm>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "turbo/profiles.hpp"

namespace turbo {

// One step of a service utility curve: the config becomes feasible at
// b_c_mbps and contributes its accuracy from there on.
struct UtilityStep {
  double b_c_mbps = 0.0;
  double accuracy = 0.0;
  std::string config_id;

  bool operator==(const UtilityStep&) const = default;
};

// Non-decreasing step function from allocated bandwidth to accuracy.
// steps are strictly increasing in both b_c and accuracy (dominated steps
// removed) and every step sits above the on-vehicle floor.
struct ServiceUtilityCurve {
  std::string service_id;
  double floor_accuracy = 0.0;
  std::vector<UtilityStep> steps;

  bool operator==(const ServiceUtilityCurve&) const = default;
};

struct NetworkEstimate {
  double bandwidth_mbps = 0.0;
  double rtt_ms = 0.0;
};

namespace detail {

// Step location for a remote config whose uplink transfer is size_mbit.
// Returns absent when the config cannot meet the SLO at any bandwidth.
inline std::optional<double> step_bandwidth_mbps(const ModelConfig& config, double size_mbit,
                                                 double slo_ms, double rtt_ms) {
  const double slack_ms = slo_ms - exec_time_ms(config) - rtt_ms;
  if (slack_ms <= 0.0) return std::nullopt;
  return size_mbit / (slack_ms / 1000.0);
}

}  // namespace detail

// Unit-step utility of a cloud config: feasible (accuracy granted) from
// b_c = S_input / (t_SLO - t_exec - t_RTT) upward, inclusive at the boundary.
inline std::optional<UtilityStep> model_step(const ModelConfig& config, double slo_ms,
                                             double rtt_ms) {
  auto b_c = detail::step_bandwidth_mbps(config, config.input_size_mbit, slo_ms, rtt_ms);
  if (!b_c) return std::nullopt;
  return UtilityStep{*b_c, config.accuracy, config.config_id};
}

// On-vehicle utility is the model accuracy at every bandwidth, including 0.
inline double local_utility(const ModelConfig& config) { return config.accuracy; }

// Options for curve construction beyond the common (profiles, rtt) case:
// an accuracy override (dynamic policies) and optional downlink accounting,
// which charges output transfer against the same allocation.
struct CurveOptions {
  std::function<double(const std::string& config_id)> accuracy_of;  // null: profile accuracy
  bool include_downlink = false;
};

inline ServiceUtilityCurve build_service_curve(const ServiceSpec& service,
                                               const ProfileSet& profiles, double rtt_ms,
                                               const CurveOptions& opts) {
  auto accuracy = [&](const ModelConfig& c) {
    return opts.accuracy_of ? opts.accuracy_of(c.config_id) : c.accuracy;
  };

  ServiceUtilityCurve curve;
  curve.service_id = service.service_id;
  curve.floor_accuracy = accuracy(profiles.config(service.local_config));

  std::vector<UtilityStep> candidates;
  for (const auto& rc : service.remote_configs) {
    const ModelConfig& c = profiles.config(rc);
    double size_mbit = c.input_size_mbit;
    if (opts.include_downlink) size_mbit += c.output_size_kbit / 1000.0;
    auto b_c = detail::step_bandwidth_mbps(c, size_mbit, service.slo_ms, rtt_ms);
    if (!b_c) continue;
    const double a = accuracy(c);
    if (a <= curve.floor_accuracy) continue;
    candidates.push_back(UtilityStep{*b_c, a, c.config_id});
  }

  // Dominance prune: sort so that at equal b_c the better (then
  // lexicographically smaller) config comes first, then keep only strictly
  // improving accuracies.
  std::sort(candidates.begin(), candidates.end(), [](const UtilityStep& x, const UtilityStep& y) {
    if (x.b_c_mbps != y.b_c_mbps) return x.b_c_mbps < y.b_c_mbps;
    if (x.accuracy != y.accuracy) return x.accuracy > y.accuracy;
    return x.config_id < y.config_id;
  });
  for (auto& s : candidates) {
    if (curve.steps.empty() || s.accuracy > curve.steps.back().accuracy)
      curve.steps.push_back(std::move(s));
  }
  return curve;
}

inline ServiceUtilityCurve build_service_curve(const ServiceSpec& service,
                                               const ProfileSet& profiles, double rtt_ms) {
  return build_service_curve(service, profiles, rtt_ms, CurveOptions{});
}

// U_s(b): accuracy of the highest step with b_c <= b, else the floor.
inline double evaluate(const ServiceUtilityCurve& curve, double b_mbps) {
  double u = curve.floor_accuracy;
  for (const auto& s : curve.steps) {
    if (s.b_c_mbps <= b_mbps) u = s.accuracy;
    else break;
  }
  return u;
}

inline double apply_transform(const ServiceSpec& service, double u) {
  return service.transform(u);
}

}  // namespace turbo
