#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "turbo/allocator.hpp"
#include "turbo/policy.hpp"
#include "turbo/profiles.hpp"
#include "turbo/utility.hpp"

namespace turbo {

struct NetSample {
  double t_ms = 0.0;
  double bandwidth_mbps = 0.0;
  double rtt_ms = 0.0;
};

// Time series of periodic (bandwidth, RTT) estimates; sampled step-hold.
class NetworkTrace {
 public:
  NetworkTrace() = default;
  explicit NetworkTrace(std::vector<NetSample> samples) : samples_(std::move(samples)) {
    if (samples_.empty()) throw trace_error("network trace must be non-empty");
    for (size_t i = 0; i < samples_.size(); ++i) {
      const auto& s = samples_[i];
      if (s.bandwidth_mbps < 0.0 || s.rtt_ms < 0.0 || s.t_ms < 0.0)
        throw trace_error("network trace values must be >= 0");
      if (i > 0 && samples_[i - 1].t_ms >= s.t_ms)
        throw trace_error("network trace timestamps must be strictly increasing");
    }
  }

  static NetworkTrace constant(double bandwidth_mbps, double rtt_ms) {
    return NetworkTrace({{0.0, bandwidth_mbps, rtt_ms}});
  }

  const std::vector<NetSample>& samples() const { return samples_; }

  // Value in effect at time t (last sample at or before t; the first sample
  // extends backwards).
  const NetSample& at(double t_ms) const {
    const NetSample* cur = &samples_.front();
    for (const auto& s : samples_) {
      if (s.t_ms <= t_ms) cur = &s;
      else break;
    }
    return *cur;
  }

 private:
  std::vector<NetSample> samples_;
};

enum class SimMode { B0, B1, B2, Turbo };

struct SimConfig {
  SimMode mode = SimMode::Turbo;
  PolicyKind policy = PolicyKind::global_static();
  double realloc_period_ms = 500.0;
  double frame_period_ms = 100.0;  // 10 Hz
  bool include_downlink = false;
  double granularity_mbps = 1.0;
  // B1/B2: the fixed cloud config each service attempts. Empty entries fall
  // back to the defaults below.
  std::map<std::string, std::string> fixed_configs;
};

struct ServiceOutcome {
  std::string service_id;
  std::string effective_config;
  bool met_slo = false;  // remote result delivered within the SLO
  double achieved_accuracy = 0.0;
  double allocated_bandwidth_mbps = 0.0;
};

struct FrameOutcome {
  std::string scenario_id;
  uint64_t frame_idx = 0;
  std::vector<ServiceOutcome> services;
};

// Grid of mean-accuracy improvement over B0, in percentage points.
struct SweepResult {
  std::vector<double> bandwidths_mbps;
  std::vector<double> rtts_ms;
  std::vector<std::vector<double>> improvement_pt;  // [bandwidth][rtt]
};

struct FactorReport {
  std::vector<double> bandwidths_mbps;
  std::vector<double> on_vehicle;        // B0 floor
  std::vector<double> single_model;      // one cloud model, fair share
  std::vector<double> multi_model;       // D1: model families, fair share
  std::vector<double> ilp_uncompressed;  // D2: + exact allocation
  std::vector<double> ilp_full;          // D3: + compression configs
};

// Per service, the highest-accuracy raw (cloud-preprocess) remote config;
// the single-cloud-model baseline of prior work.
inline std::map<std::string, std::string> default_b1_configs(const ProfileSet& profiles) {
  std::map<std::string, std::string> out;
  for (const auto& svc : profiles.services()) {
    const ModelConfig* best = nullptr;
    const ModelConfig* best_any = nullptr;
    for (const auto& rc : svc.remote_configs) {
      const ModelConfig& c = profiles.config(rc);
      if (!best_any || c.accuracy > best_any->accuracy) best_any = &c;
      if (c.pipeline.kind == PipelineKind::CloudPreprocess &&
          (!best || c.accuracy > best->accuracy))
        best = &c;
    }
    if (!best) best = best_any;
    if (best) out[svc.service_id] = best->config_id;
  }
  return out;
}

// B2 shifts the B1 choice to its on-vehicle-preprocessed, compressed variant.
inline std::map<std::string, std::string> default_b2_configs(const ProfileSet& profiles) {
  auto b1 = default_b1_configs(profiles);
  std::map<std::string, std::string> out;
  for (const auto& svc : profiles.services()) {
    auto it = b1.find(svc.service_id);
    if (it == b1.end()) continue;
    const std::string b1_model = profiles.config(it->second).model_name;
    const ModelConfig* best = nullptr;
    const ModelConfig* best_any = nullptr;
    for (const auto& rc : svc.remote_configs) {
      const ModelConfig& c = profiles.config(rc);
      if (c.pipeline.kind != PipelineKind::DnnInputCompression) continue;
      if (!best_any || c.accuracy > best_any->accuracy) best_any = &c;
      if (c.model_name == b1_model && (!best || c.accuracy > best->accuracy)) best = &c;
    }
    if (!best) best = best_any;
    out[svc.service_id] = best ? best->config_id : it->second;
  }
  return out;
}

namespace detail {

using ConfigFilter = std::function<bool(const ModelConfig&)>;

inline ServiceUtilityCurve policy_curve(const ServiceSpec& svc, const ProfileSet& profiles,
                                        const PolicyKind& policy, const AccuracyTrace& trace,
                                        const std::string& scenario, uint64_t frame,
                                        double rtt_ms, bool include_downlink,
                                        const ConfigFilter& filter) {
  ServiceSpec filtered = svc;
  if (filter) {
    filtered.remote_configs.clear();
    for (const auto& rc : svc.remote_configs)
      if (filter(profiles.config(rc))) filtered.remote_configs.push_back(rc);
  }
  CurveOptions opts;
  opts.include_downlink = include_downlink;
  opts.accuracy_of = [&](const std::string& cfg) {
    return accuracy_for(policy, trace, scenario, frame, svc.service_id, cfg);
  };
  return build_service_curve(filtered, profiles, rtt_ms, opts);
}

// A reallocation-period plan. FairShare plans succeed per service when the
// equal split covers that service's step; Budgeted plans carry an exact
// allocation and succeed all-or-nothing when the live bandwidth still covers
// the planned total.
struct Plan {
  enum class Kind { None, FairShare, Budgeted } kind = Kind::None;
  struct Choice {
    std::string config_id;
    std::optional<double> b_c_mbps;  // absent: infeasible at any bandwidth
  };
  std::map<std::string, Choice> choices;
  size_t fair_share_k = 0;
  double planned_total_mbps = 0.0;
};

using Planner = std::function<Plan(const std::string& scenario, uint64_t frame,
                                   const NetSample& net)>;

inline Plan plan_fixed_fair(const ProfileSet& profiles,
                            const std::map<std::string, std::string>& fixed,
                            const NetSample& net, bool include_downlink) {
  Plan plan;
  plan.kind = Plan::Kind::FairShare;
  plan.fair_share_k = fixed.size();
  for (const auto& [svc_id, cfg_id] : fixed) {
    const ServiceSpec& svc = profiles.service(svc_id);
    const ModelConfig& c = profiles.config(cfg_id);
    double size_mbit = c.input_size_mbit;
    if (include_downlink) size_mbit += c.output_size_kbit / 1000.0;
    Plan::Choice choice;
    choice.config_id = cfg_id;
    choice.b_c_mbps = step_bandwidth_mbps(c, size_mbit, svc.slo_ms, net.rtt_ms);
    plan.choices[svc_id] = choice;
  }
  return plan;
}

// Equal split across every cloud-capable service; each independently takes
// the best step its share covers.
inline Plan plan_multi_fair(const ProfileSet& profiles, const PolicyKind& policy,
                            const AccuracyTrace& trace, const std::string& scenario,
                            uint64_t frame, const NetSample& net, bool include_downlink,
                            const ConfigFilter& filter) {
  Plan plan;
  plan.kind = Plan::Kind::FairShare;
  size_t k = 0;
  for (const auto& svc : profiles.services())
    if (!svc.remote_configs.empty()) ++k;
  plan.fair_share_k = k;
  if (k == 0) return plan;
  const double share = net.bandwidth_mbps / static_cast<double>(k);
  for (const auto& svc : profiles.services()) {
    if (svc.remote_configs.empty()) continue;
    auto curve = policy_curve(svc, profiles, policy, trace, scenario, frame, net.rtt_ms,
                              include_downlink, filter);
    const UtilityStep* taken = nullptr;
    for (const auto& s : curve.steps) {
      if (s.b_c_mbps <= share) taken = &s;
      else break;
    }
    if (taken) plan.choices[svc.service_id] = {taken->config_id, taken->b_c_mbps};
  }
  return plan;
}

inline Plan plan_turbo(const ProfileSet& profiles, const PolicyKind& policy,
                       const AccuracyTrace& trace, const std::string& scenario, uint64_t frame,
                       const NetSample& net, bool include_downlink, double granularity,
                       const ConfigFilter& filter) {
  AllocationProblem problem;
  problem.total_bandwidth_mbps = net.bandwidth_mbps;
  for (const auto& svc : profiles.services()) {
    ProblemEntry e;
    e.curve = policy_curve(svc, profiles, policy, trace, scenario, frame, net.rtt_ms,
                           include_downlink, filter);
    e.transform = svc.transform;
    problem.entries.push_back(std::move(e));
  }
  Allocation alloc = solve_dp(problem, granularity);
  Plan plan;
  plan.kind = Plan::Kind::Budgeted;
  for (const auto& [svc_id, cfg] : alloc.choices) {
    if (!cfg) continue;
    const double bw = alloc.bandwidth_mbps.at(svc_id);
    plan.choices[svc_id] = {*cfg, bw};
    plan.planned_total_mbps += bw;
  }
  return plan;
}

inline std::vector<FrameOutcome> run_sim(const ProfileSet& profiles, const AccuracyTrace& acc,
                                         const NetworkTrace& net, const SimConfig& sim,
                                         const Planner& planner) {
  if (sim.frame_period_ms <= 0.0 || sim.realloc_period_ms <= 0.0)
    throw trace_error("simulation periods must be > 0");
  std::vector<FrameOutcome> outcomes;
  for (const auto& scenario : acc.scenario_ids()) {
    const uint64_t frames = acc.frame_count(scenario);
    Plan plan;
    double next_realloc_ms = 0.0;
    for (uint64_t f = 0; f < frames; ++f) {
      const double t_ms = static_cast<double>(f) * sim.frame_period_ms;
      if (t_ms >= next_realloc_ms) {
        plan = planner(scenario, f, net.at(t_ms));
        while (next_realloc_ms <= t_ms) next_realloc_ms += sim.realloc_period_ms;
      }
      const NetSample& now = net.at(t_ms);
      const bool budget_ok =
          plan.kind != Plan::Kind::Budgeted || plan.planned_total_mbps <= now.bandwidth_mbps;
      const double share = plan.kind == Plan::Kind::FairShare && plan.fair_share_k > 0
                               ? now.bandwidth_mbps / static_cast<double>(plan.fair_share_k)
                               : 0.0;

      FrameOutcome out;
      out.scenario_id = scenario;
      out.frame_idx = f;
      for (const auto& svc : profiles.services()) {
        ServiceOutcome so;
        so.service_id = svc.service_id;
        auto it = plan.choices.find(svc.service_id);
        bool remote_ok = false;
        if (it != plan.choices.end() && it->second.b_c_mbps.has_value()) {
          const double b_c = *it->second.b_c_mbps;
          remote_ok = plan.kind == Plan::Kind::FairShare ? share >= b_c : budget_ok;
          so.allocated_bandwidth_mbps = plan.kind == Plan::Kind::FairShare ? share : b_c;
        } else if (it != plan.choices.end()) {
          // attempting a config that cannot meet the SLO at any bandwidth
          so.allocated_bandwidth_mbps = plan.kind == Plan::Kind::FairShare ? share : 0.0;
        }
        so.met_slo = remote_ok;
        so.effective_config = remote_ok ? it->second.config_id : svc.local_config;
        so.achieved_accuracy = acc.at(scenario, f, svc.service_id, so.effective_config);
        out.services.push_back(std::move(so));
      }
      outcomes.push_back(std::move(out));
    }
  }
  return outcomes;
}

}  // namespace detail

// Trace-driven simulation of one operating mode. Each scenario runs
// independently from t = 0: frames at frame_period, plans recomputed at
// t = 0 and every realloc_period, network sampled step-hold.
inline std::vector<FrameOutcome> simulate(const ProfileSet& profiles, const AccuracyTrace& acc,
                                          const NetworkTrace& net, const SimConfig& sim) {
  detail::Planner planner;
  switch (sim.mode) {
    case SimMode::B0:
      planner = [](const std::string&, uint64_t, const NetSample&) { return detail::Plan{}; };
      break;
    case SimMode::B1:
    case SimMode::B2: {
      auto fixed = sim.fixed_configs;
      if (fixed.empty())
        fixed = sim.mode == SimMode::B1 ? default_b1_configs(profiles)
                                        : default_b2_configs(profiles);
      for (const auto& [svc_id, cfg_id] : fixed) {
        profiles.service(svc_id);
        if (profiles.config(cfg_id).placement != Placement::Cloud)
          throw trace_error("fixed config " + cfg_id + " is not a cloud config");
      }
      planner = [&profiles, fixed, &sim](const std::string&, uint64_t, const NetSample& net_now) {
        return detail::plan_fixed_fair(profiles, fixed, net_now, sim.include_downlink);
      };
      break;
    }
    case SimMode::Turbo:
      planner = [&](const std::string& scenario, uint64_t frame, const NetSample& net_now) {
        return detail::plan_turbo(profiles, sim.policy, acc, scenario, frame, net_now,
                                  sim.include_downlink, sim.granularity_mbps, nullptr);
      };
      break;
  }
  return detail::run_sim(profiles, acc, net, sim, planner);
}

inline double mean_accuracy(const std::vector<FrameOutcome>& outcomes) {
  double sum = 0.0;
  size_t n = 0;
  for (const auto& fo : outcomes) {
    for (const auto& so : fo.services) {
      sum += so.achieved_accuracy;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Constant-network simulation per grid cell; improvement over B0 in
// percentage points. Cells are independent; outer loop order is fixed so the
// result is deterministic.
inline SweepResult sweep(const ProfileSet& profiles, const AccuracyTrace& acc,
                         const std::vector<double>& bandwidths_mbps,
                         const std::vector<double>& rtts_ms, const SimConfig& sim) {
  if (bandwidths_mbps.empty() || rtts_ms.empty()) throw trace_error("sweep axes must be non-empty");
  SimConfig b0 = sim;
  b0.mode = SimMode::B0;
  const double base = mean_accuracy(simulate(profiles, acc, NetworkTrace::constant(0.0, 0.0), b0));

  SweepResult result;
  result.bandwidths_mbps = bandwidths_mbps;
  result.rtts_ms = rtts_ms;
  for (double b : bandwidths_mbps) {
    std::vector<double> row;
    for (double r : rtts_ms) {
      const double m = mean_accuracy(simulate(profiles, acc, NetworkTrace::constant(b, r), sim));
      row.push_back((m - base) * 100.0);
    }
    result.improvement_pt.push_back(std::move(row));
  }
  return result;
}

// Accuracy ladders isolating the three design factors: model families (D1),
// exact allocation (D2), compression configs (D3).
inline FactorReport factor_report(const ProfileSet& profiles, const AccuracyTrace& acc,
                                  const std::vector<double>& bandwidths_mbps,
                                  const SimConfig& sim, double rtt_ms = 20.0) {
  if (bandwidths_mbps.empty()) throw trace_error("factor bandwidth axis must be non-empty");
  auto uncompressed = [](const ModelConfig& c) {
    return c.pipeline.kind == PipelineKind::CloudPreprocess ||
           c.pipeline.kind == PipelineKind::OnVehiclePreprocess;
  };
  const auto b1 = default_b1_configs(profiles);

  FactorReport report;
  report.bandwidths_mbps = bandwidths_mbps;
  SimConfig b0 = sim;
  b0.mode = SimMode::B0;
  const double base = mean_accuracy(simulate(profiles, acc, NetworkTrace::constant(0.0, 0.0), b0));

  for (double b : bandwidths_mbps) {
    const NetworkTrace net = NetworkTrace::constant(b, rtt_ms);
    report.on_vehicle.push_back(base);

    auto run = [&](const detail::Planner& planner) {
      return mean_accuracy(detail::run_sim(profiles, acc, net, sim, planner));
    };
    report.single_model.push_back(run([&](const std::string&, uint64_t, const NetSample& n) {
      return detail::plan_fixed_fair(profiles, b1, n, sim.include_downlink);
    }));
    report.multi_model.push_back(
        run([&](const std::string& scenario, uint64_t frame, const NetSample& n) {
          return detail::plan_multi_fair(profiles, sim.policy, acc, scenario, frame, n,
                                         sim.include_downlink, uncompressed);
        }));
    report.ilp_uncompressed.push_back(
        run([&](const std::string& scenario, uint64_t frame, const NetSample& n) {
          return detail::plan_turbo(profiles, sim.policy, acc, scenario, frame, n,
                                    sim.include_downlink, sim.granularity_mbps, uncompressed);
        }));
    report.ilp_full.push_back(
        run([&](const std::string& scenario, uint64_t frame, const NetSample& n) {
          return detail::plan_turbo(profiles, sim.policy, acc, scenario, frame, n,
                                    sim.include_downlink, sim.granularity_mbps, nullptr);
        }));
  }
  return report;
}

// ---- CSV interchange ----

inline NetworkTrace load_network_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw trace_error("cannot open network trace: " + path);
  std::string line;
  if (!std::getline(in, line)) throw trace_error("empty network trace: " + path);
  if (line != "t_ms,bandwidth_mbps,rtt_ms")
    throw trace_error("bad network trace header in " + path + ": " + line);
  std::vector<NetSample> samples;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 3)
      throw trace_error(path + ":" + std::to_string(lineno) + ": expected 3 fields");
    try {
      samples.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2])});
    } catch (const std::exception&) {
      throw trace_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return NetworkTrace(std::move(samples));
}

inline void save_network_trace(const NetworkTrace& trace, std::ostream& out) {
  out << "t_ms,bandwidth_mbps,rtt_ms\n";
  char buf[128];
  for (const auto& s : trace.samples()) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.6f,%.6f", s.t_ms, s.bandwidth_mbps, s.rtt_ms);
    out << buf << '\n';
  }
}

inline void save_network_trace(const NetworkTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw trace_error("cannot write network trace: " + path);
  save_network_trace(trace, out);
}

inline void write_outcomes_csv(const std::vector<FrameOutcome>& outcomes, std::ostream& out) {
  out << "scenario_id,frame_idx,service_id,effective_config,met_slo,accuracy,alloc_mbps\n";
  char buf[128];
  for (const auto& fo : outcomes) {
    for (const auto& so : fo.services) {
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f", so.met_slo ? 1 : 0, so.achieved_accuracy,
                    so.allocated_bandwidth_mbps);
      out << fo.scenario_id << ',' << fo.frame_idx << ',' << so.service_id << ','
          << so.effective_config << ',' << buf << '\n';
    }
  }
}

inline void write_sweep_csv(const SweepResult& result, std::ostream& out) {
  out << "bandwidth_mbps,rtt_ms,mean_improvement_pt\n";
  char buf[128];
  for (size_t bi = 0; bi < result.bandwidths_mbps.size(); ++bi) {
    for (size_t ri = 0; ri < result.rtts_ms.size(); ++ri) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", result.bandwidths_mbps[bi],
                    result.rtts_ms[ri], result.improvement_pt[bi][ri]);
      out << buf << '\n';
    }
  }
}

inline void write_factor_csv(const FactorReport& report, std::ostream& out) {
  out << "bandwidth_mbps,on_vehicle,single_model_fair,multi_model_fair,ilp_no_compression,"
         "ilp_full\n";
  char buf[256];
  for (size_t i = 0; i < report.bandwidths_mbps.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", report.bandwidths_mbps[i],
                  report.on_vehicle[i], report.single_model[i], report.multi_model[i],
                  report.ilp_uncompressed[i], report.ilp_full[i]);
    out << buf << '\n';
  }
}

}  // namespace turbo
