#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "turbo/profiles.hpp"
#include "turbo/utility.hpp"

namespace turbo {

struct trace_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct missing_key_error : trace_error {
  using trace_error::trace_error;
};

struct AccuracyRecord {
  std::string scenario_id;
  uint64_t frame_idx = 0;
  std::string service_id;
  std::string config_id;
  double accuracy = 0.0;
};

// Per-frame per-service per-config accuracy observations. Indexed on
// construction; immutable afterwards.
class AccuracyTrace {
 public:
  AccuracyTrace() = default;
  explicit AccuracyTrace(std::vector<AccuracyRecord> records) : records_(std::move(records)) {
    for (const auto& r : records_) {
      if (r.accuracy < 0.0 || r.accuracy > 1.0)
        throw trace_error("accuracy out of [0,1] at " + r.scenario_id + "/" +
                          std::to_string(r.frame_idx) + "/" + r.service_id + "/" + r.config_id);
      auto key = std::make_tuple(r.scenario_id, r.frame_idx, r.service_id, r.config_id);
      if (!by_key_.emplace(key, r.accuracy).second)
        throw trace_error("duplicate trace record " + r.scenario_id + "/" +
                          std::to_string(r.frame_idx) + "/" + r.service_id + "/" + r.config_id);
      auto& g = global_[{r.service_id, r.config_id}];
      g.first += r.accuracy;
      g.second += 1;
      auto& s = scenario_[{r.scenario_id, r.service_id, r.config_id}];
      s.first += r.accuracy;
      s.second += 1;
      auto& fr = frames_[r.scenario_id];
      fr = std::max(fr, r.frame_idx + 1);
    }
  }

  const std::vector<AccuracyRecord>& records() const { return records_; }

  std::vector<std::string> scenario_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, n] : frames_) ids.push_back(id);
    return ids;
  }

  uint64_t frame_count(const std::string& scenario) const {
    auto it = frames_.find(scenario);
    return it == frames_.end() ? 0 : it->second;
  }

  double at(const std::string& scenario, uint64_t frame, const std::string& service,
            const std::string& config) const {
    auto it = by_key_.find(std::make_tuple(scenario, frame, service, config));
    if (it == by_key_.end())
      throw missing_key_error("no trace record for " + scenario + "/" + std::to_string(frame) +
                              "/" + service + "/" + config);
    return it->second;
  }

  double global_mean(const std::string& service, const std::string& config) const {
    auto it = global_.find({service, config});
    if (it == global_.end() || it->second.second == 0)
      throw missing_key_error("no trace records for " + service + "/" + config);
    return it->second.first / static_cast<double>(it->second.second);
  }

  double scenario_mean(const std::string& scenario, const std::string& service,
                       const std::string& config) const {
    auto it = scenario_.find({scenario, service, config});
    if (it == scenario_.end() || it->second.second == 0)
      throw missing_key_error("no trace records for " + scenario + "/" + service + "/" + config);
    return it->second.first / static_cast<double>(it->second.second);
  }

 private:
  std::vector<AccuracyRecord> records_;
  std::map<std::tuple<std::string, uint64_t, std::string, std::string>, double> by_key_;
  std::map<std::pair<std::string, std::string>, std::pair<double, uint64_t>> global_;
  std::map<std::tuple<std::string, std::string, std::string>, std::pair<double, uint64_t>>
      scenario_;
  std::map<std::string, uint64_t> frames_;  // scenario -> frame count
};

enum class PolicyType { GlobalStatic, ScenarioStatic, Windowed, PerFrameOracle };

struct PolicyKind {
  PolicyType type = PolicyType::GlobalStatic;
  uint32_t window = 1;  // Windowed only; >= 1

  static PolicyKind global_static() { return {PolicyType::GlobalStatic, 1}; }
  static PolicyKind scenario_static() { return {PolicyType::ScenarioStatic, 1}; }
  static PolicyKind windowed(uint32_t n) {
    if (n < 1) throw trace_error("window must be >= 1");
    return {PolicyType::Windowed, n};
  }
  static PolicyKind per_frame_oracle() { return {PolicyType::PerFrameOracle, 1}; }
};

// Accuracy estimate the policy would use for (service, config) at the given
// frame. Windowed anchors at frame floor(f/n)*n of the same scenario and
// reuses that value for the following n-1 frames; anchors reset per scenario.
inline double accuracy_for(const PolicyKind& policy, const AccuracyTrace& trace,
                           const std::string& scenario, uint64_t frame,
                           const std::string& service, const std::string& config) {
  switch (policy.type) {
    case PolicyType::GlobalStatic:
      return trace.global_mean(service, config);
    case PolicyType::ScenarioStatic:
      return trace.scenario_mean(scenario, service, config);
    case PolicyType::Windowed: {
      const uint64_t anchor = (frame / policy.window) * policy.window;
      return trace.at(scenario, anchor, service, config);
    }
    case PolicyType::PerFrameOracle:
      return trace.at(scenario, frame, service, config);
  }
  throw trace_error("unknown policy");
}

// Rebuilds every service's curve with the policy's accuracy estimates in
// place of the static profile accuracies; step locations are unchanged
// (stage timings are not frame-dependent).
inline std::vector<ServiceUtilityCurve> curves_for_frame(const PolicyKind& policy,
                                                         const AccuracyTrace& trace,
                                                         const std::string& scenario,
                                                         uint64_t frame,
                                                         const ProfileSet& profiles,
                                                         double rtt_ms,
                                                         bool include_downlink = false) {
  std::vector<ServiceUtilityCurve> curves;
  curves.reserve(profiles.services().size());
  for (const auto& svc : profiles.services()) {
    CurveOptions opts;
    opts.include_downlink = include_downlink;
    opts.accuracy_of = [&](const std::string& cfg) {
      return accuracy_for(policy, trace, scenario, frame, svc.service_id, cfg);
    };
    curves.push_back(build_service_curve(svc, profiles, rtt_ms, opts));
  }
  return curves;
}

// ---- CSV interchange: scenario_id,frame_idx,service_id,config_id,accuracy ----

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace detail

inline AccuracyTrace load_accuracy_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw trace_error("cannot open accuracy trace: " + path);
  std::string line;
  if (!std::getline(in, line)) throw trace_error("empty accuracy trace: " + path);
  if (line != "scenario_id,frame_idx,service_id,config_id,accuracy")
    throw trace_error("bad accuracy trace header in " + path + ": " + line);
  std::vector<AccuracyRecord> records;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 5)
      throw trace_error(path + ":" + std::to_string(lineno) + ": expected 5 fields");
    try {
      records.push_back({f[0], std::stoull(f[1]), f[2], f[3], std::stod(f[4])});
    } catch (const std::exception&) {
      throw trace_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return AccuracyTrace(std::move(records));
}

inline void save_accuracy_trace(const AccuracyTrace& trace, std::ostream& out) {
  out << "scenario_id,frame_idx,service_id,config_id,accuracy\n";
  char buf[64];
  for (const auto& r : trace.records()) {
    std::snprintf(buf, sizeof(buf), "%.6f", r.accuracy);
    out << r.scenario_id << ',' << r.frame_idx << ',' << r.service_id << ',' << r.config_id << ','
        << buf << '\n';
  }
}

inline void save_accuracy_trace(const AccuracyTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw trace_error("cannot write accuracy trace: " + path);
  save_accuracy_trace(trace, out);
}

}  // namespace turbo
