#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "turbo/utility.hpp"

namespace turbo {

struct allocator_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One service's curve plus its application-level transform.
struct ProblemEntry {
  ServiceUtilityCurve curve;
  Transform transform;
};

// Multiple-choice knapsack instance: pick at most one step per curve subject
// to the bandwidth budget, maximizing total transformed utility.
struct AllocationProblem {
  std::vector<ProblemEntry> entries;
  double total_bandwidth_mbps = 0.0;
};

struct Allocation {
  // absent choice = run local only (zero bandwidth)
  std::map<std::string, std::optional<std::string>> choices;
  std::map<std::string, double> bandwidth_mbps;
  double total_utility = 0.0;

  double total_bandwidth() const {
    double sum = 0.0;
    for (const auto& [id, bw] : bandwidth_mbps) sum += bw;
    return sum;
  }

  bool operator==(const Allocation&) const = default;
};

namespace detail {

// Entries are solved in service-id order so that both solvers accumulate
// utility in the same sequence (bitwise-identical sums on identical choices).
inline std::vector<const ProblemEntry*> sorted_entries(const AllocationProblem& p) {
  std::vector<const ProblemEntry*> es;
  es.reserve(p.entries.size());
  for (const auto& e : p.entries) es.push_back(&e);
  std::sort(es.begin(), es.end(), [](const ProblemEntry* a, const ProblemEntry* b) {
    return a->curve.service_id < b->curve.service_id;
  });
  for (size_t i = 1; i < es.size(); ++i)
    if (es[i]->curve.service_id == es[i - 1]->curve.service_id)
      throw allocator_error("duplicate service_id in problem: " + es[i]->curve.service_id);
  return es;
}

inline Allocation assemble(const std::vector<const ProblemEntry*>& es,
                           const std::vector<int>& choice) {
  Allocation a;
  for (size_t i = 0; i < es.size(); ++i) {
    const auto& e = *es[i];
    if (choice[i] < 0) {
      a.choices[e.curve.service_id] = std::nullopt;
      a.bandwidth_mbps[e.curve.service_id] = 0.0;
      a.total_utility += e.transform(e.curve.floor_accuracy);
    } else {
      const UtilityStep& s = e.curve.steps[static_cast<size_t>(choice[i])];
      a.choices[e.curve.service_id] = s.config_id;
      a.bandwidth_mbps[e.curve.service_id] = s.b_c_mbps;
      a.total_utility += e.transform(s.accuracy);
    }
  }
  return a;
}

}  // namespace detail

// Exhaustive oracle. Enumerates every per-service choice (local or one step)
// in lexicographic choice-vector order; ties broken by smaller total
// bandwidth, then by the earlier vector.
inline Allocation solve_bruteforce(const AllocationProblem& p) {
  auto es = detail::sorted_entries(p);
  double combos = 1.0;
  for (const auto* e : es) combos *= static_cast<double>(e->curve.steps.size() + 1);
  if (combos > 1e7)
    throw allocator_error("instance too large for brute force: " + std::to_string(combos) +
                          " combinations");

  const size_t n = es.size();
  std::vector<int> choice(n, -1), best(n, -1);
  bool have_best = false;
  double best_util = 0.0, best_bw = 0.0;

  // odometer over choice ordinals (-1 = local, then steps in b_c order)
  while (true) {
    double util = 0.0, bw = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const auto& e = *es[i];
      if (choice[i] < 0) {
        util += e.transform(e.curve.floor_accuracy);
      } else {
        const UtilityStep& s = e.curve.steps[static_cast<size_t>(choice[i])];
        util += e.transform(s.accuracy);
        bw += s.b_c_mbps;
      }
    }
    if (bw <= p.total_bandwidth_mbps) {
      if (!have_best || util > best_util || (util == best_util && bw < best_bw)) {
        have_best = true;
        best_util = util;
        best_bw = bw;
        best = choice;
      }
    }
    size_t i = n;
    while (i > 0) {
      --i;
      if (choice[i] + 1 < static_cast<int>(es[i]->curve.steps.size())) {
        ++choice[i];
        for (size_t j = i + 1; j < n; ++j) choice[j] = -1;
        i = SIZE_MAX;
        break;
      }
    }
    if (i != SIZE_MAX) break;  // odometer wrapped
  }
  return detail::assemble(es, best);
}

// Exact multiple-choice-knapsack dynamic program over bandwidth discretized
// to granularity_mbps buckets. Step costs are rounded UP to the grid, so the
// result is always feasible for the true budget; with 1 Mbps granularity and
// integral step locations the optimum matches the brute-force oracle exactly.
inline Allocation solve_dp(const AllocationProblem& p, double granularity_mbps = 1.0) {
  if (granularity_mbps <= 0.0) throw allocator_error("granularity_mbps must be > 0");
  auto es = detail::sorted_entries(p);
  const size_t n = es.size();

  // Capacity beyond the sum of every service's costliest step is never used.
  int64_t budget_buckets =
      static_cast<int64_t>(std::floor(p.total_bandwidth_mbps / granularity_mbps));
  int64_t useful = 0;
  std::vector<std::vector<int64_t>> weights(n);
  for (size_t i = 0; i < n; ++i) {
    int64_t wmax = 0;
    for (const auto& s : es[i]->curve.steps) {
      const int64_t w = static_cast<int64_t>(std::ceil(s.b_c_mbps / granularity_mbps));
      weights[i].push_back(w);
      wmax = std::max(wmax, w);
    }
    useful += wmax;
  }
  const int64_t W = std::max<int64_t>(0, std::min(budget_buckets, useful));

  struct Cell {
    double util = 0.0;
    double bw = 0.0;  // true bandwidth, for tie-breaking
  };
  const size_t cols = static_cast<size_t>(W) + 1;
  std::vector<Cell> prev(cols), cur(cols);
  std::vector<std::vector<int16_t>> pick(n, std::vector<int16_t>(cols, -1));

  for (size_t i = 0; i < n; ++i) {
    const auto& e = *es[i];
    const double floor_util = e.transform(e.curve.floor_accuracy);
    for (size_t w = 0; w < cols; ++w) {
      cur[w] = {prev[w].util + floor_util, prev[w].bw};
      pick[i][w] = -1;
      for (size_t k = 0; k < e.curve.steps.size(); ++k) {
        const int64_t wk = weights[i][k];
        if (wk > static_cast<int64_t>(w)) continue;
        const Cell& base = prev[w - static_cast<size_t>(wk)];
        const double util = base.util + e.transform(e.curve.steps[k].accuracy);
        const double bw = base.bw + e.curve.steps[k].b_c_mbps;
        if (util > cur[w].util || (util == cur[w].util && bw < cur[w].bw)) {
          cur[w] = {util, bw};
          pick[i][w] = static_cast<int16_t>(k);
        }
      }
    }
    std::swap(prev, cur);
  }

  // Best utility is at full capacity (values are non-decreasing in w); walk
  // back to recover choices.
  std::vector<int> choice(n, -1);
  size_t w = cols - 1;
  for (size_t i = n; i > 0;) {
    --i;
    const int16_t k = pick[i][w];
    choice[i] = k;
    if (k >= 0) w -= static_cast<size_t>(weights[i][static_cast<size_t>(k)]);
  }
  return detail::assemble(es, choice);
}

// Re-evaluates a previous allocation's choices under the current problem:
// same configs, refreshed step locations and utilities. Absent when any
// chosen config no longer has a feasible step or the budget is exceeded.
inline std::optional<Allocation> reevaluate(const Allocation& prev, const AllocationProblem& p) {
  auto es = detail::sorted_entries(p);
  std::vector<int> choice(es.size(), -1);
  for (size_t i = 0; i < es.size(); ++i) {
    const auto& e = *es[i];
    auto it = prev.choices.find(e.curve.service_id);
    if (it == prev.choices.end() || !it->second.has_value()) continue;
    const std::string& cfg = *it->second;
    bool found = false;
    for (size_t k = 0; k < e.curve.steps.size(); ++k) {
      if (e.curve.steps[k].config_id == cfg) {
        choice[i] = static_cast<int>(k);
        found = true;
        break;
      }
    }
    if (!found) return std::nullopt;
  }
  Allocation a = detail::assemble(es, choice);
  if (a.total_bandwidth() > p.total_bandwidth_mbps) return std::nullopt;
  return a;
}

// Keeps the previous allocation when the fresh optimum improves on it by
// less than hysteresis * (re-evaluated utility); an infeasible previous
// allocation is always replaced.
inline Allocation realloc_decision(const Allocation& prev, const AllocationProblem& p,
                                   double hysteresis, double granularity_mbps = 1.0) {
  Allocation fresh = solve_dp(p, granularity_mbps);
  if (hysteresis <= 0.0) return fresh;
  auto kept = reevaluate(prev, p);
  if (!kept) return fresh;
  const double improvement = fresh.total_utility - kept->total_utility;
  if (improvement < hysteresis * kept->total_utility) return *kept;
  return fresh;
}

}  // namespace turbo
