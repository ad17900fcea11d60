#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "qcd/dist.hpp"
#include "qcd/engine.hpp"
#include "qcd/sim.hpp"

namespace qcd {

struct MetricEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t trials = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double confidence = 0.95;

  /// Sample mean with a normal-approximation confidence interval.
  static MetricEstimate from_samples(std::span<const double> samples, double confidence = 0.95);
  /// Builds the interval around a known mean and standard error.
  static MetricEstimate from_moments(double mean, double std_error, std::int64_t trials, double confidence = 0.95);
};

/// Two-sided standard-normal quantile for `confidence` (1.96 at 0.95).
double normal_critical_value(double confidence);

struct MonteCarloOptions {
  std::int64_t trials = 1000;
  std::uint64_t base_seed = 1;
  unsigned threads = 0;
  double confidence = 0.95;
  /// Per-episode step cap; defaults to 1e4 * exp(threshold) for ARLFA runs.
  std::optional<std::int64_t> safety_horizon;
};

struct ArlfaResult {
  MetricEstimate estimate;
  /// Episodes that reached the safety horizon; their truncated lengths are
  /// included in the estimate, which is then biased low.
  std::int64_t horizon_hits = 0;
  std::int64_t safety_horizon = 0;
};

/// Mean stopping time with every observation drawn pre-change.
ArlfaResult estimate_arlfa(const Policy& policy, std::span<const ExperimentModel> models,
                           const MonteCarloOptions& options);

/// Worst-case delay penalty added to the simulated post-change mean; budgets
/// enter at their nominal values.
///   non-DE: sum_{r=1}^{m-1} prod_{k=m-r}^{m-1} N_k
///   DE:     sum_{r=0}^{m-1} prod_{k=m-1-r}^{m-1} N_k
double wadd_penalty(const PolicyParams& params);
double wadd_penalty(const Policy& policy);

struct WaddResult {
  /// E_1[tau]: mean stopping time with the change at time 1.
  MetricEstimate simulated;
  double penalty = 0.0;
  /// simulated + penalty, sharing simulated's standard error.
  MetricEstimate total;
  std::int64_t horizon_hits = 0;
  std::int64_t safety_horizon = 0;
};

WaddResult estimate_wadd(const Policy& policy, std::span<const ExperimentModel> models,
                         const MonteCarloOptions& options);

/// Per-experiment pre-change observation ratios. components[i] is experiment i
/// for i = 1..m; components[0] is the idle fraction (always zero unless the
/// policy is data-efficient).
struct PorVector {
  std::vector<MetricEstimate> components;
  bool has_idle = false;

  int experiments() const noexcept { return static_cast<int>(components.size()) - 1; }
  double mean(int index) const { return components.at(static_cast<std::size_t>(index)).mean; }
  double idle() const { return components.at(0).mean; }
  double sum() const;
};

/// Long-run fraction of steps per experiment, averaged over `options.trials`
/// threshold-free pre-change runs of `horizon` steps each.
PorVector estimate_por_direct(const Policy& policy, std::span<const ExperimentModel> models, std::int64_t horizon,
                              const MonteCarloOptions& options);

/// Renewal-reward estimate: simulates `cycles` complete pre-change renewal
/// cycles (top level from D = 0 back to a reset at 0) and reports
/// sum(experiment-i steps) / sum(cycle lengths), with delta-method errors.
PorVector estimate_por_renewal(const PolicyParams& params, std::span<const ExperimentModel> models,
                               std::int64_t cycles, const MonteCarloOptions& options);

struct TradeoffPoint {
  double gamma = 0.0;
  double threshold = 0.0;
  ArlfaResult arlfa;
  /// ln of the ARLFA estimate.
  double log_arlfa = 0.0;
  WaddResult wadd;
};

struct TradeoffOptions {
  MonteCarloOptions wadd;
  MonteCarloOptions arlfa;
};

/// For each gamma sets the threshold to ln(gamma) and estimates ARLFA and WADD.
std::vector<TradeoffPoint> tradeoff_curve(const Policy& policy, std::span<const ExperimentModel> models,
                                          std::span<const double> gamma_grid, const TradeoffOptions& options);

/// Returns a copy of `policy` with its threshold replaced.
Policy with_threshold(const Policy& policy, double threshold);

/// `gamma,log_arlfa,wadd,wadd_se`
void write_tradeoff_csv(std::ostream& out, std::span<const TradeoffPoint> points);
/// `experiment,por,por_se`; the idle row uses experiment 0.
void write_por_csv(std::ostream& out, const PorVector& por);

}  // namespace qcd
