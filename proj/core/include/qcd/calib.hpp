#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "qcd/dist.hpp"
#include "qcd/engine.hpp"
#include "qcd/metrics.hpp"

namespace qcd {

/// Target observation ratios. betas[i] bounds POR_i for experiments i = 1..m
/// (betas[0] is ignored). Without data efficiency the betas must sum to 1;
/// with it they must sum to less than 1 and the gap is the idle target.
struct CalibrationTarget {
  double gamma = 1000.0;
  std::vector<double> betas;
  bool data_efficient = false;

  int experiments() const noexcept { return static_cast<int>(betas.size()) - 1; }
  double beta(int i) const { return betas.at(static_cast<std::size_t>(i)); }
  /// 1 - sum of betas when data-efficient, else 0.
  double idle_beta() const;
  void validate() const;

  /// Convenience: betas given for experiments 1..m in order.
  static CalibrationTarget from_list(double gamma, std::vector<double> betas_1_to_m, bool data_efficient = false);
};

struct SearchConfig {
  /// Absolute tolerance on every POR component.
  double tolerance = 0.02;
  /// Renewal cycles per candidate evaluation. All candidates share one seed.
  std::int64_t cycles = 20'000;
  double initial_scale = 1.0;
  double scale_growth = 10.0;
  double max_scale = 1000.0;
  double max_budget = 1000.0;
  /// Idle drift used for data-efficient policies.
  double idle_drift = 0.1;
  int max_sweeps = 10;
  int bisection_steps = 40;
  int max_evaluations = 4000;
  unsigned threads = 0;

  friend bool operator==(const SearchConfig&, const SearchConfig&) = default;
};

struct CalibrationResult {
  PolicyParams params;
  PorVector achieved;
  /// achieved - target for index 0 (idle) .. m.
  std::vector<double> residuals;
  int evaluations = 0;
  int sweeps = 0;
  bool converged = false;
};

struct ThresholdChoice {
  double threshold = 0.0;
  /// gamma == 1 gives A = 0, which stops at the first positive increment.
  bool degenerate = false;
};

/// A = ln(gamma). Throws ValidationError for gamma < 1.
ThresholdChoice set_threshold(double gamma);

/// Searches budgets (and, when budgets saturate, scales) so that the renewal
/// POR estimate meets every target within `config.tolerance`. Levels are tuned
/// top-down, each by bisecting its lower budget on the share of time spent
/// below it, and the sweep repeats until all components fit.
CalibrationResult calibrate(const CalibrationTarget& target, std::span<const ExperimentModel> models,
                            const SearchConfig& config, std::uint64_t base_seed);

/// Table-shaped row: beta_1..beta_m[,beta_0],a_*,N_*[,mu],por_1..por_m[,por_0].
void write_calibration_csv(std::ostream& out, const CalibrationTarget& target, const CalibrationResult& result,
                           bool header = true);

}  // namespace qcd
