#include "qcd/calib.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "qcd/error.hpp"

namespace qcd {

double CalibrationTarget::idle_beta() const {
  if (!data_efficient) return 0.0;
  return 1.0 - std::accumulate(betas.begin() + 1, betas.end(), 0.0);
}

CalibrationTarget CalibrationTarget::from_list(double gamma, std::vector<double> betas_1_to_m, bool data_efficient) {
  CalibrationTarget t;
  t.gamma = gamma;
  t.data_efficient = data_efficient;
  t.betas.reserve(betas_1_to_m.size() + 1);
  t.betas.push_back(0.0);
  t.betas.insert(t.betas.end(), betas_1_to_m.begin(), betas_1_to_m.end());
  return t;
}

void CalibrationTarget::validate() const {
  IssueCollector issues;
  issues.check(gamma >= 1.0, "gamma", "must be >= 1");
  if (betas.size() < 2) {
    issues.add("betas", "need at least one experiment");
    issues.throw_if_any();
  }
  const int m = experiments();
  double total = 0.0;
  for (int i = 1; i <= m; ++i) {
    const double b = beta(i);
    issues.check(b >= 0.0 && b <= 1.0, "betas." + std::to_string(i), "must lie in [0, 1]");
    total += b;
  }
  issues.check(beta(m) > 0.0, "betas." + std::to_string(m), "the best experiment needs a positive share");
  constexpr double slack = 1e-9;
  if (data_efficient) {
    issues.check(total < 1.0 - slack, "betas", fmt::format("must sum to < 1 with data efficiency (sum = {})", total));
  } else {
    issues.check(total <= 1.0 + slack, "betas", fmt::format("infeasible: targets sum to {} > 1", total));
    issues.check(total >= 1.0 - slack, "betas",
                 fmt::format("targets sum to {} < 1; ratios always sum to 1 without data efficiency", total));
  }
  // Lower levels are reached only through the levels above them.
  double below = data_efficient ? std::max(0.0, 1.0 - total) : 0.0;
  for (int i = 1; i <= m; ++i) {
    if (below > 0.0 && beta(i) == 0.0) {
      issues.add("betas." + std::to_string(i),
                 "must be positive when any lower experiment (or idling) has a positive target");
    }
    below += beta(i);
  }
  issues.throw_if_any();
}

ThresholdChoice set_threshold(double gamma) {
  if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ValidationError("gamma", "must be finite and >= 1");
  return {std::log(gamma), gamma == 1.0};
}

namespace {

class Search {
 public:
  Search(const CalibrationTarget& target, std::span<const ExperimentModel> models, const SearchConfig& config,
         std::uint64_t seed)
      : target_(target), models_(models), config_(config), seed_(seed) {}

  CalibrationResult run() {
    const int m = target_.experiments();
    CalibrationResult result;
    PolicyParams params = PolicyParams::make(m, set_threshold(target_.gamma).threshold, target_.data_efficient);
    if (params.threshold <= 0.0) params.threshold = 1e-12;
    for (int i = params.lowest_level() + 1; i <= m; ++i) params.set_scale(i, config_.initial_scale);
    if (target_.data_efficient) params.idle_drift = config_.idle_drift;

    PorVector por = evaluate(params);
    const int lowest = target_.data_efficient ? 1 : 2;
    for (int sweep = 1; sweep <= config_.max_sweeps && !fits(por); ++sweep) {
      result.sweeps = sweep;
      for (int level = m; level >= lowest; --level) {
        tune_level(params, level);
        if (evaluations_ >= config_.max_evaluations) break;
      }
      por = evaluate(params);
      if (evaluations_ >= config_.max_evaluations) break;
    }

    result.params = params;
    result.achieved = por;
    result.evaluations = evaluations_;
    result.converged = fits(por);
    result.residuals.resize(static_cast<std::size_t>(m) + 1);
    for (int i = 0; i <= m; ++i) result.residuals[static_cast<std::size_t>(i)] = por.mean(i) - beta(i);
    return result;
  }

 private:
  double beta(int i) const { return i == 0 ? target_.idle_beta() : target_.beta(i); }

  double share_below(int level) const {
    double s = 0.0;
    for (int i = 0; i < level; ++i) s += beta(i);
    return s;
  }

  /// Fraction of the time spent at levels [lowest, level] that is spent below `level`.
  static double ratio_below(const PorVector& por, int level) {
    double below = 0.0;
    for (int i = 0; i < level; ++i) below += por.mean(i);
    const double upto = below + por.mean(level);
    return upto > 0.0 ? below / upto : 0.0;
  }

  bool fits(const PorVector& por) const {
    for (int i = 0; i <= target_.experiments(); ++i) {
      if (std::abs(por.mean(i) - beta(i)) > config_.tolerance) return false;
    }
    return true;
  }

  PorVector evaluate(const PolicyParams& params) {
    ++evaluations_;
    MonteCarloOptions options;
    options.base_seed = seed_;
    options.threads = config_.threads;
    return estimate_por_renewal(params, models_, config_.cycles, options);
  }

  /// Adjusts the budget of level - 1 (and, if that saturates, the scale of
  /// `level`) so the share of time below `level` matches its target.
  void tune_level(PolicyParams& params, int level) {
    const double wanted_below = share_below(level);
    const double wanted_upto = wanted_below + beta(level);
    const int budget_level = level - 1;
    if (wanted_below <= 0.0) {
      params.set_budget(budget_level, 0.0);
      return;
    }
    const double goal = wanted_below / wanted_upto;
    // Tolerance on the ratio that keeps absolute errors well inside the POR tolerance.
    const double ratio_tol = config_.tolerance / (4.0 * std::max(wanted_upto, 1e-9));

    auto response = [&](double budget) {
      params.set_budget(budget_level, budget);
      return ratio_below(evaluate(params), level);
    };

    for (;;) {
      double hi = std::max(params.budget(budget_level), 1.0);
      double g_hi = response(hi);
      while (g_hi < goal && hi < config_.max_budget && evaluations_ < config_.max_evaluations) {
        hi = std::min(hi * 2.0, config_.max_budget);
        g_hi = response(hi);
      }
      if (g_hi < goal) {
        const double scale = params.scale(level) * config_.scale_growth;
        if (scale > config_.max_scale || evaluations_ >= config_.max_evaluations) return;
        params.set_scale(level, scale);
        continue;
      }
      double lo = 0.0;
      double best = hi;
      double best_err = std::abs(g_hi - goal);
      for (int k = 0; k < config_.bisection_steps && best_err > ratio_tol; ++k) {
        if (evaluations_ >= config_.max_evaluations) break;
        const double mid = 0.5 * (lo + hi);
        const double g = response(mid);
        if (std::abs(g - goal) < best_err) {
          best = mid;
          best_err = std::abs(g - goal);
        }
        (g < goal ? lo : hi) = mid;
      }
      params.set_budget(budget_level, best);
      return;
    }
  }

  const CalibrationTarget& target_;
  std::span<const ExperimentModel> models_;
  const SearchConfig& config_;
  std::uint64_t seed_;
  int evaluations_ = 0;
};

}  // namespace

CalibrationResult calibrate(const CalibrationTarget& target, std::span<const ExperimentModel> models,
                            const SearchConfig& config, std::uint64_t base_seed) {
  target.validate();
  if (static_cast<int>(models.size()) != target.experiments()) {
    throw ValidationError("betas", fmt::format("{} targets for {} experiments", target.experiments(), models.size()));
  }
  if (!(config.tolerance > 0.0)) throw ValidationError("tolerance", "must be > 0");
  if (!(config.scale_growth > 1.0)) throw ValidationError("scale_growth", "must be > 1");
  return Search(target, models, config, base_seed).run();
}

void write_calibration_csv(std::ostream& out, const CalibrationTarget& target, const CalibrationResult& result,
                           bool header) {
  const int m = target.experiments();
  const bool de = target.data_efficient;
  const auto& p = result.params;
  if (header) {
    std::vector<std::string> cols;
    for (int i = 1; i <= m; ++i) cols.push_back(fmt::format("beta_{}", i));
    if (de) cols.emplace_back("beta_0");
    for (int i = de ? 1 : 2; i <= m; ++i) cols.push_back(fmt::format("a_{}", i));
    for (int j = de ? 0 : 1; j <= m - 1; ++j) cols.push_back(fmt::format("N_{}", j));
    if (de) cols.emplace_back("mu");
    for (int i = 1; i <= m; ++i) cols.push_back(fmt::format("por_{}", i));
    if (de) cols.emplace_back("por_0");
    out << fmt::format("{}\n", fmt::join(cols, ","));
  }
  std::vector<std::string> row;
  for (int i = 1; i <= m; ++i) row.push_back(fmt::format("{}", target.beta(i)));
  if (de) row.push_back(fmt::format("{}", target.idle_beta()));
  for (int i = de ? 1 : 2; i <= m; ++i) row.push_back(fmt::format("{}", p.scale(i)));
  for (int j = de ? 0 : 1; j <= m - 1; ++j) row.push_back(fmt::format("{}", p.budget(j)));
  if (de) row.push_back(fmt::format("{}", p.idle_drift));
  for (int i = 1; i <= m; ++i) row.push_back(fmt::format("{}", result.achieved.mean(i)));
  if (de) row.push_back(fmt::format("{}", result.achieved.idle()));
  out << fmt::format("{}\n", fmt::join(row, ","));
}

}  // namespace qcd
