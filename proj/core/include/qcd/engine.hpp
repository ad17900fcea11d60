#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcd/dist.hpp"
#include "qcd/random.hpp"

namespace qcd {

/// Parameters of one detection policy in the CUSUM / mE-CUSUM / DEmE-CUSUM
/// family. Levels are numbered like experiments: level m samples the best
/// experiment, level 1 the worst, and level 0 is the idle level that only
/// exists when `data_efficient` is set.
///
/// `scales[i]` multiplies the undershoot when the statistic leaves level i
/// downward (used for i = 2..m, plus i = 1 when data-efficient).
/// `budgets[j]` caps the observations per entry into level j (used for
/// j = 1..m-1, plus j = 0 when data-efficient). Budgets may be fractional;
/// see resolve_truncation.
struct PolicyParams {
  int experiments = 1;
  double threshold = 1.0;
  std::vector<double> scales{1.0, 1.0};
  std::vector<double> budgets{0.0};
  double idle_drift = 0.0;
  bool data_efficient = false;
  /// Caps top-level observations; the engine stops when it is used up. Only
  /// needed when the policy runs as a truncated sub-policy.
  std::optional<double> top_truncation;

  /// Defaults: unit scales, zero budgets, no idle drift.
  static PolicyParams make(int experiments, double threshold, bool data_efficient = false);
  static PolicyParams cusum(double threshold) { return make(1, threshold); }
  static PolicyParams two_experiment(double threshold, double scale_y, double budget_x);
  static PolicyParams three_experiment(double threshold, double scale_y, double scale_z, double budget_x,
                                       double budget_y);
  static PolicyParams de_two_experiment(double threshold, double scale_x, double scale_y, double budget_idle,
                                        double budget_x, double idle_drift);

  double scale(int level) const { return scales.at(static_cast<std::size_t>(level)); }
  double budget(int level) const { return budgets.at(static_cast<std::size_t>(level)); }
  PolicyParams& set_scale(int level, double value);
  PolicyParams& set_budget(int level, double value);

  /// Lowest level the engine can reach: 0 when data-efficient, else 1.
  int lowest_level() const noexcept { return data_efficient ? 0 : 1; }
  /// Whether a descent from `level` is possible at all.
  bool has_level_below(int level) const noexcept { return level > lowest_level(); }

  /// Throws ValidationError listing every offending field.
  void validate() const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

/// Draws an integer budget from a possibly fractional one: floor(N) with
/// probability ceil(N) - N, ceil(N) otherwise. Integer N consumes no
/// randomness. Throws ValidationError for negative or non-finite N.
std::int64_t resolve_truncation(double budget, Stream& control);

struct LevelState {
  int level = 0;
  double floor = 0.0;
  /// Observations left at this level; nullopt means unbounded.
  std::optional<std::int64_t> remaining;

  friend bool operator==(const LevelState&, const LevelState&) = default;
};

enum class StopReason { none, threshold, truncation };

struct EngineState {
  double statistic = 0.0;
  /// Level m first; the last entry is the active level.
  std::vector<LevelState> stack;
  bool stopped = false;
  StopReason stop_reason = StopReason::none;
  std::int64_t time = 0;

  const LevelState& active() const { return stack.back(); }
  int active_level() const { return stack.back().level; }

  friend bool operator==(const EngineState&, const EngineState&) = default;
};

enum class ActionKind { sample, idle, stop };

struct Action {
  ActionKind kind = ActionKind::stop;
  /// Experiment to sample when kind == sample, 0 otherwise.
  int experiment = 0;

  static Action sample(int experiment) { return {ActionKind::sample, experiment}; }
  static Action idle() { return {ActionKind::idle, 0}; }
  static Action stop() { return {ActionKind::stop, 0}; }

  friend bool operator==(const Action&, const Action&) = default;
};

std::string to_string(const Action& action);

/// What one transition did.
struct StepReport {
  /// Statistic after the increment, before any reflection or reset.
  double raw_statistic = 0.0;
  /// Statistic after the transition.
  double statistic = 0.0;
  /// Level whose action was consumed by this step.
  int level_used = 0;
  /// Active level after the transition.
  int level_after = 0;
  Action next;
  bool descended = false;
  bool ascended = false;
  /// Statistic clamped to the active floor (classic CUSUM reflection, or a
  /// descent whose resolved budget was zero).
  bool reflected = false;
  /// Statistic reset to zero at the top level: a renewal cycle ended.
  bool renewed = false;
  bool stopped = false;
  StopReason stop_reason = StopReason::none;
};

std::string_view event_name(const StepReport& report);

/// Recursive level-stack state machine. One instance can drive any number of
/// episodes concurrently; all mutable state lives in EngineState.
class Engine {
 public:
  /// `models` are experiments 1..m in order.
  Engine(PolicyParams params, std::vector<ExperimentModel> models);

  const PolicyParams& params() const noexcept { return params_; }
  std::span<const ExperimentModel> models() const noexcept { return models_; }

  /// D = 0 at level m. The top budget is resolved from `top_truncation`.
  EngineState init(Stream& control) const;

  Action next_action(const EngineState& state) const;

  /// Feeds one observation (sample actions) or nothing (idle actions).
  StepReport step(EngineState& state, std::optional<double> observation, Stream& control) const;

  /// Same transition driven by the log-likelihood ratio of the observation.
  StepReport step_llr(EngineState& state, std::optional<double> llr, Stream& control) const;

 private:
  bool descend(EngineState& state, StepReport& report, double undershoot, Stream& control) const;
  void ascend(EngineState& state, StepReport& report) const;

  PolicyParams params_;
  std::vector<ExperimentModel> models_;
};

/// Random Switch Scheme baseline: one reflected CUSUM statistic fed by
/// whichever of two experiments a biased coin picks after each step.
struct RssParams {
  double threshold = 1.0;
  /// Probability of choosing the higher-quality experiment (id 2).
  double p_hi = 0.5;

  void validate() const;
  friend bool operator==(const RssParams&, const RssParams&) = default;
};

struct RssState {
  double statistic = 0.0;
  int next_experiment = 2;
  bool stopped = false;
  std::int64_t time = 0;
};

class RssEngine {
 public:
  /// `models` must hold exactly two experiments, ids 1 (lower) and 2 (higher).
  RssEngine(RssParams params, std::vector<ExperimentModel> models);

  const RssParams& params() const noexcept { return params_; }
  std::span<const ExperimentModel> models() const noexcept { return models_; }

  RssState init(Stream& control) const;
  Action next_action(const RssState& state) const;
  StepReport step(RssState& state, std::optional<double> observation, Stream& control) const;

 private:
  RssParams params_;
  std::vector<ExperimentModel> models_;
};

struct RssRun {
  std::optional<std::int64_t> stopping_time;
  /// counts[0] for experiment 1, counts[1] for experiment 2.
  std::int64_t counts[2] = {0, 0};
};

/// Runs RSS until the statistic reaches the threshold or `horizon` steps
/// elapse. Observations come from `env` (pre-change before `change_point`,
/// 1-based, post-change from it on); coin flips come from `control`.
RssRun run_rss(const RssParams& params, std::span<const ExperimentModel> models, Stream& env, Stream& control,
               std::int64_t horizon, std::optional<std::int64_t> change_point = 1);

}  // namespace qcd
