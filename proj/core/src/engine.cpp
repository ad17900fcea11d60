#include "qcd/engine.hpp"

#include <cmath>
#include <string>

#include "qcd/error.hpp"

namespace qcd {

PolicyParams PolicyParams::make(int experiments, double threshold, bool data_efficient) {
  if (experiments < 1) throw ValidationError("experiments", "must be >= 1");
  PolicyParams p;
  p.experiments = experiments;
  p.threshold = threshold;
  p.scales.assign(static_cast<std::size_t>(experiments) + 1, 1.0);
  p.budgets.assign(static_cast<std::size_t>(experiments), 0.0);
  p.data_efficient = data_efficient;
  return p;
}

PolicyParams PolicyParams::two_experiment(double threshold, double scale_y, double budget_x) {
  auto p = make(2, threshold);
  p.set_scale(2, scale_y).set_budget(1, budget_x);
  return p;
}

PolicyParams PolicyParams::three_experiment(double threshold, double scale_y, double scale_z, double budget_x,
                                            double budget_y) {
  auto p = make(3, threshold);
  p.set_scale(2, scale_y).set_scale(3, scale_z).set_budget(1, budget_x).set_budget(2, budget_y);
  return p;
}

PolicyParams PolicyParams::de_two_experiment(double threshold, double scale_x, double scale_y,
                                             double budget_idle, double budget_x, double idle_drift) {
  auto p = make(2, threshold, true);
  p.set_scale(1, scale_x).set_scale(2, scale_y).set_budget(0, budget_idle).set_budget(1, budget_x);
  p.idle_drift = idle_drift;
  return p;
}

PolicyParams& PolicyParams::set_scale(int level, double value) {
  scales.at(static_cast<std::size_t>(level)) = value;
  return *this;
}

PolicyParams& PolicyParams::set_budget(int level, double value) {
  budgets.at(static_cast<std::size_t>(level)) = value;
  return *this;
}

void PolicyParams::validate() const {
  IssueCollector issues;
  if (experiments < 1) {
    issues.add("experiments", "must be >= 1");
    issues.throw_if_any();
  }
  issues.check(scales.size() == static_cast<std::size_t>(experiments) + 1, "scales",
               "must have m + 1 entries (index 0 unused)");
  issues.check(budgets.size() == static_cast<std::size_t>(experiments), "budgets", "must have m entries");
  issues.throw_if_any();
  issues.check(!std::isnan(threshold) && threshold > 0.0, "threshold", "must be > 0");

  for (int i = data_efficient ? 1 : 2; i <= experiments; ++i) {
    const double a = scale(i);
    issues.check(std::isfinite(a) && a > 0.0, "scales." + std::to_string(i), "must be finite and > 0");
  }
  for (int j = data_efficient ? 0 : 1; j <= experiments - 1; ++j) {
    const double n = budget(j);
    issues.check(std::isfinite(n) && n >= 0.0, "budgets." + std::to_string(j), "must be finite and >= 0");
  }
  if (data_efficient) {
    issues.check(std::isfinite(idle_drift) && idle_drift > 0.0, "idle_drift", "must be finite and > 0");
  }
  if (top_truncation) {
    issues.check(std::isfinite(*top_truncation) && *top_truncation >= 0.0, "top_truncation",
                 "must be finite and >= 0");
  }
  issues.throw_if_any();
}

std::int64_t resolve_truncation(double budget, Stream& control) {
  if (!std::isfinite(budget) || budget < 0.0) {
    throw ValidationError("budget", "must be finite and >= 0, got " + std::to_string(budget));
  }
  const double whole = std::floor(budget);
  const double fraction = budget - whole;
  const auto base = static_cast<std::int64_t>(whole);
  if (fraction == 0.0) return base;
  return control.uniform() < fraction ? base + 1 : base;
}

std::string to_string(const Action& action) {
  switch (action.kind) {
    case ActionKind::sample:
      return "sample:" + std::to_string(action.experiment);
    case ActionKind::idle:
      return "idle";
    case ActionKind::stop:
      return "stop";
  }
  return "?";
}

std::string_view event_name(const StepReport& report) {
  if (report.stopped) return report.stop_reason == StopReason::truncation ? "stop_truncation" : "stop";
  if (report.descended) return "descend";
  if (report.ascended) return report.renewed ? "renew" : "ascend";
  if (report.reflected) return report.renewed ? "renew" : "reflect";
  return "";
}

Engine::Engine(PolicyParams params, std::vector<ExperimentModel> models)
    : params_(std::move(params)), models_(std::move(models)) {
  params_.validate();
  if (models_.size() != static_cast<std::size_t>(params_.experiments)) {
    throw ValidationError("experiments", "policy expects " + std::to_string(params_.experiments) +
                                             " experiments, scenario provides " + std::to_string(models_.size()));
  }
  for (std::size_t k = 0; k < models_.size(); ++k) {
    if (models_[k].id() != static_cast<int>(k) + 1) {
      throw ValidationError("experiments", "model ids must be 1..m in order");
    }
  }
}

EngineState Engine::init(Stream& control) const {
  EngineState state;
  state.stack.reserve(static_cast<std::size_t>(params_.experiments) + 1);
  LevelState top{params_.experiments, 0.0, std::nullopt};
  if (params_.top_truncation) top.remaining = resolve_truncation(*params_.top_truncation, control);
  state.stack.push_back(top);
  if (top.remaining && *top.remaining == 0) {
    // Nothing may be sampled at all.
    state.stopped = true;
    state.stop_reason = StopReason::truncation;
  }
  return state;
}

Action Engine::next_action(const EngineState& state) const {
  if (state.stopped) throw ContractError("next_action called on a stopped engine");
  const int level = state.active_level();
  return level == 0 ? Action::idle() : Action::sample(level);
}

StepReport Engine::step(EngineState& state, std::optional<double> observation, Stream& control) const {
  if (state.stopped) throw ContractError("step called on a stopped engine");
  std::optional<double> llr;
  if (observation) {
    const int level = state.active_level();
    if (level == 0) throw ContractError("observation supplied for an idle step");
    llr = models_[static_cast<std::size_t>(level) - 1].log_likelihood_ratio(*observation);
  }
  return step_llr(state, llr, control);
}

StepReport Engine::step_llr(EngineState& state, std::optional<double> llr, Stream& control) const {
  if (state.stopped) throw ContractError("step called on a stopped engine");
  if (state.stack.empty()) throw ContractError("engine state was not initialized");

  StepReport report;
  LevelState& current = state.stack.back();
  report.level_used = current.level;

  if (current.level == 0) {
    if (llr) throw ContractError("observation supplied for an idle step");
    state.statistic += params_.idle_drift;
  } else {
    if (!llr) throw ContractError("sample step requires an observation");
    state.statistic += *llr;
  }
  ++state.time;
  if (current.remaining) --*current.remaining;
  report.raw_statistic = state.statistic;

  const bool exhausted = current.remaining && *current.remaining <= 0;
  const int top = params_.experiments;

  if (current.level == top) {
    if (state.statistic > params_.threshold) {
      state.stopped = true;
      state.stop_reason = StopReason::threshold;
    } else if (exhausted) {
      state.stopped = true;
      state.stop_reason = StopReason::truncation;
    } else if (state.statistic < 0.0) {
      if (params_.has_level_below(top)) {
        descend(state, report, state.statistic, control);
      } else {
        state.statistic = 0.0;
        report.reflected = true;
        report.renewed = true;
      }
    }
  } else {
    // An undershoot on the last budgeted observation still runs the lower
    // level; the exhausted level hands back control once that level returns.
    const double ceiling = state.stack[state.stack.size() - 2].floor;
    if (state.statistic > ceiling) {
      ascend(state, report);
    } else if (state.statistic < current.floor && params_.has_level_below(current.level)) {
      const bool pushed = descend(state, report, state.statistic - current.floor, control);
      if (!pushed && exhausted) ascend(state, report);
    } else if (exhausted) {
      ascend(state, report);
    } else if (state.statistic < current.floor) {
      state.statistic = current.floor;
      report.reflected = true;
    }
  }

  report.statistic = state.statistic;
  report.level_after = state.active_level();
  report.stopped = state.stopped;
  report.stop_reason = state.stop_reason;
  report.next = state.stopped ? Action::stop() : next_action(state);
  return report;
}

bool Engine::descend(EngineState& state, StepReport& report, double undershoot, Stream& control) const {
  const LevelState& current = state.stack.back();
  const int below = current.level - 1;
  const std::int64_t budget = resolve_truncation(params_.budget(below), control);
  if (budget == 0) {
    // The lower level is entered and left without an observation.
    state.statistic = current.floor;
    report.reflected = true;
    report.renewed = current.level == params_.experiments;
    return false;
  }
  const double floor = current.floor + params_.scale(current.level) * undershoot;
  state.stack.push_back({below, floor, budget});
  // Every level starts from its own zero level.
  state.statistic = floor;
  report.descended = true;
  return true;
}

void Engine::ascend(EngineState& state, StepReport& report) const {
  state.stack.pop_back();
  // Levels whose budget ran out while a lower level was active return too.
  while (state.stack.size() > 1 && state.stack.back().remaining && *state.stack.back().remaining <= 0) {
    state.stack.pop_back();
  }
  state.statistic = state.stack.back().floor;
  report.ascended = true;
  report.renewed = state.active_level() == params_.experiments;
}

void RssParams::validate() const {
  IssueCollector issues;
  issues.check(!std::isnan(threshold) && threshold > 0.0, "threshold", "must be > 0");
  issues.check(p_hi >= 0.0 && p_hi <= 1.0, "p_hi", "must lie in [0, 1]");
  issues.throw_if_any();
}

RssEngine::RssEngine(RssParams params, std::vector<ExperimentModel> models)
    : params_(params), models_(std::move(models)) {
  params_.validate();
  if (models_.size() != 2 || models_[0].id() != 1 || models_[1].id() != 2) {
    throw ValidationError("experiments", "RSS needs exactly two experiments with ids 1 and 2");
  }
}

RssState RssEngine::init(Stream& /*control*/) const { return RssState{}; }

Action RssEngine::next_action(const RssState& state) const {
  if (state.stopped) throw ContractError("next_action called on a stopped engine");
  return Action::sample(state.next_experiment);
}

StepReport RssEngine::step(RssState& state, std::optional<double> observation, Stream& control) const {
  if (state.stopped) throw ContractError("step called on a stopped engine");
  if (!observation) throw ContractError("RSS steps always require an observation");
  StepReport report;
  report.level_used = state.next_experiment;
  state.statistic += models_[static_cast<std::size_t>(state.next_experiment) - 1].log_likelihood_ratio(*observation);
  ++state.time;
  report.raw_statistic = state.statistic;
  if (state.statistic < 0.0) {
    state.statistic = 0.0;
    report.reflected = true;
    report.renewed = true;
  }
  if (state.statistic >= params_.threshold) {
    state.stopped = true;
    report.stopped = true;
    report.stop_reason = StopReason::threshold;
    report.next = Action::stop();
  } else {
    state.next_experiment = control.bernoulli(params_.p_hi) ? 2 : 1;
    report.next = Action::sample(state.next_experiment);
  }
  report.statistic = state.statistic;
  report.level_after = state.stopped ? report.level_used : state.next_experiment;
  return report;
}

RssRun run_rss(const RssParams& params, std::span<const ExperimentModel> models, Stream& env, Stream& control,
               std::int64_t horizon, std::optional<std::int64_t> change_point) {
  const RssEngine engine(params, std::vector<ExperimentModel>(models.begin(), models.end()));
  RssRun run;
  RssState state = engine.init(control);
  for (std::int64_t n = 1; n <= horizon; ++n) {
    const int experiment = state.next_experiment;
    const Regime regime = (change_point && n >= *change_point) ? Regime::post : Regime::pre;
    const double x = models[static_cast<std::size_t>(experiment) - 1].sample(regime, env);
    ++run.counts[experiment - 1];
    engine.step(state, x, control);
    if (state.stopped) {
      run.stopping_time = n;
      break;
    }
  }
  return run;
}

}  // namespace qcd
