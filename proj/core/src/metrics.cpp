#include "qcd/metrics.hpp"

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "qcd/error.hpp"
#include "qcd/parallel.hpp"
#include "qcd/random.hpp"

namespace qcd {

double normal_critical_value(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ValidationError("confidence", "must lie in (0, 1)");
  const boost::math::normal standard;
  return boost::math::quantile(standard, 0.5 + 0.5 * confidence);
}

MetricEstimate MetricEstimate::from_moments(double mean, double std_error, std::int64_t trials, double confidence) {
  const double z = normal_critical_value(confidence);
  return {mean, std_error, trials, mean - z * std_error, mean + z * std_error, confidence};
}

MetricEstimate MetricEstimate::from_samples(std::span<const double> samples, double confidence) {
  const auto n = static_cast<std::int64_t>(samples.size());
  if (n == 0) return from_moments(0.0, 0.0, 0, confidence);
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double se = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  return from_moments(mean, se, n, confidence);
}

double PorVector::sum() const {
  double total = 0.0;
  for (const auto& c : components) total += c.mean;
  return total;
}

namespace {

double policy_threshold(const Policy& policy) {
  return std::visit([](const auto& p) { return p.threshold; }, policy);
}

void check_trials(std::int64_t trials) {
  if (trials < 1) throw ValidationError("trials", "must be >= 1");
}

std::int64_t default_safety_horizon(double threshold) {
  // 1e4 * gamma with gamma = e^A, floored at 1e6 and capped to stay in range.
  constexpr double cap = 1e15;
  const double h = std::min(cap, 1e4 * std::exp(std::min(threshold, 100.0)));
  return static_cast<std::int64_t>(std::max(1e6, h));
}

Scenario make_scenario(std::span<const ExperimentModel> models, std::optional<std::int64_t> change_point) {
  Scenario scenario;
  scenario.models.assign(models.begin(), models.end());
  scenario.change_point = change_point;
  scenario.validate();
  return scenario;
}

struct StoppingSample {
  double time = 0.0;
  bool hit = false;
};

/// Stopping times of `trials` independent episodes.
std::vector<StoppingSample> stopping_times(const Policy& policy, const Scenario& scenario, std::int64_t horizon,
                                           const MonteCarloOptions& options) {
  std::vector<StoppingSample> out(static_cast<std::size_t>(options.trials));
  EpisodeOptions episode;
  episode.record_steps = false;
  episode.horizon = horizon;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        const auto engine = [&] {
          if constexpr (std::is_same_v<T, PolicyParams>) {
            return Engine(p, scenario.models);
          } else {
            return RssEngine(p, scenario.models);
          }
        }();
        parallel_for(out.size(), options.threads, [&](std::size_t i) {
          const EpisodeTrace trace = run_episode(engine, scenario, options.base_seed, i, episode);
          out[i] = {static_cast<double>(trace.steps_taken), trace.horizon_hit()};
        });
      },
      policy);
  return out;
}

MetricEstimate summarize(const std::vector<StoppingSample>& samples, double confidence, std::int64_t& hits) {
  std::vector<double> times;
  times.reserve(samples.size());
  hits = 0;
  for (const auto& s : samples) {
    times.push_back(s.time);
    if (s.hit) ++hits;
  }
  return MetricEstimate::from_samples(times, confidence);
}

}  // namespace

Policy with_threshold(const Policy& policy, double threshold) {
  Policy copy = policy;
  std::visit([&](auto& p) { p.threshold = threshold; }, copy);
  return copy;
}

ArlfaResult estimate_arlfa(const Policy& policy, std::span<const ExperimentModel> models,
                           const MonteCarloOptions& options) {
  check_trials(options.trials);
  const double threshold = policy_threshold(policy);
  if (!std::isfinite(threshold)) throw ValidationError("threshold", "ARLFA requires a finite threshold");
  const Scenario scenario = make_scenario(models, std::nullopt);
  ArlfaResult result;
  result.safety_horizon = options.safety_horizon.value_or(default_safety_horizon(threshold));
  const auto samples = stopping_times(policy, scenario, result.safety_horizon, options);
  result.estimate = summarize(samples, options.confidence, result.horizon_hits);
  return result;
}

double wadd_penalty(const PolicyParams& params) {
  const int m = params.experiments;
  const int deepest = params.data_efficient ? 0 : 1;
  // Each term is the product of budgets from level m-1 down to some level k.
  double total = 0.0;
  double product = 1.0;
  for (int k = m - 1; k >= deepest; --k) {
    product *= params.budget(k);
    total += product;
  }
  return total;
}

double wadd_penalty(const Policy& policy) {
  if (const auto* p = std::get_if<PolicyParams>(&policy)) return wadd_penalty(*p);
  return 0.0;
}

WaddResult estimate_wadd(const Policy& policy, std::span<const ExperimentModel> models,
                         const MonteCarloOptions& options) {
  check_trials(options.trials);
  const double threshold = policy_threshold(policy);
  if (!std::isfinite(threshold)) throw ValidationError("threshold", "WADD requires a finite threshold");
  const Scenario scenario = make_scenario(models, 1);
  WaddResult result;
  result.safety_horizon = options.safety_horizon.value_or(default_safety_horizon(threshold));
  const auto samples = stopping_times(policy, scenario, result.safety_horizon, options);
  result.simulated = summarize(samples, options.confidence, result.horizon_hits);
  result.penalty = wadd_penalty(policy);
  result.total = MetricEstimate::from_moments(result.simulated.mean + result.penalty, result.simulated.std_error,
                                              result.simulated.trials, options.confidence);
  return result;
}

PorVector estimate_por_direct(const Policy& policy, std::span<const ExperimentModel> models, std::int64_t horizon,
                              const MonteCarloOptions& options) {
  check_trials(options.trials);
  if (horizon < 10'000) throw ValidationError("horizon", "POR runs need a horizon of at least 1e4 steps");
  const Scenario scenario = make_scenario(models, std::nullopt);
  const Policy free_running = with_threshold(policy, std::numeric_limits<double>::infinity());
  const int m = experiment_count(policy);

  std::vector<std::vector<std::int64_t>> counts(static_cast<std::size_t>(options.trials));
  EpisodeOptions episode;
  episode.record_steps = false;
  episode.horizon = horizon;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        const auto engine = [&] {
          if constexpr (std::is_same_v<T, PolicyParams>) {
            return Engine(p, scenario.models);
          } else {
            return RssEngine(p, scenario.models);
          }
        }();
        parallel_for(counts.size(), options.threads, [&](std::size_t i) {
          counts[i] = run_episode(engine, scenario, options.base_seed, i, episode).counts;
        });
      },
      free_running);

  PorVector por;
  const auto* params = std::get_if<PolicyParams>(&policy);
  por.has_idle = params && params->data_efficient;
  por.components.resize(static_cast<std::size_t>(m) + 1);
  std::vector<double> fractions(counts.size());
  for (int i = 0; i <= m; ++i) {
    for (std::size_t t = 0; t < counts.size(); ++t) {
      fractions[t] = static_cast<double>(counts[t][static_cast<std::size_t>(i)]) / static_cast<double>(horizon);
    }
    por.components[static_cast<std::size_t>(i)] = MetricEstimate::from_samples(fractions, options.confidence);
  }
  return por;
}

namespace {

/// Per-batch sufficient statistics for ratio estimators.
struct CycleMoments {
  double cycles = 0.0;
  double length = 0.0;
  double length_sq = 0.0;
  std::vector<double> count;
  std::vector<double> count_sq;
  std::vector<double> count_length;

  explicit CycleMoments(std::size_t slots) : count(slots), count_sq(slots), count_length(slots) {}

  void merge(const CycleMoments& other) {
    cycles += other.cycles;
    length += other.length;
    length_sq += other.length_sq;
    for (std::size_t i = 0; i < count.size(); ++i) {
      count[i] += other.count[i];
      count_sq[i] += other.count_sq[i];
      count_length[i] += other.count_length[i];
    }
  }
};

constexpr std::int64_t kCyclesPerBatch = 512;

}  // namespace

PorVector estimate_por_renewal(const PolicyParams& params, std::span<const ExperimentModel> models,
                               std::int64_t cycles, const MonteCarloOptions& options) {
  if (cycles < 100) throw ValidationError("cycles", "must be >= 100");
  if (params.top_truncation) throw ValidationError("top_truncation", "renewal estimates need an untruncated top level");
  PolicyParams free_running = params;
  free_running.threshold = std::numeric_limits<double>::infinity();
  const Scenario scenario = make_scenario(models, std::nullopt);
  const Engine engine(free_running, scenario.models);
  const int m = params.experiments;
  const std::size_t slots = static_cast<std::size_t>(m) + 1;

  const auto batches = static_cast<std::size_t>((cycles + kCyclesPerBatch - 1) / kCyclesPerBatch);
  std::vector<CycleMoments> per_batch(batches, CycleMoments(slots));

  parallel_for(batches, options.threads, [&](std::size_t b) {
    const std::int64_t first = static_cast<std::int64_t>(b) * kCyclesPerBatch;
    const std::int64_t todo = std::min(kCyclesPerBatch, cycles - first);
    Stream env(derive_seed(options.base_seed, b, StreamKind::observations));
    Stream control(derive_seed(options.base_seed, b, StreamKind::control));
    CycleMoments& acc = per_batch[b];
    std::vector<double> cycle_counts(slots);
    EngineState state = engine.init(control);
    for (std::int64_t c = 0; c < todo; ++c) {
      std::fill(cycle_counts.begin(), cycle_counts.end(), 0.0);
      double length = 0.0;
      for (;;) {
        const int level = state.active_level();
        std::optional<double> llr;
        if (level > 0) llr = models[static_cast<std::size_t>(level) - 1].llr_unchecked(models[static_cast<std::size_t>(level) - 1].sample(Regime::pre, env));
        const StepReport report = engine.step_llr(state, llr, control);
        cycle_counts[static_cast<std::size_t>(level)] += 1.0;
        length += 1.0;
        if (report.renewed) break;
      }
      acc.cycles += 1.0;
      acc.length += length;
      acc.length_sq += length * length;
      for (std::size_t i = 0; i < slots; ++i) {
        acc.count[i] += cycle_counts[i];
        acc.count_sq[i] += cycle_counts[i] * cycle_counts[i];
        acc.count_length[i] += cycle_counts[i] * length;
      }
    }
  });

  CycleMoments total(slots);
  for (const auto& b : per_batch) total.merge(b);

  PorVector por;
  por.has_idle = params.data_efficient;
  por.components.resize(slots);
  const double n = total.cycles;
  const double mean_length = total.length / n;
  for (std::size_t i = 0; i < slots; ++i) {
    const double ratio = total.count[i] / total.length;
    // Var(C - R L) from raw moments; E[C - R L] is zero by construction.
    const double residual_var = std::max(
        0.0, (total.count_sq[i] - 2.0 * ratio * total.count_length[i] + ratio * ratio * total.length_sq) / n);
    const double se = std::sqrt(residual_var / n) / mean_length;
    por.components[i] = MetricEstimate::from_moments(ratio, se, static_cast<std::int64_t>(n), options.confidence);
  }
  return por;
}

std::vector<TradeoffPoint> tradeoff_curve(const Policy& policy, std::span<const ExperimentModel> models,
                                          std::span<const double> gamma_grid, const TradeoffOptions& options) {
  if (gamma_grid.empty()) throw ValidationError("gammas", "grid must not be empty");
  for (std::size_t k = 0; k < gamma_grid.size(); ++k) {
    if (!(gamma_grid[k] > 1.0)) throw ValidationError("gammas", "every gamma must be > 1");
    if (k > 0 && !(gamma_grid[k] > gamma_grid[k - 1])) throw ValidationError("gammas", "grid must be increasing");
  }
  std::vector<TradeoffPoint> points;
  points.reserve(gamma_grid.size());
  for (double gamma : gamma_grid) {
    TradeoffPoint point;
    point.gamma = gamma;
    point.threshold = std::log(gamma);
    const Policy tuned = with_threshold(policy, point.threshold);
    point.arlfa = estimate_arlfa(tuned, models, options.arlfa);
    point.log_arlfa = std::log(point.arlfa.estimate.mean);
    point.wadd = estimate_wadd(tuned, models, options.wadd);
    points.push_back(point);
  }
  return points;
}

void write_tradeoff_csv(std::ostream& out, std::span<const TradeoffPoint> points) {
  out << "gamma,log_arlfa,wadd,wadd_se\n";
  for (const auto& p : points) {
    fmt::print(out, "{},{},{},{}\n", p.gamma, p.log_arlfa, p.wadd.total.mean, p.wadd.total.std_error);
  }
}

void write_por_csv(std::ostream& out, const PorVector& por) {
  out << "experiment,por,por_se\n";
  for (int i = 1; i <= por.experiments(); ++i) {
    const auto& c = por.components[static_cast<std::size_t>(i)];
    fmt::print(out, "{},{},{}\n", i, c.mean, c.std_error);
  }
  if (por.has_idle) fmt::print(out, "0,{},{}\n", por.components[0].mean, por.components[0].std_error);
}

}  // namespace qcd
