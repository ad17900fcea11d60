#include <doctest.h>

#include <cmath>
#include <vector>

#include "qcd/engine.hpp"
#include "qcd/error.hpp"

using namespace qcd;

namespace {

std::vector<ExperimentModel> models(std::vector<double> means) { return gaussian_mean_shift_models(means); }

}  // namespace

TEST_SUITE("engine") {
  TEST_CASE("init starts at the top level") {
    Stream control(1);
    const Engine cusum(PolicyParams::cusum(5.0), models({1.0}));
    auto s = cusum.init(control);
    CHECK(s.statistic == 0.0);
    CHECK(cusum.next_action(s) == Action::sample(1));

    const Engine two(PolicyParams::two_experiment(5.0, 1.0, 2.0), models({0.75, 1.0}));
    s = two.init(control);
    CHECK(two.next_action(s) == Action::sample(2));
    REQUIRE(s.stack.size() == 1);
    CHECK(s.stack[0].floor == 0.0);
    CHECK_FALSE(s.stack[0].remaining);

    const Engine de(PolicyParams::de_two_experiment(5.0, 1.0, 1.0, 3.0, 2.0, 0.1), models({0.75, 1.0}));
    CHECK(de.next_action(de.init(control)) == Action::sample(2));
  }

  TEST_CASE("cusum reflects at zero") {
    Stream control(1);
    const Engine e(PolicyParams::cusum(5.0), models({1.0}));
    auto s = e.init(control);
    e.step_llr(s, 0.3, control);
    const auto r = e.step_llr(s, -0.5, control);
    CHECK(s.statistic == 0.0);
    CHECK(r.reflected);
    CHECK_FALSE(r.stopped);
  }

  TEST_CASE("undershoot at the top sets the next zero level") {
    Stream control(1);
    const Engine e(PolicyParams::two_experiment(5.0, 1.0, 2.0), models({0.75, 1.0}));
    auto s = e.init(control);
    const auto r = e.step_llr(s, -0.8, control);
    CHECK(r.descended);
    CHECK(s.active().floor == doctest::Approx(-0.8));
    CHECK(r.next == Action::sample(1));
  }

  TEST_CASE("exhausting the lower budget returns to the top at zero") {
    Stream control(1);
    const Engine e(PolicyParams::two_experiment(5.0, 1.0, 1.0), models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.8, control);
    REQUIRE(s.active().remaining == 1);
    const auto r = e.step_llr(s, -2.0, control);
    CHECK(r.ascended);
    CHECK(r.renewed);
    CHECK(s.statistic == 0.0);
    CHECK(r.next == Action::sample(2));
  }

  TEST_CASE("bottom level reflects at its floor") {
    Stream control(1);
    const Engine e(PolicyParams::two_experiment(5.0, 1.0, 3.0), models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.8, control);
    const auto r = e.step_llr(s, -2.0, control);
    CHECK(r.reflected);
    CHECK(s.statistic == doctest::Approx(-0.8));
    CHECK(s.active_level() == 1);
  }

  TEST_CASE("scale moves the zero level and the start point") {
    Stream control(1);
    const Engine e(PolicyParams::two_experiment(5.0, 2.0, 3.0), models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.5, control);
    CHECK(s.active().floor == doctest::Approx(-1.0));
    CHECK(s.statistic == doctest::Approx(-1.0));
    e.step_llr(s, 0.7, control);
    CHECK(s.statistic == doctest::Approx(-0.3));
    const auto r = e.step_llr(s, 0.4, control);
    CHECK(r.renewed);
    CHECK(s.statistic == 0.0);
  }

  TEST_CASE("idle level climbs by the drift then hands back to experiment 1") {
    Stream control(1);
    // Top floor 0, level 1 floor -0.8 after the first undershoot, idle floor -1.5.
    const Engine e(PolicyParams::de_two_experiment(5.0, 1.0, 1.0, 3.0, 10.0, 0.1), models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.8, control);
    auto r = e.step_llr(s, -0.7, control);
    REQUIRE(r.descended);
    CHECK(s.active_level() == 0);
    CHECK(s.active().floor == doctest::Approx(-1.5));
    CHECK(r.next == Action::idle());
    CHECK(s.statistic == doctest::Approx(-1.5));
    e.step_llr(s, std::nullopt, control);
    e.step_llr(s, std::nullopt, control);
    r = e.step_llr(s, std::nullopt, control);
    CHECK(r.raw_statistic == doctest::Approx(-1.2));
    CHECK(r.ascended);
    CHECK(s.statistic == doctest::Approx(-0.8));
    CHECK(r.next == Action::sample(1));
  }

  TEST_CASE("idle crosses the level above before its budget runs out") {
    Stream control(1);
    auto p = PolicyParams::de_two_experiment(5.0, 1.0, 1.0, 50.0, 10.0, 0.25);
    const Engine e(p, models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.8, control);
    e.step_llr(s, -0.2, control);  // idle floor -1.0, climb 0.25 per step
    int idle_steps = 0;
    while (s.active_level() == 0) {
      e.step_llr(s, std::nullopt, control);
      ++idle_steps;
    }
    CHECK(idle_steps == 1);  // -1.0 + 0.25 = -0.75 > -0.8
    CHECK(s.statistic == doctest::Approx(-0.8));
  }

  TEST_CASE("threshold crossing stops") {
    Stream control(1);
    const Engine e(PolicyParams::cusum(1.0), models({1.0}));
    auto s = e.init(control);
    const auto r = e.step_llr(s, 1.5, control);
    CHECK(r.stopped);
    CHECK(r.stop_reason == StopReason::threshold);
    CHECK(r.next == Action::stop());
    CHECK_THROWS_AS(e.next_action(s), ContractError);
    CHECK_THROWS_AS(e.step_llr(s, 0.1, control), ContractError);
  }

  TEST_CASE("input kind must match the action") {
    Stream control(1);
    const Engine e(PolicyParams::cusum(1.0), models({1.0}));
    auto s = e.init(control);
    CHECK_THROWS_AS(e.step_llr(s, std::nullopt, control), ContractError);
  }

  TEST_CASE("top truncation stops after the budget") {
    Stream control(1);
    auto p = PolicyParams::two_experiment(100.0, 1.0, 2.0);
    p.top_truncation = 3.0;
    const Engine e(p, models({0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, 0.1, control);
    e.step_llr(s, 0.1, control);
    const auto r = e.step_llr(s, 0.1, control);
    CHECK(r.stopped);
    CHECK(r.stop_reason == StopReason::truncation);
  }

  TEST_CASE("last budgeted observation may still descend") {
    Stream control(1);
    // Level 2 gets one observation; its undershoot still runs level 1.
    const Engine e(PolicyParams::three_experiment(100.0, 1.0, 1.0, 2.0, 1.0), models({0.5, 0.75, 1.0}));
    auto s = e.init(control);
    e.step_llr(s, -0.5, control);
    REQUIRE(s.active_level() == 2);
    auto r = e.step_llr(s, -0.4, control);
    CHECK(r.descended);
    CHECK(s.active_level() == 1);
    CHECK(s.active().floor == doctest::Approx(-0.9));
    e.step_llr(s, -0.1, control);
    r = e.step_llr(s, -0.1, control);
    CHECK(r.ascended);
    CHECK(r.renewed);
    CHECK(s.active_level() == 3);
    CHECK(s.statistic == 0.0);
  }

  TEST_CASE("resolve_truncation") {
    Stream s(3);
    for (int i = 0; i < 100; ++i) CHECK(resolve_truncation(2.0, s) == 2);
    CHECK(resolve_truncation(0.0, s) == 0);
    constexpr int n = 100'000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto v = resolve_truncation(0.57, s);
      CHECK((v == 0 || v == 1));
      sum += static_cast<double>(v);
    }
    CHECK(std::abs(sum / n - 0.57) < 0.01);
    CHECK_THROWS_AS(resolve_truncation(-1.0, s), ValidationError);
  }

  TEST_CASE("integer budgets consume no randomness") {
    Stream a(9);
    Stream b(9);
    resolve_truncation(4.0, a);
    CHECK(a.uniform() == b.uniform());
  }

  TEST_CASE("parameter validation reports every field") {
    auto p = PolicyParams::make(2, -1.0);
    p.scales[2] = 0.0;
    p.budgets[1] = -2.0;
    try {
      p.validate();
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(e.issues().size() == 3);
    }
    auto de = PolicyParams::de_two_experiment(5.0, 1.0, 1.0, 3.0, 2.0, 0.0);
    CHECK_THROWS_AS(de.validate(), ValidationError);
    CHECK_THROWS_AS(Engine(PolicyParams::two_experiment(5.0, 1.0, 1.0), models({1.0})), ValidationError);
  }

  TEST_CASE("stack floors decrease with depth") {
    const Engine e(PolicyParams::three_experiment(1e9, 1.5, 2.0, 3.0, 4.0), models({0.5, 0.75, 1.0}));
    Stream control(5);
    Stream obs(6);
    auto s = e.init(control);
    for (int n = 0; n < 20000; ++n) {
      const auto a = e.next_action(s);
      const double x = e.models()[static_cast<std::size_t>(a.experiment) - 1].sample(Regime::pre, obs);
      e.step(s, x, control);
      for (std::size_t k = 1; k < s.stack.size(); ++k) REQUIRE(s.stack[k].floor < s.stack[k - 1].floor);
      if (s.stack.size() > 1) REQUIRE(s.statistic <= s.stack[s.stack.size() - 2].floor);
      if (s.active_level() == 1) REQUIRE(s.statistic >= s.active().floor);
    }
  }

  TEST_CASE("rss degenerate coins") {
    Stream control(1);
    const RssEngine hi(RssParams{5.0, 1.0}, models({0.75, 1.0}));
    auto s = hi.init(control);
    CHECK(hi.next_action(s) == Action::sample(2));
    for (int i = 0; i < 50; ++i) CHECK(hi.step(s, 0.0, control).next == Action::sample(2));
    const RssEngine lo(RssParams{5.0, 0.0}, models({0.75, 1.0}));
    s = lo.init(control);
    lo.step(s, 0.0, control);
    for (int i = 0; i < 50; ++i) CHECK(lo.step(s, 0.0, control).next == Action::sample(1));
  }

  TEST_CASE("rss fair coin splits samples evenly") {
    const auto ms = models({0.75, 1.0});
    Stream env(11);
    Stream control(12);
    const auto run = run_rss(RssParams{INFINITY, 0.5}, ms, env, control, 1'000'000, std::nullopt);
    CHECK_FALSE(run.stopping_time);
    const double frac = static_cast<double>(run.counts[1]) / 1e6;
    CHECK(std::abs(frac - 0.5) < 0.01);
  }

  TEST_CASE("action names") {
    CHECK(to_string(Action::sample(3)) == "sample:3");
    CHECK(to_string(Action::idle()) == "idle");
    CHECK(to_string(Action::stop()) == "stop");
  }
}
