#include <doctest.h>

#include <cmath>

#include "qcd/config.hpp"
#include "qcd/error.hpp"

using namespace qcd;
using nlohmann::json;

namespace {

json base() {
  return json::parse(R"({
    "scenario": {
      "experiments": [
        {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 0.75, "std": 1}},
        {"pre": {"family": "gaussian", "mean": 0, "std": 1}, "post": {"family": "gaussian", "mean": 1.0, "std": 1}}
      ],
      "change_point": 50
    },
    "policy": {"variant": "me-cusum", "gamma": 1000, "scales": {"2": 1.5}, "budgets": {"1": 2.25}},
    "simulation": {"trials": 321, "seed": 9, "horizon": 400, "cycles": 1000, "safety_horizon": 99999},
    "output": {"format": "csv", "path": "out.csv"},
    "calibration": {"gamma": 100, "betas": {"1": 0.3, "2": 0.7}, "tolerance": 0.01, "max_sweeps": 4},
    "tradeoff": {"gammas": [10, 100], "policies": [{"variant": "rss", "p_hi": 0.25}, {"variant": "cusum", "experiment": 2}]}
  })");
}

std::string first_field(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ValidationError& e) {
    return e.issues().front().field;
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("parse, serialize, parse round-trips") {
    const RunConfig a = parse_config(base());
    const RunConfig b = parse_config(to_json(a));
    CHECK(a == b);
    CHECK(to_json(a) == to_json(b));
    CHECK(a.simulation.trials == 321);
    CHECK(a.calibration->search.tolerance == 0.01);
    CHECK(a.tradeoff->policies.size() == 2);
  }

  TEST_CASE("infinite change point round-trips") {
    json doc = base();
    doc["scenario"]["change_point"] = "inf";
    const auto a = parse_config(doc);
    CHECK_FALSE(a.scenario.change_point);
    CHECK(parse_config(to_json(a)) == a);
  }

  TEST_CASE("field diagnostics name the offending key") {
    json doc = base();
    doc["scenario"]["experiments"][1]["post"]["std"] = -1;
    CHECK(first_field(doc) == "scenario.experiments[1].post.std");

    doc = base();
    doc["policy"]["variant"] = "bogus";
    CHECK(first_field(doc) == "policy.variant");

    doc = base();
    doc["simulation"]["trials"] = "many";
    CHECK(first_field(doc) == "simulation.trials");

    doc = base();
    doc["policy"]["scales"] = {{"x", 1.0}};
    CHECK(first_field(doc) == "policy.scales.x");

    doc = base();
    std::swap(doc["scenario"]["experiments"][0], doc["scenario"]["experiments"][1]);
    CHECK(first_field(doc) == "experiments");
  }

  TEST_CASE("resolving policies") {
    const auto config = parse_config(base());
    const auto me = resolve_policy(*config.policy, config.scenario);
    const auto& p = std::get<PolicyParams>(me.policy);
    CHECK(p.experiments == 2);
    CHECK(p.threshold == doctest::Approx(std::log(1000.0)));
    CHECK(p.scale(2) == 1.5);
    CHECK(p.budget(1) == 2.25);

    PolicyConfig single = config.tradeoff->policies[1];
    CHECK_THROWS_AS(resolve_policy(single, config.scenario), ValidationError);
    single.threshold = 4.0;
    const auto cusum = resolve_policy(single, config.scenario);
    REQUIRE(cusum.models.size() == 1);
    CHECK(cusum.models[0].id() == 1);
    CHECK(cusum.models[0].post().mean == 1.0);

    PolicyConfig bad = *config.policy;
    bad.budgets[5] = 1.0;
    CHECK_THROWS_AS(resolve_policy(bad, config.scenario), ValidationError);
  }

  TEST_CASE("resolving calibration targets") {
    const auto config = parse_config(base());
    const auto t = resolve_target(*config.calibration, 2);
    CHECK(t.beta(1) == 0.3);
    CHECK(t.beta(2) == 0.7);
    CHECK_THROWS_AS(resolve_target(*config.calibration, 1), ValidationError);
  }
}
