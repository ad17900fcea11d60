#include "qcd/dist.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "qcd/error.hpp"

namespace qcd {

std::string_view to_string(DensityFamily family) {
  switch (family) {
    case DensityFamily::gaussian:
      return "gaussian";
  }
  return "unknown";
}

DensityFamily parse_density_family(std::string_view name) {
  if (name == "gaussian" || name == "normal") return DensityFamily::gaussian;
  throw ValidationError("family", "unknown density family '" + std::string(name) + "'");
}

void DensitySpec::validate(std::string_view field) const {
  const std::string prefix(field);
  IssueCollector issues;
  issues.check(std::isfinite(mean), prefix + ".mean", "must be finite");
  issues.check(std::isfinite(std) && std > 0.0, prefix + ".std", "must be finite and > 0");
  issues.throw_if_any();
}

double DensitySpec::log_pdf(double x) const {
  switch (family) {
    case DensityFamily::gaussian: {
      const double z = (x - mean) / std;
      return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double DensitySpec::draw(Stream& stream) const {
  switch (family) {
    case DensityFamily::gaussian:
      return mean + std * stream.standard_normal();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ExperimentModel::ExperimentModel(int id, DensitySpec pre, DensitySpec post)
    : id_(id), pre_(pre), post_(post) {
  if (id < 1) throw ValidationError("experiment.id", "must be >= 1");
  const std::string base = "experiments." + std::to_string(id);
  pre_.validate(base + ".pre");
  post_.validate(base + ".post");

  if (pre_.family == DensityFamily::gaussian && post_.family == DensityFamily::gaussian &&
      pre_.std == post_.std) {
    // (mu1 - mu0) (x - (mu0 + mu1) / 2) / sigma^2
    const double var = pre_.std * pre_.std;
    shared_scale_ = true;
    slope_ = (post_.mean - pre_.mean) / var;
    intercept_ = -slope_ * 0.5 * (pre_.mean + post_.mean);
  }

  const double kl = kl_divergence();
  if (!(kl > 0.0) || !std::isfinite(kl)) {
    throw ValidationError(base, "KL divergence D(f1||f0) must be positive and finite, got " + std::to_string(kl));
  }
}

double ExperimentModel::log_likelihood_ratio(double x) const {
  if (!std::isfinite(x)) throw ValidationError("observation", "must be finite");
  return llr_unchecked(x);
}

std::optional<double> kl_divergence_closed_form(const DensitySpec& p, const DensitySpec& q) {
  if (p.family == DensityFamily::gaussian && q.family == DensityFamily::gaussian) {
    const double diff = p.mean - q.mean;
    if (p.std == q.std) return diff * diff / (2.0 * q.std * q.std);
    const double ratio = p.std / q.std;
    return -std::log(ratio) + 0.5 * (ratio * ratio + diff * diff / (q.std * q.std)) - 0.5;
  }
  return std::nullopt;
}

double kl_divergence_numeric(const DensitySpec& p, const DensitySpec& q) {
  auto integrand = [&](double x) {
    const double lp = p.log_pdf(x);
    const double density = std::exp(lp);
    if (density == 0.0) return 0.0;
    return density * (lp - q.log_pdf(x));
  };
  // Splitting at the mean keeps the mass well inside each half-line.
  const double inf = std::numeric_limits<double>::infinity();
  double err_left = 0.0;
  double err_right = 0.0;
  using Quad = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double left = Quad::integrate(integrand, -inf, p.mean, 15, 1e-8, &err_left);
  const double right = Quad::integrate(integrand, p.mean, inf, 15, 1e-8, &err_right);
  return left + right;
}

double ExperimentModel::kl_divergence() const {
  if (auto closed = kl_divergence_closed_form(post_, pre_)) return *closed;
  return kl_divergence_numeric(post_, pre_);
}

double ExperimentModel::reverse_kl_divergence() const {
  if (auto closed = kl_divergence_closed_form(pre_, post_)) return *closed;
  return kl_divergence_numeric(pre_, post_);
}

double ExperimentModel::sample(Regime regime, Stream& stream) const {
  return regime == Regime::pre ? pre_.draw(stream) : post_.draw(stream);
}

std::vector<OrderingViolation> validate_ordering(std::span<const ExperimentModel> models) {
  if (models.empty()) throw ValidationError("experiments", "at least one experiment is required");
  IssueCollector issues;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const int expected = static_cast<int>(k) + 1;
    if (models[k].id() != expected) {
      issues.add("experiments[" + std::to_string(k) + "].id",
                 "expected id " + std::to_string(expected) + ", got " + std::to_string(models[k].id()) +
                     " (ids must be 1..m, contiguous, no duplicates)");
    }
  }
  issues.throw_if_any();

  std::vector<OrderingViolation> violations;
  for (std::size_t k = 0; k + 1 < models.size(); ++k) {
    const double lo = models[k].kl_divergence();
    const double hi = models[k + 1].kl_divergence();
    if (lo > hi) violations.push_back({models[k].id(), models[k + 1].id(), lo, hi});
  }
  return violations;
}

std::vector<ExperimentModel> gaussian_mean_shift_models(std::span<const double> post_means) {
  std::vector<ExperimentModel> models;
  models.reserve(post_means.size());
  int id = 1;
  for (double mean : post_means) {
    models.emplace_back(id++, DensitySpec::gaussian(0.0, 1.0), DensitySpec::gaussian(mean, 1.0));
  }
  return models;
}

}  // namespace qcd
