#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qcd/random.hpp"

namespace qcd {

enum class DensityFamily { gaussian };

std::string_view to_string(DensityFamily family);
DensityFamily parse_density_family(std::string_view name);

/// One observation density. Only the Gaussian family is built in; `mean` and
/// `std` are its parameters.
struct DensitySpec {
  DensityFamily family = DensityFamily::gaussian;
  double mean = 0.0;
  double std = 1.0;

  static DensitySpec gaussian(double mean, double std) { return {DensityFamily::gaussian, mean, std}; }

  void validate(std::string_view field = "density") const;
  double log_pdf(double x) const;
  double draw(Stream& stream) const;

  friend bool operator==(const DensitySpec&, const DensitySpec&) = default;
};

enum class Regime { pre, post };

/// Pre/post-change density pair for experiment `id` (1-based; higher id means
/// higher information quality). Immutable once built and safe to share.
class ExperimentModel {
 public:
  ExperimentModel(int id, DensitySpec pre, DensitySpec post);

  int id() const noexcept { return id_; }
  const DensitySpec& pre() const noexcept { return pre_; }
  const DensitySpec& post() const noexcept { return post_; }

  /// log f1(x)/f0(x). Throws ValidationError for non-finite x.
  double log_likelihood_ratio(double x) const;

  /// D(f1 || f0).
  double kl_divergence() const;

  /// D(f0 || f1); the magnitude of the pre-change drift of the LLR.
  double reverse_kl_divergence() const;

  double sample(Regime regime, Stream& stream) const;

  /// Hot-loop variant of log_likelihood_ratio without the finiteness check.
  double llr_unchecked(double x) const noexcept {
    if (shared_scale_) return slope_ * x + intercept_;
    return post_.log_pdf(x) - pre_.log_pdf(x);
  }

  friend bool operator==(const ExperimentModel& a, const ExperimentModel& b) {
    return a.id_ == b.id_ && a.pre_ == b.pre_ && a.post_ == b.post_;
  }

 private:
  int id_;
  DensitySpec pre_;
  DensitySpec post_;
  bool shared_scale_ = false;
  double slope_ = 0.0;
  double intercept_ = 0.0;
};

/// KL divergence D(p || q) by adaptive Gauss-Kronrod quadrature over the real
/// line, relative tolerance 1e-8. Used for families without a closed form.
double kl_divergence_numeric(const DensitySpec& p, const DensitySpec& q);

/// Closed form when one exists for the pair, nullopt otherwise.
std::optional<double> kl_divergence_closed_form(const DensitySpec& p, const DensitySpec& q);

/// Adjacent pair (lower, upper) whose KL divergences decrease with the index.
struct OrderingViolation {
  int lower_id;
  int upper_id;
  double lower_kl;
  double upper_kl;
};

/// Empty when KL divergences are non-decreasing in experiment id. Ids must be
/// exactly 1..m in order; otherwise ValidationError.
std::vector<OrderingViolation> validate_ordering(std::span<const ExperimentModel> models);

/// Gaussian models sharing N(0, 1) pre-change, with the given post-change means
/// as experiments 1..m.
std::vector<ExperimentModel> gaussian_mean_shift_models(std::span<const double> post_means);

}  // namespace qcd
