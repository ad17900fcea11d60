#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qcd {

/// A single rejected field, e.g. {"scales.2", "must be > 0"}.
struct FieldIssue {
  std::string field;
  std::string message;
};

/// Thrown when user-supplied parameters or configuration violate an invariant.
/// Carries one entry per offending field so the CLI can print all of them.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(std::vector<FieldIssue> issues)
      : std::invalid_argument(render(issues)), issues_(std::move(issues)) {}

  ValidationError(std::string field, std::string message)
      : ValidationError(std::vector<FieldIssue>{{std::move(field), std::move(message)}}) {}

  const std::vector<FieldIssue>& issues() const noexcept { return issues_; }

 private:
  static std::string render(const std::vector<FieldIssue>& issues) {
    std::string out;
    for (const auto& issue : issues) {
      if (!out.empty()) out += "; ";
      out += issue.field + ": " + issue.message;
    }
    return out;
  }

  std::vector<FieldIssue> issues_;
};

/// Thrown when a caller breaks a call-sequence contract (stepping a stopped
/// engine, feeding an observation to an idle step, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Collects field issues and throws them together.
class IssueCollector {
 public:
  void check(bool ok, std::string field, std::string message) {
    if (!ok) issues_.push_back({std::move(field), std::move(message)});
  }
  void add(std::string field, std::string message) { issues_.push_back({std::move(field), std::move(message)}); }
  bool empty() const noexcept { return issues_.empty(); }
  void throw_if_any() const {
    if (!issues_.empty()) throw ValidationError(issues_);
  }

 private:
  std::vector<FieldIssue> issues_;
};

}  // namespace qcd
