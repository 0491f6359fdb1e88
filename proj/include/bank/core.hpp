#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace bank {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class Task { regression, classification };

inline std::string_view to_string(Task task) {
  return task == Task::regression ? "regression" : "classification";
}

inline Task parse_task(std::string_view name) {
  if (name == "regression") return Task::regression;
  if (name == "classification") return Task::classification;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

/// Operand shapes disagree (e.g. x has d entries but W has d' columns).
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what, Index expected, Index actual)
      : std::invalid_argument(what + ": expected dimension " + std::to_string(expected) +
                              ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  Index expected() const noexcept { return expected_; }
  Index actual() const noexcept { return actual_; }

 private:
  Index expected_;
  Index actual_;
};

/// A covariance (or precision) matrix failed its Cholesky factorization.
class InvalidCovarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Class labels outside {0, 1}.
class LabelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_dim(const char* what, Index expected, Index actual) {
  if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace bank
