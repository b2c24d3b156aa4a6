#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace redl {

/// An opinion with zero uncertainty mass has no finite Dirichlet image.
class DegenerateOpinionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Parameters outside a type's invariants (negative belief, non-positive alpha, ...).
class InvalidParametersError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A ranking metric was asked for on input lacking positives and/or negatives.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Configuration validation failure; `path` names the offending field ("loss.lambda").
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::invalid_argument(path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace redl
