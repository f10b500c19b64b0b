#pragma once

#include <stdexcept>
#include <string>

namespace dkm {

// Operand shapes disagree.
class dimension_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A documented precondition on an argument does not hold (empty batch, bad
// fraction, stale assignment, ...).
class precondition_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN or Inf.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training diverged; carries the 1-based epoch in which the loss went non-finite.
class divergence_error : public numeric_error {
 public:
  divergence_error(const std::string& what, int epoch) : numeric_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

// Malformed file contents (CIFAR records, checkpoints).
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cluster initialisation could not satisfy the distinctness invariant.
class init_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad run configuration; the message names the offending field.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dkm
