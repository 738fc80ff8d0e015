#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace camalign {

/// Invalid or unsatisfiable configuration (datagen, model, training, plan).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A manifest or one of its samples failed validation. `sample_id()` is
/// empty when the failure is not tied to a particular sample.
class LoadError : public std::runtime_error {
 public:
  LoadError(std::string sample_id, const std::string& what)
      : std::runtime_error(sample_id.empty() ? what : "sample '" + sample_id + "': " + what),
        sample_id_(std::move(sample_id)) {}

  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

/// Checkpoint bytes are truncated, corrupt or of an unknown version.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/image/vector sizes do not agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An objective has an empty class, so class weights are undefined.
class EmptyClassError : public std::domain_error {
 public:
  EmptyClassError(std::size_t objective, const std::string& what)
      : std::domain_error(what), objective_(objective) {}

  std::size_t objective() const noexcept { return objective_; }

 private:
  std::size_t objective_;
};

/// NaN/Inf reached an optimizer update.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string layer, const std::string& what)
      : std::runtime_error(what), layer_(std::move(layer)) {}

  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

}  // namespace camalign
