#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "simplexlm/autodiff.hpp"
#include "simplexlm/rng.hpp"
#include "simplexlm/tensor.hpp"

namespace simplexlm {

/// Ordered, named collection of learnable tensors.
///
/// Order is fixed at construction and defines the layout used by optimizers
/// and checkpoints. Entries never move once added, so tapes may alias them.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t index_of(std::string_view name) const;

  /// Copies values from `other`, which must have identical names and shapes.
  void assign_from(const ParameterSet& other);

  /// One leaf per entry, aliasing this set's storage.
  std::vector<Var> bind(Tape& tape, bool requires_grad = true) const;

  /// Leaves whose gradients accumulate into `sinks` (one per entry).
  std::vector<Var> bind(Tape& tape, std::vector<Tensor>& sinks) const;

  /// Zero tensors shaped like each entry.
  std::vector<Tensor> zeros_like() const;

  /// Gradients of the last backward() for each bound leaf.
  static std::vector<Tensor> gradients(const Tape& tape, const std::vector<Var>& bound);

  bool all_finite() const;

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

/// Tensor with i.i.d. N(0, stddev^2) entries.
Tensor random_normal(Shape shape, double stddev, Rng& rng);

}  // namespace simplexlm
