#include "simplexlm/parameters.hpp"

#include "simplexlm/errors.hpp"

namespace simplexlm {

std::size_t ParameterSet::add(std::string name, Tensor value) {
  for (const auto& n : names_) {
    if (n == name) throw Error("duplicate parameter name: " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return names_.size() - 1;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw Error("unknown parameter: " + std::string(name));
}

void ParameterSet::assign_from(const ParameterSet& other) {
  if (other.size() != size()) {
    throw DataError("parameter count mismatch: " + std::to_string(other.size()) + " vs " +
                    std::to_string(size()));
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (other.names_[i] != names_[i] || other.values_[i].shape() != values_[i].shape()) {
      throw DataError("parameter layout mismatch at " + names_[i]);
    }
  }
  values_ = other.values_;
}

std::vector<Var> ParameterSet::bind(Tape& tape, bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(tape.parameter(v, requires_grad));
  return out;
}

std::vector<Var> ParameterSet::bind(Tape& tape, std::vector<Tensor>& sinks) const {
  if (sinks.size() != values_.size()) throw Error("one gradient sink per parameter required");
  std::vector<Var> out;
  out.reserve(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out.push_back(tape.parameter(values_[i], sinks[i]));
  return out;
}

std::vector<Tensor> ParameterSet::zeros_like() const {
  std::vector<Tensor> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.emplace_back(v.shape());
  return out;
}

std::vector<Tensor> ParameterSet::gradients(const Tape& tape, const std::vector<Var>& bound) {
  std::vector<Tensor> out;
  out.reserve(bound.size());
  for (Var v : bound) out.push_back(tape.grad(v));
  return out;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.all_finite()) return false;
  }
  return true;
}

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = stddev * rng.normal();
  return t;
}

}  // namespace simplexlm
