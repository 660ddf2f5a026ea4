#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gkt/autograd.hpp"
#include "gkt/tensor.hpp"

namespace gkt {

struct ParamRef {
  std::int64_t index = -1;
  bool valid() const { return index >= 0; }
};

/// Flat named parameter storage shared by model construction, the optimizer
/// and the checkpoint format. Layers keep ParamRef indices; a forward pass
/// binds every parameter to a leaf Var on the active tape.
class ParamStore {
 public:
  ParamRef add(std::string name, Tensor value) {
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return ParamRef{static_cast<std::int64_t>(values_.size()) - 1};
  }

  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }
  const std::string& name(std::int64_t i) const { return names_[static_cast<std::size_t>(i)]; }
  Tensor& value(std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  const Tensor& value(std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }
  Tensor& value(ParamRef r) { return value(r.index); }
  const Tensor& value(ParamRef r) const { return value(r.index); }

  std::int64_t total_scalars() const {
    std::int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
  }

  std::vector<Var> bind(Tape& tape) const {
    std::vector<Var> bound;
    bound.reserve(values_.size());
    for (const Tensor& t : values_) bound.push_back(tape.leaf(t));
    return bound;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

}  // namespace gkt
