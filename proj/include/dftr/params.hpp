// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dftr/rng.hpp"
#include "dftr/tensor.hpp"

namespace dftr {

enum class ParamGroup { Backbone, Other };

struct Parameter {
  std::string name;
  Tensor value;
  ParamGroup group;
};

/// Parameters are stored at single precision: every stored value is exactly
/// representable as an f32, so checkpoints round-trip bit-exactly while all
/// arithmetic runs in double.
double round_to_f32(double v);

/// Named, ordered table of trainable tensors. Names under "encoder." form the
/// backbone group; everything else is "other".
class ParamStore {
 public:
  Tensor add(std::string name, Tensor value);

  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& entries() { return entries_; }
  const Parameter* find(std::string_view name) const;
  const Tensor& at(std::string_view name) const;

  void clear_grads();
  std::size_t scalar_count() const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::vector<Parameter> entries_;
};

ParamGroup group_for(std::string_view name);

/// Creates parameters in registration order, drawing from one Rng stream so
/// that a seed fully determines the initial model.
class Initializer {
 public:
  Initializer(ParamStore& store, Rng& rng) : store_(store), rng_(rng) {}

  Tensor truncated_normal(const std::string& name, Shape shape, double std = 0.02);
  Tensor zeros(const std::string& name, Shape shape);
  Tensor ones(const std::string& name, Shape shape);

 private:
  ParamStore& store_;
  Rng& rng_;
};

}  // namespace dftr
