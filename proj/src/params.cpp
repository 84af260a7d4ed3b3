// SPDX-License-Identifier: Apache-2.0
#include "dftr/params.hpp"

#include <stdexcept>

namespace dftr {

double round_to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

ParamGroup group_for(std::string_view name) {
  return name.starts_with("encoder.") ? ParamGroup::Backbone : ParamGroup::Other;
}

Tensor ParamStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name " + name);
  for (auto& v : value.mutable_data()) v = round_to_f32(v);
  value.set_requires_grad(true);
  const auto group = group_for(name);
  entries_.push_back({std::move(name), value, group});
  return value;
}

const Parameter* ParamStore::find(std::string_view name) const {
  for (const auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

const Tensor& ParamStore::at(std::string_view name) const {
  const auto* p = find(name);
  if (p == nullptr) throw std::out_of_range("no parameter named " + std::string(name));
  return p->value;
}

void ParamStore::clear_grads() {
  for (auto& p : entries_) p.value.clear_grad();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.value.numel();
  return n;
}

Tensor Initializer::truncated_normal(const std::string& name, Shape shape, double std) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng_.truncated_normal(std);
  return store_.add(name, Tensor::from(std::move(shape), std::move(v)));
}

Tensor Initializer::zeros(const std::string& name, Shape shape) {
  return store_.add(name, Tensor::zeros(std::move(shape)));
}

Tensor Initializer::ones(const std::string& name, Shape shape) {
  return store_.add(name, Tensor::full(std::move(shape), 1.0));
}

}  // namespace dftr
