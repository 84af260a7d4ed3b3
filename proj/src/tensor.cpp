// SPDX-License-Identifier: Apache-2.0
#include "dftr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dftr {
namespace {
thread_local Tape* current_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  impl->data.assign(dftr::numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  if (dftr::numel(shape) != values.size())
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::grad_buffer() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (consumed_) throw TapeError("tape already consumed by backward(); call clear() first");
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward() called twice without clearing the tape");
  if (!loss.defined() || loss.numel() != 1)
    throw TapeError("backward() needs a scalar loss");
  auto it = std::find_if(entries_.rbegin(), entries_.rend(),
                         [&](const Entry& e) { return e.output.same(loss); });
  if (it == entries_.rend()) throw TapeError("loss was not produced on this tape");
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (; it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
  consumed_ = true;
}

void Tape::clear() {
  entries_.clear();
  consumed_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

Tape* active_tape() { return current_tape; }

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (current_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

void check_finite(std::span<const double> values, const char* op_name) {
  // v - v is 0 for finite v and NaN otherwise.
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = values.size(), body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4)
    for (std::size_t l = 0; l < 4; ++l) acc[l] += values[i + l] - values[i + l];
  for (std::size_t i = body; i < n; ++i) acc[0] += values[i] - values[i];
  if (std::isnan(acc[0] + acc[1] + acc[2] + acc[3]))
    throw NonFiniteError(std::string("non-finite value produced by ") + op_name);
}

}  // namespace dftr
