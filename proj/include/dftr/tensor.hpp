// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dftr {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when an op would emit NaN or Inf.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TapeError : std::logic_error {
  using std::logic_error::logic_error;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
};

/// Shared handle to a dense row-major array of doubles. Values are treated as
/// immutable once an op has produced them; only leaves (parameters, inputs)
/// are written through `mutable_data()`.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> grad_buffer() const;
  void clear_grad() const { impl_->grad.clear(); }

  TensorImpl* impl() const { return impl_.get(); }
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Ops append themselves to the
/// tape active on the current thread (see TapeScope), so the record is
/// topologically ordered by construction.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse order.
  /// A tape can be walked once; call clear() before reusing it.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

/// Makes `tape` the recording target for this thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// True when an op over `inputs` must be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);

/// Throws NonFiniteError naming `op_name` if any value is NaN or Inf.
void check_finite(std::span<const double> values, const char* op_name);

/// Creates the output tensor of an op and, when any input requires a gradient
/// and a tape is active, registers `make_backward(out)` for it. The backward
/// rule reads the output gradient through the returned tensor.
template <class Inputs, class MakeBackward>
Tensor make_result(Shape shape, std::vector<double> values, const Inputs& inputs,
                   MakeBackward&& make_backward, const char* op_name) {
  check_finite(values, op_name);
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  Tape* tape = active_tape();
  if (tape == nullptr) return out;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.set_requires_grad(true);
  Tape::BackwardFn fn = make_backward(out);
  tape->record(std::vector<Tensor>(inputs.begin(), inputs.end()), out, std::move(fn));
  return out;
}

template <class MakeBackward>
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<Tensor> inputs,
                   MakeBackward&& make_backward, const char* op_name) {
  return make_result<std::initializer_list<Tensor>>(std::move(shape), std::move(values), inputs,
                                                    std::forward<MakeBackward>(make_backward), op_name);
}

}  // namespace dftr
