#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gicl {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
};

// Value handle over shared dense f64 storage. Copies share storage; ops
// always allocate fresh outputs, so tensors behave as immutable values
// except for in-place parameter updates by the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return data_->shape; }
  std::size_t rank() const { return data_->shape.size(); }
  std::size_t size() const { return data_->values.size(); }
  bool is_scalar() const { return rank() == 1 && size() == 1; }
  bool requires_grad() const { return data_->requires_grad; }

  double item() const;  // scalar value; throws on non-scalar
  std::span<const double> values() const { return data_->values; }
  std::span<double> mutable_values() { return data_->values; }

  const TensorData* data() const { return data_.get(); }

 private:
  std::shared_ptr<TensorData> data_;
};

class GradientMap {
 public:
  bool contains(const Tensor& t) const {
    return grads_.count(t.data()) != 0;
  }
  // Gradient buffer for t; throws if t received no gradient.
  const std::vector<double>& grad(const Tensor& t) const;

  std::unordered_map<const TensorData*, std::vector<double>>& raw() {
    return grads_;
  }
  const std::unordered_map<const TensorData*, std::vector<double>>& raw()
      const {
    return grads_;
  }

 private:
  std::unordered_map<const TensorData*, std::vector<double>> grads_;
};

// Define-by-run tape: every differentiable op appends one entry, so entries
// are in topological order by construction. A tape lives for one forward
// pass; backward() consumes and clears it.
class Tape {
 public:
  using GradOf = std::function<std::vector<double>&(const Tensor&)>;
  using PullFn =
      std::function<void(const std::vector<double>& out_grad, const GradOf&)>;

  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              PullFn pull);

  // Reverse sweep from a scalar loss. Returns gradients for every tensor on
  // the tape that requires grad; the tape is cleared afterwards.
  GradientMap backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    PullFn pull;
  };
  std::vector<Entry> entries_;
};

// Forward ops. Passing tape == nullptr runs pure (nothing recorded, output
// never requires grad). Shape rules are strict: no broadcasting anywhere.
//
//   matmul(A[m,k], B[k,n]) -> [m,n];  matmul(A[m,k], x[k]) -> [m]
//   add / add_n / mean: identical shapes
//   concat / concat_n: rank-1 operands, sizes summed
//   relu / sigmoid: elementwise, any shape
//   softmax(x[k]) -> [k]
//   softmax_cross_entropy(logits[k], target < k) -> scalar
//   cosine_similarity(u[d], v[d]) -> scalar in [-1, 1]; if either norm is
//     below 1e-12 the result is the constant 0 (no gradient)
//   scalar_scale(x, s[1]) -> s * x;  div_scalar(x, s[1]) -> x / s
//   dot(u[d], v[d]) -> scalar
//   element(x[k], i) -> scalar x[i];  row(M[r,c], i) -> [c]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add_n(Tape* tape, const std::vector<Tensor>& xs);
Tensor concat(Tape* tape, const Tensor& a, const Tensor& b);
Tensor concat_n(Tape* tape, const std::vector<Tensor>& xs);
Tensor relu(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const std::vector<Tensor>& xs);
Tensor softmax(Tape* tape, const Tensor& x);
Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits,
                             std::size_t target);
Tensor cosine_similarity(Tape* tape, const Tensor& u, const Tensor& v);
Tensor scalar_scale(Tape* tape, const Tensor& x, const Tensor& s);
Tensor div_scalar(Tape* tape, const Tensor& x, const Tensor& s);
Tensor dot(Tape* tape, const Tensor& u, const Tensor& v);
Tensor element(Tape* tape, const Tensor& x, std::size_t i);
Tensor row(Tape* tape, const Tensor& m, std::size_t i);

}  // namespace gicl
