#include "gicl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace gicl {

namespace {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    fail(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
         " vs " + shape_str(b.shape()));
}

void check_rank1(const char* op, const Tensor& t) {
  if (t.rank() != 1)
    fail(std::string(op) + ": expected rank-1 tensor, got " +
         shape_str(t.shape()));
}

void check_scalar(const char* op, const Tensor& t) {
  if (!t.is_scalar())
    fail(std::string(op) + ": expected scalar, got " + shape_str(t.shape()));
}

bool any_requires_grad(const std::vector<Tensor>& xs) {
  for (const auto& x : xs)
    if (x.requires_grad()) return true;
  return false;
}

// Allocates the op output and records it when gradients are needed.
Tensor make_output(Tape* tape, const char* op, std::vector<Tensor> inputs,
                   Shape shape, std::vector<double> values,
                   Tape::PullFn pull) {
  bool track = tape != nullptr && any_requires_grad(inputs);
  Tensor out = Tensor::from_values(std::move(shape), std::move(values), track);
  if (track) tape->record(op, std::move(inputs), out, std::move(pull));
  return out;
}

double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    s = e / (1.0 + e);
  }
  // keep the open-interval contract for saturated inputs
  s = std::min(s, 1.0 - std::numeric_limits<double>::epsilon() / 2);
  s = std::max(s, std::numeric_limits<double>::min());
  return s;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << " ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return from_values(shape, std::vector<double>(shape_size(shape), 0.0),
                     requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_values({1}, {v}, requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_size(shape) != values.size())
    fail("tensor: shape " + shape_str(shape) + " does not match " +
         std::to_string(values.size()) + " values");
  Tensor t;
  t.data_ = std::make_shared<TensorData>(
      TensorData{std::move(shape), std::move(values), requires_grad});
  return t;
}

double Tensor::item() const {
  if (!is_scalar()) fail("item: tensor is not scalar " + shape_str(shape()));
  return data_->values[0];
}

const std::vector<double>& GradientMap::grad(const Tensor& t) const {
  auto it = grads_.find(t.data());
  if (it == grads_.end())
    throw std::runtime_error("gradient map: no gradient for tensor");
  return it->second;
}

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  PullFn pull) {
  entries_.push_back(
      Entry{op, std::move(inputs), std::move(output), std::move(pull)});
}

GradientMap Tape::backward(const Tensor& loss) {
  if (!loss.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got " +
                                shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw std::invalid_argument(
        "backward: loss does not depend on any differentiable tensor");

  GradientMap gm;
  auto& grads = gm.raw();
  grads[loss.data()] = {1.0};

  GradOf grad_of = [&grads](const Tensor& t) -> std::vector<double>& {
    auto& g = grads[t.data()];
    if (g.empty()) g.assign(t.size(), 0.0);
    return g;
  };

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    auto found = grads.find(it->output.data());
    if (found == grads.end()) continue;  // dead branch
    it->pull(found->second, grad_of);
  }
  clear();
  return gm;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2)
    fail("matmul: left operand must be rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  auto av = a.values();

  if (b.rank() == 1) {
    if (b.shape()[0] != k)
      fail("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
           shape_str(b.shape()));
    auto bv = b.values();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += av[i * k + j] * bv[j];
      out[i] = acc;
    }
    return make_output(
        tape, "matmul", {a, b}, {m}, std::move(out),
        [a, b, m, k](const std::vector<double>& g, const Tape::GradOf& grad) {
          auto av2 = a.values();
          auto bv2 = b.values();
          if (a.requires_grad()) {
            auto& ga = grad(a);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < k; ++j)
                ga[i * k + j] += g[i] * bv2[j];
          }
          if (b.requires_grad()) {
            auto& gb = grad(b);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < k; ++j)
                gb[j] += av2[i * k + j] * g[i];
          }
        });
  }

  if (b.rank() != 2 || b.shape()[0] != k)
    fail("matmul: shape mismatch " + shape_str(a.shape()) + " x " +
         shape_str(b.shape()));
  const std::size_t n = b.shape()[1];
  auto bv = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      double aij = av[i * k + j];
      for (std::size_t c = 0; c < n; ++c) out[i * n + c] += aij * bv[j * n + c];
    }
  return make_output(
      tape, "matmul", {a, b}, {m, n}, std::move(out),
      [a, b, m, k, n](const std::vector<double>& g, const Tape::GradOf& grad) {
        auto av2 = a.values();
        auto bv2 = b.values();
        if (a.requires_grad()) {
          auto& ga = grad(a);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              double acc = 0.0;
              for (std::size_t c = 0; c < n; ++c)
                acc += g[i * n + c] * bv2[j * n + c];
              ga[i * k + j] += acc;
            }
        }
        if (b.requires_grad()) {
          auto& gb = grad(b);
          for (std::size_t j = 0; j < k; ++j)
            for (std::size_t c = 0; c < n; ++c) {
              double acc = 0.0;
              for (std::size_t i = 0; i < m; ++i)
                acc += av2[i * k + j] * g[i * n + c];
              gb[j * n + c] += acc;
            }
        }
      });
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  return add_n(tape, {a, b});
}

Tensor add_n(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("add_n: needs at least one input");
  for (const auto& x : xs) check_same_shape("add_n", xs[0], x);
  std::vector<double> out(xs[0].size(), 0.0);
  for (const auto& x : xs) {
    auto v = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  return make_output(
      tape, "add_n", xs, xs[0].shape(), std::move(out),
      [xs](const std::vector<double>& g, const Tape::GradOf& grad) {
        for (const auto& x : xs) {
          if (!x.requires_grad()) continue;
          auto& gx = grad(x);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
      });
}

Tensor concat(Tape* tape, const Tensor& a, const Tensor& b) {
  return concat_n(tape, {a, b});
}

Tensor concat_n(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("concat_n: needs at least one input");
  std::size_t total = 0;
  for (const auto& x : xs) {
    check_rank1("concat_n", x);
    total += x.size();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& x : xs) {
    auto v = x.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return make_output(
      tape, "concat_n", xs, {total}, std::move(out),
      [xs](const std::vector<double>& g, const Tape::GradOf& grad) {
        std::size_t off = 0;
        for (const auto& x : xs) {
          if (x.requires_grad()) {
            auto& gx = grad(x);
            for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[off + i];
          }
          off += x.size();
        }
      });
}

Tensor relu(Tape* tape, const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_output(
      tape, "relu", {x}, x.shape(), std::move(out),
      [x](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (!x.requires_grad()) return;
        auto& gx = grad(x);
        auto v = x.values();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (v[i] > 0.0) gx[i] += g[i];
      });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
  std::vector<double> out(x.size());
  auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(v[i]);
  std::vector<double> saved = out;
  return make_output(
      tape, "sigmoid", {x}, x.shape(), std::move(out),
      [x, saved](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (!x.requires_grad()) return;
        auto& gx = grad(x);
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += g[i] * saved[i] * (1.0 - saved[i]);
      });
}

Tensor mean(Tape* tape, const std::vector<Tensor>& xs) {
  if (xs.empty()) fail("mean: needs at least one input");
  for (const auto& x : xs) check_same_shape("mean", xs[0], x);
  const double inv = 1.0 / static_cast<double>(xs.size());
  std::vector<double> out(xs[0].size(), 0.0);
  for (const auto& x : xs) {
    auto v = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i] * inv;
  }
  return make_output(
      tape, "mean", xs, xs[0].shape(), std::move(out),
      [xs, inv](const std::vector<double>& g, const Tape::GradOf& grad) {
        for (const auto& x : xs) {
          if (!x.requires_grad()) continue;
          auto& gx = grad(x);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * inv;
        }
      });
}

Tensor softmax(Tape* tape, const Tensor& x) {
  check_rank1("softmax", x);
  if (x.size() == 0) fail("softmax: empty input");
  auto v = x.values();
  double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(x.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    denom += out[i];
  }
  for (double& o : out) o /= denom;
  std::vector<double> saved = out;
  return make_output(
      tape, "softmax", {x}, x.shape(), std::move(out),
      [x, saved](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (!x.requires_grad()) return;
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * saved[i];
        auto& gx = grad(x);
        for (std::size_t i = 0; i < g.size(); ++i)
          gx[i] += saved[i] * (g[i] - gy);
      });
}

Tensor softmax_cross_entropy(Tape* tape, const Tensor& logits,
                             std::size_t target) {
  check_rank1("softmax_cross_entropy", logits);
  if (target >= logits.size())
    fail("softmax_cross_entropy: target " + std::to_string(target) +
         " out of range for " + shape_str(logits.shape()));
  auto v = logits.values();
  double mx = *std::max_element(v.begin(), v.end());
  double denom = 0.0;
  for (double lv : v) denom += std::exp(lv - mx);
  double loss = std::log(denom) + mx - v[target];
  return make_output(
      tape, "softmax_cross_entropy", {logits}, {1}, {loss},
      [logits, target](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (!logits.requires_grad()) return;
        auto v2 = logits.values();
        double mx2 = *std::max_element(v2.begin(), v2.end());
        double denom2 = 0.0;
        for (double lv : v2) denom2 += std::exp(lv - mx2);
        auto& gl = grad(logits);
        for (std::size_t i = 0; i < v2.size(); ++i) {
          double p = std::exp(v2[i] - mx2) / denom2;
          gl[i] += g[0] * (p - (i == target ? 1.0 : 0.0));
        }
      });
}

Tensor cosine_similarity(Tape* tape, const Tensor& u, const Tensor& v) {
  check_rank1("cosine_similarity", u);
  check_same_shape("cosine_similarity", u, v);
  auto uv = u.values();
  auto vv = v.values();
  double duv = 0.0, nu2 = 0.0, nv2 = 0.0;
  for (std::size_t i = 0; i < uv.size(); ++i) {
    duv += uv[i] * vv[i];
    nu2 += uv[i] * uv[i];
    nv2 += vv[i] * vv[i];
  }
  double nu = std::sqrt(nu2), nv = std::sqrt(nv2);
  if (nu < 1e-12 || nv < 1e-12) return Tensor::scalar(0.0);
  double cos = duv / (nu * nv);
  return make_output(
      tape, "cosine_similarity", {u, v}, {1}, {cos},
      [u, v, nu, nv, cos](const std::vector<double>& g,
                          const Tape::GradOf& grad) {
        auto uv2 = u.values();
        auto vv2 = v.values();
        if (u.requires_grad()) {
          auto& gu = grad(u);
          for (std::size_t i = 0; i < uv2.size(); ++i)
            gu[i] += g[0] * (vv2[i] / (nu * nv) - cos * uv2[i] / (nu * nu));
        }
        if (v.requires_grad()) {
          auto& gv = grad(v);
          for (std::size_t i = 0; i < vv2.size(); ++i)
            gv[i] += g[0] * (uv2[i] / (nu * nv) - cos * vv2[i] / (nv * nv));
        }
      });
}

Tensor scalar_scale(Tape* tape, const Tensor& x, const Tensor& s) {
  check_scalar("scalar_scale", s);
  double sv = s.item();
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * sv;
  return make_output(
      tape, "scalar_scale", {x, s}, x.shape(), std::move(out),
      [x, s, sv](const std::vector<double>& g, const Tape::GradOf& grad) {
        auto xv2 = x.values();
        if (x.requires_grad()) {
          auto& gx = grad(x);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sv;
        }
        if (s.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv2[i];
          grad(s)[0] += acc;
        }
      });
}

Tensor div_scalar(Tape* tape, const Tensor& x, const Tensor& s) {
  check_scalar("div_scalar", s);
  double sv = s.item();
  if (std::abs(sv) < 1e-300) fail("div_scalar: divisor too close to zero");
  std::vector<double> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] / sv;
  return make_output(
      tape, "div_scalar", {x, s}, x.shape(), std::move(out),
      [x, s, sv](const std::vector<double>& g, const Tape::GradOf& grad) {
        auto xv2 = x.values();
        if (x.requires_grad()) {
          auto& gx = grad(x);
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sv;
        }
        if (s.requires_grad()) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i)
            acc += g[i] * xv2[i] / (sv * sv);
          grad(s)[0] -= acc;
        }
      });
}

Tensor dot(Tape* tape, const Tensor& u, const Tensor& v) {
  check_rank1("dot", u);
  check_same_shape("dot", u, v);
  double acc = 0.0;
  auto uv = u.values();
  auto vv = v.values();
  for (std::size_t i = 0; i < uv.size(); ++i) acc += uv[i] * vv[i];
  return make_output(
      tape, "dot", {u, v}, {1}, {acc},
      [u, v](const std::vector<double>& g, const Tape::GradOf& grad) {
        auto uv2 = u.values();
        auto vv2 = v.values();
        if (u.requires_grad()) {
          auto& gu = grad(u);
          for (std::size_t i = 0; i < uv2.size(); ++i) gu[i] += g[0] * vv2[i];
        }
        if (v.requires_grad()) {
          auto& gv = grad(v);
          for (std::size_t i = 0; i < vv2.size(); ++i) gv[i] += g[0] * uv2[i];
        }
      });
}

Tensor element(Tape* tape, const Tensor& x, std::size_t i) {
  check_rank1("element", x);
  if (i >= x.size())
    fail("element: index " + std::to_string(i) + " out of range for " +
         shape_str(x.shape()));
  return make_output(
      tape, "element", {x}, {1}, {x.values()[i]},
      [x, i](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (x.requires_grad()) grad(x)[i] += g[0];
      });
}

Tensor row(Tape* tape, const Tensor& m, std::size_t i) {
  if (m.rank() != 2)
    fail("row: expected rank-2 tensor, got " + shape_str(m.shape()));
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  if (i >= rows)
    fail("row: index " + std::to_string(i) + " out of range for " +
         shape_str(m.shape()));
  auto mv = m.values();
  std::vector<double> out(mv.begin() + i * cols, mv.begin() + (i + 1) * cols);
  return make_output(
      tape, "row", {m}, {cols}, std::move(out),
      [m, i, cols](const std::vector<double>& g, const Tape::GradOf& grad) {
        if (!m.requires_grad()) return;
        auto& gm = grad(m);
        for (std::size_t j = 0; j < cols; ++j) gm[i * cols + j] += g[j];
      });
}

}  // namespace gicl
