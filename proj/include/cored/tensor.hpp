#pragma once

// Dense row-major float64 tensors with reverse-mode automatic
// differentiation. Operations executed through a Tape append a backward
// closure in execution order; Tape::backward replays the closures in
// reverse, accumulating into .grad buffers, so execution order doubles as
// the topological order and fan-out sums up naturally.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cored/errors.hpp"

namespace cored {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
};

inline std::vector<double>& ensure_grad(TensorStorage& s) {
  if (s.grad.empty()) s.grad.assign(s.data.size(), 0.0);
  return s.grad;
}

}  // namespace detail

// Value-semantics handle to shared storage: copying a Tensor aliases the
// same buffer (that is what lets tape closures observe parameter updates);
// clone() makes an independent deep copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, double fill, bool requires_grad = false)
      : s_(std::make_shared<detail::TensorStorage>()) {
    s_->shape = std::move(shape);
    s_->data.assign(detail::shape_size(s_->shape), fill);
    s_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : s_(std::make_shared<detail::TensorStorage>()) {
    if (detail::shape_size(shape) != values.size()) {
      throw DimensionError("tensor shape " + detail::shape_str(shape) +
                           " does not match value count " +
                           std::to_string(values.size()));
    }
    s_->shape = std::move(shape);
    s_->data = std::move(values);
    s_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(s_); }

  const Shape& shape() const { return s_->shape; }
  std::size_t ndim() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }

  std::size_t rows() const {
    require_2d();
    return s_->shape[0];
  }
  std::size_t cols() const {
    require_2d();
    return s_->shape[1];
  }

  std::vector<double>& data() { return s_->data; }
  const std::vector<double>& data() const { return s_->data; }

  double at(std::size_t i, std::size_t j) const {
    require_2d();
    return s_->data[i * s_->shape[1] + j];
  }

  double value() const {
    if (size() != 1) {
      throw ContractError("value() requires a scalar tensor, got shape " +
                          detail::shape_str(s_->shape));
    }
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool rg) { s_->requires_grad = rg; }

  bool has_grad() const { return !s_->grad.empty(); }

  std::vector<double>& grad() { return detail::ensure_grad(*s_); }

  double grad_at(std::size_t i) const {
    return s_->grad.empty() ? 0.0 : s_->grad[i];
  }

  void zero_grad() {
    if (!s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  }

  // independent deep copy; gradient buffer is not carried over
  Tensor clone() const {
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage>();
    t.s_->shape = s_->shape;
    t.s_->data = s_->data;
    t.s_->requires_grad = s_->requires_grad;
    return t;
  }

  Tensor detached() const {
    Tensor t = clone();
    t.s_->requires_grad = false;
    return t;
  }

  const std::shared_ptr<detail::TensorStorage>& storage() const { return s_; }

 private:
  void require_2d() const {
    if (s_->shape.size() != 2) {
      throw DimensionError("expected a 2-d tensor, got shape " +
                           detail::shape_str(s_->shape));
    }
  }

  std::shared_ptr<detail::TensorStorage> s_;
};

// Ordered record of executed operations. A non-recording tape runs the same
// forward arithmetic without building backward closures (evaluation mode).
class Tape {
 public:
  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t node_count() const { return nodes_.size(); }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  // Seeds dLoss/dLoss = 1 and replays all nodes in reverse order exactly
  // once. Nodes whose output never received a gradient propagate nothing.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          detail::shape_str(loss.shape()));
    }
    if (loss.requires_grad()) {
      loss.storage()->grad.assign(1, 1.0);
    }
    for (std::size_t i = nodes_.size(); i > 0; --i) {
      nodes_[i - 1]();
    }
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool recording_ = true;
};

namespace detail {

inline bool track(const Tape& tape, const Tensor& a) {
  return tape.recording() && a.requires_grad();
}
inline bool track(const Tape& tape, const Tensor& a, const Tensor& b) {
  return tape.recording() && (a.requires_grad() || b.requires_grad());
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

// C[n x m] = A[n x k] * B[k x m]
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " +
                         detail::shape_str(a.shape()) + " and " +
                         detail::shape_str(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out(Shape{n, m}, 0.0, detail::track(tape, a, b));
  {
    const auto& A = a.data();
    const auto& B = b.data();
    auto& C = out.data();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = A[i * k + kk];
        const double* brow = B.data() + kk * m;
        double* crow = C.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    tape.record([sa, sb, so, n, k, m] {
      if (so->grad.empty()) return;
      const auto& g = so->grad;
      if (sa->requires_grad) {
        auto& ga = detail::ensure_grad(*sa);  // dA += dC * B^T
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double s = 0.0;
            const double* grow = g.data() + i * m;
            const double* brow = sb->data.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
            ga[i * k + kk] += s;
          }
        }
      }
      if (sb->requires_grad) {
        auto& gb = detail::ensure_grad(*sb);  // dB += A^T * dC
        for (std::size_t i = 0; i < n; ++i) {
          const double* arow = sa->data.data() + i * k;
          const double* grow = g.data() + i * m;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = arow[kk];
            double* gbrow = gb.data() + kk * m;
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

// x[n x m] + bias[m], broadcast over rows (the only broadcast supported)
inline Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || bias.size() != x.cols()) {
    throw DimensionError("add_bias: shapes " + detail::shape_str(x.shape()) +
                         " and " + detail::shape_str(bias.shape()));
  }
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out(Shape{n, m}, 0.0, detail::track(tape, x, bias));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      out.data()[i * m + j] = x.data()[i * m + j] + bias.data()[j];
  if (out.requires_grad()) {
    auto sx = x.storage(), sb = bias.storage(), so = out.storage();
    tape.record([sx, sb, so, n, m] {
      if (so->grad.empty()) return;
      const auto& g = so->grad;
      if (sx->requires_grad) {
        auto& gx = detail::ensure_grad(*sx);
        for (std::size_t i = 0; i < n * m; ++i) gx[i] += g[i];
      }
      if (sb->requires_grad) {
        auto& gb = detail::ensure_grad(*sb);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
      }
    });
  }
  return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape(), 0.0, detail::track(tape, a, b));
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    tape.record([sa, sb, so] {
      if (so->grad.empty()) return;
      const auto& g = so->grad;
      if (sa->requires_grad) {
        auto& ga = detail::ensure_grad(*sa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (sb->requires_grad) {
        auto& gb = detail::ensure_grad(*sb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape(), 0.0, detail::track(tape, a, b));
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    tape.record([sa, sb, so] {
      if (so->grad.empty()) return;
      const auto& g = so->grad;
      if (sa->requires_grad) {
        auto& ga = detail::ensure_grad(*sa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (sb->requires_grad) {
        auto& gb = detail::ensure_grad(*sb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

// elementwise product; using the same tensor for both operands exercises
// gradient accumulation across fan-out (d(x*x)/dx = 2x)
inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape(), 0.0, detail::track(tape, a, b));
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (out.requires_grad()) {
    auto sa = a.storage(), sb = b.storage(), so = out.storage();
    tape.record([sa, sb, so] {
      if (so->grad.empty()) return;
      const auto& g = so->grad;
      if (sa->requires_grad) {
        auto& ga = detail::ensure_grad(*sa);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sb->data[i];
      }
      if (sb->requires_grad) {
        auto& gb = detail::ensure_grad(*sb);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * sa->data[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Tape& tape, const Tensor& x, double c) {
  Tensor out(x.shape(), 0.0, detail::track(tape, x));
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = c * x.data()[i];
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so, c] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < so->grad.size(); ++i)
        gx[i] += c * so->grad[i];
    });
  }
  return out;
}

// max(0, x); subgradient 0 at x == 0
inline Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out(x.shape(), 0.0, detail::track(tape, x));
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < so->grad.size(); ++i)
        if (sx->data[i] > 0.0) gx[i] += so->grad[i];
    });
  }
  return out;
}

// row-wise tempered softmax with max subtraction:
//   out[i][j] = exp((x[i][j] - max_i) / T) / sum_k exp((x[i][k] - max_i) / T)
inline Tensor softmax(Tape& tape, const Tensor& logits, double temperature) {
  if (temperature <= 0.0) {
    throw ParameterError("softmax temperature must be positive, got " +
                         std::to_string(temperature));
  }
  if (logits.ndim() != 2 || logits.cols() == 0) {
    throw DimensionError("softmax expects [N x C] logits, got " +
                         detail::shape_str(logits.shape()));
  }
  const std::size_t n = logits.rows(), c = logits.cols();
  Tensor out(Shape{n, c}, 0.0, detail::track(tape, logits));
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data().data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = row[j] > mx ? row[j] : mx;
    double z = 0.0;
    double* orow = out.data().data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      orow[j] = std::exp((row[j] - mx) / temperature);
      z += orow[j];
    }
    for (std::size_t j = 0; j < c; ++j) orow[j] /= z;
  }
  if (out.requires_grad()) {
    auto sx = logits.storage(), so = out.storage();
    tape.record([sx, so, n, c, temperature] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < n; ++i) {
        const double* y = so->data.data() + i * c;
        const double* g = so->grad.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < c; ++j)
          gx[i * c + j] += y[j] * (g[j] - dot) / temperature;
      }
    });
  }
  return out;
}

// clamp to [lo, hi]; gradient passes only strictly inside the interval
inline Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  if (!(lo < hi)) {
    throw ParameterError("clamp: lo must be below hi");
  }
  Tensor out(x.shape(), 0.0, detail::track(tape, x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x.data()[i];
    out.data()[i] = v < lo ? lo : (v > hi ? hi : v);
  }
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so, lo, hi] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < so->grad.size(); ++i) {
        const double v = sx->data[i];
        if (v > lo && v < hi) gx[i] += so->grad[i];
      }
    });
  }
  return out;
}

inline Tensor log(Tape& tape, const Tensor& x) {
  Tensor out(x.shape(), 0.0, detail::track(tape, x));
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = std::log(x.data()[i]);
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < so->grad.size(); ++i)
        gx[i] += so->grad[i] / sx->data[i];
    });
  }
  return out;
}

inline Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s, detail::track(tape, x));
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += so->grad[0];
    });
  }
  return out;
}

inline Tensor mean(Tape& tape, const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  const double inv = 1.0 / static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s * inv, detail::track(tape, x));
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so, inv] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += so->grad[0] * inv;
    });
  }
  return out;
}

// out[i] = sum_j x[i][j]
inline Tensor row_sum(Tape& tape, const Tensor& x) {
  const std::size_t n = x.rows(), c = x.cols();
  Tensor out(Shape{n}, 0.0, detail::track(tape, x));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x.data()[i * c + j];
    out.data()[i] = s;
  }
  if (out.requires_grad()) {
    auto sx = x.storage(), so = out.storage();
    tape.record([sx, so, n, c] {
      if (so->grad.empty()) return;
      auto& gx = detail::ensure_grad(*sx);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += so->grad[i];
    });
  }
  return out;
}

// out[i] = probs[i][labels[i]]
inline Tensor select_true_class(Tape& tape, const Tensor& probs,
                                const std::vector<std::uint8_t>& labels) {
  const std::size_t n = probs.rows(), c = probs.cols();
  if (labels.size() != n) {
    throw DimensionError("select_true_class: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw DataError("label " + std::to_string(int(labels[i])) +
                      " out of range for " + std::to_string(c) + " classes");
    }
  }
  Tensor out(Shape{n}, 0.0, detail::track(tape, probs));
  for (std::size_t i = 0; i < n; ++i)
    out.data()[i] = probs.data()[i * c + labels[i]];
  if (out.requires_grad()) {
    auto sp = probs.storage(), so = out.storage();
    tape.record([sp, so, labels, c] {
      if (so->grad.empty()) return;
      auto& gp = detail::ensure_grad(*sp);
      for (std::size_t i = 0; i < so->grad.size(); ++i)
        gp[i * c + labels[i]] += so->grad[i];
    });
  }
  return out;
}

// mean of v over a fixed index subset (used for per-block means)
inline Tensor subset_mean(Tape& tape, const Tensor& v,
                          const std::vector<std::size_t>& indices) {
  if (v.ndim() != 1) {
    throw DimensionError("subset_mean expects a 1-d tensor, got " +
                         detail::shape_str(v.shape()));
  }
  if (indices.empty()) throw ContractError("subset_mean over an empty subset");
  for (std::size_t i : indices) {
    if (i >= v.size()) {
      throw DimensionError("subset_mean index " + std::to_string(i) +
                           " out of range " + std::to_string(v.size()));
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  double s = 0.0;
  for (std::size_t i : indices) s += v.data()[i];
  Tensor out = Tensor::scalar(s * inv, detail::track(tape, v));
  if (out.requires_grad()) {
    auto sv = v.storage(), so = out.storage();
    tape.record([sv, so, indices, inv] {
      if (so->grad.empty()) return;
      auto& gv = detail::ensure_grad(*sv);
      for (std::size_t i : indices) gv[i] += so->grad[0] * inv;
    });
  }
  return out;
}

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace cored
