#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

// Dense double tensors with define-by-run reverse-mode differentiation.
// Graphs are rebuilt every forward pass; backward() walks the tape in
// reverse topological order. Heavy lifting (matmul) is delegated to Eigen.

namespace frar {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NotScalarError : std::runtime_error {
  explicit NotScalarError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on demand
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls node.grad into parents' grads

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline bool& recording_flag() {
  thread_local bool recording = true;
  return recording;
}

}  // namespace detail

// Disables tape recording in its scope (forward-only evaluation).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::recording_flag()) { detail::recording_flag() = false; }
  ~NoGradGuard() { detail::recording_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return from(std::move(shape), std::move(d));
  }

  static Tensor full(Shape shape, double v) {
    std::vector<double> d(shape_numel(shape), v);
    return from(std::move(shape), std::move(d));
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  // Leaf with requires_grad set; the unit of optimization.
  static Tensor parameter(Shape shape, std::vector<double> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }

  std::size_t rows() const {
    return rank() == 1 ? 1 : node_->shape[0];
  }
  std::size_t cols() const {
    return rank() == 1 ? node_->shape[0] : node_->shape[rank() - 1];
  }

  const std::vector<double>& value() const { return node_->value; }
  const std::vector<double>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const {
    if (size() != 1) throw NotScalarError("item: tensor has shape " + shape_str(shape()));
    return node_->value[0];
  }

  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // In-place write for optimizer updates; never used by graph ops.
  std::vector<double>& mutable_value() { return node_->value; }
  std::vector<double>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op(Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::Node&)> backprop);
};

// Builds an op result node; records parents only when grads can flow.
inline Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backprop) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool track = detail::recording_flag();
  if (track) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    track = any;
  }
  if (track) {
    n->requires_grad = true;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    n->backprop = std::move(backprop);
  }
  return Tensor(std::move(n));
}

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

inline void check_matrix(const char* op, const Tensor& t) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node();
  auto bn = b.node();
  return make_op(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an, c](detail::Node& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] > 0.0 ? a.value()[i] : 0.0;
  auto an = a.node();
  return make_op(a.shape(), std::move(out), {a}, [an](detail::Node& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (an->value[i] > 0.0) an->grad[i] += n.grad[i];
  });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.value()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto an = a.node();
  auto vals = out;
  return make_op(a.shape(), std::move(out), {a}, [an, vals](detail::Node& n) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      an->grad[i] += n.grad[i] * vals[i] * (1.0 - vals[i]);
  });
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_matrix("matmul", a);
  detail::check_matrix("matmul", b);
  if (a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  {
    detail::CMap A(a.value().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
    detail::CMap B(b.value().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
    detail::MMap C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    C.noalias() = A * B;
  }
  auto an = a.node();
  auto bn = b.node();
  return make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& node) {
    detail::CMap G(node.grad.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    if (an->requires_grad) {
      an->ensure_grad();
      detail::CMap B(bn->value.data(), static_cast<Eigen::Index>(k),
                     static_cast<Eigen::Index>(n));
      detail::MMap GA(an->grad.data(), static_cast<Eigen::Index>(m),
                      static_cast<Eigen::Index>(k));
      GA.noalias() += G * B.transpose();
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::CMap A(an->value.data(), static_cast<Eigen::Index>(m),
                     static_cast<Eigen::Index>(k));
      detail::MMap GB(bn->grad.data(), static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(n));
      GB.noalias() += A.transpose() * G;
    }
  });
}

// X: [n, m], bias: [m]; adds bias to every row.
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  detail::check_matrix("add_bias", x);
  if (bias.rank() != 1 || bias.shape()[0] != x.shape()[1])
    throw ShapeError("add_bias: shapes " + shape_str(x.shape()) + " + " +
                     shape_str(bias.shape()));
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.value()[i * m + j] + bias.value()[j];
  auto xn = x.node();
  auto bn = bias.node();
  return make_op({n, m}, std::move(out), {x, bias}, [xn, bn, n, m](detail::Node& node) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < n * m; ++i) xn->grad[i] += node.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) bn->grad[j] += node.grad[i * m + j];
    }
  });
}

// Concatenate rank-2 tensors along columns.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts[0].rank() == 2 ? parts[0].shape()[0] : 1;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::check_matrix("concat_cols", p);
    if (p.shape()[0] != n)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                       shape_str(p.shape()));
    total += p.shape()[1];
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t m = p.shape()[1];
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(p.value().data() + i * m, m, out.data() + i * total + off);
    off += m;
  }
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::size_t o = 0;
  for (const auto& p : parts) {
    offsets.push_back(o);
    o += p.shape()[1];
    nodes.push_back(p.node());
  }
  return make_op({n, total}, std::move(out), parts,
                 [nodes, offsets, n, total](detail::Node& node) {
                   for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                     auto& pn = nodes[pi];
                     if (!pn->requires_grad) continue;
                     pn->ensure_grad();
                     const std::size_t m = pn->shape[1];
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < m; ++j)
                         pn->grad[i * m + j] += node.grad[i * total + offsets[pi] + j];
                   }
                 });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  detail::check_matrix("concat_rows", parts[0]);
  const std::size_t m = parts[0].shape()[1];
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::check_matrix("concat_rows", p);
    if (p.shape()[1] != m)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                       " vs " + shape_str(p.shape()));
    total += p.shape()[0];
  }
  std::vector<double> out;
  out.reserve(total * m);
  for (const auto& p : parts) out.insert(out.end(), p.value().begin(), p.value().end());
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::size_t o = 0;
  for (const auto& p : parts) {
    offsets.push_back(o);
    o += p.shape()[0] * m;
    nodes.push_back(p.node());
  }
  return make_op({total, m}, std::move(out), parts, [nodes, offsets](detail::Node& node) {
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      auto& pn = nodes[pi];
      if (!pn->requires_grad) continue;
      pn->ensure_grad();
      for (std::size_t i = 0; i < pn->grad.size(); ++i)
        pn->grad[i] += node.grad[offsets[pi] + i];
    }
  });
}

// Columns [c0, c1) of a rank-2 tensor.
inline Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  detail::check_matrix("slice_cols", x);
  if (c0 > c1 || c1 > x.shape()[1])
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") of " + shape_str(x.shape()));
  const std::size_t n = x.shape()[0], m = x.shape()[1], w = c1 - c0;
  std::vector<double> out(n * w);
  for (std::size_t i = 0; i < n; ++i)
    std::copy_n(x.value().data() + i * m + c0, w, out.data() + i * w);
  auto xn = x.node();
  return make_op({n, w}, std::move(out), {x}, [xn, n, m, w, c0](detail::Node& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) xn->grad[i * m + c0 + j] += node.grad[i * w + j];
  });
}

// out[i, :] = x[idx[i], :]
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  detail::check_matrix("gather_rows", x);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  for (auto i : idx)
    if (i >= n) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " +
                                 std::to_string(n) + " rows");
  std::vector<double> out(idx.size() * m);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x.value().data() + idx[i] * m, m, out.data() + i * m);
  auto xn = x.node();
  return make_op({idx.size(), m}, std::move(out), {x}, [xn, idx, m](detail::Node& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < m; ++j) xn->grad[idx[i] * m + j] += node.grad[i * m + j];
  });
}

// Each row repeated k times: [n, m] -> [n*k, m].
inline Tensor repeat_rows(const Tensor& x, std::size_t k) {
  detail::check_matrix("repeat_rows", x);
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  std::vector<double> out(n * k * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r)
      std::copy_n(x.value().data() + i * m, m, out.data() + (i * k + r) * m);
  auto xn = x.node();
  return make_op({n * k, m}, std::move(out), {x}, [xn, n, m, k](detail::Node& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t j = 0; j < m; ++j) xn->grad[i * m + j] += node.grad[(i * k + r) * m + j];
  });
}

// Sums consecutive groups of `group` rows: [n*group, m] -> [n, m].
inline Tensor group_sum_rows(const Tensor& x, std::size_t group) {
  detail::check_matrix("group_sum_rows", x);
  const std::size_t rows = x.shape()[0], m = x.shape()[1];
  if (group == 0 || rows % group != 0)
    throw ShapeError("group_sum_rows: " + std::to_string(rows) + " rows not divisible by group " +
                     std::to_string(group));
  const std::size_t n = rows / group;
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < m; ++j) out[(i / group) * m + j] += x.value()[i * m + j];
  auto xn = x.node();
  return make_op({n, m}, std::move(out), {x}, [xn, rows, m, group](detail::Node& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < m; ++j) xn->grad[i * m + j] += node.grad[(i / group) * m + j];
  });
}

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size())
    throw ShapeError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto xn = x.node();
  std::vector<double> out = x.value();
  return make_op(std::move(shape), std::move(out), {x}, [xn](detail::Node& node) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < node.grad.size(); ++i) xn->grad[i] += node.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  auto an = a.node();
  return make_op({1}, {s}, {a}, [an](detail::Node& node) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += node.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.value()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto an = a.node();
  return make_op({1}, {s * inv}, {a}, [an, inv](detail::Node& node) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += node.grad[0] * inv;
  });
}

namespace detail {

// Rows of a 1-D or 2-D tensor viewed as [n, m] with the last axis reduced.
inline std::pair<std::size_t, std::size_t> rowview(const Tensor& t) {
  if (t.rank() == 1) return {1, t.shape()[0]};
  if (t.rank() == 2) return {t.shape()[0], t.shape()[1]};
  throw ShapeError("softmax family: expected rank 1 or 2, got " + shape_str(t.shape()));
}

}  // namespace detail

inline Tensor softmax(const Tensor& a) {
  auto [n, m] = detail::rowview(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = a.value().data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = std::exp(row[j] - mx) / z;
  }
  auto an = a.node();
  auto vals = out;
  return make_op(a.shape(), std::move(out), {a}, [an, vals, n = n, m = m](detail::Node& node) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += node.grad[i * m + j] * vals[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        an->grad[i * m + j] += vals[i * m + j] * (node.grad[i * m + j] - dot);
    }
  });
}

inline Tensor log_softmax(const Tensor& a) {
  auto [n, m] = detail::rowview(a);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = a.value().data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lz = std::log(z) + mx;
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lz;
  }
  auto an = a.node();
  auto vals = out;
  return make_op(a.shape(), std::move(out), {a}, [an, vals, n = n, m = m](detail::Node& node) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) gsum += node.grad[i * m + j];
      for (std::size_t j = 0; j < m; ++j)
        an->grad[i * m + j] += node.grad[i * m + j] - std::exp(vals[i * m + j]) * gsum;
    }
  });
}

// Mean cross entropy of logits [n, k] against integer targets.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  auto [n, m] = detail::rowview(logits);
  if (targets.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  for (int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= m)
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " out of " +
                       std::to_string(m) + " classes");
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.value().data() + i * m;
    double mx = row[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lz = std::log(z) + mx;
    for (std::size_t j = 0; j < m; ++j) probs[i * m + j] = std::exp(row[j] - lz);
    loss -= row[static_cast<std::size_t>(targets[i])] - lz;
  }
  loss /= static_cast<double>(n);
  auto ln = logits.node();
  return make_op({1}, {loss}, {logits},
                 [ln, probs, targets, n = n, m = m](detail::Node& node) {
                   if (!ln->requires_grad) return;
                   ln->ensure_grad();
                   const double inv = node.grad[0] / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i)
                     for (std::size_t j = 0; j < m; ++j) {
                       double g = probs[i * m + j];
                       if (j == static_cast<std::size_t>(targets[i])) g -= 1.0;
                       ln->grad[i * m + j] += inv * g;
                     }
                 });
}

inline Tensor cross_entropy(const Tensor& logits, int target) {
  return cross_entropy(logits, std::vector<int>{target});
}

// Mean binary cross entropy between probabilities and {0,1} targets.
inline Tensor binary_cross_entropy(const Tensor& probs, const Tensor& targets) {
  detail::check_same_shape("binary_cross_entropy", probs, targets);
  constexpr double kEps = 1e-12;
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.value()[i], kEps, 1.0 - kEps);
    const double y = targets.value()[i];
    loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  loss /= static_cast<double>(probs.size());
  auto pn = probs.node();
  auto tn = targets.node();
  return make_op({1}, {loss}, {probs, targets}, [pn, tn, kEps](detail::Node& node) {
    if (!pn->requires_grad) return;
    pn->ensure_grad();
    const double inv = node.grad[0] / static_cast<double>(pn->value.size());
    for (std::size_t i = 0; i < pn->value.size(); ++i) {
      const double p = std::clamp(pn->value[i], kEps, 1.0 - kEps);
      const double y = tn->value[i];
      pn->grad[i] += inv * (p - y) / (p * (1.0 - p));
    }
  });
}

inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mse", a, b);
  double loss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    loss += d * d;
  }
  loss /= static_cast<double>(a.size());
  auto an = a.node();
  auto bn = b.node();
  return make_op({1}, {loss}, {a, b}, [an, bn](detail::Node& node) {
    const double inv = 2.0 * node.grad[0] / static_cast<double>(an->value.size());
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i)
        an->grad[i] += inv * (an->value[i] - bn->value[i]);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < bn->value.size(); ++i)
        bn->grad[i] -= inv * (an->value[i] - bn->value[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

// Reverse-mode sweep from a scalar loss. Gradients of leaf tensors
// accumulate additively across calls; interior node grads are reset per call.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw NotScalarError("backward: loss has shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior nodes get fresh grads; leaves keep accumulating.
  for (detail::Node* n : order) {
    if (n->backprop) {
      n->grad.assign(n->value.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace frar
