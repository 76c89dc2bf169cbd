#include "ducat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_set>

#include "ducat/error.hpp"

namespace ducat {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that need it.
  std::function<void(Node&)> propagate;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) {
    if (!t.node_) throw InvalidArgument("operation on an undefined tensor");
    return t.node_;
  }
  static Tensor wrap(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

namespace {

using detail::Access;
using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

void require_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value in ") + op);
  }
}

#ifndef NDEBUG
constexpr bool kCheckFinite = true;
#else
constexpr bool kCheckFinite = false;
#endif

NodePtr make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

/// Result node of an op; parents only kept when a gradient can flow.
NodePtr make_result(Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                    const char* op) {
  if constexpr (kCheckFinite) require_finite(data, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->leaf = false;
  n->requires_grad = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr& p) { return p->requires_grad; });
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

const NodePtr& require_2d(const Tensor& t, const char* op) {
  const auto& n = Access::node(t);
  if (n->shape.size() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(n->shape));
  }
  return n;
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& ta, const Tensor& tb, Binary kind, const char* op) {
  const NodePtr& a = Access::node(ta);
  const NodePtr& b = Access::node(tb);
  const bool same = a->shape == b->shape;
  const bool a_scalar = a->data.size() == 1;
  const bool b_scalar = b->data.size() == 1;
  if (!same && !a_scalar && !b_scalar) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  }
  // Broadcast only a single-element operand; the result takes the other shape.
  const bool bcast_a = !same && a_scalar;
  const bool bcast_b = !same && !bcast_a && b_scalar;
  const Shape& out_shape = bcast_a ? b->shape : a->shape;
  const std::size_t n = shape_numel(out_shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = a->data[bcast_a ? 0 : i];
    const double y = b->data[bcast_b ? 0 : i];
    switch (kind) {
      case Binary::add: out[i] = x + y; break;
      case Binary::sub: out[i] = x - y; break;
      case Binary::mul: out[i] = x * y; break;
    }
  }
  auto node = make_result(out_shape, std::move(out), {a, b}, op);
  if (node->requires_grad) {
    node->propagate = [kind, bcast_a, bcast_b](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const std::size_t n = self.data.size();
      if (pa.requires_grad) {
        auto& g = pa.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          double d = self.grad[i];
          if (kind == Binary::mul) d *= pb.data[bcast_b ? 0 : i];
          g[bcast_a ? 0 : i] += d;
        }
      }
      if (pb.requires_grad) {
        auto& g = pb.grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
          double d = self.grad[i];
          if (kind == Binary::sub) d = -d;
          if (kind == Binary::mul) d *= pa.data[bcast_a ? 0 : i];
          g[bcast_b ? 0 : i] += d;
        }
      }
    };
  }
  return Access::wrap(std::move(node));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& ta, const char* op, Fwd fwd, Deriv deriv) {
  const NodePtr& a = Access::node(ta);
  std::vector<double> out(a->data.size());
  std::transform(a->data.begin(), a->data.end(), out.begin(), fwd);
  auto node = make_result(a->shape, std::move(out), {a}, op);
  if (node->requires_grad) {
    // deriv(input, output) -> d output / d input
    node->propagate = [deriv](Node& self) {
      Node& p = *self.parents[0];
      auto& g = p.grad_buffer();
      for (std::size_t i = 0; i < self.data.size(); ++i) {
        g[i] += self.grad[i] * deriv(p.data[i], self.data[i]);
      }
    };
  }
  return Access::wrap(std::move(node));
}

/// Row count and width of the trailing axis.
std::pair<std::size_t, std::size_t> row_layout(const Node& n, const char* op) {
  if (n.shape.empty() || n.shape.back() == 0) {
    throw ShapeError(std::string(op) + ": need a non-empty last axis");
  }
  const std::size_t k = n.shape.back();
  return {n.data.size() / k, k};
}

std::vector<double> log_softmax_values(const Node& n, const char* op) {
  require_finite(n.data, op);
  auto [rows, k] = row_layout(n, op);
  std::vector<double> out(n.data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = n.data.data() + r * k;
    double* o = out.data() + r * k;
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < k; ++j) o[j] = z[j] - lse;
  }
  return out;
}

void validate_target(const Node& logits, const Node& target) {
  if (logits.shape != target.shape) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape) + " vs target " +
                     shape_str(target.shape));
  }
  auto [rows, k] = row_layout(target, "cross_entropy");
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = target.data[r * k + j];
      if (!(t >= 0.0)) {
        throw InvalidArgument("cross_entropy: target row " + std::to_string(r) +
                              " has a negative or non-finite entry");
      }
      s += t;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw InvalidArgument("cross_entropy: target row " + std::to_string(r) +
                            " sums to " + std::to_string(s) + ", not 1");
    }
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({}, {value}, requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> v;
  v.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("matrix: ragged rows");
    v.insert(v.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return Access::node(*this)->shape; }
std::size_t Tensor::numel() const { return Access::node(*this)->data.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for " + shape_str(s));
  return s[axis];
}

std::span<const double> Tensor::data() const { return Access::node(*this)->data; }

std::span<double> Tensor::mutable_data() {
  const auto& n = Access::node(*this);
  if (!n->leaf) throw InvalidArgument("mutable_data on a non-leaf tensor");
  return n->data;
}

double Tensor::item() const {
  const auto& n = Access::node(*this);
  if (n->data.size() != 1) throw ShapeError("item() on tensor " + shape_str(n->shape));
  return n->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = require_2d(*this, "at");
  if (r >= n->shape[0] || c >= n->shape[1]) throw ShapeError("at: index out of range");
  return n->data[r * n->shape[1] + c];
}

bool Tensor::requires_grad() const { return Access::node(*this)->requires_grad; }
bool Tensor::is_leaf() const { return Access::node(*this)->leaf; }
bool Tensor::has_grad() const {
  const auto& n = Access::node(*this);
  return !n->grad.empty() && n->grad.size() == n->data.size();
}

std::span<const double> Tensor::grad() const {
  const auto& n = Access::node(*this);
  if (n->grad.size() != n->data.size()) throw InvalidArgument("tensor has no gradient");
  return n->grad;
}

void Tensor::zero_grad() {
  const auto& n = Access::node(*this);
  n->grad.assign(n->data.size(), 0.0);
}

Tensor Tensor::detached(bool requires_grad) const {
  const auto& n = Access::node(*this);
  return Tensor(make_leaf(n->shape, n->data, requires_grad));
}

// ---------------------------------------------------------------------------
// Ops

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  const NodePtr& a = require_2d(ta, "matmul");
  const NodePtr& b = require_2d(tb, "matmul");
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  if (b->shape[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a->shape) + " x " +
                     shape_str(b->shape));
  }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->data[i * k + p];
      const double* brow = b->data.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto node = make_result({m, n}, std::move(out), {a, b}, "matmul");
  if (node->requires_grad) {
    node->propagate = [m, k, n](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const double* g = self.grad.data();
      if (pa.requires_grad) {
        auto& ga = pa.grad_buffer();  // dA = dC · Bᵀ
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * pb.data[p * n + j];
            ga[i * k + p] += s;
          }
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();  // dB = Aᵀ · dC
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = pa.data[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
          }
      }
    };
  }
  return Access::wrap(std::move(node));
}

Tensor linear(const Tensor& tx, const Tensor& tw, const Tensor& tb) {
  const NodePtr& x = require_2d(tx, "linear");
  const NodePtr& w = require_2d(tw, "linear");
  const NodePtr& b = Access::node(tb);
  const std::size_t batch = x->shape[0], in = x->shape[1], out = w->shape[0];
  if (w->shape[1] != in) {
    throw ShapeError("linear: input " + shape_str(x->shape) + " vs weight " +
                     shape_str(w->shape));
  }
  if (b->data.size() != out) {
    throw ShapeError("linear: bias " + shape_str(b->shape) + " vs " + std::to_string(out) +
                     " outputs");
  }
  std::vector<double> y(batch * out);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* xr = x->data.data() + i * in;
    for (std::size_t j = 0; j < out; ++j) {
      const double* wr = w->data.data() + j * in;
      double s = b->data[j];
      for (std::size_t p = 0; p < in; ++p) s += xr[p] * wr[p];
      y[i * out + j] = s;
    }
  }
  auto node = make_result({batch, out}, std::move(y), {x, w, b}, "linear");
  if (node->requires_grad) {
    node->propagate = [batch, in, out](Node& self) {
      Node& px = *self.parents[0];
      Node& pw = *self.parents[1];
      Node& pb = *self.parents[2];
      const double* g = self.grad.data();
      if (px.requires_grad) {
        auto& gx = px.grad_buffer();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out; ++j) {
            const double gij = g[i * out + j];
            const double* wr = pw.data.data() + j * in;
            double* gxr = gx.data() + i * in;
            for (std::size_t p = 0; p < in; ++p) gxr[p] += gij * wr[p];
          }
      }
      if (pw.requires_grad) {
        auto& gw = pw.grad_buffer();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out; ++j) {
            const double gij = g[i * out + j];
            const double* xr = px.data.data() + i * in;
            double* gwr = gw.data() + j * in;
            for (std::size_t p = 0; p < in; ++p) gwr[p] += gij * xr[p];
          }
      }
      if (pb.requires_grad) {
        auto& gb = pb.grad_buffer();
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t j = 0; j < out; ++j) gb[j] += g[i * out + j];
      }
    };
  }
  return Access::wrap(std::move(node));
}

Tensor slice_columns(const Tensor& tx, std::size_t begin, std::size_t end) {
  const NodePtr& x = require_2d(tx, "slice_columns");
  const std::size_t rows = x->shape[0], cols = x->shape[1];
  if (begin > end || end > cols) throw ShapeError("slice_columns: range out of bounds");
  const std::size_t w = end - begin;
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(x->data.begin() + static_cast<std::ptrdiff_t>(i * cols + begin), w,
                out.begin() + static_cast<std::ptrdiff_t>(i * w));
  auto node = make_result({rows, w}, std::move(out), {x}, "slice_columns");
  if (node->requires_grad) {
    node->propagate = [rows, cols, begin, w](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * cols + begin + j] += self.grad[i * w + j];
    };
  }
  return Access::wrap(std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sum(const Tensor& ta) {
  const NodePtr& a = Access::node(ta);
  double s = 0.0;
  for (double v : a->data) s += v;
  auto node = make_result({}, {s}, {a}, "sum");
  if (node->requires_grad) {
    node->propagate = [](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (double& v : g) v += self.grad[0];
    };
  }
  return Access::wrap(std::move(node));
}

Tensor mean(const Tensor& ta) {
  const auto n = Access::node(ta)->data.size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(ta), 1.0 / static_cast<double>(n));
}

Tensor log_softmax(const Tensor& tz) {
  const NodePtr& z = Access::node(tz);
  auto out = log_softmax_values(*z, "log_softmax");
  auto [rows, k] = row_layout(*z, "log_softmax");
  auto node = make_result(z->shape, std::move(out), {z}, "log_softmax");
  if (node->requires_grad) {
    node->propagate = [rows = rows, k = k](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double gs = 0.0;
        for (std::size_t j = 0; j < k; ++j) gs += self.grad[r * k + j];
        for (std::size_t j = 0; j < k; ++j) {
          g[r * k + j] += self.grad[r * k + j] - std::exp(self.data[r * k + j]) * gs;
        }
      }
    };
  }
  return Access::wrap(std::move(node));
}

Tensor softmax(const Tensor& tz) {
  const NodePtr& z = Access::node(tz);
  require_finite(z->data, "softmax");
  auto [rows, k] = row_layout(*z, "softmax");
  std::vector<double> out(z->data.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z->data.data() + r * k;
    double* o = out.data() + r * k;
    const double m = *std::max_element(zr, zr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += (o[j] = std::exp(zr[j] - m));
    for (std::size_t j = 0; j < k; ++j) o[j] /= s;
  }
  auto node = make_result(z->shape, std::move(out), {z}, "softmax");
  if (node->requires_grad) {
    node->propagate = [rows = rows, k = k](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* p = self.data.data() + r * k;
        const double* gy = self.grad.data() + r * k;
        double dot = 0.0;
        for (std::size_t j = 0; j < k; ++j) dot += gy[j] * p[j];
        for (std::size_t j = 0; j < k; ++j) g[r * k + j] += p[j] * (gy[j] - dot);
      }
    };
  }
  return Access::wrap(std::move(node));
}

Tensor cross_entropy(const Tensor& tlogits, const Tensor& ttarget) {
  const NodePtr& z = require_2d(tlogits, "cross_entropy");
  const NodePtr& t = Access::node(ttarget);
  validate_target(*z, *t);
  const std::size_t rows = z->shape[0], k = z->shape[1];
  if (rows == 0) throw ShapeError("cross_entropy: empty batch");
  auto logp = log_softmax_values(*z, "cross_entropy");
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double tv = t->data[r * k + j];
      if (tv != 0.0) row -= tv * logp[r * k + j];
    }
    total += row;
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  auto node = make_result({}, {total * inv_rows}, {z}, "cross_entropy");
  if (node->requires_grad) {
    // d/dz = (softmax(z) − t) / rows, using Σ_k t_k = 1.
    node->propagate = [t, logp = std::move(logp), rows, k, inv_rows](Node& self) {
      auto& g = self.parents[0]->grad_buffer();
      const double gs = self.grad[0] * inv_rows;
      for (std::size_t i = 0; i < rows * k; ++i) {
        g[i] += gs * (std::exp(logp[i]) - t->data[i]);
      }
    };
  }
  return Access::wrap(std::move(node));
}

std::vector<double> cross_entropy_rows(const Tensor& tlogits, const Tensor& ttarget) {
  const NodePtr& z = require_2d(tlogits, "cross_entropy_rows");
  const NodePtr& t = Access::node(ttarget);
  validate_target(*z, *t);
  const std::size_t rows = z->shape[0], k = z->shape[1];
  auto logp = log_softmax_values(*z, "cross_entropy_rows");
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      const double tv = t->data[r * k + j];
      if (tv != 0.0) out[r] -= tv * logp[r * k + j];
    }
  }
  return out;
}

void backward(const Tensor& loss) {
  const NodePtr& root = Access::node(loss);
  if (root->data.size() != 1) {
    throw ShapeError("backward: loss must hold a single element, got " +
                     shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw InvalidArgument("backward: loss is not connected to any requires_grad leaf");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->leaf) n->grad.assign(n->data.size(), 0.0);
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->leaf && n->propagate) n->propagate(*n);
  }
}

}  // namespace ducat
