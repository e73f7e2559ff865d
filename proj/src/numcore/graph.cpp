#include "msfa/numcore/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace msfa {

Array& Node::grad_buffer() {
  if (!has_grad) {
    grad = Array(value.shape(), Real{0});
    has_grad = true;
  }
  return grad;
}

Var Var::constant(Array value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Array value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

namespace {

using Backward = std::function<void(Node&)>;

Var make_result(Array value, std::initializer_list<const Var*> inputs, const char* op,
                Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  for (const Var* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const Var* in : inputs) node->parents.push_back(in->node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Var make_result_n(Array value, std::span<const Var> inputs, const char* op, Backward backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
  if (needs) {
    node->requires_grad = true;
    for (const Var& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void require_valid(const Var& v, const char* op) {
  if (!v.valid()) throw ContractError(std::string(op) + ": empty Var");
}

// --- broadcasting ---------------------------------------------------------

struct Broadcast {
  enum class Kind { kSame, kSuffixB, kSuffixA, kGeneral };
  Kind kind = Kind::kSame;
  Shape out;
  std::vector<std::size_t> stride_a, stride_b;  // per output axis, 0 when stretched
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[offset + i] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                           shape_string(b) + " are not broadcast-compatible");
    }
    plan.out[i] = std::max(da, db);
  }
  if (plan.out == a && is_suffix(b, a)) {
    plan.kind = Broadcast::Kind::kSuffixB;
  } else if (plan.out == b && is_suffix(a, b)) {
    plan.kind = Broadcast::Kind::kSuffixA;
  } else {
    plan.kind = Broadcast::Kind::kGeneral;
    plan.stride_a = aligned_strides(a, plan.out);
    plan.stride_b = aligned_strides(b, plan.out);
  }
  return plan;
}

template <typename F>
void for_each_broadcast(const Broadcast& plan, std::size_t size_a, std::size_t size_b, F&& f) {
  const std::size_t n = shape_size(plan.out);
  switch (plan.kind) {
    case Broadcast::Kind::kSame:
      for (std::size_t i = 0; i < n; ++i) f(i, i, i);
      return;
    case Broadcast::Kind::kSuffixB:
      for (std::size_t i = 0, j = 0; i < n; ++i) {
        f(i, i, j);
        if (++j == size_b) j = 0;
      }
      return;
    case Broadcast::Kind::kSuffixA:
      for (std::size_t i = 0, j = 0; i < n; ++i) {
        f(i, j, i);
        if (++j == size_a) j = 0;
      }
      return;
    case Broadcast::Kind::kGeneral: {
      const std::size_t rank = plan.out.size();
      std::vector<std::size_t> counter(rank, 0);
      std::size_t ia = 0, ib = 0;
      for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t ax = rank; ax-- > 0;) {
          ia += plan.stride_a[ax];
          ib += plan.stride_b[ax];
          if (++counter[ax] < plan.out[ax]) break;
          ia -= plan.stride_a[ax] * plan.out[ax];
          ib -= plan.stride_b[ax] * plan.out[ax];
          counter[ax] = 0;
        }
      }
      return;
    }
  }
}

template <typename Fwd, typename Bwd>
Var binary(const Var& a, const Var& b, const char* op, Fwd fwd, Bwd bwd) {
  require_valid(a, op);
  require_valid(b, op);
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), op));
  Array out(plan->out);
  const Real* pa = a.value().raw();
  const Real* pb = b.value().raw();
  Real* po = out.raw();
  for_each_broadcast(*plan, a.value().size(), b.value().size(),
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { po[i] = fwd(pa[ia], pb[ib]); });
  return make_result(std::move(out), {&a, &b}, op, [plan, bwd](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const Real* g = self.grad.raw();
    const Real* va = na.value.raw();
    const Real* vb = nb.value.raw();
    Real* ga = na.requires_grad ? na.grad_buffer().raw() : nullptr;
    Real* gb = nb.requires_grad ? nb.grad_buffer().raw() : nullptr;
    for_each_broadcast(*plan, na.value.size(), nb.value.size(),
                       [&](std::size_t i, std::size_t ia, std::size_t ib) {
                         Real da, db;
                         bwd(va[ia], vb[ib], da, db);
                         if (ga) ga[ia] += g[i] * da;
                         if (gb) gb[ib] += g[i] * db;
                       });
  });
}

template <typename Fwd, typename Deriv>
Var unary(const Var& x, const char* op, Fwd fwd, Deriv deriv_from_out) {
  require_valid(x, op);
  Array out(x.shape());
  const Real* px = x.value().raw();
  Real* po = out.raw();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  return make_result(std::move(out), {&x}, op, [deriv_from_out](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    Real* gx = nx.grad_buffer().raw();
    const Real* g = self.grad.raw();
    const Real* y = self.value.raw();
    const Real* xv = nx.value.raw();
    const std::size_t n = self.value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * deriv_from_out(xv[i], y[i]);
  });
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const Var& x, std::size_t axis, const char* op) {
  if (axis >= x.shape().size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                         shape_string(x.shape()));
  }
}

}  // namespace

// --- kernels ----------------------------------------------------------------

namespace kernels {

void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t n, std::size_t k, std::size_t m,
               bool acc) {
  if (!acc) std::fill(c, c + n * m, Real{0});
  for (std::size_t i = 0; i < n; ++i) {
    Real* crow = c + i * m;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real{0}) continue;
      const Real* brow = b + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const Real* g, const Real* b, Real* c, std::size_t n, std::size_t k,
                   std::size_t m) {
  thread_local std::vector<Real> bt;
  bt.resize(k * m);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < m; ++j) bt[j * k + p] = b[p * m + j];
  for (std::size_t i = 0; i < n; ++i) {
    const Real* grow = g + i * m;
    Real* crow = c + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const Real gv = grow[j];
      if (gv == Real{0}) continue;
      const Real* btrow = bt.data() + j * k;
      for (std::size_t p = 0; p < k; ++p) crow[p] += gv * btrow[p];
    }
  }
}

void matmul_tn_acc(const Real* a, const Real* g, Real* c, std::size_t n, std::size_t k,
                   std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const Real* arow = a + i * k;
    const Real* grow = g + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real{0}) continue;
      Real* crow = c + p * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace kernels

Array matmul(const Array& a, const Array& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " do not agree");
  }
  Array out(Shape{a.dim(0), b.dim(1)});
  kernels::matmul_nn(a.raw(), b.raw(), out.raw(), a.dim(0), a.dim(1), b.dim(1), false);
  return out;
}

// --- graph ops --------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  require_valid(a, "matmul");
  require_valid(b, "matmul");
  Array out = matmul(a.value(), b.value());
  return make_result(std::move(out), {&a, &b}, "matmul", [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const std::size_t n = na.value.dim(0), k = na.value.dim(1), m = nb.value.dim(1);
    if (na.requires_grad) kernels::matmul_nt_acc(self.grad.raw(), nb.value.raw(), na.grad_buffer().raw(), n, k, m);
    if (nb.requires_grad) kernels::matmul_tn_acc(na.value.raw(), self.grad.raw(), nb.grad_buffer().raw(), n, k, m);
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  require_valid(x, "linear");
  require_valid(w, "linear");
  require_valid(b, "linear");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0] || b.shape() != Shape{ws[1]}) {
    throw DimensionError("linear: shapes x" + shape_string(xs) + " W" + shape_string(ws) + " b" +
                         shape_string(b.shape()) + " do not agree");
  }
  const std::size_t n = xs[0], k = xs[1], m = ws[1];
  Array out(Shape{n, m});
  Real* po = out.raw();
  const Real* pb = b.value().raw();
  for (std::size_t i = 0; i < n; ++i) std::copy(pb, pb + m, po + i * m);
  kernels::matmul_nn(x.value().raw(), w.value().raw(), po, n, k, m, true);
  return make_result(std::move(out), {&x, &w, &b}, "linear", [](Node& self) {
    Node& nx = *self.parents[0];
    Node& nw = *self.parents[1];
    Node& nb = *self.parents[2];
    const std::size_t n = nx.value.dim(0), k = nx.value.dim(1), m = nw.value.dim(1);
    const Real* g = self.grad.raw();
    if (nx.requires_grad) kernels::matmul_nt_acc(g, nw.value.raw(), nx.grad_buffer().raw(), n, k, m);
    if (nw.requires_grad) kernels::matmul_tn_acc(nx.value.raw(), g, nw.grad_buffer().raw(), n, k, m);
    if (nb.requires_grad) {
      Real* gb = nb.grad_buffer().raw();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
    }
  });
}

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](Real x, Real y) { return x + y; },
      [](Real, Real, Real& da, Real& db) {
        da = 1;
        db = 1;
      });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](Real x, Real y) { return x - y; },
      [](Real, Real, Real& da, Real& db) {
        da = 1;
        db = -1;
      });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](Real x, Real y) { return x * y; },
      [](Real x, Real y, Real& da, Real& db) {
        da = y;
        db = x;
      });
}

Var scale(const Var& x, Real factor) {
  return unary(
      x, "scale", [factor](Real v) { return v * factor; }, [factor](Real, Real) { return factor; });
}

Var square(const Var& x) {
  return unary(
      x, "square", [](Real v) { return v * v; }, [](Real v, Real) { return 2 * v; });
}

Var tanh(const Var& x) {
  return unary(
      x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return 1 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid",
      [](Real v) {
        if (v >= 0) return Real{1} / (Real{1} + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (1 - y); });
}

Var relu(const Var& x) {
  return unary(
      x, "relu", [](Real v) { return v > 0 ? v : Real{0}; },
      [](Real v, Real) { return v > 0 ? Real{1} : Real{0}; });
}

Var softmax(const Var& x, std::size_t axis) {
  require_valid(x, "softmax");
  check_axis(x, axis, "softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  Array out(x.shape());
  const Real* px = x.value().raw();
  Real* po = out.raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, px[base + l * s.inner]);
      Real total = 0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const Real e = std::exp(px[base + l * s.inner] - mx);
        po[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) po[base + l * s.inner] /= total;
    }
  }
  return make_result(std::move(out), {&x}, "softmax", [s](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    Real* gx = nx.grad_buffer().raw();
    const Real* g = self.grad.raw();
    const Real* y = self.value.raw();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.len * s.inner + in;
        Real dot = 0;
        for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t i = base + l * s.inner;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var sum(const Var& x) {
  require_valid(x, "sum");
  Real total = 0;
  for (Real v : x.value().data()) total += v;
  return make_result(Array::scalar(total), {&x}, "sum", [](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    const Real g = self.grad[0];
    for (Real& v : nx.grad_buffer().data()) v += g;
  });
}

Var sum(const Var& x, std::size_t axis) {
  require_valid(x, "sum");
  check_axis(x, axis, "sum");
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Array out(out_shape);
  const Real* px = x.value().raw();
  Real* po = out.raw();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l) {
      const Real* src = px + (o * s.len + l) * s.inner;
      Real* dst = po + o * s.inner;
      for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
    }
  return make_result(std::move(out), {&x}, "sum_axis", [s](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    Real* gx = nx.grad_buffer().raw();
    const Real* g = self.grad.raw();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l) {
        Real* dst = gx + (o * s.len + l) * s.inner;
        const Real* src = g + o * s.inner;
        for (std::size_t in = 0; in < s.inner; ++in) dst[in] += src[in];
      }
  });
}

Var reshape(const Var& x, Shape shape) {
  require_valid(x, "reshape");
  Array out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {&x}, "reshape", [](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    Real* gx = nx.grad_buffer().raw();
    const Real* g = self.grad.raw();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += g[i];
  });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat: no inputs");
  for (const Var& v : xs) require_valid(v, "concat");
  check_axis(xs[0], axis, "concat");
  Shape out_shape = xs[0].shape();
  std::size_t total_len = 0;
  for (const Var& v : xs) {
    const Shape& sh = v.shape();
    bool ok = sh.size() == out_shape.size();
    for (std::size_t i = 0; ok && i < sh.size(); ++i) ok = i == axis || sh[i] == out_shape[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_string(sh) + " incompatible with " +
                           shape_string(out_shape) + " along axis " + std::to_string(axis));
    }
    total_len += sh[axis];
  }
  out_shape[axis] = total_len;
  const AxisSplit s = split_axis(out_shape, axis);
  Array out(out_shape);
  Real* po = out.raw();
  std::vector<std::size_t> lens;
  lens.reserve(xs.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::size_t offset = 0;
    for (const Var& v : xs) {
      const std::size_t chunk = v.shape()[axis] * s.inner;
      const Real* src = v.value().raw() + o * chunk;
      std::copy(src, src + chunk, po + o * s.len * s.inner + offset);
      offset += chunk;
    }
  }
  for (const Var& v : xs) lens.push_back(v.shape()[axis]);
  return make_result_n(std::move(out), xs, "concat", [s, lens](Node& self) {
    const Real* g = self.grad.raw();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        const std::size_t chunk = lens[p] * s.inner;
        Node& np = *self.parents[p];
        if (np.requires_grad) {
          Real* dst = np.grad_buffer().raw() + o * chunk;
          const Real* src = g + o * s.len * s.inner + offset;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        offset += chunk;
      }
    }
  });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  require_valid(x, "slice");
  check_axis(x, axis, "slice");
  if (begin > end || end > x.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  Array out(out_shape);
  const std::size_t chunk = (end - begin) * s.inner;
  const Real* px = x.value().raw();
  for (std::size_t o = 0; o < s.outer; ++o) {
    const Real* src = px + (o * s.len + begin) * s.inner;
    std::copy(src, src + chunk, out.raw() + o * chunk);
  }
  return make_result(std::move(out), {&x}, "slice", [s, begin, chunk](Node& self) {
    Node& nx = *self.parents[0];
    if (!nx.requires_grad) return;
    Real* gx = nx.grad_buffer().raw();
    const Real* g = self.grad.raw();
    for (std::size_t o = 0; o < s.outer; ++o) {
      Real* dst = gx + (o * s.len + begin) * s.inner;
      const Real* src = g + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Var detach(const Var& x) {
  require_valid(x, "detach");
  return Var::constant(x.value());
}

// --- reverse pass -------------------------------------------------------------

std::vector<Array> gradients(const Var& loss, std::span<const Var> wrt) {
  require_valid(loss, "gradients");
  if (loss.value().size() != 1) {
    throw ContractError("gradients: loss must be scalar-sized, got shape " + shape_string(loss.shape()));
  }

  // Iterative post-order DFS gives a topological order over nodes that
  // require a gradient.
  std::vector<Node*> order;
  std::vector<Node*> leaves;
  if (loss.requires_grad()) {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (node->consumed) {
        throw ContractError("gradients: graph was already differentiated; rebuild it first");
      }
      if (next < node->parents.size()) {
        Node* parent = node->parents[next++].get();
        if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    for (Node* n : order) {
      if (!n->backward) {
        leaves.push_back(n);
        n->grad = Array();
        n->has_grad = false;
      }
    }
    loss.node()->grad_buffer().fill(Real{1});
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && n->has_grad) n->backward(*n);
    }
  }

  std::vector<Array> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    require_valid(v, "gradients");
    const Node& n = *v.node();
    out.push_back(n.has_grad ? n.grad : Array(n.value.shape(), Real{0}));
  }

  for (Node* n : order) {
    if (n->backward) {
      n->consumed = true;
      n->backward = nullptr;
      n->grad = Array();
      n->has_grad = false;
    }
  }
  for (Node* n : leaves) {
    n->grad = Array();
    n->has_grad = false;
  }
  return out;
}

}  // namespace msfa
