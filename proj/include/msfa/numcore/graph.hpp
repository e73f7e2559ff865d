#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msfa/numcore/array.hpp"

namespace msfa {

/// One vertex of a define-by-run computation graph.
///
/// Nodes that do not require a gradient carry no parents and no backward
/// rule, so graphs built purely from constants cost nothing beyond their
/// values. Interior nodes are marked consumed after one reverse pass;
/// a second pass over the same graph throws ContractError.
struct Node {
  Array value;
  Array grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialised on first access.
  Array& grad_buffer();
};

/// Handle to a graph node. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Array value);
  static Var leaf(Array value, bool requires_grad = true);

  const Array& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool valid() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode gradients of a scalar-sized `loss` with respect to `wrt`.
/// Inputs unreachable from the loss get explicit zero arrays.
std::vector<Array> gradients(const Var& loss, std::span<const Var> wrt);

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast numpy-style: shapes are
// aligned on their trailing dimensions and size-1 (or missing) dimensions
// stretch. Anything else raises DimensionError naming both shapes.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
/// x·W + b for x [N,K], W [K,M], b [M].
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, Real factor);
Var square(const Var& x);

Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var relu(const Var& x);

/// Normalises along `axis` after subtracting the per-slice maximum.
Var softmax(const Var& x, std::size_t axis);

/// Sum of all entries, rank-0 result.
Var sum(const Var& x);
/// Sum along one axis, which is removed from the shape.
Var sum(const Var& x, std::size_t axis);

Var reshape(const Var& x, Shape shape);
Var concat(std::span<const Var> xs, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);

/// Same value, no gradient flows back through it.
Var detach(const Var& x);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

// Raw kernels shared with code that works on plain arrays.
namespace kernels {
/// c[N,M] (+)= a[N,K] · b[K,M]
void matmul_nn(const Real* a, const Real* b, Real* c, std::size_t n, std::size_t k, std::size_t m,
               bool accumulate);
/// c[N,K] += g[N,M] · b[K,M]^T
void matmul_nt_acc(const Real* g, const Real* b, Real* c, std::size_t n, std::size_t k,
                   std::size_t m);
/// c[K,M] += a[N,K]^T · g[N,M]
void matmul_tn_acc(const Real* a, const Real* g, Real* c, std::size_t n, std::size_t k,
                   std::size_t m);
}  // namespace kernels

Array matmul(const Array& a, const Array& b);

}  // namespace msfa
