#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "referee/num/matrix.hpp"

namespace referee::num {

// Handle to a tape entry.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode differentiation tape over dense matrices.
//
// Every operation appends one entry holding the full output value; backward()
// walks the entries in reverse and applies each entry's local gradient rule,
// which implements the chain rule exactly. A tape is confined to one job and
// is single-threaded; reset() clears the recording but keeps the allocated
// arenas so per-epoch re-recording is allocation-free after warmup.
class Tape {
 public:
  // Leaves. Both are recorded identically; "input" marks intent only.
  Var input(const Matrix& m) { return leaf(m); }
  Var constant(const Matrix& m) { return leaf(m); }
  Var constant_scalar(double v) { return leaf(Matrix::scalar(v)); }

  // Binary elementwise ops support limited broadcasting: equal shapes, or one
  // operand of shape n x 1, 1 x m, or 1 x 1 against an n x m operand, plus the
  // outer case (n x 1 against 1 x m).
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);

  Var matmul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }

  Var sigmoid(Var a);
  Var relu(Var a);
  // Natural log. Arguments below 1e-30 are clamped (and counted); keeps
  // entropy and divergence terms NaN-free on zero-probability entries.
  Var log(Var a);
  Var exp(Var a);
  Var abs(Var a);
  Var rsqrt(Var a);  // x^(-1/2); requires x > 0

  Var row_softmax(Var a);
  Var logsumexp_rows(Var a);  // n x m -> n x 1
  Var logsumexp_cols(Var a);  // n x m -> 1 x m

  Var sum(Var a);   // -> 1 x 1
  Var mean(Var a);  // -> 1 x 1
  Var row_sum(Var a);  // n x m -> n x 1

  Var transpose(Var a);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, std::size_t r0, std::size_t r1);  // rows [r0, r1)
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  // Gathers individual entries (r, c) into a k x 1 vector.
  Var gather(Var a, std::span<const std::pair<std::uint32_t, std::uint32_t>> idx);
  // Scatters one value per undirected edge into a symmetric n x n matrix with
  // a zero diagonal: out[u][v] = out[v][u] = values[e].
  Var edge_symmetric(Var values,
                     std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
                     std::size_t n);

  // Reverse sweep from a scalar output; seeds d(out)/d(out) = 1 and
  // accumulates gradients for every tape entry that reaches `out`.
  // Entries that do not reach it keep zero gradients.
  void backward(Var out);

  MatrixView value(Var v) const;
  MatrixView grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t log_clamp_count() const { return log_clamps_; }

  void reset();

 private:
  enum class Op : std::uint8_t {
    leaf, add, sub, mul, div, matmul, scale, add_scalar, sigmoid, relu,
    log_, exp_, abs_, rsqrt, row_softmax, lse_rows, lse_cols, sum, mean,
    row_sum, transpose, concat_rows, slice_rows, slice_cols, gather,
    edge_symmetric,
  };

  struct Node {
    Op op;
    std::int32_t a = -1;
    std::int32_t b = -1;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::size_t off = 0;   // offset into val_/grd_
    double c = 0.0;        // scalar parameter
    std::uint32_t i0 = 0;  // aux indices (slice bounds / side-table ranges)
    std::uint32_t i1 = 0;
  };

  Var leaf(const Matrix& m);
  Var unary(Op op, Var a, double c = 0.0);
  Var binary_elementwise(Op op, Var a, Var b);
  std::int32_t push(Op op, std::int32_t a, std::int32_t b, std::size_t rows,
                    std::size_t cols);
  const Node& node(Var v) const;
  double* val(const Node& n) { return val_.data() + n.off; }
  const double* val(const Node& n) const { return val_.data() + n.off; }
  double* grd(const Node& n) { return grd_.data() + n.off; }

  void check_finite_grad(std::size_t node_index) const;
  [[noreturn]] void shape_error(const char* op, const Node& a, const Node& b) const;

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> grd_;
  // Side tables for variadic / indexed ops.
  std::vector<std::int32_t> aux_vars_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> aux_pairs_;
  std::size_t log_clamps_ = 0;
};

}  // namespace referee::num
