#include "referee/num/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "referee/num/kernels.hpp"
#include "referee/util/error.hpp"

namespace referee::num {

namespace {

constexpr double kLogFloor = 1e-30;

const char* op_name(int op) {
  static const char* names[] = {
      "leaf", "add", "sub", "mul", "div", "matmul", "scale", "add_scalar",
      "sigmoid", "relu", "log", "exp", "abs", "rsqrt", "row_softmax",
      "logsumexp_rows", "logsumexp_cols", "sum", "mean", "row_sum",
      "transpose", "concat_rows", "slice_rows", "slice_cols", "gather",
      "edge_symmetric"};
  return names[op];
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw_runtime("tape: invalid var handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

std::int32_t Tape::push(Op op, std::int32_t a, std::int32_t b,
                        std::size_t rows, std::size_t cols) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.rows = static_cast<std::uint32_t>(rows);
  n.cols = static_cast<std::uint32_t>(cols);
  n.off = val_.size();
  val_.resize(val_.size() + rows * cols, 0.0);
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

Var Tape::leaf(const Matrix& m) {
  if (m.size() != m.data.size())
    throw_runtime("tape leaf: shape " + shape_str(m.rows, m.cols) +
                  " does not match data length " + std::to_string(m.data.size()));
  const auto id = push(Op::leaf, -1, -1, m.rows, m.cols);
  std::memcpy(val_.data() + nodes_.back().off, m.data.data(),
              m.size() * sizeof(double));
  return Var{id};
}

void Tape::shape_error(const char* op, const Node& a, const Node& b) const {
  throw_runtime(std::string("tape ") + op + ": shapes " +
                shape_str(a.rows, a.cols) + " and " + shape_str(b.rows, b.cols) +
                " are not conformable");
}

Var Tape::binary_elementwise(Op op, Var va, Var vb) {
  const Node a = node(va);
  const Node b = node(vb);
  const std::size_t R = std::max(a.rows, b.rows);
  const std::size_t C = std::max(a.cols, b.cols);
  const bool ok = (a.rows == R || a.rows == 1) && (a.cols == C || a.cols == 1) &&
                  (b.rows == R || b.rows == 1) && (b.cols == C || b.cols == 1);
  if (!ok) shape_error(op_name(static_cast<int>(op)), a, b);

  const auto id = push(op, va.id, vb.id, R, C);
  const Node& out = nodes_.back();
  const double* pa = val(a);
  const double* pb = val(b);
  double* po = val(out);
  const std::size_t ars = (a.rows == 1) ? 0 : a.cols;
  const std::size_t acs = (a.cols == 1) ? 0 : 1;
  const std::size_t brs = (b.rows == 1) ? 0 : b.cols;
  const std::size_t bcs = (b.cols == 1) ? 0 : 1;
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const double x = pa[i * ars + j * acs];
      const double y = pb[i * brs + j * bcs];
      double r = 0.0;
      switch (op) {
        case Op::add: r = x + y; break;
        case Op::sub: r = x - y; break;
        case Op::mul: r = x * y; break;
        case Op::div: r = x / y; break;
        default: break;
      }
      po[i * C + j] = r;
    }
  }
  return Var{id};
}

Var Tape::add(Var a, Var b) { return binary_elementwise(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary_elementwise(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary_elementwise(Op::mul, a, b); }
Var Tape::div(Var a, Var b) { return binary_elementwise(Op::div, a, b); }

Var Tape::matmul(Var va, Var vb) {
  const Node a = node(va);
  const Node b = node(vb);
  if (a.cols != b.rows) shape_error("matmul", a, b);
  const auto id = push(Op::matmul, va.id, vb.id, a.rows, b.cols);
  matmul_accum(val(a), val(b), val(nodes_.back()), a.rows, a.cols, b.cols);
  return Var{id};
}

Var Tape::unary(Op op, Var va, double c) {
  const Node a = node(va);
  const auto id = push(op, va.id, -1, a.rows, a.cols);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  const std::size_t n = out.rows * out.cols;
  switch (op) {
    case Op::scale:
      for (std::size_t i = 0; i < n; ++i) py[i] = c * px[i];
      break;
    case Op::add_scalar:
      for (std::size_t i = 0; i < n; ++i) py[i] = px[i] + c;
      break;
    case Op::sigmoid:
      for (std::size_t i = 0; i < n; ++i) py[i] = 1.0 / (1.0 + std::exp(-px[i]));
      break;
    case Op::relu:
      for (std::size_t i = 0; i < n; ++i) py[i] = px[i] > 0.0 ? px[i] : 0.0;
      break;
    case Op::log_:
      for (std::size_t i = 0; i < n; ++i) {
        double x = px[i];
        if (x < kLogFloor) {
          x = kLogFloor;
          ++log_clamps_;
        }
        py[i] = std::log(x);
      }
      break;
    case Op::exp_:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::exp(px[i]);
      break;
    case Op::abs_:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::fabs(px[i]);
      break;
    case Op::rsqrt:
      for (std::size_t i = 0; i < n; ++i) {
        if (px[i] <= 0.0)
          throw_runtime("tape rsqrt: non-positive argument " +
                        std::to_string(px[i]));
        py[i] = 1.0 / std::sqrt(px[i]);
      }
      break;
    default:
      break;
  }
  nodes_[static_cast<std::size_t>(id)].c = c;
  return Var{id};
}

Var Tape::scale(Var a, double c) { return unary(Op::scale, a, c); }
Var Tape::add_scalar(Var a, double c) { return unary(Op::add_scalar, a, c); }
Var Tape::sigmoid(Var a) { return unary(Op::sigmoid, a); }
Var Tape::relu(Var a) { return unary(Op::relu, a); }
Var Tape::log(Var a) { return unary(Op::log_, a); }
Var Tape::exp(Var a) { return unary(Op::exp_, a); }
Var Tape::abs(Var a) { return unary(Op::abs_, a); }
Var Tape::rsqrt(Var a) { return unary(Op::rsqrt, a); }

Var Tape::row_softmax(Var va) {
  const Node a = node(va);
  const auto id = push(Op::row_softmax, va.id, -1, a.rows, a.cols);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t i = 0; i < a.rows; ++i)
    softmax_row(px + i * a.cols, py + i * a.cols, a.cols);
  return Var{id};
}

Var Tape::logsumexp_rows(Var va) {
  const Node a = node(va);
  const auto id = push(Op::lse_rows, va.id, -1, a.rows, 1);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* x = px + i * a.cols;
    double m = x[0];
    for (std::size_t j = 1; j < a.cols; ++j) m = std::max(m, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += std::exp(x[j] - m);
    py[i] = m + std::log(s);
  }
  return Var{id};
}

Var Tape::logsumexp_cols(Var va) {
  const Node a = node(va);
  const auto id = push(Op::lse_cols, va.id, -1, 1, a.cols);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t j = 0; j < a.cols; ++j) {
    double m = px[j];
    for (std::size_t i = 1; i < a.rows; ++i) m = std::max(m, px[i * a.cols + j]);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += std::exp(px[i * a.cols + j] - m);
    py[j] = m + std::log(s);
  }
  return Var{id};
}

Var Tape::sum(Var va) {
  const Node a = node(va);
  const auto id = push(Op::sum, va.id, -1, 1, 1);
  const double* px = val(a);
  double s = 0.0;
  const std::size_t n = a.rows * a.cols;
  for (std::size_t i = 0; i < n; ++i) s += px[i];
  val_[nodes_.back().off] = s;
  return Var{id};
}

Var Tape::mean(Var va) {
  const Node a = node(va);
  if (a.rows * a.cols == 0) throw_runtime("tape mean: empty input");
  const auto id = push(Op::mean, va.id, -1, 1, 1);
  const double* px = val(a);
  double s = 0.0;
  const std::size_t n = a.rows * a.cols;
  for (std::size_t i = 0; i < n; ++i) s += px[i];
  val_[nodes_.back().off] = s / static_cast<double>(n);
  return Var{id};
}

Var Tape::row_sum(Var va) {
  const Node a = node(va);
  const auto id = push(Op::row_sum, va.id, -1, a.rows, 1);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t i = 0; i < a.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += px[i * a.cols + j];
    py[i] = s;
  }
  return Var{id};
}

Var Tape::transpose(Var va) {
  const Node a = node(va);
  const auto id = push(Op::transpose, va.id, -1, a.cols, a.rows);
  const Node& out = nodes_.back();
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) py[j * a.rows + i] = px[i * a.cols + j];
  return Var{id};
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw_runtime("tape concat_rows: no inputs");
  std::size_t rows = 0;
  const std::size_t cols = node(parts[0]).cols;
  for (const Var p : parts) {
    const Node& n = node(p);
    if (n.cols != cols)
      throw_runtime("tape concat_rows: column mismatch " +
                    shape_str(n.rows, n.cols) + " vs expected cols " +
                    std::to_string(cols));
    rows += n.rows;
  }
  const std::uint32_t aux0 = static_cast<std::uint32_t>(aux_vars_.size());
  for (const Var p : parts) aux_vars_.push_back(p.id);

  const auto id = push(Op::concat_rows, -1, -1, rows, cols);
  Node& out = nodes_.back();
  out.i0 = aux0;
  out.i1 = static_cast<std::uint32_t>(parts.size());
  double* py = val(out);
  std::size_t r = 0;
  for (const Var p : parts) {
    const Node& n = node(p);
    std::memcpy(py + r * cols, val(n), n.rows * n.cols * sizeof(double));
    r += n.rows;
  }
  return Var{id};
}

Var Tape::slice_rows(Var va, std::size_t r0, std::size_t r1) {
  const Node a = node(va);
  if (r0 >= r1 || r1 > a.rows)
    throw_runtime("tape slice_rows: range [" + std::to_string(r0) + ", " +
                  std::to_string(r1) + ") out of bounds for " +
                  shape_str(a.rows, a.cols));
  const auto id = push(Op::slice_rows, va.id, -1, r1 - r0, a.cols);
  Node& out = nodes_.back();
  out.i0 = static_cast<std::uint32_t>(r0);
  std::memcpy(val(out), val(a) + r0 * a.cols, (r1 - r0) * a.cols * sizeof(double));
  return Var{id};
}

Var Tape::slice_cols(Var va, std::size_t c0, std::size_t c1) {
  const Node a = node(va);
  if (c0 >= c1 || c1 > a.cols)
    throw_runtime("tape slice_cols: range [" + std::to_string(c0) + ", " +
                  std::to_string(c1) + ") out of bounds for " +
                  shape_str(a.rows, a.cols));
  const auto id = push(Op::slice_cols, va.id, -1, a.rows, c1 - c0);
  Node& out = nodes_.back();
  out.i0 = static_cast<std::uint32_t>(c0);
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < c1 - c0; ++j) py[i * (c1 - c0) + j] = px[i * a.cols + c0 + j];
  return Var{id};
}

Var Tape::gather(Var va,
                 std::span<const std::pair<std::uint32_t, std::uint32_t>> idx) {
  const Node a = node(va);
  for (const auto& [r, c] : idx)
    if (r >= a.rows || c >= a.cols)
      throw_runtime("tape gather: index (" + std::to_string(r) + ", " +
                    std::to_string(c) + ") out of bounds for " +
                    shape_str(a.rows, a.cols));
  const std::uint32_t aux0 = static_cast<std::uint32_t>(aux_pairs_.size());
  aux_pairs_.insert(aux_pairs_.end(), idx.begin(), idx.end());
  const auto id = push(Op::gather, va.id, -1, idx.size(), 1);
  Node& out = nodes_.back();
  out.i0 = aux0;
  out.i1 = static_cast<std::uint32_t>(idx.size());
  const double* px = val(a);
  double* py = val(out);
  for (std::size_t k = 0; k < idx.size(); ++k)
    py[k] = px[idx[k].first * a.cols + idx[k].second];
  return Var{id};
}

Var Tape::edge_symmetric(
    Var values, std::span<const std::pair<std::uint32_t, std::uint32_t>> edges,
    std::size_t n) {
  const Node a = node(values);
  if (a.cols != 1 || a.rows != edges.size())
    throw_runtime("tape edge_symmetric: values " + shape_str(a.rows, a.cols) +
                  " do not match edge count " + std::to_string(edges.size()));
  for (const auto& [u, v] : edges)
    if (u >= n || v >= n || u == v)
      throw_runtime("tape edge_symmetric: bad edge (" + std::to_string(u) +
                    ", " + std::to_string(v) + ") for n=" + std::to_string(n));
  const std::uint32_t aux0 = static_cast<std::uint32_t>(aux_pairs_.size());
  aux_pairs_.insert(aux_pairs_.end(), edges.begin(), edges.end());
  const auto id = push(Op::edge_symmetric, values.id, -1, n, n);
  Node& out = nodes_.back();
  out.i0 = aux0;
  out.i1 = static_cast<std::uint32_t>(edges.size());
  const double* pv = val(a);
  double* py = val(out);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    py[edges[e].first * n + edges[e].second] = pv[e];
    py[edges[e].second * n + edges[e].first] = pv[e];
  }
  return Var{id};
}

MatrixView Tape::value(Var v) const {
  const Node& n = node(v);
  return MatrixView{n.rows, n.cols, val(n)};
}

MatrixView Tape::grad(Var v) const {
  const Node& n = node(v);
  if (grd_.size() < n.off + n.rows * n.cols)
    throw_runtime("tape grad: backward() has not been run");
  return MatrixView{n.rows, n.cols, grd_.data() + n.off};
}

void Tape::check_finite_grad(std::size_t node_index) const {
  const Node& n = nodes_[node_index];
  const double* g = grd_.data() + n.off;
  const std::size_t sz = n.rows * n.cols;
  for (std::size_t i = 0; i < sz; ++i) {
    if (!std::isfinite(g[i]))
      throw_runtime("tape backward: non-finite gradient at entry #" +
                    std::to_string(node_index) + " (" +
                    op_name(static_cast<int>(n.op)) + ")");
  }
}

void Tape::reset() {
  nodes_.clear();
  val_.clear();
  aux_vars_.clear();
  aux_pairs_.clear();
  log_clamps_ = 0;
}

void Tape::backward(Var out_var) {
  const Node& out = node(out_var);
  if (out.rows != 1 || out.cols != 1)
    throw_runtime("tape backward: output must be scalar, got " +
                  shape_str(out.rows, out.cols));
  if (!std::isfinite(val_[out.off]))
    throw_runtime("tape backward: output value is not finite");

  grd_.assign(val_.size(), 0.0);
  grd_[out.off] = 1.0;

  std::vector<std::uint8_t> reached(nodes_.size(), 0);
  reached[static_cast<std::size_t>(out_var.id)] = 1;

  for (std::size_t k = static_cast<std::size_t>(out_var.id) + 1; k-- > 0;) {
    if (!reached[k]) continue;
    const Node& n = nodes_[k];
    check_finite_grad(k);
    if (n.op == Op::leaf) continue;
    const double* g = grd_.data() + n.off;
    auto reach = [&](std::int32_t id) {
      if (id >= 0) reached[static_cast<std::size_t>(id)] = 1;
    };

    switch (n.op) {
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        double* ga = grd_.data() + a.off;
        double* gb = grd_.data() + b.off;
        const double* pa = val(a);
        const double* pb = val(b);
        const std::size_t R = n.rows, C = n.cols;
        const std::size_t ars = (a.rows == 1) ? 0 : a.cols;
        const std::size_t acs = (a.cols == 1) ? 0 : 1;
        const std::size_t brs = (b.rows == 1) ? 0 : b.cols;
        const std::size_t bcs = (b.cols == 1) ? 0 : 1;
        for (std::size_t i = 0; i < R; ++i) {
          for (std::size_t j = 0; j < C; ++j) {
            const double gv = g[i * C + j];
            const std::size_t ia = i * ars + j * acs;
            const std::size_t ib = i * brs + j * bcs;
            switch (n.op) {
              case Op::add:
                ga[ia] += gv;
                gb[ib] += gv;
                break;
              case Op::sub:
                ga[ia] += gv;
                gb[ib] -= gv;
                break;
              case Op::mul:
                ga[ia] += gv * pb[ib];
                gb[ib] += gv * pa[ia];
                break;
              case Op::div: {
                const double y = pb[ib];
                ga[ia] += gv / y;
                gb[ib] -= gv * pa[ia] / (y * y);
                break;
              }
              default:
                break;
            }
          }
        }
        reach(n.a);
        reach(n.b);
        break;
      }
      case Op::matmul: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        const Node& b = nodes_[static_cast<std::size_t>(n.b)];
        double* ga = grd_.data() + a.off;
        double* gb = grd_.data() + b.off;
        const double* pa = val(a);
        const double* pb = val(b);
        const std::size_t N = a.rows, K = a.cols, M = b.cols;
        // dA += G * B^T
        for (std::size_t i = 0; i < N; ++i) {
          for (std::size_t p = 0; p < K; ++p) {
            double s = 0.0;
            const double* gi = g + i * M;
            const double* bp = pb + p * M;
            for (std::size_t j = 0; j < M; ++j) s += gi[j] * bp[j];
            ga[i * K + p] += s;
          }
        }
        // dB += A^T * G
        for (std::size_t i = 0; i < N; ++i) {
          const double* ai = pa + i * K;
          const double* gi = g + i * M;
          for (std::size_t p = 0; p < K; ++p) {
            const double av = ai[p];
            double* gbp = gb + p * M;
            for (std::size_t j = 0; j < M; ++j) gbp[j] += av * gi[j];
          }
        }
        reach(n.a);
        reach(n.b);
        break;
      }
      case Op::scale: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += n.c * g[i];
        reach(n.a);
        break;
      }
      case Op::add_scalar: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        reach(n.a);
        break;
      }
      case Op::sigmoid: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* y = val(n);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        reach(n.a);
        break;
      }
      case Op::relu: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* x = val(a);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i)
          if (x[i] > 0.0) ga[i] += g[i];
        reach(n.a);
        break;
      }
      case Op::log_: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* x = val(a);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i)
          if (x[i] >= kLogFloor) ga[i] += g[i] / x[i];
        reach(n.a);
        break;
      }
      case Op::exp_: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* y = val(n);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i];
        reach(n.a);
        break;
      }
      case Op::abs_: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* x = val(a);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) {
          if (x[i] > 0.0)
            ga[i] += g[i];
          else if (x[i] < 0.0)
            ga[i] -= g[i];
        }
        reach(n.a);
        break;
      }
      case Op::rsqrt: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* y = val(n);
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i)
          ga[i] += g[i] * (-0.5) * y[i] * y[i] * y[i];
        reach(n.a);
        break;
      }
      case Op::row_softmax: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* y = val(n);
        for (std::size_t i = 0; i < n.rows; ++i) {
          const double* yi = y + i * n.cols;
          const double* gi = g + i * n.cols;
          double dot = 0.0;
          for (std::size_t j = 0; j < n.cols; ++j) dot += gi[j] * yi[j];
          for (std::size_t j = 0; j < n.cols; ++j)
            ga[i * n.cols + j] += yi[j] * (gi[j] - dot);
        }
        reach(n.a);
        break;
      }
      case Op::lse_rows: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* x = val(a);
        const double* y = val(n);
        for (std::size_t i = 0; i < a.rows; ++i) {
          const double gv = g[i];
          for (std::size_t j = 0; j < a.cols; ++j)
            ga[i * a.cols + j] += gv * std::exp(x[i * a.cols + j] - y[i]);
        }
        reach(n.a);
        break;
      }
      case Op::lse_cols: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double* x = val(a);
        const double* y = val(n);
        for (std::size_t i = 0; i < a.rows; ++i)
          for (std::size_t j = 0; j < a.cols; ++j)
            ga[i * a.cols + j] += g[j] * std::exp(x[i * a.cols + j] - y[j]);
        reach(n.a);
        break;
      }
      case Op::sum: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const double gv = g[0];
        const std::size_t sz = a.rows * a.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += gv;
        reach(n.a);
        break;
      }
      case Op::mean: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        const std::size_t sz = a.rows * a.cols;
        const double gv = g[0] / static_cast<double>(sz);
        for (std::size_t i = 0; i < sz; ++i) ga[i] += gv;
        reach(n.a);
        break;
      }
      case Op::row_sum: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        for (std::size_t i = 0; i < a.rows; ++i)
          for (std::size_t j = 0; j < a.cols; ++j) ga[i * a.cols + j] += g[i];
        reach(n.a);
        break;
      }
      case Op::transpose: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        for (std::size_t i = 0; i < a.rows; ++i)
          for (std::size_t j = 0; j < a.cols; ++j)
            ga[i * a.cols + j] += g[j * a.rows + i];
        reach(n.a);
        break;
      }
      case Op::concat_rows: {
        std::size_t r = 0;
        for (std::uint32_t t = 0; t < n.i1; ++t) {
          const std::int32_t src = aux_vars_[n.i0 + t];
          const Node& a = nodes_[static_cast<std::size_t>(src)];
          double* ga = grd_.data() + a.off;
          const std::size_t sz = a.rows * a.cols;
          const double* gpart = g + r * n.cols;
          for (std::size_t i = 0; i < sz; ++i) ga[i] += gpart[i];
          r += a.rows;
          reach(src);
        }
        break;
      }
      case Op::slice_rows: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off + n.i0 * a.cols;
        const std::size_t sz = n.rows * n.cols;
        for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        reach(n.a);
        break;
      }
      case Op::slice_cols: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        for (std::size_t i = 0; i < n.rows; ++i)
          for (std::size_t j = 0; j < n.cols; ++j)
            ga[i * a.cols + n.i0 + j] += g[i * n.cols + j];
        reach(n.a);
        break;
      }
      case Op::gather: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        for (std::uint32_t k2 = 0; k2 < n.i1; ++k2) {
          const auto& [r, c] = aux_pairs_[n.i0 + k2];
          ga[r * a.cols + c] += g[k2];
        }
        reach(n.a);
        break;
      }
      case Op::edge_symmetric: {
        const Node& a = nodes_[static_cast<std::size_t>(n.a)];
        double* ga = grd_.data() + a.off;
        for (std::uint32_t e = 0; e < n.i1; ++e) {
          const auto& [u, v] = aux_pairs_[n.i0 + e];
          ga[e] += g[u * n.cols + v] + g[v * n.cols + u];
        }
        reach(n.a);
        break;
      }
      case Op::leaf:
        break;
    }
  }
}

}  // namespace referee::num
