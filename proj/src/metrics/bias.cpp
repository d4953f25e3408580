#include "referee/metrics/bias.hpp"

#include <algorithm>
#include <cmath>

#include "referee/util/error.hpp"

namespace referee::metrics {

namespace {

// W1 between pre-sorted sample sets, in quantile form over a common grid of
// breakpoints at multiples of 1/(n0*n1).
double w1_sorted(std::span<const double> a, std::span<const double> b) {
  const std::uint64_t n0 = a.size();
  const std::uint64_t n1 = b.size();
  const std::uint64_t total = n0 * n1;
  std::uint64_t pos = 0;
  std::size_t i = 0, j = 0;
  double acc = 0.0;
  while (pos < total) {
    const std::uint64_t next_a = (i + 1) * n1;
    const std::uint64_t next_b = (j + 1) * n0;
    const std::uint64_t next = std::min(next_a, next_b);
    acc += static_cast<double>(next - pos) * std::fabs(a[i] - b[j]);
    if (next == next_a) ++i;
    if (next == next_b) ++j;
    pos = next;
  }
  return 2.0 * acc / static_cast<double>(total);
}

void check_probability_samples(std::span<const double> s, const char* which) {
  if (s.empty())
    throw_runtime(std::string("w1_exact_binary: sample set ") + which + " is empty");
  for (const double x : s)
    if (!(x >= 0.0 && x <= 1.0))
      throw_runtime(std::string("w1_exact_binary: sample ") + std::to_string(x) +
                    " in set " + which + " is not a probability");
}

}  // namespace

double w1_exact_binary(std::span<const double> set0, std::span<const double> set1) {
  check_probability_samples(set0, "0");
  check_probability_samples(set1, "1");
  std::vector<double> a(set0.begin(), set0.end());
  std::vector<double> b(set1.begin(), set1.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return w1_sorted(a, b);
}

void OutcomeSet::validate() const {
  if (outcomes.rows == 0) throw_runtime("outcome set: empty");
  if (groups.size() != outcomes.rows)
    throw_runtime("outcome set: group vector length " + std::to_string(groups.size()) +
                  " does not match " + std::to_string(outcomes.rows) + " rows");
  bool has[2] = {false, false};
  for (std::size_t i = 0; i < outcomes.rows; ++i) {
    if (groups[i] > 1) throw_runtime("outcome set: non-binary group value");
    has[groups[i]] = true;
    double s = 0.0;
    for (std::size_t c = 0; c < outcomes.cols; ++c) {
      const double p = outcomes.at(i, c);
      if (p < 0.0)
        throw_runtime("outcome set: negative probability at row " + std::to_string(i));
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw_runtime("outcome set: row " + std::to_string(i) +
                    " sums to " + std::to_string(s) + ", not 1");
  }
  if (!has[0] || !has[1])
    throw_runtime(std::string("outcome set: group ") + (has[0] ? "1" : "0") +
                  " is empty");
}

std::vector<double> OutcomeSet::group_positive(std::uint8_t group) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < outcomes.rows; ++i)
    if (groups[i] == group) out.push_back(outcomes.at(i, 1));
  return out;
}

num::Var sinkhorn_w1(num::Tape& t, num::Var a, num::Var b, double eps, int iters) {
  if (eps <= 0.0) throw_runtime("sinkhorn_w1: eps must be positive");
  if (iters < 1) throw_runtime("sinkhorn_w1: iteration count must be >= 1");
  const auto av = t.value(a);
  const auto bv = t.value(b);
  if (av.cols != bv.cols)
    throw_runtime("sinkhorn_w1: class-count mismatch " +
                  num::shape_str(av.rows, av.cols) + " vs " +
                  num::shape_str(bv.rows, bv.cols));
  if (av.rows == 0 || bv.rows == 0) throw_runtime("sinkhorn_w1: empty input set");
  const std::size_t n = av.rows, m = bv.rows, classes = av.cols;

  num::Var cost;
  for (std::size_t k = 0; k < classes; ++k) {
    const num::Var ak = t.slice_cols(a, k, k + 1);                 // n x 1
    const num::Var bk = t.transpose(t.slice_cols(b, k, k + 1));    // 1 x m
    const num::Var term = t.abs(t.sub(ak, bk));                    // n x m
    cost = k == 0 ? term : t.add(cost, term);
  }
  {
    const auto cv = t.value(cost);
    for (std::size_t i = 0; i < cv.size(); ++i)
      if (!std::isfinite(cv.data[i]))
        throw_runtime("sinkhorn_w1: non-finite cost entry");
  }

  const num::Var log_a = t.constant(
      num::Matrix(n, 1, std::log(1.0 / static_cast<double>(n))));
  const num::Var log_b = t.constant(
      num::Matrix(1, m, std::log(1.0 / static_cast<double>(m))));
  num::Var phi = t.constant(num::Matrix(n, 1, 0.0));
  num::Var psi = t.constant(num::Matrix(1, m, 0.0));

  // Warm-started scaling schedule: geometric ramp from eps0 down to the
  // target over the first half of the iterations, constant afterwards.
  // Potentials carry over across the ramp by rescaling, which keeps the
  // unscaled duals continuous. Both updates advance jointly from the previous
  // iterate, so the whole computation is exactly symmetric under swapping the
  // two input sets.
  const double eps0 = 1.0;
  const double floor_eps = std::min(1e-3, eps);
  const double ratio = std::pow(floor_eps / eps0,
                                1.0 / std::max(1.0, static_cast<double>(iters) / 2.0));
  double eps_prev = -1.0;
  num::Var kernel;  // -cost / eps_k, rebuilt when the schedule moves
  for (int k = 0; k < iters; ++k) {
    const double eps_k =
        std::max(eps, eps0 * std::pow(ratio, static_cast<double>(k)));
    if (eps_k != eps_prev) {
      if (eps_prev > 0.0) {
        const double carry = eps_prev / eps_k;
        phi = t.scale(phi, carry);
        psi = t.scale(psi, carry);
      }
      kernel = t.scale(cost, -1.0 / eps_k);
      eps_prev = eps_k;
    }
    const num::Var phi_next = t.sub(log_a, t.logsumexp_rows(t.add(kernel, psi)));
    const num::Var psi_next = t.sub(log_b, t.logsumexp_cols(t.add(kernel, phi)));
    phi = phi_next;
    psi = psi_next;
  }

  // Readout: normalize the plan in the log domain (no overflow), then round
  // it onto the transportation polytope. The rounded plan is feasible, so the
  // reported cost never drops below the exact distance.
  const num::Var log_pi = t.add(t.add(kernel, phi), psi);
  const num::Var log_mass = t.logsumexp_rows(t.logsumexp_cols(log_pi));
  const num::Var plan = t.exp(t.sub(log_pi, log_mass));

  auto clamp_unit = [&](num::Var x) {  // min(1, x)
    return t.sub(x, t.relu(t.add_scalar(x, -1.0)));
  };
  const num::Var marg_a =
      t.constant(num::Matrix(n, 1, 1.0 / static_cast<double>(n)));
  const num::Var marg_b =
      t.constant(num::Matrix(1, m, 1.0 / static_cast<double>(m)));
  const num::Var row_scale = clamp_unit(t.div(marg_a, t.row_sum(plan)));
  const num::Var col_scale =
      clamp_unit(t.div(marg_b, t.transpose(t.row_sum(t.transpose(plan)))));
  const num::Var capped = t.mul(t.mul(plan, row_scale), col_scale);

  const num::Var err_a = t.sub(marg_a, t.row_sum(capped));             // n x 1
  const num::Var err_b =
      t.sub(marg_b, t.transpose(t.row_sum(t.transpose(capped))));     // 1 x m
  const num::Var err_mass = t.add_scalar(t.sum(err_a), 1e-300);
  const num::Var fill = t.div(t.matmul(err_a, err_b), err_mass);
  const num::Var rounded = t.add(capped, fill);
  return t.sum(t.mul(rounded, cost));
}

double sinkhorn_w1_value(const num::Matrix& a, const num::Matrix& b, double eps,
                         int iters) {
  num::Tape tape;
  const num::Var va = tape.constant(a);
  const num::Var vb = tape.constant(b);
  return tape.value(sinkhorn_w1(tape, va, vb, eps, iters)).data[0];
}

namespace {

// Substitution scanner: holds node i's group sorted without node i, and the
// other group sorted; evaluates the population W1 after placing y in i's slot.
struct SubstitutionScan {
  std::vector<double> own_rest;     // sorted
  std::vector<double> other_group;  // sorted
  std::vector<double> scratch;

  double eval(double y) {
    const auto it = std::upper_bound(own_rest.begin(), own_rest.end(), y);
    scratch.clear();
    scratch.insert(scratch.end(), own_rest.begin(), it);
    scratch.push_back(y);
    scratch.insert(scratch.end(), it, own_rest.end());
    return w1_sorted(scratch, other_group);
  }
};

SubstitutionScan make_scan(const OutcomeSet& outcomes, std::size_t i) {
  SubstitutionScan scan;
  const std::uint8_t gi = outcomes.groups[i];
  for (std::size_t k = 0; k < outcomes.outcomes.rows; ++k) {
    const double p = outcomes.outcomes.at(k, 1);
    if (outcomes.groups[k] == gi) {
      if (k != i) scan.own_rest.push_back(p);
    } else {
      scan.other_group.push_back(p);
    }
  }
  std::sort(scan.own_rest.begin(), scan.own_rest.end());
  std::sort(scan.other_group.begin(), scan.other_group.end());
  scan.scratch.reserve(scan.own_rest.size() + 1);
  return scan;
}

}  // namespace

double d_min(const OutcomeSet& outcomes, std::size_t i, std::size_t grid) {
  outcomes.validate();
  if (outcomes.outcomes.cols != 2)
    throw_runtime("d_min: only binary classification (C=2) is supported");
  if (i >= outcomes.outcomes.rows)
    throw_runtime("d_min: node index " + std::to_string(i) + " out of range");
  if (grid < 2) throw_runtime("d_min: grid resolution must be >= 2");

  SubstitutionScan scan = make_scan(outcomes, i);
  double best = scan.eval(outcomes.outcomes.at(i, 1));  // current value first
  for (std::size_t k = 0; k <= grid; ++k) {
    const double y = static_cast<double>(k) / static_cast<double>(grid);
    best = std::min(best, scan.eval(y));
  }
  return best;
}

BiasScore node_bias(const OutcomeSet& outcomes, std::size_t i, std::size_t grid) {
  BiasScore score;
  score.distance_min = d_min(outcomes, i, grid);
  const auto g0 = outcomes.group_positive(0);
  const auto g1 = outcomes.group_positive(1);
  score.distance = w1_exact_binary(g0, g1);
  score.bias = score.distance - score.distance_min;
  return score;
}

namespace {

double rate_difference(std::span<const std::uint8_t> predictions,
                       std::span<const std::uint8_t> groups,
                       const std::vector<std::size_t>& index, const char* metric) {
  std::size_t count[2] = {0, 0};
  std::size_t positive[2] = {0, 0};
  for (const std::size_t k : index) {
    ++count[groups[k]];
    if (predictions[k] == 1) ++positive[groups[k]];
  }
  for (int gidx = 0; gidx < 2; ++gidx)
    if (count[gidx] == 0)
      throw_runtime(std::string(metric) + ": conditioning set for group " +
                    std::to_string(gidx) + " is empty");
  const double r0 = static_cast<double>(positive[0]) / static_cast<double>(count[0]);
  const double r1 = static_cast<double>(positive[1]) / static_cast<double>(count[1]);
  return std::fabs(r0 - r1);
}

}  // namespace

double delta_sp(std::span<const std::uint8_t> predictions,
                std::span<const std::uint8_t> groups) {
  if (predictions.size() != groups.size())
    throw_runtime("delta_sp: length mismatch");
  std::vector<std::size_t> all(predictions.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return rate_difference(predictions, groups, all, "delta_sp");
}

double delta_eo(std::span<const std::uint8_t> predictions,
                std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> groups) {
  if (predictions.size() != labels.size() || predictions.size() != groups.size())
    throw_runtime("delta_eo: length mismatch");
  std::vector<std::size_t> positives;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] == 1) positives.push_back(k);
  return rate_difference(predictions, groups, positives, "delta_eo");
}

double fidelity(std::span<const std::uint8_t> vanilla_labels,
                std::span<const std::uint8_t> masked_labels) {
  if (vanilla_labels.size() != masked_labels.size())
    throw_runtime("fidelity: length mismatch " +
                  std::to_string(vanilla_labels.size()) + " vs " +
                  std::to_string(masked_labels.size()));
  if (vanilla_labels.empty()) throw_runtime("fidelity: empty input");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < vanilla_labels.size(); ++k)
    if (vanilla_labels[k] == masked_labels[k]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(vanilla_labels.size());
}

}  // namespace referee::metrics
