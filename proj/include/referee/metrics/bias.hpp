#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "referee/num/matrix.hpp"
#include "referee/num/tape.hpp"

namespace referee::metrics {

// Probabilistic outcomes for a population together with its sensitive-group
// assignment.
struct OutcomeSet {
  num::Matrix outcomes;              // N x C, rows on the simplex
  std::vector<std::uint8_t> groups;  // N, in {0, 1}

  void validate() const;
  // Positive-class probabilities (column 1) of one group.
  std::vector<double> group_positive(std::uint8_t group) const;
};

struct BiasScore {
  double distance = 0.0;      // population W1 between the group distributions
  double distance_min = 0.0;  // minimum over re-chosen outcomes of node i
  double bias = 0.0;          // distance - distance_min, >= 0
};

// Exact Wasserstein-1 between the empirical distributions of two sample sets
// of positive-class probabilities, in the l1 ground metric on C=2 simplex
// vectors: 2 * integral over [0,1] of |F0^-1(t) - F1^-1(t)| dt. Handles
// unequal sample counts; segment boundaries are resolved in exact integer
// arithmetic.
double w1_exact_binary(std::span<const double> set0, std::span<const double> set1);

// Entropic-regularized transport cost between two sets of simplex vectors
// (rows of a and b) with the l1 ground cost and uniform marginals, computed
// by `iters` unrolled log-domain scaling iterations on the tape. Both update
// directions advance jointly from the previous iterate, which makes the
// result exactly symmetric under swapping a and b.
num::Var sinkhorn_w1(num::Tape& tape, num::Var a, num::Var b, double eps,
                     int iters);

// Convenience evaluation on a private tape.
double sinkhorn_w1_value(const num::Matrix& a, const num::Matrix& b, double eps,
                         int iters);

// Minimum group-distribution distance achievable by re-choosing node i's
// outcome on the simplex, scanned over the grid {0, 1/grid, ..., 1} plus the
// current value (so the result never exceeds the current distance).
double d_min(const OutcomeSet& outcomes, std::size_t i, std::size_t grid = 1000);

BiasScore node_bias(const OutcomeSet& outcomes, std::size_t i,
                    std::size_t grid = 1000);

// Statistical-parity gap: |positive prediction rate difference| over all nodes.
double delta_sp(std::span<const std::uint8_t> predictions,
                std::span<const std::uint8_t> groups);

// Equal-opportunity gap: the same difference over positively labeled nodes.
double delta_eo(std::span<const std::uint8_t> predictions,
                std::span<const std::uint8_t> labels,
                std::span<const std::uint8_t> groups);

// Fraction of positions where the two label vectors agree.
double fidelity(std::span<const std::uint8_t> vanilla_labels,
                std::span<const std::uint8_t> masked_labels);

}  // namespace referee::metrics
