#pragma once

// Test-only oracles, kept independent of the implementation paths they check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace referee::testing {

// Guarded relative error: |a - b| / max(|a|, |b|, guard).
inline double rel_error(double a, double b, double guard = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), guard});
}

inline double max_rel_error(std::span<const double> analytic,
                            std::span<const double> numeric,
                            double guard = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, rel_error(analytic[i], numeric[i], guard));
  return worst;
}

// Central finite differences of a scalar function of a flat parameter vector.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Exact transportation solve between two empirical distributions with uniform
// weights and cost c_ij = 2 |x_i - y_j| (the l1 ground metric on binary
// simplex vectors). Masses are scaled to integers (m units per source, n per
// sink) and the problem is solved as min-cost max-flow with successive
// shortest paths, i.e. a brute-force linear-program solve of the
// transportation polytope. Independent of the quantile-function route.
inline double transport_lp_binary(std::span<const double> xs,
                                  std::span<const double> ys) {
  const int n = static_cast<int>(xs.size());
  const int m = static_cast<int>(ys.size());
  const int source = 0;
  const int sink = n + m + 1;
  const int num_nodes = n + m + 2;

  struct Arc {
    int to;
    int cap;
    double cost;
    int rev;
  };
  std::vector<std::vector<Arc>> adj(num_nodes);
  auto add_arc = [&](int u, int v, int cap, double cost) {
    adj[u].push_back({v, cap, cost, static_cast<int>(adj[v].size())});
    adj[v].push_back({u, 0, -cost, static_cast<int>(adj[u].size() - 1)});
  };
  for (int i = 0; i < n; ++i) add_arc(source, 1 + i, m, 0.0);
  for (int j = 0; j < m; ++j) add_arc(1 + n + j, sink, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      add_arc(1 + i, 1 + n + j, n * m, 2.0 * std::fabs(xs[i] - ys[j]));

  double total_cost = 0.0;
  int remaining = n * m;
  const double inf = std::numeric_limits<double>::infinity();
  while (remaining > 0) {
    // Bellman-Ford over the residual network.
    std::vector<double> dist(num_nodes, inf);
    std::vector<int> prev_node(num_nodes, -1), prev_arc(num_nodes, -1);
    dist[source] = 0.0;
    for (int round = 0; round < num_nodes; ++round) {
      bool changed = false;
      for (int u = 0; u < num_nodes; ++u) {
        if (dist[u] == inf) continue;
        for (std::size_t k = 0; k < adj[u].size(); ++k) {
          const Arc& a = adj[u][k];
          if (a.cap > 0 && dist[u] + a.cost < dist[a.to]) {
            dist[a.to] = dist[u] + a.cost;
            prev_node[a.to] = u;
            prev_arc[a.to] = static_cast<int>(k);
            changed = true;
          }
        }
      }
      if (!changed) break;
    }
    int bottleneck = remaining;
    for (int v = sink; v != source; v = prev_node[v])
      bottleneck = std::min(bottleneck, adj[prev_node[v]][prev_arc[v]].cap);
    for (int v = sink; v != source; v = prev_node[v]) {
      Arc& a = adj[prev_node[v]][prev_arc[v]];
      a.cap -= bottleneck;
      adj[v][a.rev].cap += bottleneck;
      total_cost += bottleneck * a.cost;
    }
    remaining -= bottleneck;
  }
  return total_cost / static_cast<double>(n * m);
}

}  // namespace referee::testing
