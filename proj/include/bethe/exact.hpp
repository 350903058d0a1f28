#ifndef BETHE_EXACT_HPP
#define BETHE_EXACT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "bethe/factor_graph.hpp"
#include "bethe/util.hpp"

namespace bethe {

struct ExactResult {
  double log_z;
  std::vector<Eigen::VectorXd> marginals;          // per variable, length q
  std::vector<std::vector<double>> factor_marginals;  // per factor, table shape
};

namespace detail {

inline void check_enumeration_bound(const FactorGraph& g) {
  double bits = g.num_vars() * std::log2(static_cast<double>(g.alphabet_size()));
  if (bits > 30.0 + 1e-9)
    throw BoundError("enumeration bound exceeded: q^N > 2^30");
}

// Visits every global assignment with its log weight log prod_a f_a.
// Assignments are enumerated row-major, last variable fastest.
template <typename Fn>
inline void for_each_assignment(const FactorGraph& g, Fn&& fn) {
  check_enumeration_bound(g);
  const int n = g.num_vars();
  const int q = g.alphabet_size();
  std::vector<int> x(n, 0);
  std::vector<int> local;
  do {
    double logw = 0.0;
    for (int a = 0; a < g.num_factors() && logw != kNegInf; ++a) {
      const Factor& f = g.factor(a);
      int64_t idx = 0;
      for (int v : f.neighbors) idx = idx * q + x[v];
      double val = f.table[idx];
      logw = val > 0.0 ? logw + std::log(val) : kNegInf;
    }
    fn(x, logw);
  } while (n > 0 && next_assignment(x, q));
}

}  // namespace detail

/// log Z by exhaustive enumeration, accumulated with a running max shift.
inline double brute_force_z(const FactorGraph& g) {
  LogSumExp acc;
  detail::for_each_assignment(g, [&](const std::vector<int>&, double logw) {
    acc.add(logw);
  });
  if (acc.value() == kNegInf)
    throw NumericError("partition function is zero: empty global support");
  return acc.value();
}

/// Exact variable and factor marginals together with log Z.
inline ExactResult brute_force_marginals(const FactorGraph& g) {
  const int q = g.alphabet_size();
  // First pass for the shift, second accumulates normalized weights.
  double max_logw = kNegInf;
  detail::for_each_assignment(g, [&](const std::vector<int>&, double logw) {
    if (logw > max_logw) max_logw = logw;
  });
  if (max_logw == kNegInf)
    throw NumericError("partition function is zero: empty global support");

  ExactResult res;
  res.marginals.assign(g.num_vars(), Eigen::VectorXd::Zero(q));
  res.factor_marginals.resize(g.num_factors());
  for (int a = 0; a < g.num_factors(); ++a)
    res.factor_marginals[a].assign(g.factor(a).table.size(), 0.0);

  double total = 0.0;
  detail::for_each_assignment(g, [&](const std::vector<int>& x, double logw) {
    if (logw == kNegInf) return;
    double w = std::exp(logw - max_logw);
    total += w;
    for (int i = 0; i < g.num_vars(); ++i) res.marginals[i][x[i]] += w;
    for (int a = 0; a < g.num_factors(); ++a) {
      const Factor& f = g.factor(a);
      int64_t idx = 0;
      for (int v : f.neighbors) idx = idx * q + x[v];
      res.factor_marginals[a][idx] += w;
    }
  });
  res.log_z = max_logw + std::log(total);
  for (auto& m : res.marginals) m /= total;
  for (auto& fm : res.factor_marginals)
    for (double& v : fm) v /= total;
  return res;
}

/// Gibbs free energy U - H of an explicit distribution over X^N, indexed
/// like the enumeration order (last variable fastest). Infinite when the
/// distribution puts mass outside the model support.
inline double gibbs_free_energy(const FactorGraph& g,
                                const std::vector<double>& q_dist) {
  detail::check_enumeration_bound(g);
  int64_t states = ipow(g.alphabet_size(), g.num_vars());
  if (static_cast<int64_t>(q_dist.size()) != states)
    throw ValidationError("distribution size must be q^N");
  double mass = 0.0;
  for (double p : q_dist) {
    if (p < 0.0) throw ValidationError("negative probability");
    mass += p;
  }
  if (std::abs(mass - 1.0) > 1e-6)
    throw ValidationError("distribution does not sum to 1");

  double energy = 0.0;   // -sum q log prod f
  double neg_entropy = 0.0;
  int64_t idx = 0;
  bool infinite = false;
  detail::for_each_assignment(g, [&](const std::vector<int>&, double logw) {
    double p = q_dist[idx++];
    if (p > 0.0) {
      if (logw == kNegInf) infinite = true;
      energy -= p * logw;
      neg_entropy += xlogx(p);
    }
  });
  if (infinite) return kPosInf;
  return energy + neg_entropy;
}

/// log Z of a single-cycle graph as the log trace of the ordered transfer
/// matrix product. Degree-1 factors are absorbed into the row index side of
/// the adjacent matrix.
inline double transfer_matrix_z(const FactorGraph& g) {
  const int q = g.alphabet_size();
  std::vector<int> pair_factors;
  std::vector<std::vector<int>> var_pair_edges(g.num_vars());
  std::vector<std::vector<int>> var_unary(g.num_vars());
  for (int a = 0; a < g.num_factors(); ++a) {
    int d = g.fac_degree(a);
    if (d == 2) {
      pair_factors.push_back(a);
      for (int e : g.fac_edges(a)) var_pair_edges[g.edge(e).var].push_back(e);
    } else if (d == 1) {
      var_unary[g.factor(a).neighbors[0]].push_back(a);
    } else {
      throw ValidationError("graph is not a single cycle: factor degree > 2");
    }
  }
  if (g.num_vars() < 2 || pair_factors.empty())
    throw ValidationError("graph is not a single cycle");
  for (int i = 0; i < g.num_vars(); ++i)
    if (var_pair_edges[i].size() != 2)
      throw ValidationError("graph is not a single cycle: variable degree != 2");

  // Walk the cycle starting from variable 0.
  int start = 0;
  int var = start;
  int enter_edge = -1;  // edge through which we arrived at var
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(q, q);
  double log_scale = 0.0;
  size_t visited_factors = 0;
  size_t visited_vars = 0;
  do {
    ++visited_vars;
    int e_out = var_pair_edges[var][0] == enter_edge ? var_pair_edges[var][1]
                                                     : var_pair_edges[var][0];
    int a = g.edge(e_out).fac;
    int next_edge = g.fac_edges(a)[0] == e_out ? g.fac_edges(a)[1]
                                               : g.fac_edges(a)[0];
    int next_var = g.edge(next_edge).var;
    ++visited_factors;

    Eigen::MatrixXd f(q, q);
    bool var_is_first = g.edge(e_out).slot == 0;
    for (int x = 0; x < q; ++x)
      for (int y = 0; y < q; ++y)
        f(x, y) = var_is_first ? g.factor(a).table[x * q + y]
                               : g.factor(a).table[y * q + x];
    for (int ua : var_unary[var])
      for (int x = 0; x < q; ++x) f.row(x) *= g.factor(ua).table[x];

    prod = prod * f;
    double scale = prod.cwiseAbs().maxCoeff();
    if (scale <= 0.0) throw NumericError("transfer matrix product vanished");
    prod /= scale;
    log_scale += std::log(scale);

    var = next_var;
    enter_edge = next_edge;
  } while (var != start);

  if (visited_vars != static_cast<size_t>(g.num_vars()) ||
      visited_factors != pair_factors.size())
    throw ValidationError("graph is not a single cycle: disconnected parts");

  double tr = prod.trace();
  if (tr <= 0.0) throw NumericError("nonpositive transfer matrix trace");
  return std::log(tr) + log_scale;
}

/// log Z of a zero-field Ising graph via the even-subgraph expansion
/// Z = 2^N prod cosh(beta J) sum over even edge subsets of prod tanh(beta J).
inline double ising_high_temp_z(const FactorGraph& g) {
  if (g.alphabet_size() != 2)
    throw ValidationError("non-Ising factor encountered: alphabet is not binary");
  std::vector<double> tanh_j;
  std::vector<std::pair<int, int>> pairs;
  double log_prefactor = g.num_vars() * std::log(2.0);
  for (int a = 0; a < g.num_factors(); ++a) {
    const Factor& f = g.factor(a);
    if (f.neighbors.size() == 1) {
      if (std::abs(f.table[0] - f.table[1]) >
          1e-12 * std::max(f.table[0], f.table[1]))
        throw ValidationError("nonzero field present");
      log_prefactor += std::log(f.table[0]);
      continue;
    }
    if (f.neighbors.size() != 2)
      throw ValidationError("non-Ising factor encountered: degree > 2");
    double a00 = f.table[0], a01 = f.table[1], a10 = f.table[2], a11 = f.table[3];
    if (a00 <= 0.0 || a01 <= 0.0 ||
        std::abs(a00 - a11) > 1e-12 * std::max(a00, a11) ||
        std::abs(a01 - a10) > 1e-12 * std::max(a01, a10))
      throw ValidationError("non-Ising factor encountered: table is not exp(bJss')");
    double beta_j = 0.5 * (std::log(a00) - std::log(a01));
    double log_s = 0.5 * (std::log(a00) + std::log(a01));
    log_prefactor += log_s + std::log(std::cosh(beta_j));
    tanh_j.push_back(std::tanh(beta_j));
    pairs.push_back({f.neighbors[0], f.neighbors[1]});
  }
  int p = static_cast<int>(pairs.size());
  if (p > 24) throw BoundError("enumeration bound exceeded: 2^|E| > 2^24");

  std::vector<uint32_t> var_mask(g.num_vars(), 0);
  for (int k = 0; k < p; ++k) {
    var_mask[pairs[k].first] |= 1u << k;
    var_mask[pairs[k].second] |= 1u << k;
  }
  double sum = 0.0;
  for (uint32_t mask = 0; mask < (1u << p); ++mask) {
    bool even = true;
    for (int i = 0; i < g.num_vars() && even; ++i)
      even = (__builtin_popcount(mask & var_mask[i]) & 1) == 0;
    if (!even) continue;
    double term = 1.0;
    for (int k = 0; k < p; ++k)
      if (mask & (1u << k)) term *= tanh_j[k];
    sum += term;
  }
  return log_prefactor + std::log(sum);
}

}  // namespace bethe

#endif  // BETHE_EXACT_HPP
