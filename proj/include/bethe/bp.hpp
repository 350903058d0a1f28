#ifndef BETHE_BP_HPP
#define BETHE_BP_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "bethe/exact.hpp"
#include "bethe/factor_graph.hpp"
#include "bethe/util.hpp"

namespace bethe {

/// Per-edge message pair: to_factor[e] is m_{i->a}, to_var[e] is m_{a->i}.
struct MessageSet {
  std::vector<Eigen::VectorXd> to_factor;
  std::vector<Eigen::VectorXd> to_var;
};

struct BeliefSet {
  std::vector<Eigen::VectorXd> var;           // b_i, length q
  std::vector<std::vector<double>> fac;       // b_a, table shape
  // log normalizers retained for the dual Bethe form
  std::vector<double> log_z_var;              // log Z_i
  std::vector<double> log_z_fac;              // log Z_a
  std::vector<double> log_z_edge;             // log Z_{i,a}
};

struct BPOptions {
  double damping = 0.5;
  double tol = 1e-10;
  int max_iter = 10000;
};

struct BPResult {
  MessageSet messages;
  BeliefSet beliefs;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  double log_z_bethe = 0.0;
  double f_bethe = 0.0;
  uint64_t seed = 0;  // 0 marks the uniform init
};

inline MessageSet uniform_messages(const FactorGraph& g) {
  MessageSet m;
  Eigen::VectorXd u = Eigen::VectorXd::Constant(g.alphabet_size(),
                                                1.0 / g.alphabet_size());
  m.to_factor.assign(g.num_edges(), u);
  m.to_var.assign(g.num_edges(), u);
  return m;
}

inline MessageSet random_messages(const FactorGraph& g, uint64_t seed) {
  Rng rng(seed);
  MessageSet m;
  auto draw = [&] {
    Eigen::VectorXd v(g.alphabet_size());
    for (int x = 0; x < g.alphabet_size(); ++x) v[x] = 0.05 + rng.uniform();
    return Eigen::VectorXd(v / v.sum());
  };
  for (int e = 0; e < g.num_edges(); ++e) {
    m.to_factor.push_back(draw());
    m.to_var.push_back(draw());
  }
  return m;
}

namespace detail {

inline Eigen::VectorXd normalized_or_throw(Eigen::VectorXd v) {
  double s = v.sum();
  if (s <= 0.0 || !std::isfinite(s))
    throw NumericError("unnormalizable message: incompatible factor supports");
  return v / s;
}

// m_{a->i}(x) = sum over the factor table with x_i pinned.
inline Eigen::VectorXd factor_to_var_update(const FactorGraph& g, int e,
                                            const MessageSet& msgs) {
  const int q = g.alphabet_size();
  const auto& edge = g.edge(e);
  const Factor& f = g.factor(edge.fac);
  const int d = static_cast<int>(f.neighbors.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(q);
  std::vector<int> local(d, 0);
  int64_t idx = 0;
  do {
    double w = f.table[idx];
    if (w > 0.0) {
      for (int k = 0; k < d; ++k) {
        if (k == edge.slot) continue;
        w *= msgs.to_factor[g.fac_edges(edge.fac)[k]][local[k]];
      }
      out[local[edge.slot]] += w;
    }
    ++idx;
  } while (next_assignment(local, q));
  return out;
}

}  // namespace detail

/// One synchronous flooding sweep: all variable-to-factor messages from the
/// old set, then all factor-to-variable messages from the fresh ones. Each
/// message is damped against its predecessor and renormalized.
inline MessageSet bp_step(const FactorGraph& g, const MessageSet& msgs,
                          double damping) {
  const int q = g.alphabet_size();
  MessageSet next;
  next.to_factor.resize(g.num_edges());
  next.to_var.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edge(e);
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(q);
    for (int e2 : g.var_edges(edge.var))
      if (e2 != e) prod = prod.cwiseProduct(msgs.to_var[e2]);
    prod = detail::normalized_or_throw(prod);
    next.to_factor[e] = detail::normalized_or_throw(
        (1.0 - damping) * prod + damping * msgs.to_factor[e]);
  }
  for (int e = 0; e < g.num_edges(); ++e) {
    Eigen::VectorXd upd =
        detail::normalized_or_throw(detail::factor_to_var_update(g, e, next));
    next.to_var[e] = detail::normalized_or_throw(
        (1.0 - damping) * upd + damping * msgs.to_var[e]);
  }
  return next;
}

inline double message_distance(const MessageSet& a, const MessageSet& b) {
  double d = 0.0;
  for (size_t e = 0; e < a.to_factor.size(); ++e) {
    d = std::max(d, (a.to_factor[e] - b.to_factor[e]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.to_var[e] - b.to_var[e]).cwiseAbs().maxCoeff());
  }
  return d;
}

/// Beliefs at the stationary-point parametrization b_a ~ f_a prod m_{i->a},
/// b_i ~ prod m_{a->i}, with all normalizers retained.
inline BeliefSet beliefs_from_messages(const FactorGraph& g,
                                       const MessageSet& msgs) {
  const int q = g.alphabet_size();
  BeliefSet b;
  b.var.resize(g.num_vars());
  b.log_z_var.resize(g.num_vars());
  for (int i = 0; i < g.num_vars(); ++i) {
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(q);
    for (int e : g.var_edges(i)) prod = prod.cwiseProduct(msgs.to_var[e]);
    double s = prod.sum();
    if (s <= 0.0 || !std::isfinite(s)) throw NumericError("zero belief normalizer");
    b.var[i] = prod / s;
    b.log_z_var[i] = std::log(s);
  }
  b.fac.resize(g.num_factors());
  b.log_z_fac.resize(g.num_factors());
  for (int a = 0; a < g.num_factors(); ++a) {
    const Factor& f = g.factor(a);
    const int d = static_cast<int>(f.neighbors.size());
    std::vector<double> table(f.table.size());
    std::vector<int> local(d, 0);
    int64_t idx = 0;
    double s = 0.0;
    do {
      double w = f.table[idx];
      for (int k = 0; k < d && w > 0.0; ++k)
        w *= msgs.to_factor[g.fac_edges(a)[k]][local[k]];
      table[idx] = w;
      s += w;
      ++idx;
    } while (next_assignment(local, q));
    if (s <= 0.0 || !std::isfinite(s)) throw NumericError("zero belief normalizer");
    for (double& v : table) v /= s;
    b.fac[a] = std::move(table);
    b.log_z_fac[a] = std::log(s);
  }
  b.log_z_edge.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    double s = msgs.to_factor[e].dot(msgs.to_var[e]);
    if (s <= 0.0 || !std::isfinite(s)) throw NumericError("zero belief normalizer");
    b.log_z_edge[e] = std::log(s);
  }
  return b;
}

/// F_Bethe = U - H with the counting term sum_i (d_i - 1) sum b_i log b_i.
/// Infinite when a belief sits outside the factor support.
inline double bethe_free_energy(const FactorGraph& g, const BeliefSet& b) {
  double f = 0.0;
  for (int a = 0; a < g.num_factors(); ++a) {
    const Factor& fac = g.factor(a);
    for (size_t idx = 0; idx < fac.table.size(); ++idx) {
      double p = b.fac[a][idx];
      if (p <= 0.0) continue;
      if (fac.table[idx] <= 0.0) return kPosInf;
      f += p * (std::log(p) - std::log(fac.table[idx]));
    }
  }
  for (int i = 0; i < g.num_vars(); ++i) {
    double s = 0.0;
    for (int x = 0; x < g.alphabet_size(); ++x) s += xlogx(b.var[i][x]);
    f -= (g.var_degree(i) - 1) * s;
  }
  return f;
}

/// Dual form at a message fixed point:
/// -sum_i log Z_i - sum_a log Z_a + sum_edges log Z_{i,a}.
inline double bethe_free_energy_dual(const FactorGraph& g, const BeliefSet& b) {
  double f = 0.0;
  for (int i = 0; i < g.num_vars(); ++i) f -= b.log_z_var[i];
  for (int a = 0; a < g.num_factors(); ++a) f -= b.log_z_fac[a];
  for (int e = 0; e < g.num_edges(); ++e) f += b.log_z_edge[e];
  return f;
}

inline double bethe_free_energy_dual(const FactorGraph& g,
                                     const MessageSet& msgs) {
  return bethe_free_energy_dual(g, beliefs_from_messages(g, msgs));
}

inline BPResult run_bp(const FactorGraph& g, MessageSet init,
                       const BPOptions& opt = {}, uint64_t seed = 0) {
  if (opt.tol <= 0.0) throw ValidationError("tolerance must be positive");
  BPResult res;
  res.seed = seed;
  MessageSet cur = std::move(init);
  double resid = kPosInf;
  int it = 0;
  while (it < opt.max_iter) {
    MessageSet next = bp_step(g, cur, opt.damping);
    resid = message_distance(cur, next);
    cur = std::move(next);
    ++it;
    if (resid <= opt.tol) break;
  }
  res.messages = std::move(cur);
  res.converged = resid <= opt.tol;
  res.iterations = it;
  res.residual = resid;
  res.beliefs = beliefs_from_messages(g, res.messages);
  res.f_bethe = bethe_free_energy_dual(g, res.beliefs);
  res.log_z_bethe = -res.f_bethe;
  return res;
}

inline BPResult run_bp(const FactorGraph& g, const BPOptions& opt = {}) {
  return run_bp(g, uniform_messages(g), opt, 0);
}

struct FindMinimaOptions {
  BPOptions bp;
  double dedup_tol = 1e-6;   // L-inf message distance between distinct points
  double tie_window = 1e-9;  // minima within this F window are all returned
};

/// BP from the uniform init plus random restarts; deduplicates converged
/// fixed points and returns those attaining the minimal Bethe free energy,
/// sorted by F. Empty when no restart converged.
inline std::vector<BPResult> find_minima(const FactorGraph& g, int restarts,
                                         uint64_t seed,
                                         const FindMinimaOptions& opt = {}) {
  if (restarts < 1) throw ValidationError("restarts must be at least 1");
  std::vector<BPResult> found;
  for (int r = 0; r < restarts; ++r) {
    BPResult res;
    try {
      if (r == 0) {
        res = run_bp(g, opt.bp);
      } else {
        uint64_t s = derive_seed(seed, r);
        res = run_bp(g, random_messages(g, s), opt.bp, s);
      }
    } catch (const NumericError&) {
      continue;  // degenerate restart; others may still converge
    }
    if (!res.converged) continue;
    bool duplicate = false;
    for (const BPResult& other : found)
      if (message_distance(res.messages, other.messages) < opt.dedup_tol) {
        duplicate = true;
        break;
      }
    if (!duplicate) found.push_back(std::move(res));
  }
  if (found.empty()) return found;
  std::sort(found.begin(), found.end(),
            [](const BPResult& a, const BPResult& b) { return a.f_bethe < b.f_bethe; });
  double f_min = found.front().f_bethe;
  std::vector<BPResult> minima;
  for (BPResult& r : found)
    if (r.f_bethe <= f_min + opt.tie_window) minima.push_back(std::move(r));
  return minima;
}

}  // namespace bethe

#endif  // BETHE_BP_HPP
