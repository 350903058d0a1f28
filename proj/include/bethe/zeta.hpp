#ifndef BETHE_ZETA_HPP
#define BETHE_ZETA_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "bethe/bp.hpp"
#include "bethe/factor_graph.hpp"
#include "bethe/linalg.hpp"
#include "bethe/util.hpp"

namespace bethe {

/// Correlation weights u^a_{i->j} over directed edges, one (q-1)x(q-1)
/// block per ordered neighbor pair inside each factor. The weight of the
/// step (i->a) -> (j->b) depends only on (i, j, a), which is what the
/// Ihara-Bass form requires.
struct EdgeWeights {
  int r = 0;  // block dimension, q-1
  // blocks[a][si * d_a + sj] for slot pair (si, sj), si != sj
  std::vector<std::vector<Eigen::MatrixXd>> blocks;

  const Eigen::MatrixXd& block(const FactorGraph& g, int a, int si, int sj) const {
    return blocks[a][si * g.fac_degree(a) + sj];
  }
};

inline Eigen::VectorXd tail(const Eigen::VectorXd& b) {
  return b.segment(1, b.size() - 1);
}

/// Covariance of the indicator statistics {t_y = [X = y]}_{y != 0}.
inline Eigen::MatrixXd variance_matrix(const Eigen::VectorXd& b) {
  Eigen::VectorXd t = tail(b);
  return Eigen::MatrixXd(t.asDiagonal()) - t * t.transpose();
}

/// Joint marginal of slots (si, sj) of a factor belief table.
inline Eigen::MatrixXd pair_marginal(const std::vector<double>& ba, int degree,
                                     int si, int sj, int q) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(q, q);
  std::vector<int> local(degree, 0);
  int64_t idx = 0;
  do {
    p(local[si], local[sj]) += ba[idx];
    ++idx;
  } while (next_assignment(local, q));
  return p;
}

/// Cor_{b_a}[t_i, t_j] = Var_i^{-1/2} Cov_{b_a}[t_i, t_j] Var_j^{-1/2}
/// with symmetric square roots. Singular variances (a belief entry at 0
/// or 1) are signaled unless clamping is requested.
inline Eigen::MatrixXd correlation_matrix(const std::vector<double>& ba,
                                          int degree, int si, int sj,
                                          const Eigen::VectorXd& bi,
                                          const Eigen::VectorXd& bj,
                                          bool clamp_singular = false) {
  const int q = static_cast<int>(bi.size());
  Eigen::MatrixXd joint = pair_marginal(ba, degree, si, sj, q);
  Eigen::MatrixXd cov =
      joint.block(1, 1, q - 1, q - 1) - tail(bi) * tail(bj).transpose();
  Eigen::MatrixXd li = sym_inv_sqrt(variance_matrix(bi), clamp_singular);
  Eigen::MatrixXd lj = sym_inv_sqrt(variance_matrix(bj), clamp_singular);
  return li * cov * lj;
}

/// Closed-form scalar correlation of an Ising pair belief
/// b_a ~ exp(beta J s s' + l_i s + l_j s') in message log-odds l.
inline double ising_correlation(double beta, double j_ij, double l_i, double l_j) {
  double c = 2.0 * beta * j_ij;
  return std::sinh(c) / (std::sqrt(std::cosh(2.0 * l_i) + std::cosh(c)) *
                         std::sqrt(std::cosh(2.0 * l_j) + std::cosh(c)));
}

/// Watanabe-Fukumizu weights at a BP fixed point: one correlation block per
/// ordered neighbor pair of every factor of degree >= 2.
inline EdgeWeights build_edge_weights(const FactorGraph& g, const BeliefSet& b,
                                      bool clamp_singular = false) {
  const int q = g.alphabet_size();
  EdgeWeights w;
  w.r = q - 1;
  w.blocks.resize(g.num_factors());
  for (int a = 0; a < g.num_factors(); ++a) {
    int d = g.fac_degree(a);
    if (d < 2) continue;
    w.blocks[a].assign(d * d, Eigen::MatrixXd());
    for (int si = 0; si < d; ++si)
      for (int sj = 0; sj < d; ++sj) {
        if (si == sj) continue;
        int i = g.factor(a).neighbors[si];
        int j = g.factor(a).neighbors[sj];
        w.blocks[a][si * d + sj] = correlation_matrix(
            b.fac[a], d, si, sj, b.var[i], b.var[j], clamp_singular);
      }
  }
  return w;
}

/// Block matrix M(u) over directed edges: block (e, e') = u^a_{i->j} when
/// (i->a) steps to (j->b), zero otherwise.
inline Eigen::MatrixXd bass_matrix(const FactorGraph& g, const EdgeWeights& w) {
  const int r = w.r;
  const int n = g.num_edges() * r;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edge(e);
    int a = edge.fac;
    int d = g.fac_degree(a);
    for (int sj = 0; sj < d; ++sj) {
      if (sj == edge.slot) continue;
      int j = g.factor(a).neighbors[sj];
      for (int e2 : g.var_edges(j)) {
        if (g.edge(e2).fac == a) continue;
        m.block(e * r, e2 * r, r, r) = w.block(g, a, edge.slot, sj);
      }
    }
  }
  return m;
}

struct ZetaValue {
  double log_abs;  // log |zeta|
  int sign;
  double value() const { return sign * std::exp(log_abs); }
};

/// zeta(u) = det(I - M(u))^{-1} via pivoted factorization. A determinant at
/// zero within 1e-12 is reported as divergence.
inline ZetaValue zeta_bass(const FactorGraph& g, const EdgeWeights& w) {
  Eigen::MatrixXd m = bass_matrix(g, w);
  Eigen::MatrixXd im = Eigen::MatrixXd::Identity(m.rows(), m.cols()) - m;
  LogDet ld = log_abs_det(im);
  if (ld.sign == 0 || ld.log_abs < std::log(1e-12))
    throw NumericError("zeta diverges: det(I - M) vanishes");
  return {-ld.log_abs, ld.sign};
}

/// Ihara-Bass form: zeta^{-1} = det(I_N - D + W) prod_a det(U^a), with
/// U^a the block correlation grid of factor a and W built from its inverse
/// blocks. Valid because the weights are successor independent.
inline ZetaValue zeta_ihara_bass(const FactorGraph& g, const EdgeWeights& w) {
  const int r = w.r;
  const int n = g.num_vars() * r;
  Eigen::MatrixXd core = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < g.num_vars(); ++i)
    core.block(i * r, i * r, r, r) -=
        g.var_degree(i) * Eigen::MatrixXd::Identity(r, r);

  double log_det_u = 0.0;
  int sign = 1;
  for (int a = 0; a < g.num_factors(); ++a) {
    int d = g.fac_degree(a);
    if (d == 1) {
      // U^a = I_r: unit determinant, inverse block is the identity.
      int i = g.factor(a).neighbors[0];
      core.block(i * r, i * r, r, r) += Eigen::MatrixXd::Identity(r, r);
      continue;
    }
    Eigen::MatrixXd ua = Eigen::MatrixXd::Identity(d * r, d * r);
    for (int si = 0; si < d; ++si)
      for (int sj = 0; sj < d; ++sj)
        if (si != sj) ua.block(si * r, sj * r, r, r) = w.block(g, a, si, sj);
    LogDet ld = log_abs_det(ua);
    if (ld.sign == 0 || ld.log_abs < std::log(1e-14))
      throw NumericError("singular factor correlation grid U^a");
    log_det_u += ld.log_abs;
    if (ld.sign < 0) sign = -sign;
    Eigen::MatrixXd ua_inv = ua.inverse();
    for (int si = 0; si < d; ++si)
      for (int sj = 0; sj < d; ++sj) {
        int i = g.factor(a).neighbors[si];
        int j = g.factor(a).neighbors[sj];
        core.block(i * r, j * r, r, r) += ua_inv.block(si * r, sj * r, r, r);
      }
  }
  LogDet ld = log_abs_det(core);
  if (ld.sign == 0)
    throw NumericError("zeta diverges: det(I - D + W) vanishes");
  if (ld.sign < 0) sign = -sign;
  return {-(ld.log_abs + log_det_u), sign};
}

namespace detail {

inline bool is_lyndon(const std::vector<int>& seq) {
  const size_t n = seq.size();
  for (size_t k = 1; k < n; ++k) {
    for (size_t t = 0; t < n; ++t) {
      int a = seq[t];
      int b = seq[(t + k) % n];
      if (a != b) {
        if (a > b) return false;
        break;
      }
      if (t + 1 == n) return false;  // periodic word
    }
  }
  return true;
}

}  // namespace detail

/// Product over prime cycles of length <= max_len of det(I - cyclic block
/// product)^{-1}. Cycles are enumerated as directed walks canonicalized to
/// their Lyndon rotation. Requires a contracting weight matrix.
inline double zeta_prime_truncated(const FactorGraph& g, const EdgeWeights& w,
                                   int max_len, int64_t work_limit = 200000000) {
  double rho = spectral_radius(bass_matrix(g, w));
  if (rho >= 1.0)
    throw NumericError("prime cycle product diverges: spectral radius >= 1");

  const int r = w.r;
  // succ[e] lists (next edge, weight block of the step)
  std::vector<std::vector<std::pair<int, const Eigen::MatrixXd*>>> succ(
      g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    const auto& edge = g.edge(e);
    int a = edge.fac;
    int d = g.fac_degree(a);
    for (int sj = 0; sj < d; ++sj) {
      if (sj == edge.slot) continue;
      int j = g.factor(a).neighbors[sj];
      for (int e2 : g.var_edges(j))
        if (g.edge(e2).fac != a)
          succ[e].push_back({e2, &w.block(g, a, edge.slot, sj)});
    }
  }

  double log_product = 0.0;
  int64_t work = 0;
  std::vector<int> path;
  Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(r, r);

  // Depth-first over walks whose elements stay >= the start edge; a closed
  // walk counts once, at its strictly-minimal rotation.
  std::function<void(int, const Eigen::MatrixXd&)> extend =
      [&](int start, const Eigen::MatrixXd& prefix) {
        if (++work > work_limit)
          throw BoundError("prime cycle enumeration exceeds work limit");
        int last = path.back();
        for (auto [e2, blk] : succ[last]) {
          if (e2 == start && detail::is_lyndon(path)) {
            Eigen::MatrixXd cycle = prefix * (*blk);
            LogDet ld = log_abs_det(eye - cycle);
            if (ld.sign <= 0)
              throw NumericError("prime cycle factor has nonpositive determinant");
            log_product -= ld.log_abs;
          }
          if (e2 < start || static_cast<int>(path.size()) >= max_len) continue;
          path.push_back(e2);
          extend(start, Eigen::MatrixXd(prefix * (*blk)));
          path.pop_back();
        }
      };

  for (int s = 0; s < g.num_edges(); ++s) {
    path.assign(1, s);
    extend(s, eye);
  }
  return std::exp(log_product);
}

struct ZetaReport {
  double log_zeta_bass;
  int sign;
  std::optional<double> log_zeta_ihara_bass;
  std::optional<double> truncated_prime_product;
  double spectral_radius_estimate;
};

inline ZetaReport zeta_report(const FactorGraph& g, const EdgeWeights& w,
                              int max_len = 30) {
  ZetaValue bass = zeta_bass(g, w);
  ZetaReport rep{bass.log_abs, bass.sign, std::nullopt, std::nullopt,
                 spectral_radius(bass_matrix(g, w))};
  try {
    rep.log_zeta_ihara_bass = zeta_ihara_bass(g, w).log_abs;
  } catch (const NumericError&) {
  }
  try {
    rep.truncated_prime_product = zeta_prime_truncated(g, w, max_len);
  } catch (const Error&) {
  }
  return rep;
}

struct AsymptoticBetheResult {
  double log_z_bethe;
  double g0;          // log sum over minima of sqrt(zeta)
  double log_z_ab1;   // log_z_bethe + g0
  int minima_count;
};

/// Order-1 asymptotic Bethe approximation: Z_Bethe times the sum of
/// sqrt(zeta) over the minima of the Bethe free energy.
inline AsymptoticBetheResult z_ab1(const FactorGraph& g, int restarts,
                                   uint64_t seed,
                                   const FindMinimaOptions& opt = {}) {
  std::vector<BPResult> minima = find_minima(g, restarts, seed, opt);
  if (minima.empty())
    throw NumericError("no converged BP fixed point found");
  LogSumExp half_log_zetas;
  for (const BPResult& m : minima) {
    EdgeWeights w = build_edge_weights(g, m.beliefs);
    ZetaValue z = zeta_bass(g, w);
    if (z.sign <= 0)
      throw NumericError("order-1 correction undefined (criticality): zeta <= 0");
    half_log_zetas.add(0.5 * z.log_abs);
  }
  AsymptoticBetheResult res;
  res.log_z_bethe = minima.front().log_z_bethe;
  res.g0 = half_log_zetas.value();
  res.log_z_ab1 = res.log_z_bethe + res.g0;
  res.minima_count = static_cast<int>(minima.size());
  return res;
}

}  // namespace bethe

#endif  // BETHE_ZETA_HPP
