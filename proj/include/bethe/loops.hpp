#ifndef BETHE_LOOPS_HPP
#define BETHE_LOOPS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "bethe/bp.hpp"
#include "bethe/factor_graph.hpp"
#include "bethe/util.hpp"
#include "bethe/zeta.hpp"

namespace bethe {

/// An edge subset inducing no degree-one node; carrier of one loop-series
/// term. Stored as a bitmask over edge ids (desk scale: |E| <= 24).
struct GeneralizedLoop {
  uint32_t edges = 0;

  int size() const { return __builtin_popcount(edges); }
  bool contains(int e) const { return (edges >> e) & 1u; }
};

inline int induced_var_degree(const FactorGraph& g, const GeneralizedLoop& l,
                              int i) {
  int d = 0;
  for (int e : g.var_edges(i)) d += l.contains(e);
  return d;
}

inline int induced_fac_degree(const FactorGraph& g, const GeneralizedLoop& l,
                              int a) {
  int d = 0;
  for (int e : g.fac_edges(a)) d += l.contains(e);
  return d;
}

namespace detail {

inline void check_loop_bound(const FactorGraph& g) {
  if (g.num_edges() > 24)
    throw BoundError("enumeration bound exceeded: more than 24 edges");
}

}  // namespace detail

/// All edge subsets (including the empty one, listed first) whose induced
/// sub-bipartite-graph has no degree-one node. Depth-first over edges with
/// pruning: a node whose incident edges are all decided and whose frozen
/// degree is one kills the branch.
inline std::vector<GeneralizedLoop> enumerate_generalized_loops(
    const FactorGraph& g) {
  detail::check_loop_bound(g);
  const int ne = g.num_edges();

  // nodes frozen after deciding edge k: ids 0..N-1 variables, N.. factors
  std::vector<std::vector<int>> frozen_at(ne);
  std::vector<std::vector<int>> node_edges(g.num_vars() + g.num_factors());
  for (int i = 0; i < g.num_vars(); ++i) node_edges[i] = g.var_edges(i);
  for (int a = 0; a < g.num_factors(); ++a)
    node_edges[g.num_vars() + a] = g.fac_edges(a);
  for (size_t node = 0; node < node_edges.size(); ++node) {
    if (node_edges[node].empty()) continue;
    int last = 0;
    for (int e : node_edges[node]) last = std::max(last, e);
    frozen_at[last].push_back(static_cast<int>(node));
  }

  std::vector<GeneralizedLoop> out;
  std::vector<int> degree(node_edges.size(), 0);
  std::function<void(int, uint32_t)> walk = [&](int k, uint32_t mask) {
    if (k == ne) {
      out.push_back({mask});
      return;
    }
    auto frozen_ok = [&](int edge) {
      for (int node : frozen_at[edge])
        if (degree[node] == 1) return false;
      return true;
    };
    if (frozen_ok(k)) walk(k + 1, mask);  // exclude edge k
    const auto& edge = g.edge(k);
    int vi = edge.var;
    int fa = g.num_vars() + edge.fac;
    ++degree[vi];
    ++degree[fa];
    if (frozen_ok(k)) walk(k + 1, mask | (1u << k));
    --degree[vi];
    --degree[fa];
  };
  walk(0, 0);
  return out;
}

namespace detail {

inline bool is_connected_subgraph(const FactorGraph& g,
                                  const GeneralizedLoop& l) {
  if (l.edges == 0) return true;
  int start = -1;
  for (int e = 0; e < g.num_edges(); ++e)
    if (l.contains(e)) {
      start = g.edge(e).var;
      break;
    }
  std::vector<bool> seen_var(g.num_vars(), false);
  std::vector<bool> seen_fac(g.num_factors(), false);
  std::vector<int> stack = {start};
  seen_var[start] = true;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (int e : g.var_edges(i)) {
      if (!l.contains(e) || seen_fac[g.edge(e).fac]) continue;
      int a = g.edge(e).fac;
      seen_fac[a] = true;
      for (int e2 : g.fac_edges(a)) {
        if (!l.contains(e2) || seen_var[g.edge(e2).var]) continue;
        seen_var[g.edge(e2).var] = true;
        stack.push_back(g.edge(e2).var);
      }
    }
  }
  for (int e = 0; e < g.num_edges(); ++e)
    if (l.contains(e) && !seen_var[g.edge(e).var]) return false;
  return true;
}

}  // namespace detail

/// The L2 subset: connected loops with every induced degree 0 or 2
/// (simple cycles). The empty loop is excluded on request.
inline std::vector<GeneralizedLoop> enumerate_simple_loops(
    const FactorGraph& g, bool include_empty = true) {
  std::vector<GeneralizedLoop> out;
  for (const GeneralizedLoop& l : enumerate_generalized_loops(g)) {
    if (l.edges == 0) {
      if (include_empty) out.push_back(l);
      continue;
    }
    bool ok = true;
    for (int i = 0; i < g.num_vars() && ok; ++i) {
      int d = induced_var_degree(g, l, i);
      ok = d == 0 || d == 2;
    }
    for (int a = 0; a < g.num_factors() && ok; ++a) {
      int d = induced_fac_degree(g, l, a);
      ok = d == 0 || d == 2;
    }
    if (ok && detail::is_connected_subgraph(g, l)) out.push_back(l);
  }
  return out;
}

/// Binary loop-series term: product over variables of standardized moments
/// of order d_i(E') and over factors of the standardized cross moment of
/// the loop slots.
inline double loop_term_binary(const FactorGraph& g, const BeliefSet& b,
                               const GeneralizedLoop& l) {
  if (g.alphabet_size() != 2)
    throw ValidationError("binary loop term requires a binary alphabet");
  double term = 1.0;
  std::vector<double> mean(g.num_vars()), sigma(g.num_vars());
  for (int i = 0; i < g.num_vars(); ++i) {
    mean[i] = b.var[i][1];
    double var = mean[i] * (1.0 - mean[i]);
    if (induced_var_degree(g, l, i) > 0 && var <= 0.0)
      throw NumericError("zero variance at a loop variable");
    sigma[i] = std::sqrt(var);
  }
  for (int i = 0; i < g.num_vars(); ++i) {
    int d = induced_var_degree(g, l, i);
    if (d == 0) continue;
    double m = 0.0;
    for (int x = 0; x < 2; ++x)
      m += b.var[i][x] * std::pow((x - mean[i]) / sigma[i], d);
    term *= m;
  }
  for (int a = 0; a < g.num_factors(); ++a) {
    std::vector<int> slots;
    for (int k = 0; k < g.fac_degree(a); ++k)
      if (l.contains(g.fac_edges(a)[k])) slots.push_back(k);
    if (slots.empty()) continue;
    const Factor& f = g.factor(a);
    double m = 0.0;
    std::vector<int> local(f.neighbors.size(), 0);
    int64_t idx = 0;
    do {
      double w = b.fac[a][idx];
      for (int k : slots) {
        int i = f.neighbors[k];
        w *= (local[k] - mean[i]) / sigma[i];
      }
      m += w;
      ++idx;
    } while (next_assignment(local, 2));
    term *= m;
  }
  return term;
}

namespace detail {

// d log b(x) / d theta_y = [x == y] - b(y)
inline double dlog_dtheta(const Eigen::VectorXd& b, int x, int y) {
  return (x == y ? 1.0 : 0.0) - b[y];
}

// d log b(x) / d eta_y: 1/b(y) at x == y, -1/b(0) at x == 0, else 0
inline double dlog_deta(const Eigen::VectorXd& b, int x, int y) {
  if (x == y) return 1.0 / b[y];
  if (x == 0) return -1.0 / b[0];
  return 0.0;
}

}  // namespace detail

/// Non-binary loop-series term: sum over nonzero edge labels y of the
/// product of variable-side eta-score expectations and factor-side
/// theta-score expectations, using the multinomial closed forms.
inline double loop_term_nonbinary(const FactorGraph& g, const BeliefSet& b,
                                  const GeneralizedLoop& l) {
  const int q = g.alphabet_size();
  const int r = q - 1;
  for (int i = 0; i < g.num_vars(); ++i)
    if (induced_var_degree(g, l, i) > 0 && (b.var[i].array() <= 0.0).any())
      throw NumericError("zero belief entry at a loop variable");
  if (l.edges == 0) return 1.0;

  std::vector<int> loop_edges;
  for (int e = 0; e < g.num_edges(); ++e)
    if (l.contains(e)) loop_edges.push_back(e);
  const int ne = static_cast<int>(loop_edges.size());
  std::vector<int> pos(g.num_edges(), -1);
  for (int k = 0; k < ne; ++k) pos[loop_edges[k]] = k;

  // Variable tensors V_i over labels of the loop edges at i, and factor
  // tensors F_a over labels of the loop slots of a.
  struct NodeTensor {
    std::vector<int> edge_pos;  // positions in the label vector
    std::vector<double> values; // r^k entries, last edge fastest
  };
  std::vector<NodeTensor> tensors;

  for (int i = 0; i < g.num_vars(); ++i) {
    std::vector<int> eps;
    for (int e : g.var_edges(i))
      if (pos[e] >= 0) eps.push_back(pos[e]);
    if (eps.empty()) continue;
    NodeTensor t;
    t.edge_pos = eps;
    int k = static_cast<int>(eps.size());
    t.values.resize(ipow(r, k));
    std::vector<int> lab(k, 0);
    int64_t idx = 0;
    do {
      double m = 0.0;
      for (int x = 0; x < q; ++x) {
        double w = b.var[i][x];
        for (int u = 0; u < k; ++u) w *= detail::dlog_deta(b.var[i], x, lab[u] + 1);
        m += w;
      }
      t.values[idx++] = m;
    } while (next_assignment(lab, r));
    tensors.push_back(std::move(t));
  }
  for (int a = 0; a < g.num_factors(); ++a) {
    std::vector<int> slots, eps;
    for (int k = 0; k < g.fac_degree(a); ++k)
      if (pos[g.fac_edges(a)[k]] >= 0) {
        slots.push_back(k);
        eps.push_back(pos[g.fac_edges(a)[k]]);
      }
    if (slots.empty()) continue;
    NodeTensor t;
    t.edge_pos = eps;
    int k = static_cast<int>(slots.size());
    t.values.resize(ipow(r, k));
    std::vector<int> lab(k, 0);
    int64_t lidx = 0;
    do {
      double m = 0.0;
      std::vector<int> local(g.fac_degree(a), 0);
      int64_t idx = 0;
      do {
        double w = b.fac[a][idx];
        if (w != 0.0)
          for (int u = 0; u < k; ++u) {
            int i = g.factor(a).neighbors[slots[u]];
            w *= detail::dlog_dtheta(b.var[i], local[slots[u]], lab[u] + 1);
          }
        m += w;
        ++idx;
      } while (next_assignment(local, q));
      t.values[lidx++] = m;
    } while (next_assignment(lab, r));
    tensors.push_back(std::move(t));
  }

  // Sum over all edge labelings y in {1..q-1}^{E'}.
  double total = 0.0;
  std::vector<int> label(ne, 0);
  do {
    double term = 1.0;
    for (const NodeTensor& t : tensors) {
      int64_t idx = 0;
      for (int p : t.edge_pos) idx = idx * r + label[p];
      term *= t.values[idx];
      if (term == 0.0) break;
    }
    total += term;
  } while (next_assignment(label, r));
  return total;
}

enum class LoopSeriesMode { kBinary, kNonBinary };

/// Sum of loop terms over all generalized loops, in enumeration order.
/// Equals Z / Z_Bethe at a stationary point of the Bethe free energy.
inline double loop_series_sum(const FactorGraph& g, const BeliefSet& b,
                              LoopSeriesMode mode) {
  double sum = 0.0;
  for (const GeneralizedLoop& l : enumerate_generalized_loops(g))
    sum += mode == LoopSeriesMode::kBinary ? loop_term_binary(g, b, l)
                                           : loop_term_nonbinary(g, b, l);
  return sum;
}

/// Max deviation of sum_x phihat(y,x) phi(x,w) from the identity, where the
/// transform pair is built from a message pair and its edge belief
/// b = m_to_var . m_to_factor / Z_{i,a}.
inline double orthogonality_check(const Eigen::VectorXd& msg_to_factor,
                                  const Eigen::VectorXd& msg_to_var) {
  const int q = static_cast<int>(msg_to_factor.size());
  double z_edge = msg_to_factor.dot(msg_to_var);
  if (z_edge <= 0.0) throw NumericError("zero edge normalizer");
  Eigen::VectorXd b = msg_to_factor.cwiseProduct(msg_to_var) / z_edge;
  if ((b.array() <= 0.0).any()) throw NumericError("zero belief entry");

  Eigen::MatrixXd phi(q, q), phihat(q, q);  // phi(x, y); phihat(y, x)
  for (int x = 0; x < q; ++x) {
    phi(x, 0) = msg_to_var[x];
    phihat(0, x) = msg_to_factor[x] / z_edge;
    for (int y = 1; y < q; ++y) {
      phi(x, y) = msg_to_var[x] * detail::dlog_deta(b, x, y);
      phihat(y, x) = msg_to_factor[x] / z_edge * detail::dlog_dtheta(b, x, y);
    }
  }
  Eigen::MatrixXd res = phihat * phi - Eigen::MatrixXd::Identity(q, q);
  return res.cwiseAbs().maxCoeff();
}

/// Convenience form for a bare belief: factorize it against a uniform
/// incoming message.
inline double orthogonality_check(const Eigen::VectorXd& belief) {
  const int q = static_cast<int>(belief.size());
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(q, 1.0 / q);
  return orthogonality_check(belief, uniform);
}

/// Cyclic directed-edge order of an L2 loop: e_k = (i_k -> a_k) with
/// consecutive edges linked through a_k.
inline std::vector<int> loop_cycle_order(const FactorGraph& g,
                                         const GeneralizedLoop& l) {
  int first = -1;
  for (int e = 0; e < g.num_edges(); ++e)
    if (l.contains(e)) {
      first = e;
      break;
    }
  if (first < 0) return {};
  std::vector<int> order;
  int e = first;
  do {
    order.push_back(e);
    int a = g.edge(e).fac;
    int other_fac_edge = -1;
    for (int e2 : g.fac_edges(a))
      if (e2 != e && l.contains(e2)) other_fac_edge = e2;
    if (other_fac_edge < 0) throw ValidationError("loop is not a simple cycle");
    int j = g.edge(other_fac_edge).var;
    int next = -1;
    for (int e2 : g.var_edges(j))
      if (e2 != other_fac_edge && l.contains(e2)) next = e2;
    if (next < 0) throw ValidationError("loop is not a simple cycle");
    e = next;
  } while (e != first);
  return order;
}

/// Trace-formula value of an L2 loop term: tr of the cyclic product of
/// correlation blocks.
inline double loop_term_trace(const FactorGraph& g, const EdgeWeights& w,
                              const GeneralizedLoop& l) {
  std::vector<int> order = loop_cycle_order(g, l);
  if (order.empty()) return 1.0;
  const int r = w.r;
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(r, r);
  for (size_t k = 0; k < order.size(); ++k) {
    int e = order[k];
    int e_next = order[(k + 1) % order.size()];
    int a = g.edge(e).fac;
    int sj = -1;
    for (int s = 0; s < g.fac_degree(a); ++s)
      if (g.factor(a).neighbors[s] == g.edge(e_next).var) sj = s;
    prod = prod * w.block(g, a, g.edge(e).slot, sj);
  }
  return prod.trace();
}

struct DominanceRow {
  double beta;
  double z_ratio_minus_1;      // Z / Z_Bethe - 1
  double l2_sum;               // sum over nonempty L2 loops of Z(E')
  double sqrt_zeta_minus_1;
  double l2_over_ratio;        // l2_sum / (Z/Z_Bethe - 1)
  double zeta_over_ratio;      // (sqrt(zeta) - 1) / (Z/Z_Bethe - 1)
  double residual_over_l2;     // |Z/Z_Bethe - 1 - l2_sum| / |l2_sum|
  bool converged;
};

/// Per-beta comparison of the exact loop correction, its L2 part, and the
/// zeta estimate, for a beta-parametrized graph family.
inline std::vector<DominanceRow> loop_dominance_report(
    const std::function<FactorGraph(double)>& family,
    const std::vector<double>& betas, const BPOptions& opt = {}) {
  std::vector<DominanceRow> rows;
  for (double beta : betas) {
    FactorGraph g = family(beta);
    double log_z = brute_force_z(g);
    BPResult bp = run_bp(g, opt);
    DominanceRow row{};
    row.beta = beta;
    row.converged = bp.converged;
    row.z_ratio_minus_1 = std::exp(log_z - bp.log_z_bethe) - 1.0;
    EdgeWeights w = build_edge_weights(g, bp.beliefs);
    row.l2_sum = 0.0;
    for (const GeneralizedLoop& l : enumerate_simple_loops(g, false))
      row.l2_sum += loop_term_trace(g, w, l);
    ZetaValue z = zeta_bass(g, w);
    row.sqrt_zeta_minus_1 =
        z.sign > 0 ? std::exp(0.5 * z.log_abs) - 1.0 :
                     std::numeric_limits<double>::quiet_NaN();
    row.l2_over_ratio = row.l2_sum / row.z_ratio_minus_1;
    row.zeta_over_ratio = row.sqrt_zeta_minus_1 / row.z_ratio_minus_1;
    row.residual_over_l2 =
        std::abs(row.z_ratio_minus_1 - row.l2_sum) / std::abs(row.l2_sum);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bethe

#endif  // BETHE_LOOPS_HPP
