#ifndef BETHE_COVER_HPP
#define BETHE_COVER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "bethe/bp.hpp"
#include "bethe/exact.hpp"
#include "bethe/factor_graph.hpp"
#include "bethe/util.hpp"
#include "bethe/zeta.hpp"

namespace bethe {

/// An M-cover: one permutation of {0..M-1} per edge of the base graph.
struct CoverAssignment {
  int m = 1;
  std::vector<std::vector<int>> perms;  // per edge id
};

namespace detail {

inline void validate_cover(const FactorGraph& g, const CoverAssignment& c) {
  if (c.m < 1) throw ValidationError("cover multiplicity must be at least 1");
  if (static_cast<int>(c.perms.size()) != g.num_edges())
    throw ValidationError("one permutation per edge required");
  for (const auto& p : c.perms) {
    if (static_cast<int>(p.size()) != c.m)
      throw ValidationError("permutation size must equal M");
    std::vector<bool> seen(c.m, false);
    for (int v : p) {
      if (v < 0 || v >= c.m || seen[v])
        throw ValidationError("edge permutation is not a bijection");
      seen[v] = true;
    }
  }
}

}  // namespace detail

/// Lifted graph: N*M variables and |F|*M factors; copy m of factor a wires
/// its slot for variable i to variable copy pi_e(m). Variable copy ids are
/// i*M + m; tables are copied verbatim.
inline FactorGraph lift(const FactorGraph& g, const CoverAssignment& c) {
  detail::validate_cover(g, c);
  const int m = c.m;
  std::vector<Factor> factors;
  factors.reserve(static_cast<size_t>(g.num_factors()) * m);
  for (int a = 0; a < g.num_factors(); ++a) {
    const Factor& f = g.factor(a);
    for (int copy = 0; copy < m; ++copy) {
      Factor lf;
      lf.table = f.table;
      for (int k = 0; k < static_cast<int>(f.neighbors.size()); ++k) {
        int e = g.fac_edges(a)[k];
        lf.neighbors.push_back(f.neighbors[k] * m + c.perms[e][copy]);
      }
      factors.push_back(std::move(lf));
    }
  }
  return FactorGraph(g.alphabet_size(), g.num_vars() * m, std::move(factors));
}

/// Independent uniform permutations per edge (seeded Fisher-Yates).
inline CoverAssignment sample_cover(const FactorGraph& g, int m, uint64_t seed) {
  if (m < 1) throw ValidationError("cover multiplicity must be at least 1");
  Rng rng(seed);
  CoverAssignment c;
  c.m = m;
  c.perms.resize(g.num_edges());
  for (int e = 0; e < g.num_edges(); ++e) {
    std::vector<int> p(m);
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(p);
    c.perms[e] = std::move(p);
  }
  return c;
}

enum class CoverMode { kExact, kMonteCarlo };

struct CoverZ {
  double mean_log;    // log E[Z(M)]
  double stderr_rel;  // standard error of E[Z] relative to the mean (MC only)
  int64_t count;      // covers enumerated or sampled
};

namespace detail {

// Spanning forest of the bipartite incidence structure. Covers are
// gauge equivalent to ones that are trivial on forest edges, with the
// remaining edges still independent and uniform, so exact enumeration
// only needs the non-forest edges.
inline std::vector<int> non_forest_edges(const FactorGraph& g) {
  int nodes = g.num_vars() + g.num_factors();
  std::vector<int> parent(nodes);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  std::vector<int> free_edges;
  for (int e = 0; e < g.num_edges(); ++e) {
    int u = find(g.edge(e).var);
    int v = find(g.num_vars() + g.edge(e).fac);
    if (u == v) {
      free_edges.push_back(e);
    } else {
      parent[u] = v;
    }
  }
  return free_edges;
}

inline std::vector<std::vector<int>> all_permutations(int m) {
  std::vector<int> p(m);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

}  // namespace detail

/// E[Z(M)] over uniformly random covers. Exact mode enumerates permutation
/// tuples on the non-forest edges (forest edges gauge-fixed to the
/// identity); Monte Carlo samples full covers with derived per-sample seeds.
inline CoverZ expected_cover_z(const FactorGraph& g, int m, CoverMode mode,
                               int64_t samples = 1000, uint64_t seed = 0) {
  if (m < 1) throw ValidationError("cover multiplicity must be at least 1");
  {
    double bits = static_cast<double>(g.num_vars()) * m *
                  std::log2(static_cast<double>(g.alphabet_size()));
    if (bits > 30.0 + 1e-9)
      throw BoundError("enumeration bound exceeded: lifted graph too large");
  }
  if (mode == CoverMode::kExact) {
    std::vector<int> free_edges = detail::non_forest_edges(g);
    auto perms = detail::all_permutations(m);
    const int64_t n_perms = static_cast<int64_t>(perms.size());
    double tuples = std::pow(static_cast<double>(n_perms),
                             static_cast<double>(free_edges.size()));
    if (tuples > 1e6)
      throw BoundError("enumeration bound exceeded: too many cover tuples");

    CoverAssignment c;
    c.m = m;
    c.perms.assign(g.num_edges(), perms.front());  // identity everywhere
    std::vector<int> digit(free_edges.size(), 0);
    LogSumExp acc;
    int64_t count = 0;
    bool more = true;
    while (more) {
      for (size_t k = 0; k < free_edges.size(); ++k)
        c.perms[free_edges[k]] = perms[digit[k]];
      acc.add(brute_force_z(lift(g, c)));
      ++count;
      more = false;
      for (int k = static_cast<int>(digit.size()) - 1; k >= 0; --k) {
        if (++digit[k] < n_perms) {
          more = true;
          break;
        }
        digit[k] = 0;
      }
      if (digit.empty()) break;
    }
    return {acc.value() - std::log(static_cast<double>(count)), 0.0, count};
  }

  if (samples < 1) throw ValidationError("at least one sample required");
  // log-stable mean and variance of Z over samples
  double max_log = kNegInf;
  std::vector<double> logs(samples);
  for (int64_t s = 0; s < samples; ++s) {
    CoverAssignment c = sample_cover(g, m, derive_seed(seed, s));
    logs[s] = brute_force_z(lift(g, c));
    max_log = std::max(max_log, logs[s]);
  }
  double mean = 0.0, mean_sq = 0.0;
  for (double l : logs) {
    double w = std::exp(l - max_log);
    mean += w;
    mean_sq += w * w;
  }
  mean /= samples;
  mean_sq /= samples;
  double var = std::max(0.0, mean_sq - mean * mean);
  double stderr_rel =
      samples > 1 ? std::sqrt(var / (samples - 1)) / mean : kPosInf;
  return {max_log + std::log(mean), stderr_rel, samples};
}

struct CoverGrowthRow {
  int m;
  std::string mode;
  int64_t samples;
  double log_ez_over_m;
  double log_z_bethe;
  double excess;              // log(E[Z(M)] / Z_Bethe^M)
  double log_sum_sqrt_zeta;   // g0 over the Bethe minima
};

/// Growth of E[Z(M)] against Z_Bethe^M and the zeta correction.
inline std::vector<CoverGrowthRow> cover_growth_report(
    const FactorGraph& g, const std::vector<int>& ms, CoverMode mode,
    int64_t samples, uint64_t seed, int restarts = 4,
    const FindMinimaOptions& opt = {}) {
  AsymptoticBetheResult ab = z_ab1(g, restarts, derive_seed(seed, 0xb), opt);
  std::vector<CoverGrowthRow> rows;
  for (size_t k = 0; k < ms.size(); ++k) {
    int m = ms[k];
    CoverZ cz = expected_cover_z(g, m, mode, samples, derive_seed(seed, k));
    CoverGrowthRow row;
    row.m = m;
    row.mode = mode == CoverMode::kExact ? "exact" : "mc";
    row.samples = mode == CoverMode::kExact ? cz.count : samples;
    row.log_ez_over_m = cz.mean_log / m;
    row.log_z_bethe = ab.log_z_bethe;
    row.excess = cz.mean_log - m * ab.log_z_bethe;
    row.log_sum_sqrt_zeta = ab.g0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace bethe

#endif  // BETHE_COVER_HPP
