#ifndef BETHE_FACTOR_GRAPH_HPP
#define BETHE_FACTOR_GRAPH_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bethe/util.hpp"

namespace bethe {

/// One factor: an ordered neighbor list and a dense nonnegative table of
/// shape q^degree, row-major with the last neighbor varying fastest.
struct Factor {
  std::vector<int> neighbors;
  std::vector<double> table;
};

/// Immutable bipartite factor graph over a common alphabet {0..q-1}.
/// Validated on construction; safe to share read-only across threads.
class FactorGraph {
 public:
  struct Edge {
    int var;
    int fac;
    int slot;  // position of var in the factor's neighbor list
  };

  FactorGraph(int q, int num_vars, std::vector<Factor> factors)
      : q_(q), num_vars_(num_vars), factors_(std::move(factors)) {
    if (q_ < 2) throw ValidationError("alphabet size must be at least 2");
    if (num_vars_ < 0) throw ValidationError("negative variable count");
    var_edges_.resize(num_vars_);
    for (int a = 0; a < static_cast<int>(factors_.size()); ++a) {
      const Factor& f = factors_[a];
      int d = static_cast<int>(f.neighbors.size());
      if (d == 0) throw ValidationError("factor with empty neighbor list");
      for (int k = 0; k < d; ++k) {
        int i = f.neighbors[k];
        if (i < 0 || i >= num_vars_)
          throw ValidationError("neighbor index out of range");
        for (int l = 0; l < k; ++l)
          if (f.neighbors[l] == i)
            throw ValidationError("repeated neighbor in one factor");
      }
      if (static_cast<int64_t>(f.table.size()) != ipow(q_, d))
        throw ValidationError("table length mismatch: expected q^degree entries");
      bool any_positive = false;
      for (double v : f.table) {
        if (std::isnan(v) || std::isinf(v))
          throw ValidationError("non-finite table entry");
        if (v < 0.0) throw ValidationError("negative table entry");
        if (v > 0.0) any_positive = true;
      }
      if (!any_positive) throw ValidationError("factor table has empty support");
      fac_edges_.emplace_back();
      for (int k = 0; k < d; ++k) {
        int e = static_cast<int>(edges_.size());
        edges_.push_back({f.neighbors[k], a, k});
        fac_edges_[a].push_back(e);
        var_edges_[f.neighbors[k]].push_back(e);
      }
    }
  }

  int alphabet_size() const { return q_; }
  int num_vars() const { return num_vars_; }
  int num_factors() const { return static_cast<int>(factors_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }

  const Factor& factor(int a) const { return factors_[a]; }
  const std::vector<Factor>& factors() const { return factors_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int e) const { return edges_[e]; }

  /// Edge ids incident to a variable / belonging to a factor (slot order).
  const std::vector<int>& var_edges(int i) const { return var_edges_[i]; }
  const std::vector<int>& fac_edges(int a) const { return fac_edges_[a]; }

  int var_degree(int i) const { return static_cast<int>(var_edges_[i].size()); }
  int fac_degree(int a) const { return static_cast<int>(factors_[a].neighbors.size()); }

  /// Flat table index for a local assignment (slot order, last fastest).
  int64_t table_index(int a, const std::vector<int>& local) const {
    int64_t idx = 0;
    for (int v : local) idx = idx * q_ + v;
    return idx;
  }

  double table_value(int a, const std::vector<int>& local) const {
    return factors_[a].table[table_index(a, local)];
  }

  bool operator==(const FactorGraph& other) const {
    if (q_ != other.q_ || num_vars_ != other.num_vars_) return false;
    if (factors_.size() != other.factors_.size()) return false;
    for (size_t a = 0; a < factors_.size(); ++a) {
      if (factors_[a].neighbors != other.factors_[a].neighbors) return false;
      if (factors_[a].table != other.factors_[a].table) return false;
    }
    return true;
  }

 private:
  int q_;
  int num_vars_;
  std::vector<Factor> factors_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> var_edges_;
  std::vector<std::vector<int>> fac_edges_;
};

// Spin encoding for q=2 Ising builders: symbol 0 is spin +1, symbol 1 is
// spin -1. Every Ising identity in the toolkit assumes this encoding.
inline double spin_of(int symbol) { return symbol == 0 ? 1.0 : -1.0; }

/// Ising model as a factor graph: one degree-2 factor exp(beta*J*s_i*s_j)
/// per pair and, for h_i != 0, a degree-1 factor exp(beta*h_i*s_i).
/// Zero fields produce no unary factor, so the h = 0 model consists of
/// pair factors only.
inline FactorGraph ising_graph(const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<double>& J,
                               const std::vector<double>& h, double beta) {
  if (beta < 0.0 || std::isnan(beta))
    throw ValidationError("beta must be nonnegative");
  if (J.size() != pairs.size())
    throw ValidationError("one coupling per pair required");
  int n = static_cast<int>(h.size());
  std::vector<Factor> factors;
  for (size_t p = 0; p < pairs.size(); ++p) {
    auto [i, j] = pairs[p];
    for (size_t r = 0; r < p; ++r) {
      auto [i2, j2] = pairs[r];
      if ((i2 == i && j2 == j) || (i2 == j && j2 == i))
        throw ValidationError("duplicate pair entries");
    }
    Factor f;
    f.neighbors = {i, j};
    f.table.resize(4);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y)
        f.table[2 * x + y] = std::exp(beta * J[p] * spin_of(x) * spin_of(y));
    factors.push_back(std::move(f));
  }
  for (int i = 0; i < n; ++i) {
    if (h[i] == 0.0) continue;
    Factor f;
    f.neighbors = {i};
    f.table = {std::exp(beta * h[i]), std::exp(-beta * h[i])};
    factors.push_back(std::move(f));
  }
  return FactorGraph(2, n, std::move(factors));
}

/// Text description: JSON with fields q, num_vars, factors[{neighbors,table}].
inline std::string save_graph(const FactorGraph& g) {
  nlohmann::json doc;
  doc["q"] = g.alphabet_size();
  doc["num_vars"] = g.num_vars();
  doc["factors"] = nlohmann::json::array();
  for (const Factor& f : g.factors())
    doc["factors"].push_back({{"neighbors", f.neighbors}, {"table", f.table}});
  return doc.dump(2) + "\n";
}

inline FactorGraph load_graph(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed graph description: ") + e.what());
  }
  try {
    int q = doc.at("q").get<int>();
    int n = doc.at("num_vars").get<int>();
    std::vector<Factor> factors;
    for (const auto& jf : doc.at("factors")) {
      Factor f;
      f.neighbors = jf.at("neighbors").get<std::vector<int>>();
      f.table = jf.at("table").get<std::vector<double>>();
      factors.push_back(std::move(f));
    }
    return FactorGraph(q, n, std::move(factors));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed graph description: ") + e.what());
  }
}

}  // namespace bethe

#endif  // BETHE_FACTOR_GRAPH_HPP
