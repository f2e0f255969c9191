// Finite lattices with a metric, site subsets, and decay functions F.
#pragma once

#include "lrlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

namespace lrlab {

using SiteId = int;

/// Sorted, duplicate-free set of site identifiers. The sort order is the global
/// site ordering used for every Kronecker layout.
class SiteSet {
 public:
  SiteSet() = default;
  SiteSet(std::initializer_list<SiteId> ids) : ids_(ids) { canonicalize(); }
  explicit SiteSet(std::vector<SiteId> ids) : ids_(std::move(ids)) { canonicalize(); }

  const std::vector<SiteId>& ids() const noexcept { return ids_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  auto begin() const noexcept { return ids_.begin(); }
  auto end() const noexcept { return ids_.end(); }
  SiteId operator[](std::size_t i) const { return ids_[i]; }

  bool contains(SiteId s) const { return std::binary_search(ids_.begin(), ids_.end(), s); }
  bool subset_of(const SiteSet& other) const {
    return std::includes(other.ids_.begin(), other.ids_.end(), ids_.begin(), ids_.end());
  }
  bool intersects(const SiteSet& other) const {
    auto a = ids_.begin();
    auto b = other.ids_.begin();
    while (a != ids_.end() && b != other.ids_.end()) {
      if (*a == *b) return true;
      if (*a < *b) ++a; else ++b;
    }
    return false;
  }
  SiteSet set_union(const SiteSet& other) const {
    std::vector<SiteId> out;
    std::set_union(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(),
                   std::back_inserter(out));
    return SiteSet(std::move(out));
  }
  SiteSet set_intersection(const SiteSet& other) const {
    std::vector<SiteId> out;
    std::set_intersection(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(),
                          std::back_inserter(out));
    return SiteSet(std::move(out));
  }
  SiteSet set_difference(const SiteSet& other) const {
    std::vector<SiteId> out;
    std::set_difference(ids_.begin(), ids_.end(), other.ids_.begin(), other.ids_.end(),
                        std::back_inserter(out));
    return SiteSet(std::move(out));
  }

  std::string to_string() const {
    std::string s = "{";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(ids_[i]);
    }
    return s + "}";
  }

  friend bool operator==(const SiteSet&, const SiteSet&) = default;
  friend auto operator<=>(const SiteSet& a, const SiteSet& b) { return a.ids_ <=> b.ids_; }

 private:
  void canonicalize() {
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  }
  std::vector<SiteId> ids_;
};

/// Finite site set with a distance table. Metric axioms are checked on construction.
class Lattice {
 public:
  /// `distances` is indexed by position in the sorted `sites` list.
  Lattice(std::vector<SiteId> sites, RealMatrix distances)
      : sites_(std::move(sites)), dist_(std::move(distances)) {
    validate();
  }

  /// Open chain 0..n-1 with d(i,j) = |i-j|.
  static Lattice chain(int n) {
    if (n < 1) throw DomainError("chain: length must be positive");
    std::vector<SiteId> ids(n);
    RealMatrix d(n, n);
    for (int i = 0; i < n; ++i) {
      ids[i] = i;
      for (int j = 0; j < n; ++j) d(i, j) = std::abs(i - j);
    }
    return Lattice(std::move(ids), std::move(d));
  }

  /// width x height grid, site id = row * width + col, Manhattan (graph) distance.
  static Lattice grid2d(int width, int height) {
    if (width < 1 || height < 1) throw DomainError("grid2d: dimensions must be positive");
    const int n = width * height;
    std::vector<SiteId> ids(n);
    RealMatrix d(n, n);
    for (int a = 0; a < n; ++a) {
      ids[a] = a;
      for (int b = 0; b < n; ++b)
        d(a, b) = std::abs(a / width - b / width) + std::abs(a % width - b % width);
    }
    return Lattice(std::move(ids), std::move(d));
  }

  const SiteSet& sites() const noexcept { return site_set_; }
  std::size_t size() const noexcept { return sites_.size(); }

  std::size_t index_of(SiteId s) const {
    auto it = std::lower_bound(sites_.begin(), sites_.end(), s);
    if (it == sites_.end() || *it != s)
      throw DomainError("site " + std::to_string(s) + " is not in the lattice");
    return static_cast<std::size_t>(it - sites_.begin());
  }

  double distance(SiteId x, SiteId y) const {
    return dist_(static_cast<Index>(index_of(x)), static_cast<Index>(index_of(y)));
  }

  /// min over x in X, y in Y of d(x,y). Both sets must be nonempty.
  double set_distance(const SiteSet& x, const SiteSet& y) const {
    if (x.empty() || y.empty()) throw DomainError("set_distance: empty site set");
    double best = std::numeric_limits<double>::infinity();
    for (SiteId a : x)
      for (SiteId b : y) best = std::min(best, distance(a, b));
    return best;
  }

  /// Smallest nonzero distance in the lattice (0 for a single site).
  double min_positive_distance() const {
    double best = 0.0;
    for (Index i = 0; i < dist_.rows(); ++i)
      for (Index j = 0; j < dist_.cols(); ++j)
        if (dist_(i, j) > 0.0 && (best == 0.0 || dist_(i, j) < best)) best = dist_(i, j);
    return best;
  }

  const RealMatrix& distances() const noexcept { return dist_; }

 private:
  void validate() {
    const Index n = static_cast<Index>(sites_.size());
    if (n == 0) throw DomainError("lattice must have at least one site");
    if (dist_.rows() != n || dist_.cols() != n)
      throw DomainError("distance table must be " + std::to_string(n) + "x" + std::to_string(n));
    std::vector<SiteId> sorted = sites_;
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return sites_[a] < sites_[b]; });
    for (Index i = 0; i < n; ++i) sorted[i] = sites_[order[i]];
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw DomainError("lattice site identifiers must be distinct");
    RealMatrix d(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) d(i, j) = dist_(order[i], order[j]);
    sites_ = std::move(sorted);
    dist_ = std::move(d);

    const double tol = 1e-12;
    for (Index i = 0; i < n; ++i) {
      if (dist_(i, i) != 0.0) throw DomainError("metric: d(x,x) must be 0");
      for (Index j = 0; j < n; ++j) {
        if (!std::isfinite(dist_(i, j)) || dist_(i, j) < 0.0)
          throw DomainError("metric: distances must be finite and nonnegative");
        if (i != j && dist_(i, j) == 0.0)
          throw DomainError("metric: distinct sites must have positive distance");
        if (dist_(i, j) != dist_(j, i)) throw DomainError("metric: distance table not symmetric");
      }
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j)
        for (Index k = 0; k < n; ++k)
          if (dist_(i, k) > dist_(i, j) + dist_(j, k) + tol)
            throw DomainError("metric: triangle inequality violated");
    site_set_ = SiteSet(sites_);
  }

  std::vector<SiteId> sites_;
  RealMatrix dist_;
  SiteSet site_set_;
};

/// Positive nonincreasing decay profile F, optionally carrying an exponential
/// weight: F_a(r) = e^{-ar} F(r).
class DecayFunction {
 public:
  DecayFunction(std::function<double(double)> base, std::string description, double rate = 0.0)
      : base_(std::move(base)), description_(std::move(description)), rate_(rate) {
    validate();
  }

  /// F(r) = (1+r)^{-p}
  static DecayFunction power(double p) {
    if (!(p > 0.0)) throw DomainError("power decay: p must be positive");
    return DecayFunction([p](double r) { return std::pow(1.0 + r, -p); },
                         "power(p=" + std::to_string(p) + ")");
  }

  /// F(r) = e^{-ar} (1+r)^{-p}, p >= 0.
  static DecayFunction exp_power(double a, double p) {
    if (!(p >= 0.0)) throw DomainError("exp_power decay: p must be nonnegative");
    if (!(a >= 0.0)) throw DomainError("exp_power decay: a must be nonnegative");
    return DecayFunction([p](double r) { return p == 0.0 ? 1.0 : std::pow(1.0 + r, -p); },
                         "power(p=" + std::to_string(p) + ")", a);
  }

  double operator()(double r) const {
    if (rate_ == 0.0) return base_(r);
    return std::exp(-rate_ * r) * base_(r);
  }

  /// Exponential rate a of the weighted form (0 when unweighted).
  double rate() const noexcept { return rate_; }

  /// The profile with its exponential weight removed.
  DecayFunction unweighted() const { return DecayFunction(base_, description_, 0.0); }

  std::string description() const {
    if (rate_ == 0.0) return description_;
    return "exp(-" + std::to_string(rate_) + " r) * " + description_;
  }

  friend DecayFunction apply_exponential_weight(const DecayFunction& f, double a);

 private:
  void validate() const {
    if (!base_) throw DomainError("decay function is empty");
    if (!(rate_ >= 0.0) || !std::isfinite(rate_))
      throw DomainError("decay function: exponential rate must be finite and nonnegative");
    // Spot check positivity and monotonicity on a sampled grid.
    double prev = (*this)(0.0);
    if (!(prev > 0.0) || !std::isfinite(prev)) throw DomainError("decay function: F(0) must be positive");
    for (int k = 1; k <= 400; ++k) {
      const double r = 0.05 * k;
      const double v = (*this)(r);
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("decay function must be positive");
      if (v > prev * (1.0 + 1e-14)) throw DomainError("decay function must be nonincreasing");
      prev = v;
    }
  }

  std::function<double(double)> base_;
  std::string description_;
  double rate_ = 0.0;
};

/// F_a(r) = e^{-ar} F(r). Weights compose additively.
inline DecayFunction apply_exponential_weight(const DecayFunction& f, double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("exponential weight: a must be positive");
  return DecayFunction(f.base_, f.description_, f.rate_ + a);
}

/// ||F|| = max over x of sum over y (including y = x) of F(d(x,y)).
inline double f_norm(const Lattice& lattice, const DecayFunction& f) {
  const RealMatrix& d = lattice.distances();
  double best = 0.0;
  for (Index x = 0; x < d.rows(); ++x) {
    double sum = 0.0;
    for (Index y = 0; y < d.cols(); ++y) sum += f(d(x, y));
    best = std::max(best, sum);
  }
  return best;
}

/// C = max over (x,y) of sum_z F(d(x,z)) F(d(z,y)) / F(d(x,y)).
inline double convolution_constant(const Lattice& lattice, const DecayFunction& f) {
  const RealMatrix& d = lattice.distances();
  const Index n = d.rows();
  RealMatrix fv(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) fv(i, j) = f(d(i, j));
  double best = 0.0;
  for (Index x = 0; x < n; ++x)
    for (Index y = 0; y < n; ++y) {
      double sum = 0.0;
      for (Index z = 0; z < n; ++z) sum += fv(x, z) * fv(z, y);
      best = std::max(best, sum / fv(x, y));
    }
  return best;
}

/// sum over x in X, y in Y of F(d(x,y)).
inline double pair_sum(const Lattice& lattice, const DecayFunction& f, const SiteSet& x,
                       const SiteSet& y) {
  double sum = 0.0;
  for (SiteId a : x)
    for (SiteId b : y) sum += f(lattice.distance(a, b));
  return sum;
}

}  // namespace lrlab
