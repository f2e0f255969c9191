// Interaction maps Phi, their F-norm, surface sets and Phi-boundaries.
#pragma once

#include "lrlab/core.hpp"
#include "lrlab/geometry.hpp"
#include "lrlab/observables.hpp"

#include <map>
#include <utility>
#include <vector>

namespace lrlab {

/// Finite map Z -> Phi(Z) of self-adjoint terms, keyed by canonical support.
class Interaction {
 public:
  struct Term {
    LocalOperator op;
    double norm = 0.0;
  };

  /// Adds `term` to Phi(support(term)). Zero terms are dropped.
  void add(const LocalOperator& term) {
    if (term.support().empty()) throw DomainError("interaction term must have nonempty support");
    const Matrix& m = term.matrix();
    if (!all_finite(m)) throw DomainError("interaction term has non-finite entries");
    const double scale = std::max(1.0, max_abs_entry(m));
    if (hermiticity_defect(m) > 1e-12 * scale)
      throw DomainError("interaction term on " + term.support().to_string() + " is not self-adjoint");
    auto it = terms_.find(term.support());
    Matrix sum = m;
    if (it != terms_.end()) {
      if (it->second.op.space() != term.space())
        throw DomainError("interaction terms on " + term.support().to_string() + " disagree on local dimensions");
      sum += it->second.op.matrix();
    }
    sum = (sum + sum.adjoint()) * 0.5;
    if (max_abs_entry(sum) == 0.0) {
      if (it != terms_.end()) terms_.erase(it);
      return;
    }
    LocalOperator op(term.space(), std::move(sum));
    const double n = operator_norm(op);
    terms_.insert_or_assign(term.support(), Term{std::move(op), n});
  }

  const std::map<SiteSet, Term>& terms() const noexcept { return terms_; }
  bool empty() const noexcept { return terms_.empty(); }
  std::size_t size() const noexcept { return terms_.size(); }

  /// ||Phi(Z)||, 0 when Z carries no term.
  double term_norm(const SiteSet& z) const {
    auto it = terms_.find(z);
    return it == terms_.end() ? 0.0 : it->second.norm;
  }

  /// Terms with Z inside `volume`.
  Interaction restricted_to(const SiteSet& volume) const {
    Interaction out;
    for (const auto& [z, term] : terms_)
      if (z.subset_of(volume)) out.terms_.emplace(z, term);
    return out;
  }

  /// Every term multiplied by a real factor.
  Interaction scaled(double factor) const {
    Interaction out;
    if (factor == 0.0) return out;
    for (const auto& [z, term] : terms_)
      out.terms_.emplace(z, Term{LocalOperator(term.op.space(), term.op.matrix() * factor),
                                 term.norm * std::abs(factor)});
    return out;
  }

 private:
  std::map<SiteSet, Term> terms_;
};

/// ||Phi|| = max over pairs (x,y), x = y included, of (1/F(d(x,y))) sum_{Z containing x,y} ||Phi(Z)||.
inline double interaction_norm(const Interaction& phi, const Lattice& lattice, const DecayFunction& f) {
  const Index n = static_cast<Index>(lattice.size());
  RealMatrix sums = RealMatrix::Zero(n, n);
  for (const auto& [z, term] : phi.terms()) {
    std::vector<Index> idx;
    for (SiteId s : z) idx.push_back(static_cast<Index>(lattice.index_of(s)));
    for (Index a : idx)
      for (Index b : idx) sums(a, b) += term.norm;
  }
  const RealMatrix& d = lattice.distances();
  double best = 0.0;
  for (Index x = 0; x < n; ++x)
    for (Index y = 0; y < n; ++y)
      if (sums(x, y) > 0.0) best = std::max(best, sums(x, y) / f(d(x, y)));
  return best;
}

/// S_Lambda(X): supports Z of nonzero terms with Z in Lambda meeting both X and Lambda \ X.
inline std::vector<SiteSet> surface_sets(const Interaction& phi, const SiteSet& volume, const SiteSet& x) {
  if (!x.subset_of(volume))
    throw DomainError("surface_sets: " + x.to_string() + " is not inside " + volume.to_string());
  std::vector<SiteSet> out;
  if (x.empty()) return out;
  const SiteSet outside = volume.set_difference(x);
  for (const auto& [z, term] : phi.terms())
    if (z.subset_of(volume) && z.intersects(x) && z.intersects(outside)) out.push_back(z);
  return out;
}

/// Sites of X touched by a term of S_Lambda(X).
inline SiteSet phi_boundary(const Interaction& phi, const SiteSet& volume, const SiteSet& x) {
  SiteSet boundary;
  for (const SiteSet& z : surface_sets(phi, volume, x)) boundary = boundary.set_union(z.set_intersection(x));
  return boundary;
}

inline int supports_overlap(const SiteSet& x, const SiteSet& y) { return x.intersects(y) ? 1 : 0; }

/// The two candidate sums whose minimum is D(X,Y), boundaries taken in the whole lattice.
struct DistanceFactorTerms {
  double x_to_boundary_y = 0.0;  ///< sum_{x in X} sum_{y in dY} F(d(x,y))
  double boundary_x_to_y = 0.0;  ///< sum_{x in dX} sum_{y in Y} F(d(x,y))
  SiteSet boundary_x;
  SiteSet boundary_y;

  double value() const { return std::min(x_to_boundary_y, boundary_x_to_y); }
};

inline DistanceFactorTerms distance_factor_terms(const Interaction& phi, const Lattice& lattice,
                                                 const DecayFunction& f, const SiteSet& x, const SiteSet& y) {
  if (x.empty() || y.empty()) throw DomainError("distance_factor: X and Y must be nonempty");
  DistanceFactorTerms t;
  t.boundary_x = phi_boundary(phi, lattice.sites(), x);
  t.boundary_y = phi_boundary(phi, lattice.sites(), y);
  t.x_to_boundary_y = pair_sum(lattice, f, x, t.boundary_y);
  t.boundary_x_to_y = pair_sum(lattice, f, t.boundary_x, y);
  return t;
}

/// D(X,Y).
inline double distance_factor(const Interaction& phi, const Lattice& lattice, const DecayFunction& f,
                              const SiteSet& x, const SiteSet& y) {
  return distance_factor_terms(phi, lattice, f, x, y).value();
}

/// Sites with fewer lattice neighbours at the minimal distance than the best-connected site.
inline SiteSet edge_sites(const Lattice& lattice) {
  const double r = lattice.min_positive_distance();
  std::vector<int> degree;
  for (SiteId a : lattice.sites()) {
    int c = 0;
    for (SiteId b : lattice.sites())
      if (a != b && lattice.distance(a, b) <= r * (1.0 + 1e-12)) ++c;
    degree.push_back(c);
  }
  const int max_degree = degree.empty() ? 0 : *std::max_element(degree.begin(), degree.end());
  std::vector<SiteId> out;
  for (std::size_t i = 0; i < degree.size(); ++i)
    if (degree[i] < max_degree) out.push_back(lattice.sites()[i]);
  return SiteSet(std::move(out));
}

}  // namespace lrlab
