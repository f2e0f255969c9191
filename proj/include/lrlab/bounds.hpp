// Analytic right-hand sides: the Lieb-Robinson bound and its refinements,
// the a_n coefficients, the finite-volume convergence bound, and certification.
#pragma once

#include "lrlab/core.hpp"
#include "lrlab/dynamics.hpp"
#include "lrlab/geometry.hpp"
#include "lrlab/interactions.hpp"
#include "lrlab/propagator.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lrlab {

namespace detail {

inline void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be finite and nonnegative");
}

}  // namespace detail

/// (2|A||B|/C)(e^{2|Phi|C|t|} - 1) D, capped at 2|A||B| when the supports overlap.
inline double lr_bound(double t, double norm_a, double norm_b, double c, double norm_phi, double d,
                       bool supports_overlap = false) {
  if (!(c > 0.0)) throw DomainError("lr_bound: C must be positive");
  detail::require_nonnegative(norm_a, "lr_bound: ||A||");
  detail::require_nonnegative(norm_b, "lr_bound: ||B||");
  detail::require_nonnegative(norm_phi, "lr_bound: ||Phi||");
  detail::require_nonnegative(d, "lr_bound: D");
  const double value = (2.0 * norm_a * norm_b / c) * std::expm1(2.0 * norm_phi * c * std::abs(t)) * d;
  // With overlapping supports the exponential estimate omits the t = 0 commutator; only the trivial cap holds.
  if (supports_overlap) return 2.0 * norm_a * norm_b;
  return value;
}

/// Exponential form, all constants taken with F_a:
/// (2|A||B|/C_a)(e^{2|Phi|_a C_a |t|} - 1) min(|dX|,|dY|) |F| e^{-a d(X,Y)}.
inline double lr_bound_exponential(double t, double norm_a, double norm_b, double c_a, double norm_phi_a,
                                   std::size_t boundary_x, std::size_t boundary_y, double norm_f, double a,
                                   double d_xy) {
  if (!(a > 0.0)) throw DomainError("lr_bound_exponential: decay rate a must be positive");
  if (!(c_a > 0.0)) throw DomainError("lr_bound_exponential: C_a must be positive");
  detail::require_nonnegative(norm_f, "lr_bound_exponential: ||F||");
  if (!(d_xy >= 0.0)) throw DomainError("lr_bound_exponential: d(X,Y) must be nonnegative");
  const double geometry = static_cast<double>(std::min(boundary_x, boundary_y)) * norm_f * std::exp(-a * d_xy);
  return lr_bound(t, norm_a, norm_b, c_a, norm_phi_a, geometry);
}

/// Lattice constants entering the bound for one (X, Y) pair.
struct LrConstants {
  double norm_f = 0.0;
  double c = 0.0;
  double norm_phi = 0.0;
  DistanceFactorTerms d;
  bool overlap = false;
};

inline LrConstants lr_constants(const Interaction& phi, const Lattice& lattice, const DecayFunction& f,
                                const SiteSet& x, const SiteSet& y) {
  LrConstants k;
  k.norm_f = f_norm(lattice, f);
  k.c = convolution_constant(lattice, f);
  k.norm_phi = interaction_norm(phi, lattice, f);
  k.d = distance_factor_terms(phi, lattice, f, x, y);
  k.overlap = x.intersects(y);
  return k;
}

inline constexpr std::size_t kMaxEnumerationSites = 8;
inline constexpr std::size_t kEnumerationBudget = 50'000'000;

/// a_n by explicit enumeration of surface chains Z_1 in S(X), Z_{j+1} in S(Z_j).
inline double a_n_exact(const Interaction& phi, const SiteSet& volume, const SiteSet& x, const SiteSet& y, int n) {
  if (n < 1) throw DomainError("a_n_exact: n must be at least 1");
  if (volume.size() > kMaxEnumerationSites)
    throw ResourceError("a_n_exact: volume has " + std::to_string(volume.size()) + " sites, enumeration is limited to " +
                        std::to_string(kMaxEnumerationSites));
  std::map<SiteSet, std::vector<SiteSet>> children;
  auto surface_of = [&](const SiteSet& z) -> const std::vector<SiteSet>& {
    auto it = children.find(z);
    if (it == children.end()) it = children.emplace(z, surface_sets(phi, volume, z)).first;
    return it->second;
  };
  std::size_t visits = 0;
  std::function<double(const SiteSet&, int)> walk = [&](const SiteSet& from, int depth) -> double {
    double sum = 0.0;
    for (const SiteSet& z : surface_of(from)) {
      if (++visits > kEnumerationBudget) throw ResourceError("a_n_exact: enumeration budget exhausted");
      const double w = phi.term_norm(z);
      if (depth == n)
        sum += z.intersects(y) ? w : 0.0;
      else
        sum += w * walk(z, depth + 1);
    }
    return sum;
  };
  return walk(x, 1);
}

/// a_1..a_{n_max} via the transfer recursion over term supports; same sums as a_n_exact.
inline std::vector<double> a_n_sequence(const Interaction& phi, const SiteSet& volume, const SiteSet& x,
                                        const SiteSet& y, int n_max) {
  if (n_max < 1) throw DomainError("a_n_sequence: n_max must be at least 1");
  std::vector<SiteSet> supports;
  for (const auto& [z, term] : phi.terms())
    if (z.subset_of(volume)) supports.push_back(z);
  const std::size_t m = supports.size();
  std::map<SiteSet, std::size_t> index;
  for (std::size_t i = 0; i < m; ++i) index.emplace(supports[i], i);

  std::vector<std::vector<std::size_t>> next(m);
  for (std::size_t i = 0; i < m; ++i)
    for (const SiteSet& z : surface_sets(phi, volume, supports[i])) next[i].push_back(index.at(z));

  std::vector<double> w(m, 0.0);
  for (const SiteSet& z : surface_sets(phi, volume, x)) w[index.at(z)] = phi.term_norm(z);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_max));
  for (int n = 1; n <= n_max; ++n) {
    double a = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (supports[i].intersects(y)) a += w[i];
    out.push_back(a);
    if (n == n_max) break;
    std::vector<double> w_next(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      if (w[i] == 0.0) continue;
      for (std::size_t j : next[i]) w_next[j] += w[i] * phi.term_norm(supports[j]);
    }
    w = std::move(w_next);
  }
  return out;
}

/// |Phi|^n C^{n-1} sum_{y in Y} sum_{x in dX} F(d(x,y)).
inline double a_n_bound(int n, double norm_phi, double c, double boundary_sum) {
  if (n < 1) throw DomainError("a_n_bound: n must be at least 1");
  return std::pow(norm_phi, n) * std::pow(c, n - 1) * boundary_sum;
}

/// 2|A||B| sum_n (2|t|)^n/n! a_n with exact a_n up to n_max and the a_n bound beyond.
/// Evaluated in both directions (X -> Y and Y -> X) and the smaller value returned.
class LrSeries {
 public:
  LrSeries(const Interaction& phi, const SiteSet& volume, const SiteSet& x, const SiteSet& y, int n_max,
           const LrConstants& k)
      : n_max_(n_max), k_(k) {
    if (n_max < 1) throw DomainError("lr_series_bound: n_max must be at least 1");
    forward_ = a_n_sequence(phi, volume, x, y, n_max);
    backward_ = a_n_sequence(phi, volume, y, x, n_max);
    overlap_ = x.intersects(y);
  }

  const std::vector<double>& coefficients_forward() const noexcept { return forward_; }
  const std::vector<double>& coefficients_backward() const noexcept { return backward_; }

  double operator()(double t, double norm_a, double norm_b) const {
    detail::require_nonnegative(norm_a, "lr_series_bound: ||A||");
    detail::require_nonnegative(norm_b, "lr_series_bound: ||B||");
    const double forward = direction(t, forward_, k_.d.boundary_x_to_y);
    const double backward = direction(t, backward_, k_.d.x_to_boundary_y);
    if (overlap_) return 2.0 * norm_a * norm_b;
    return 2.0 * norm_a * norm_b * std::min(forward, backward);
  }

 private:
  double direction(double t, const std::vector<double>& a, double boundary_sum) const {
    const double s = 2.0 * std::abs(t);
    double sum = 0.0;
    double term = 1.0;
    for (int n = 1; n <= n_max_; ++n) {
      term *= s / n;
      sum += term * a[static_cast<std::size_t>(n - 1)];
    }
    if (k_.c > 0.0 && boundary_sum > 0.0 && k_.norm_phi > 0.0)
      sum += boundary_sum / k_.c * detail::exp_tail(s * k_.c * k_.norm_phi, n_max_);
    return sum;
  }

  int n_max_;
  LrConstants k_;
  std::vector<double> forward_, backward_;
  bool overlap_ = false;
};

inline double lr_series_bound(double t, double norm_a, double norm_b, const Interaction& phi, const SiteSet& volume,
                              const SiteSet& x, const SiteSet& y, int n_max, const LrConstants& k) {
  return LrSeries(phi, volume, x, y, n_max, k)(t, norm_a, norm_b);
}

/// The two over-counted contributions whose sum is the convergence bound.
struct ThermoLimitTerms {
  double pair_sum = 0.0;  ///< sum_{x in X} sum_{y in Lambda_n \ Lambda_m} F(d(x,y))
  double sigma1 = 0.0;    ///< terms meeting X
  double sigma2 = 0.0;    ///< remaining terms, through the Lieb-Robinson bound
  double value() const { return sigma1 + sigma2; }
};

inline ThermoLimitTerms thermo_limit_terms(double T, double norm_a, double norm_phi, double c, const DecayFunction& f,
                                           const Lattice& lattice, const SiteSet& x, const SiteSet& inner,
                                           const SiteSet& outer) {
  if (!(T > 0.0)) throw DomainError("thermo_limit_bound: T must be positive");
  if (!(c > 0.0)) throw DomainError("thermo_limit_bound: C must be positive");
  detail::require_nonnegative(norm_a, "thermo_limit_bound: ||A||");
  detail::require_nonnegative(norm_phi, "thermo_limit_bound: ||Phi||");
  if (!x.subset_of(inner)) throw DomainError("thermo_limit_bound: X is not inside the smaller volume");
  if (!inner.subset_of(outer)) throw DomainError("thermo_limit_bound: volumes are not nested");
  if (!outer.subset_of(lattice.sites())) throw DomainError("thermo_limit_bound: volume is not inside the lattice");
  ThermoLimitTerms out;
  out.pair_sum = pair_sum(lattice, f, x, outer.set_difference(inner));
  const double base = 2.0 * T * norm_a * norm_phi * out.pair_sum;
  out.sigma1 = base;
  out.sigma2 = base * std::exp(2.0 * c * norm_phi * T);
  return out;
}

/// 2T(1 + e^{2C|Phi|T}) |A| |Phi| sum_{x in X} sum_{y in Lambda_n \ Lambda_m} F(d(x,y)).
inline double thermo_limit_bound(double T, double norm_a, double norm_phi, double c, const DecayFunction& f,
                                 const Lattice& lattice, const SiteSet& x, const SiteSet& inner,
                                 const SiteSet& outer) {
  return thermo_limit_terms(T, norm_a, norm_phi, c, f, lattice, x, inner, outer).value();
}

inline constexpr double kCertificationTolerance = 1e-9;

struct BoundReport {
  std::vector<double> times;
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> margin;
  bool certified = true;
  std::size_t worst = 0;  ///< index of the smallest margin
  std::map<std::string, double> metadata;

  double min_margin() const { return margin.empty() ? 0.0 : margin[worst]; }
  double worst_time() const { return times.empty() ? 0.0 : times[worst]; }
};

inline BoundReport certify(const Profile& lhs, const std::vector<double>& rhs,
                           std::map<std::string, double> metadata = {}) {
  if (lhs.size() != rhs.size())
    throw DomainError("certify: grid mismatch (" + std::to_string(lhs.size()) + " measured points, " +
                      std::to_string(rhs.size()) + " bound values)");
  BoundReport r;
  r.metadata = std::move(metadata);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    r.times.push_back(lhs[i].t);
    r.lhs.push_back(lhs[i].value);
    r.rhs.push_back(rhs[i]);
    const double m = rhs[i] - lhs[i].value;
    r.margin.push_back(m);
    if (!(m >= -kCertificationTolerance)) r.certified = false;
    if (i == 0 || !(m >= r.margin[r.worst])) r.worst = i;
  }
  return r;
}

inline BoundReport certify(const Profile& lhs, const std::function<double(double)>& rhs_at,
                           std::map<std::string, double> metadata = {}) {
  std::vector<double> rhs;
  rhs.reserve(lhs.size());
  for (const auto& p : lhs) rhs.push_back(rhs_at(p.t));
  return certify(lhs, rhs, std::move(metadata));
}

}  // namespace lrlab
