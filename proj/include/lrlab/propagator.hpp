// Propagators of time-dependent bounded generators via the Dyson series.
//
// dyson_solve:             dV/dt = A(t) V,  V(t0) = V0
// dyson_inverse:           dW/dt = -W A(t), W(t0) = V0^{-1}
// unitary_propagator:      dU/dt = -i H(t) U, U(s,s) = 1
// heisenberg_source_solve: f' = i[A(t), f] + B(t), f(t0) = f0
//
// The interval is split into pieces of length <= 1/(2M), M a sampled bound on
// ||A||, and each piece is summed as a truncated Dyson series whose nested
// time-ordered integrals are evaluated by an iterated fourth-order cumulative
// rule on a uniform grid, refined until successive grids agree.
#pragma once

#include "lrlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace lrlab {

/// t -> A(t), a continuous family of square matrices of fixed dimension.
class GeneratorFamily {
 public:
  using Function = std::function<Matrix(double)>;

  GeneratorFamily(Function f, Index dim, bool self_adjoint = false)
      : f_(std::move(f)), dim_(dim), self_adjoint_(self_adjoint) {
    if (!f_) throw DomainError("generator family is empty");
    if (dim_ < 1) throw DomainError("generator dimension must be positive");
  }

  /// Constant family.
  static GeneratorFamily constant(Matrix a, bool self_adjoint = false) {
    const Index d = a.rows();
    return GeneratorFamily([a = std::move(a)](double) { return a; }, d, self_adjoint);
  }

  Matrix operator()(double t) const {
    Matrix m = f_(t);
    if (m.rows() != dim_ || m.cols() != dim_)
      throw DomainError("generator returned a matrix of the wrong dimension at t=" + std::to_string(t));
    if (!all_finite(m)) throw DomainError("generator has non-finite entries at t=" + std::to_string(t));
    return m;
  }

  Index dim() const noexcept { return dim_; }
  bool self_adjoint() const noexcept { return self_adjoint_; }

  /// 1.25 x the largest ||A(t)|| over 64 uniform samples of [a, b] (both ends included).
  double local_bound(double a, double b) const {
    const double lo = std::min(a, b), hi = std::max(a, b);
    constexpr int kSamples = 64;
    double best = 0.0;
    for (int k = 0; k < kSamples; ++k) {
      const double t = (lo == hi) ? lo : lo + (hi - lo) * k / (kSamples - 1);
      best = std::max(best, operator_norm((*this)(t)));
    }
    return 1.25 * best;
  }

  /// Checks ||H(t) - H(t)^dagger|| <= 1e-12 (relative to max(1, ||H||)) on samples of [a, b].
  void check_self_adjoint(double a, double b) const {
    if (!self_adjoint_) throw DomainError("generator family is not flagged self-adjoint");
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (int k = 0; k < 16; ++k) {
      const double t = (lo == hi) ? lo : lo + (hi - lo) * k / 15.0;
      const Matrix h = (*this)(t);
      if (hermiticity_defect(h) > 1e-12 * std::max(1.0, max_abs_entry(h)))
        throw DomainError("generator is not self-adjoint at t=" + std::to_string(t));
    }
  }

  /// Sampled continuity check: a jump between neighbouring samples that survives
  /// repeated bisection of the interval is reported as a discontinuity.
  void check_continuity(double a, double b) const {
    const double lo = std::min(a, b), hi = std::max(a, b);
    if (lo == hi) return;
    const double scale = std::max(1.0, local_bound(lo, hi));
    constexpr int kIntervals = 64;
    for (int k = 0; k < kIntervals; ++k) {
      double l = lo + (hi - lo) * k / kIntervals;
      double r = (k + 1 == kIntervals) ? hi : lo + (hi - lo) * (k + 1) / kIntervals;
      Matrix fl = (*this)(l), fr = (*this)(r);
      double jump = operator_norm(Matrix(fr - fl));
      for (int level = 0; level < 40 && jump > 1e-3 * scale; ++level) {
        const double m = 0.5 * (l + r);
        const Matrix fm = (*this)(m);
        const double left = operator_norm(Matrix(fm - fl)), right = operator_norm(Matrix(fr - fm));
        if (left >= right) {
          r = m;
          fr = fm;
          jump = left;
        } else {
          l = m;
          fl = fm;
          jump = right;
        }
      }
      if (jump > 1e-3 * scale)
        throw DomainError("generator appears discontinuous near t=" + std::to_string(0.5 * (l + r)));
    }
  }

 private:
  Function f_;
  Index dim_ = 0;
  bool self_adjoint_ = false;
};

/// V(t) (or U(t,s)) together with how it was obtained.
struct Propagator {
  Matrix value;
  double t0 = 0.0;
  double t = 0.0;
  int order_used = 0;        ///< largest series order used on any piece
  double tail_bound = 0.0;   ///< analytic bound on the discarded series tail
  int subintervals = 0;
  int grid_points = 0;       ///< finest quadrature grid (intervals per piece)
};

namespace detail {

/// sum_{k > n} x^k / k!, x >= 0.
inline double exp_tail(double x, int n) {
  if (x == 0.0) return 0.0;
  if (x > n + 1.0) {
    double partial = 0.0, term = 1.0;
    for (int k = 0; k <= n; ++k) {
      if (k > 0) term *= x / k;
      partial += term;
    }
    return std::max(0.0, std::exp(x) - partial);
  }
  double term = std::exp((n + 1) * std::log(x) - std::lgamma(n + 2.0));
  double sum = 0.0;
  for (int k = n + 1; k < n + 2000; ++k) {
    sum += term;
    term *= x / (k + 1);
    if (term <= 1e-18 * sum) break;
  }
  return sum;
}

/// Smallest order n with exp_tail(x, n) <= tol.
inline int series_order(double x, double tol) {
  int n = 0;
  while (exp_tail(x, n) > tol) {
    if (++n > 400) throw DomainError("Dyson series order exceeds 400; tolerance unreachable");
  }
  return n;
}

/// G_k = integral of g from node 0 to node k, uniform signed step h, using the
/// cubic through the four nearest nodes on each interval. Requires >= 4 nodes.
inline std::vector<Matrix> cumulative_integral(const std::vector<Matrix>& g, double h) {
  const std::size_t m = g.size() - 1;
  std::vector<Matrix> out(g.size());
  out[0] = Matrix::Zero(g[0].rows(), g[0].cols());
  for (std::size_t k = 0; k < m; ++k) {
    Matrix piece;
    if (k == 0) {
      piece = (9.0 * g[0] + 19.0 * g[1] - 5.0 * g[2] + g[3]) * (h / 24.0);
    } else if (k == m - 1) {
      piece = (g[m - 3] - 5.0 * g[m - 2] + 19.0 * g[m - 1] + 9.0 * g[m]) * (h / 24.0);
    } else {
      piece = (-g[k - 1] + 13.0 * g[k] + 13.0 * g[k + 1] - g[k + 2]) * (h / 24.0);
    }
    out[k + 1] = out[k] + piece;
  }
  return out;
}

/// Truncated Dyson sum on one piece, evaluated at the final node.
/// left: sum_n P_n with P_n(s) = int A P_{n-1};  right: Q_n(s) = -int Q_{n-1} A.
inline Matrix dyson_piece(const std::vector<Matrix>& a_nodes, double h, int order, bool left) {
  const Index d = a_nodes[0].rows();
  const std::size_t nodes = a_nodes.size();
  Matrix total = Matrix::Identity(d, d);
  std::vector<Matrix> prev(nodes, Matrix::Identity(d, d));
  std::vector<Matrix> g(nodes);
  for (int n = 1; n <= order; ++n) {
    for (std::size_t k = 0; k < nodes; ++k) g[k] = left ? Matrix(a_nodes[k] * prev[k]) : Matrix(-(prev[k] * a_nodes[k]));
    prev = cumulative_integral(g, h);
    total += prev.back();
  }
  return total;
}

struct PieceResult {
  Matrix value;
  int order = 0;
  double tail = 0.0;
  int grid = 0;
};

/// Dyson series of one piece [a, b] with identity initial value, quadrature
/// refined until two successive grids differ by <= tol / 2.
inline PieceResult solve_piece(const GeneratorFamily::Function& gen, double a, double b, double bound,
                               double tol, int extra_order, bool left) {
  PieceResult r;
  const double x = bound * std::abs(b - a);
  r.order = series_order(x, tol) + extra_order;
  r.tail = exp_tail(x, r.order);
  const Index d = gen(a).rows();
  if (r.order == 0 || a == b) {
    r.value = Matrix::Identity(d, d);
    return r;
  }
  int m = 8;
  std::vector<Matrix> nodes(m + 1);
  for (int k = 0; k <= m; ++k) nodes[k] = gen(a + (b - a) * k / m);
  Matrix coarse = dyson_piece(nodes, (b - a) / m, r.order, left);
  constexpr int kMaxGrid = 1 << 13;
  while (true) {
    const int fine_m = 2 * m;
    std::vector<Matrix> fine(fine_m + 1);
    for (int k = 0; k <= fine_m; ++k)
      fine[k] = (k % 2 == 0) ? nodes[k / 2] : gen(a + (b - a) * k / fine_m);
    Matrix value = dyson_piece(fine, (b - a) / fine_m, r.order, left);
    const double diff = (value - coarse).norm();  // Frobenius, bounds the operator norm
    m = fine_m;
    nodes = std::move(fine);
    coarse = std::move(value);
    if (diff <= tol / 2.0) break;
    if (m >= kMaxGrid) throw DomainError("Dyson quadrature did not converge; generator too rough for tolerance");
  }
  r.value = std::move(coarse);
  r.grid = m;
  return r;
}

/// Shared driver. `norm_preserving` marks anti-Hermitian generators, whose
/// solutions keep ||V(t)|| = ||V0||.
inline Propagator dyson_drive(const GeneratorFamily::Function& gen, Index dim, double t0, double t, const Matrix& init,
                              double tol, bool norm_preserving, int extra_order, bool left, double bound) {
  Propagator p;
  p.t0 = t0;
  p.t = t;
  if (t == t0) {
    p.value = init;
    return p;
  }
  const double span = std::abs(t - t0);
  const int pieces = std::max(1, static_cast<int>(std::ceil(2.0 * bound * span)));
  double growth = std::max(1.0, operator_norm(init));
  if (!norm_preserving) growth *= std::exp(bound * span);
  const double piece_tol = tol / (2.0 * pieces * growth);
  Matrix acc = Matrix::Identity(dim, dim);
  double tail_sum = 0.0;
  for (int k = 0; k < pieces; ++k) {
    const double a = t0 + (t - t0) * k / pieces;
    const double b = (k + 1 == pieces) ? t : t0 + (t - t0) * (k + 1) / pieces;
    PieceResult r = solve_piece(gen, a, b, bound, piece_tol, extra_order, left);
    acc = left ? Matrix(r.value * acc) : Matrix(acc * r.value);
    p.order_used = std::max(p.order_used, r.order);
    p.grid_points = std::max(p.grid_points, r.grid);
    tail_sum += r.tail;
  }
  p.value = left ? Matrix(acc * init) : Matrix(init * acc);
  p.tail_bound = growth * tail_sum;
  p.subintervals = pieces;
  return p;
}

inline void check_tolerance(double tol) {
  if (!(tol > 0.0) || !std::isfinite(tol)) throw DomainError("tolerance must be positive");
}

}  // namespace detail

/// V(t) for dV/dt = A(t) V, V(t0) = V0. `extra_order` adds series terms beyond
/// the order the tail estimate requires.
inline Propagator dyson_solve(const GeneratorFamily& a, double t0, double t, const Matrix& v0, double tol,
                              int extra_order = 0) {
  detail::check_tolerance(tol);
  if (v0.rows() != a.dim() || v0.cols() != a.dim()) throw DomainError("dyson_solve: V0 has wrong dimension");
  if (!all_finite(v0)) throw DomainError("dyson_solve: V0 has non-finite entries");
  const double bound = a.local_bound(t0, t);
  auto gen = [&a](double s) { return a(s); };
  return detail::dyson_drive(gen, a.dim(), t0, t, v0, tol, false, extra_order, true, bound);
}

/// W(t) for dW/dt = -W A(t), W(t0) = V0^{-1}; W(t) = V(t)^{-1}.
inline Propagator dyson_inverse(const GeneratorFamily& a, double t0, double t, const Matrix& v0, double tol) {
  detail::check_tolerance(tol);
  if (v0.rows() != a.dim() || v0.cols() != a.dim()) throw DomainError("dyson_inverse: V0 has wrong dimension");
  Eigen::FullPivLU<Matrix> lu(v0);
  if (!lu.isInvertible()) throw DomainError("dyson_inverse: V0 is singular");
  const Matrix v0_inv = lu.inverse();
  const double bound = a.local_bound(t0, t);
  auto gen = [&a](double s) { return a(s); };
  return detail::dyson_drive(gen, a.dim(), t0, t, v0_inv, tol, false, 0, false, bound);
}

/// U(t,s) for dU/dt = -i H(t) U, U(s,s) = 1, with H self-adjoint.
inline Propagator unitary_propagator(const GeneratorFamily& h, double s, double t, double tol) {
  detail::check_tolerance(tol);
  h.check_self_adjoint(s, t);
  const Index d = h.dim();
  if (s == t) {
    Propagator p;
    p.value = Matrix::Identity(d, d);
    p.t0 = s;
    p.t = t;
    return p;
  }
  const double bound = h.local_bound(s, t);
  auto gen = [&h](double tau) { return Matrix(Complex(0, -1) * h(tau)); };
  return detail::dyson_drive(gen, d, s, t, Matrix::Identity(d, d), tol, true, 0, true, bound);
}

/// Solution of f' = i[A(t), f] + B(t), f(t0) = f0, with the norm estimate
/// ||f(t)|| <= ||f0|| + int ||B||.
struct SourcedSolution {
  Matrix value;
  double initial_norm = 0.0;
  double source_integral = 0.0;  ///< integral of ||B(s)|| over [min(t0,t), max(t0,t)]
  int panels = 0;

  double norm() const { return operator_norm(value); }
  double norm_bound() const { return initial_norm + source_integral; }
};

/// f(t) = U(t,t0) (f0 + int_{t0}^t U(s,t0)^* B(s) U(s,t0) ds) U(t,t0)^*, where
/// dU/dt = i A(t) U. The integral uses composite Simpson, panel count doubled
/// until successive values agree to tol / 2.
inline SourcedSolution heisenberg_source_solve(const GeneratorFamily& a, const GeneratorFamily& b, const Matrix& f0,
                                               double t0, double t, double tol) {
  detail::check_tolerance(tol);
  a.check_self_adjoint(t0, t);
  const Index d = a.dim();
  if (b.dim() != d || f0.rows() != d || f0.cols() != d)
    throw DomainError("heisenberg_source_solve: dimension mismatch");
  SourcedSolution sol;
  sol.initial_norm = operator_norm(f0);
  if (t == t0) {
    sol.value = f0;
    return sol;
  }
  // U solves dU/dt = -i(-A)U.
  const GeneratorFamily minus_a([&a](double s) { return Matrix(-a(s)); }, d, true);

  auto integrate = [&](int panels, Matrix& integral, std::vector<Matrix>& units, std::vector<double>& bnorms) {
    const double h = (t - t0) / panels;
    units.assign(panels + 1, Matrix::Identity(d, d));
    bnorms.assign(panels + 1, 0.0);
    const double step_tol = tol / (8.0 * panels);
    for (int k = 1; k <= panels; ++k) {
      const double s0 = t0 + h * (k - 1), s1 = t0 + h * k;
      units[k] = unitary_propagator(minus_a, s0, s1, step_tol).value * units[k - 1];
    }
    integral = Matrix::Zero(d, d);
    for (int k = 0; k <= panels; ++k) {
      const Matrix bk = b(t0 + h * k);
      bnorms[k] = operator_norm(bk);
      const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
      integral += w * (units[k].adjoint() * bk * units[k]);
    }
    integral *= h / 3.0;
  };

  int panels = 8;
  Matrix prev_integral;
  std::vector<Matrix> units;
  std::vector<double> bnorms;
  integrate(panels, prev_integral, units, bnorms);
  constexpr int kMaxPanels = 1 << 12;
  Matrix integral;
  while (true) {
    panels *= 2;
    integrate(panels, integral, units, bnorms);
    const double diff = operator_norm(Matrix(integral - prev_integral));
    if (diff <= tol / 2.0) break;
    if (panels >= kMaxPanels) throw DomainError("heisenberg_source_solve: quadrature did not converge");
    prev_integral = integral;
  }
  const double h = std::abs(t - t0) / panels;
  double norm_integral = 0.0;
  for (int k = 0; k <= panels; ++k) {
    const double w = (k == 0 || k == panels) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    norm_integral += w * bnorms[k];
  }
  sol.source_integral = norm_integral * h / 3.0;
  const Matrix& u = units.back();
  sol.value = u * (f0 + integral) * u.adjoint();
  sol.panels = panels;
  return sol;
}

}  // namespace lrlab
