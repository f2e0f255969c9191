// Finite-volume Hamiltonians and exact Heisenberg / interaction-picture dynamics.
#pragma once

#include "lrlab/core.hpp"
#include "lrlab/geometry.hpp"
#include "lrlab/interactions.hpp"
#include "lrlab/observables.hpp"
#include "lrlab/propagator.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace lrlab {

/// H_Lambda = sum_x H_x + sum_{Z in Lambda} Phi(Z) on a fixed volume, with a
/// lazily computed (and then shared) eigendecomposition.
class VolumeSystem {
 public:
  const LocalSpace& space() const noexcept { return space_; }
  const SiteSet& volume() const noexcept { return space_.sites(); }
  const std::map<SiteId, SiteModel>& site_models() const noexcept { return models_; }
  const Interaction& interaction() const noexcept { return phi_; }
  const LocalOperator& hamiltonian() const noexcept { return hamiltonian_; }
  const LocalOperator& local_part() const noexcept { return local_part_; }
  Index dim() const { return space_.dim(); }

  const SpectralDecomposition& spectrum() const {
    std::call_once(cache_->once, [this] { cache_->spectrum = std::make_unique<SpectralDecomposition>(hamiltonian_.matrix()); });
    return *cache_->spectrum;
  }

  /// H0 = sum_x H_x + sum_{Z inside X} Phi(Z).
  Matrix reference_hamiltonian(const SiteSet& x) const {
    Matrix h0 = local_part_.matrix();
    for (const auto& [z, term] : phi_.terms())
      if (z.subset_of(x)) h0 += embed(term.op, space_).matrix();
    return h0;
  }

  LocalOperator embed_here(const LocalOperator& a) const { return embed(a, space_); }

  friend VolumeSystem assemble(const SiteSet& volume, const std::map<SiteId, SiteModel>& site_models,
                               const Interaction& interaction);

 private:
  struct Cache {
    std::once_flag once;
    std::unique_ptr<SpectralDecomposition> spectrum;
  };

  LocalSpace space_;
  std::map<SiteId, SiteModel> models_;
  Interaction phi_;
  LocalOperator hamiltonian_;
  LocalOperator local_part_;
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// Builds H_Lambda. Every interaction term must be supported inside the volume.
inline VolumeSystem assemble(const SiteSet& volume, const std::map<SiteId, SiteModel>& site_models,
                             const Interaction& interaction) {
  if (volume.empty()) throw DomainError("assemble: empty volume");
  std::map<SiteId, int> dims;
  std::map<SiteId, SiteModel> models;
  for (SiteId s : volume) {
    auto it = site_models.find(s);
    if (it == site_models.end()) throw DomainError("assemble: no site model for site " + std::to_string(s));
    dims[s] = it->second.local_dim;
    models.emplace(s, it->second);
  }
  for (const auto& [z, term] : interaction.terms())
    if (!z.subset_of(volume))
      throw DomainError("assemble: interaction term on " + z.to_string() + " is not inside volume " + volume.to_string());

  VolumeSystem sys;
  sys.space_ = LocalSpace::from_map(volume, dims);
  const Index dim = sys.space_.dim();
  check_dimension(dim, "volume " + volume.to_string());
  sys.models_ = std::move(models);
  sys.phi_ = interaction;

  Matrix hloc = Matrix::Zero(dim, dim);
  for (SiteId s : volume) {
    const LocalOperator hx(sys.space_.sub(SiteSet{s}), sys.models_.at(s).hamiltonian);
    hloc += embed(hx, sys.space_).matrix();
  }
  Matrix h = hloc;
  for (const auto& [z, term] : interaction.terms()) {
    if (term.op.space() != sys.space_.sub(z))
      throw DomainError("assemble: term on " + z.to_string() + " has local dimensions inconsistent with site models");
    h += embed(term.op, sys.space_).matrix();
  }
  sys.local_part_ = LocalOperator(sys.space_, std::move(hloc));
  sys.hamiltonian_ = LocalOperator(sys.space_, std::move(h));
  return sys;
}

/// tau_t(A) = e^{itH} A e^{-itH} on the whole volume.
inline LocalOperator heisenberg_evolve(const VolumeSystem& sys, const LocalOperator& a, double t) {
  const LocalOperator ea = sys.embed_here(a);
  if (t == 0.0) return ea;
  return LocalOperator(sys.space(), sys.spectrum().conjugate(ea.matrix(), t));
}

/// Interaction picture with respect to H0 = sum_x H_x + sum_{Z in X} Phi(Z).
class InteractionPicture {
 public:
  InteractionPicture(const VolumeSystem& sys, SiteSet x)
      : sys_(&sys), x_(std::move(x)), h0_(sys.reference_hamiltonian(x_)),
        reference_(std::make_shared<const SpectralDecomposition>(h0_)) {
    if (!x_.subset_of(sys.volume()))
      throw DomainError("interaction picture: X = " + x_.to_string() + " is not inside the volume");
  }

  const SiteSet& region() const noexcept { return x_; }
  const Matrix& reference_hamiltonian() const noexcept { return h0_; }

  /// tau0_t(A) = e^{itH0} A e^{-itH0}
  LocalOperator reference_evolve(const LocalOperator& a, double t) const {
    const LocalOperator ea = sys_->embed_here(a);
    return LocalOperator(sys_->space(), reference_->conjugate(ea.matrix(), t));
  }

  /// tau^int_t(A) = e^{itH} e^{-itH0} A e^{itH0} e^{-itH}, from the two eigendecompositions.
  LocalOperator evolve(const LocalOperator& a, double t) const {
    const LocalOperator ea = sys_->embed_here(a);
    if (t == 0.0) return ea;
    const Matrix inner = reference_->conjugate(ea.matrix(), -t);
    return LocalOperator(sys_->space(), sys_->spectrum().conjugate(inner, t));
  }

  /// Same quantity as W(0,t) A W(t,0), W(t,0) the Dyson propagator of H_int.
  LocalOperator evolve_dyson(const LocalOperator& a, double t, double tol) const {
    const LocalOperator ea = sys_->embed_here(a);
    if (t == 0.0) return ea;
    const Matrix w = unitary_propagator(generator(), 0.0, t, tol).value;
    return LocalOperator(sys_->space(), w.adjoint() * ea.matrix() * w);
  }

  /// H_int(t) = e^{itH0} (H - H0) e^{-itH0}
  GeneratorFamily generator() const {
    Matrix v = sys_->hamiltonian().matrix() - h0_;
    std::shared_ptr<const SpectralDecomposition> ref = reference_;
    return GeneratorFamily([ref, v = std::move(v)](double t) { return ref->conjugate(v, t); },
                           sys_->dim(), true);
  }

  /// Surface part: sum over Z in S_Lambda(X) of e^{itH0} Phi(Z) e^{-itH0}.
  GeneratorFamily surface_generator() const {
    Matrix v = Matrix::Zero(sys_->dim(), sys_->dim());
    for (const SiteSet& z : surface_sets(sys_->interaction(), sys_->volume(), x_))
      v += sys_->embed_here(sys_->interaction().terms().at(z).op).matrix();
    std::shared_ptr<const SpectralDecomposition> ref = reference_;
    return GeneratorFamily([ref, v = std::move(v)](double t) { return ref->conjugate(v, t); },
                           sys_->dim(), true);
  }

 private:
  const VolumeSystem* sys_;
  SiteSet x_;
  Matrix h0_;
  std::shared_ptr<const SpectralDecomposition> reference_;
};

inline LocalOperator interaction_picture_evolve(const VolumeSystem& sys, const SiteSet& x, const LocalOperator& a,
                                                double t) {
  return InteractionPicture(sys, x).evolve(a, t);
}

struct ProfilePoint {
  double t = 0.0;
  double value = 0.0;
};
using Profile = std::vector<ProfilePoint>;

/// ||[tau_t(A), B]|| evaluated in the eigenbasis of H, where it equals
/// ||[D A' D^*, B']|| with A' = V^dagger A V, B' = V^dagger B V, D = e^{itE}.
class CommutatorProfiler {
 public:
  CommutatorProfiler(const VolumeSystem& sys, const LocalOperator& a, const LocalOperator& b)
      : sys_(&sys), disjoint_(!a.support().intersects(b.support())) {
    const LocalOperator ea = sys.embed_here(a);
    const LocalOperator eb = sys.embed_here(b);
    const auto& spec = sys.spectrum();
    a_site_ = ea.matrix();
    b_site_ = eb.matrix();
    a_eig_ = spec.to_eigenbasis(a_site_);
    b_eig_ = spec.to_eigenbasis(b_site_);
    const double eps = 1e-13;
    hermitian_pair_ = hermiticity_defect(a_site_) <= eps * std::max(1.0, max_abs_entry(a_site_)) &&
                      hermiticity_defect(b_site_) <= eps * std::max(1.0, max_abs_entry(b_site_));
    even_ = is_real(sys.hamiltonian().matrix()) && is_real(a_site_) && is_real(b_site_);
  }

  /// True when the profile is exactly even in t (real H, A, B).
  bool even() const noexcept { return even_; }

  double at(double t) const {
    if (t == 0.0) {
      if (disjoint_) return 0.0;
      return operator_norm(Matrix(a_site_ * b_site_ - b_site_ * a_site_));
    }
    const Matrix at = sys_->spectrum().phase_eigenbasis(a_eig_, t);
    const Matrix ab = at * b_eig_;
    if (hermitian_pair_) {
      // [A_t, B] is anti-Hermitian: i(AB - (AB)^dagger) is Hermitian.
      const Matrix h = Complex(0, 1) * (ab - ab.adjoint());
      return hermitian_spectral_radius(h);
    }
    return operator_norm(Matrix(ab - b_eig_ * at));
  }

 private:
  const VolumeSystem* sys_;
  bool disjoint_ = false;
  bool hermitian_pair_ = false;
  bool even_ = false;
  Matrix a_site_, b_site_, a_eig_, b_eig_;
};

/// (t, ||[tau_t(A), B]||) on a time grid; one eigendecomposition for all points.
inline Profile commutator_norm_profile(const VolumeSystem& sys, const LocalOperator& a, const LocalOperator& b,
                                       const std::vector<double>& times) {
  const CommutatorProfiler profiler(sys, a, b);
  Profile out;
  out.reserve(times.size());
  std::map<double, double> by_abs_time;
  for (double t : times) {
    if (profiler.even()) {
      auto it = by_abs_time.find(std::abs(t));
      if (it != by_abs_time.end()) {
        out.push_back({t, it->second});
        continue;
      }
    }
    const double v = profiler.at(t);
    if (profiler.even()) by_abs_time.emplace(std::abs(t), v);
    out.push_back({t, v});
  }
  return out;
}

/// (t, ||tau_t^{Lambda_n}(A) - tau_t^{Lambda_m}(A)||), the smaller-volume
/// evolution embedded into the larger volume before subtracting.
inline Profile volume_difference_profile(const VolumeSystem& small, const VolumeSystem& large, const LocalOperator& a,
                                         const std::vector<double>& times) {
  if (!small.volume().subset_of(large.volume()))
    throw DomainError("volume_difference_profile: " + small.volume().to_string() + " is not inside " +
                      large.volume().to_string());
  if (!a.support().subset_of(small.volume()))
    throw DomainError("volume_difference_profile: observable support is not inside the smaller volume");
  if (large.space().sub(small.volume()) != small.space())
    throw DomainError("volume_difference_profile: volumes disagree on local dimensions");
  const Matrix small_eig = small.spectrum().to_eigenbasis(small.embed_here(a).matrix());
  const Matrix large_eig = large.spectrum().to_eigenbasis(large.embed_here(a).matrix());
  Profile out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back({t, 0.0});
      continue;
    }
    const LocalOperator evolved_small(small.space(), small.spectrum().from_eigenbasis(small.spectrum().phase_eigenbasis(small_eig, t)));
    const Matrix evolved_large = large.spectrum().from_eigenbasis(large.spectrum().phase_eigenbasis(large_eig, t));
    const Matrix diff = evolved_large - embed(evolved_small, large.space()).matrix();
    out.push_back({t, operator_norm(diff)});
  }
  return out;
}

/// Uniform grid of `points` times on [-T, T].
inline std::vector<double> symmetric_grid(double T, int points) {
  if (points < 1) throw DomainError("time grid needs at least one point");
  if (!(T >= 0.0)) throw DomainError("time grid half-width must be nonnegative");
  std::vector<double> out(static_cast<std::size_t>(points));
  if (points == 1) {
    out[0] = 0.0;
    return out;
  }
  for (int k = 0; k < points; ++k) out[k] = -T + 2.0 * T * k / (points - 1);
  // Keep the grid exactly symmetric and hit t = 0 exactly when it is a node.
  for (int k = 0; k < points / 2; ++k) out[points - 1 - k] = -out[k];
  if (points % 2 == 1) out[points / 2] = 0.0;
  return out;
}

}  // namespace lrlab
