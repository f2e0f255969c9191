// Local operator algebra on tensor products of finite site spaces.
#pragma once

#include "lrlab/core.hpp"
#include "lrlab/geometry.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace lrlab {

/// On-site Hilbert space and Hamiltonian H_x.
struct SiteModel {
  enum class Kind { spin, truncated_oscillator, explicit_matrix };

  Kind kind = Kind::explicit_matrix;
  int local_dim = 0;
  Matrix hamiltonian;
  /// max-entry size of the (M + M^dagger)/2 correction applied on construction.
  double symmetrization_correction = 0.0;

  static SiteModel from_matrix(Kind kind, Matrix h) {
    if (h.rows() != h.cols()) throw DomainError("site Hamiltonian must be square");
    if (h.rows() < 2) throw DomainError("site Hilbert space must have dimension >= 2");
    if (!all_finite(h)) throw DomainError("site Hamiltonian has non-finite entries");
    SiteModel m;
    m.kind = kind;
    m.local_dim = static_cast<int>(h.rows());
    m.symmetrization_correction = 0.5 * hermiticity_defect(h);
    m.hamiltonian = (h + h.adjoint()) * 0.5;
    return m;
  }
};

inline std::string to_string(SiteModel::Kind k) {
  switch (k) {
    case SiteModel::Kind::spin: return "spin";
    case SiteModel::Kind::truncated_oscillator: return "truncated_oscillator";
    case SiteModel::Kind::explicit_matrix: return "explicit";
  }
  return "unknown";
}

namespace site_ops {

/// Spin-s matrices for local_dim = 2s+1 in the basis m = s, s-1, ..., -s.
inline Matrix spin_z(int d) {
  const double s = 0.5 * (d - 1);
  Matrix m = Matrix::Zero(d, d);
  for (int k = 0; k < d; ++k) m(k, k) = s - k;
  return m;
}

inline Matrix spin_plus(int d) {
  const double s = 0.5 * (d - 1);
  Matrix m = Matrix::Zero(d, d);
  for (int k = 1; k < d; ++k) {
    const double mz = s - k;  // raises m -> m + 1, i.e. index k -> k - 1
    m(k - 1, k) = std::sqrt(s * (s + 1) - mz * (mz + 1));
  }
  return m;
}

inline Matrix spin_x(int d) {
  const Matrix p = spin_plus(d);
  return (p + p.adjoint()) * 0.5;
}

inline Matrix spin_y(int d) {
  const Matrix p = spin_plus(d);
  return (p - p.adjoint()) * Complex(0, -0.5);
}

/// Truncated annihilation operator: a|k> = sqrt(k)|k-1>.
inline Matrix annihilation(int n) {
  Matrix a = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
  return a;
}

inline Matrix position(int n) {
  const Matrix a = annihilation(n);
  return (a + a.adjoint()) / std::sqrt(2.0);
}

inline Matrix number(int n) {
  Matrix m = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) m(k, k) = k;
  return m;
}

/// diag((-1)^k)
inline Matrix parity(int n) {
  Matrix m = Matrix::Zero(n, n);
  for (int k = 0; k < n; ++k) m(k, k) = (k % 2 == 0) ? 1.0 : -1.0;
  return m;
}

/// |0><1| + |1><0|
inline Matrix flip01(int n) {
  Matrix m = Matrix::Zero(n, n);
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  return m;
}

/// Named single-site operator. Pauli names require local_dim == 2.
inline Matrix named(const std::string& name, int d) {
  if (d < 2) throw DomainError("local dimension must be >= 2");
  if (name == "identity") return Matrix::Identity(d, d);
  if (name == "sx") return spin_x(d);
  if (name == "sy") return spin_y(d);
  if (name == "sz") return spin_z(d);
  if (name == "pauli_x" || name == "pauli_y" || name == "pauli_z") {
    if (d != 2) throw DomainError("operator '" + name + "' needs local_dim 2");
    if (name == "pauli_x") return 2.0 * spin_x(2);
    if (name == "pauli_y") return 2.0 * spin_y(2);
    return 2.0 * spin_z(2);
  }
  if (name == "parity") return parity(d);
  if (name == "flip01") return flip01(d);
  if (name == "number") return number(d);
  if (name == "position") return position(d);
  throw DomainError("unknown operator name '" + name + "'");
}

}  // namespace site_ops

/// Spin site with H_x = hz * S^z + hx * S^x.
inline SiteModel spin_site(int local_dim, double hx, double hz) {
  if (local_dim < 2) throw DomainError("spin site: local_dim must be >= 2");
  return SiteModel::from_matrix(SiteModel::Kind::spin,
                                hz * site_ops::spin_z(local_dim) + hx * site_ops::spin_x(local_dim));
}

/// n-level truncation of N + 1/2 + lambda * x^4, with x built from the truncated
/// ladder operators.
inline SiteModel truncate_oscillator(int n_levels, double anharmonic_strength) {
  if (n_levels < 2) throw DomainError("truncate_oscillator: n_levels must be >= 2");
  if (!std::isfinite(anharmonic_strength))
    throw DomainError("truncate_oscillator: anharmonic strength must be finite");
  const Matrix x = site_ops::position(n_levels);
  const Matrix x2 = x * x;
  Matrix h = site_ops::number(n_levels) + 0.5 * Matrix::Identity(n_levels, n_levels);
  if (anharmonic_strength != 0.0) h += anharmonic_strength * (x2 * x2);
  return SiteModel::from_matrix(SiteModel::Kind::truncated_oscillator, std::move(h));
}

/// Ordered list of sites with their local dimensions; defines a Kronecker layout
/// where the smallest site id is the most significant factor.
class LocalSpace {
 public:
  LocalSpace() = default;
  LocalSpace(SiteSet sites, std::vector<int> dims) : sites_(std::move(sites)), dims_(std::move(dims)) {
    if (sites_.size() != dims_.size()) throw DomainError("LocalSpace: one dimension per site required");
    for (int d : dims_)
      if (d < 1) throw DomainError("LocalSpace: local dimensions must be positive");
  }

  /// Layout over `sites` taking dimensions from a per-site map.
  static LocalSpace from_map(const SiteSet& sites, const std::map<SiteId, int>& dims) {
    std::vector<int> d;
    d.reserve(sites.size());
    for (SiteId s : sites) {
      auto it = dims.find(s);
      if (it == dims.end()) throw DomainError("no local dimension for site " + std::to_string(s));
      d.push_back(it->second);
    }
    return LocalSpace(sites, std::move(d));
  }

  const SiteSet& sites() const noexcept { return sites_; }
  const std::vector<int>& dims() const noexcept { return dims_; }

  Index dim() const {
    Index total = 1;
    for (int d : dims_) {
      if (total > std::numeric_limits<Index>::max() / d) throw ResourceError("dimension overflow");
      total *= d;
    }
    return total;
  }

  int dim_of(SiteId s) const {
    for (std::size_t i = 0; i < sites_.size(); ++i)
      if (sites_[i] == s) return dims_[i];
    throw DomainError("site " + std::to_string(s) + " not in space");
  }

  LocalSpace sub(const SiteSet& subset) const {
    if (!subset.subset_of(sites_)) throw DomainError("subspace sites " + subset.to_string() + " not in " + sites_.to_string());
    std::vector<int> d;
    for (SiteId s : subset) d.push_back(dim_of(s));
    return LocalSpace(subset, std::move(d));
  }

  friend bool operator==(const LocalSpace&, const LocalSpace&) = default;

 private:
  SiteSet sites_;
  std::vector<int> dims_;
};

/// Operator A in A_X: a matrix on the tensor product over its support X.
class LocalOperator {
 public:
  LocalOperator() = default;
  LocalOperator(LocalSpace space, Matrix matrix) : space_(std::move(space)), matrix_(std::move(matrix)) {
    const Index d = space_.dim();
    if (matrix_.rows() != d || matrix_.cols() != d)
      throw DomainError("operator on " + space_.sites().to_string() + " must be " + std::to_string(d) +
                        "x" + std::to_string(d) + ", got " + std::to_string(matrix_.rows()) + "x" +
                        std::to_string(matrix_.cols()));
  }

  const SiteSet& support() const noexcept { return space_.sites(); }
  const LocalSpace& space() const noexcept { return space_; }
  const Matrix& matrix() const noexcept { return matrix_; }

  LocalOperator adjoint() const { return LocalOperator(space_, matrix_.adjoint()); }

 private:
  LocalSpace space_;
  Matrix matrix_;
};

/// Tensor product of single-site matrices over `sites`, in site order.
inline LocalOperator product_operator(const LocalSpace& space, const std::vector<Matrix>& factors) {
  if (factors.size() != space.sites().size())
    throw DomainError("product_operator: one factor per site required");
  Matrix m = Matrix::Identity(1, 1);
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].rows() != space.dims()[i] || factors[i].cols() != space.dims()[i])
      throw DomainError("product_operator: factor dimension mismatch");
    Matrix next(m.rows() * factors[i].rows(), m.cols() * factors[i].cols());
    for (Index a = 0; a < m.rows(); ++a)
      for (Index b = 0; b < m.cols(); ++b)
        next.block(a * factors[i].rows(), b * factors[i].cols(), factors[i].rows(), factors[i].cols()) =
            m(a, b) * factors[i];
    m = std::move(next);
  }
  return LocalOperator(space, std::move(m));
}

namespace detail {

/// Offsets of the support digits and the complementary digits inside the volume index.
struct EmbeddingOffsets {
  std::vector<Index> inner;
  std::vector<Index> outer;
};

inline EmbeddingOffsets embedding_offsets(const LocalSpace& support, const LocalSpace& volume) {
  const auto& vsites = volume.sites();
  const auto& vdims = volume.dims();
  const std::size_t n = vsites.size();
  std::vector<Index> stride(n);
  Index s = 1;
  for (std::size_t k = n; k-- > 0;) {
    stride[k] = s;
    s *= vdims[k];
  }
  std::vector<std::size_t> in_pos, out_pos;
  for (std::size_t k = 0; k < n; ++k) {
    if (support.sites().contains(vsites[k])) in_pos.push_back(k);
    else out_pos.push_back(k);
  }
  auto enumerate = [&](const std::vector<std::size_t>& pos) {
    std::vector<Index> offs{0};
    for (std::size_t p : pos) {
      std::vector<Index> next;
      next.reserve(offs.size() * static_cast<std::size_t>(vdims[p]));
      for (Index o : offs)
        for (int digit = 0; digit < vdims[p]; ++digit) next.push_back(o + digit * stride[p]);
      offs = std::move(next);
    }
    return offs;
  };
  return {enumerate(in_pos), enumerate(out_pos)};
}

}  // namespace detail

/// A (x) 1 on the volume. Local dimensions of the volume must agree with A's on the support.
inline LocalOperator embed(const LocalOperator& a, const LocalSpace& volume) {
  if (!a.support().subset_of(volume.sites()))
    throw DomainError("embed: support " + a.support().to_string() + " is not inside volume " +
                      volume.sites().to_string());
  if (volume.sub(a.support()) != a.space())
    throw DomainError("embed: local dimensions of the volume disagree with the operator");
  if (a.support() == volume.sites()) return a;
  const Index dim = volume.dim();
  check_dimension(dim, "volume " + volume.sites().to_string());
  const auto offs = detail::embedding_offsets(a.space(), volume);
  const Matrix& m = a.matrix();
  Matrix out = Matrix::Zero(dim, dim);
  for (Index r : offs.outer)
    for (std::size_t j = 0; j < offs.inner.size(); ++j)
      for (std::size_t i = 0; i < offs.inner.size(); ++i)
        out(offs.inner[i] + r, offs.inner[j] + r) = m(static_cast<Index>(i), static_cast<Index>(j));
  return LocalOperator(volume, std::move(out));
}

inline double operator_norm(const LocalOperator& a) { return operator_norm(a.matrix()); }

/// [A, B] on the volume.
inline LocalOperator commutator(const LocalOperator& a, const LocalOperator& b, const LocalSpace& volume) {
  const LocalOperator ea = embed(a, volume);
  const LocalOperator eb = embed(b, volume);
  return LocalOperator(volume, ea.matrix() * eb.matrix() - eb.matrix() * ea.matrix());
}

}  // namespace lrlab
