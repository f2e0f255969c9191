#include "lrlab/bounds.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lrlab;

namespace {

LocalSpace qubits(const SiteSet& s) { return LocalSpace(s, std::vector<int>(s.size(), 2)); }

SiteSet range(int n) {
  std::vector<SiteId> ids;
  for (int i = 0; i < n; ++i) ids.push_back(i);
  return SiteSet(ids);
}

Interaction xx_chain(int n, double j) {
  Interaction phi;
  for (int i = 0; i + 1 < n; ++i)
    phi.add(product_operator(qubits(SiteSet{i, i + 1}), {oracle::pauli_x() * j, oracle::pauli_x()}));
  return phi;
}

std::map<SiteId, SiteModel> spin_models(int n, double hx, double hz) {
  std::map<SiteId, SiteModel> m;
  for (int s = 0; s < n; ++s) m.emplace(s, spin_site(2, hx, hz));
  return m;
}

DecayFunction two_to_minus_r() { return DecayFunction::exp_power(std::log(2.0), 0.0); }

Interaction random_pairs(int n, double range_cut, std::mt19937& rng) {
  Interaction phi;
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n && k - i <= range_cut; ++k)
      phi.add(LocalOperator(qubits(SiteSet{i, k}), oracle::random_hermitian(4, rng) * std::pow(0.3, k - i - 1)));
  return phi;
}

}  // namespace

TEST(LrBound, TrivialCasesAndErrors) {
  EXPECT_EQ(lr_bound(0.0, 1, 1, 4, 2, 0.125), 0.0);
  EXPECT_EQ(lr_bound(1.7, 1, 1, 4, 2, 0.0), 0.0);
  EXPECT_THROW(lr_bound(1.0, 1, 1, 0.0, 2, 0.1), DomainError);
  EXPECT_THROW(lr_bound(1.0, -1, 1, 1.0, 2, 0.1), DomainError);
  EXPECT_EQ(lr_bound(5.0, 1, 1, 4, 2, 0.125, true), 2.0);
  EXPECT_NEAR(lr_bound(0.5, 1, 1, 4, 2, 0.125), (2.0 / 4) * std::expm1(8.0) * 0.125, 1e-12);
  EXPECT_EQ(lr_bound(-0.5, 1, 1, 4, 2, 0.125), lr_bound(0.5, 1, 1, 4, 2, 0.125));
}

TEST(LrBoundExponential, LimitsErrorsAndDomination) {
  EXPECT_THROW(lr_bound_exponential(1, 1, 1, 2, 1, 1, 1, 1.5, 0.0, 3), DomainError);
  EXPECT_LT(lr_bound_exponential(1, 1, 1, 2, 1, 1, 1, 1.5, 1.0, 800.0), 1e-300);
  const Lattice l = Lattice::chain(8);
  const DecayFunction base = DecayFunction::power(2.0);
  const DecayFunction fa = apply_exponential_weight(base, 1.0);
  const Interaction phi = xx_chain(8, 1.0);
  const SiteSet x{0}, y{7};
  const LrConstants k = lr_constants(phi, l, fa, x, y);
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    const double dform = lr_bound(t, 1, 1, k.c, k.norm_phi, k.d.value());
    const double eform = lr_bound_exponential(t, 1, 1, k.c, k.norm_phi, k.d.boundary_x.size(), k.d.boundary_y.size(),
                                              f_norm(l, base), 1.0, l.set_distance(x, y));
    EXPECT_GE(eform, dform);
  }
}

TEST(ANExact, HandEnumerationOnFourSiteChain) {
  for (double j : {1.0, 0.5, 1.7}) {
    const Interaction phi = xx_chain(4, j);
    const SiteSet vol = range(4);
    EXPECT_EQ(a_n_exact(phi, vol, SiteSet{0}, SiteSet{3}, 1), 0.0);
    EXPECT_EQ(a_n_exact(phi, vol, SiteSet{0}, SiteSet{3}, 2), 0.0);
    EXPECT_NEAR(a_n_exact(phi, vol, SiteSet{0}, SiteSet{3}, 3), j * j * j, 1e-14);
    EXPECT_EQ(a_n_exact(phi, vol, SiteSet{0}, SiteSet{3}, 4), 0.0);
  }
  EXPECT_THROW(a_n_exact(xx_chain(4, 1), range(4), SiteSet{0}, SiteSet{3}, 0), DomainError);
  EXPECT_THROW(a_n_exact(xx_chain(9, 1), range(9), SiteSet{0}, SiteSet{3}, 2), ResourceError);
}

TEST(ANExact, NoChainReachesY) {
  // Two decoupled halves: nothing starting at 0 reaches 3.
  Interaction phi;
  phi.add(product_operator(qubits(SiteSet{0, 1}), {oracle::pauli_x(), oracle::pauli_x()}));
  phi.add(product_operator(qubits(SiteSet{2, 3}), {oracle::pauli_z(), oracle::pauli_z()}));
  for (int n = 1; n <= 5; ++n) EXPECT_EQ(a_n_exact(phi, range(4), SiteSet{0}, SiteSet{3}, n), 0.0);
}

TEST(ANExact, StepBoundOnReferenceChain) {
  const Lattice l = Lattice::chain(4);
  const Interaction phi = xx_chain(4, 1.0);
  const LrConstants k = lr_constants(phi, l, two_to_minus_r(), SiteSet{0}, SiteSet{3});
  EXPECT_NEAR(k.norm_phi, 2.0, 1e-14);
  EXPECT_NEAR(k.c, 4.0, 1e-14);
  for (int n = 1; n <= 4; ++n)
    EXPECT_LE(a_n_exact(phi, l.sites(), SiteSet{0}, SiteSet{3}, n), a_n_bound(n, k.norm_phi, k.c, k.d.boundary_x_to_y));
}

TEST(ANSequence, AgreesWithEnumerationAndStepBound) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 6; ++trial) {
    const int n = 5 + trial % 3;
    const Lattice l = Lattice::chain(n);
    const DecayFunction f = DecayFunction::exp_power(1.0, 1.0);
    const Interaction phi = random_pairs(n, 2 + trial % 2, rng);
    const SiteSet x{0}, y{n - 1};
    const LrConstants k = lr_constants(phi, l, f, x, y);
    const auto seq = a_n_sequence(phi, l.sites(), x, y, 5);
    for (int m = 1; m <= 5; ++m) {
      const double exact = a_n_exact(phi, l.sites(), x, y, m);
      EXPECT_NEAR(seq[m - 1], exact, 1e-12 * std::max(1.0, exact));
      EXPECT_LE(exact, a_n_bound(m, k.norm_phi, k.c, k.d.boundary_x_to_y) * (1 + 1e-12));
    }
  }
}

TEST(LrSeries, ZeroAtOriginConvergesAndDominated) {
  const Lattice l = Lattice::chain(4);
  const Interaction phi = xx_chain(4, 1.0);
  const SiteSet x{0}, y{3};
  const LrConstants k = lr_constants(phi, l, two_to_minus_r(), x, y);
  EXPECT_EQ(lr_series_bound(0.0, 1, 1, phi, l.sites(), x, y, 6, k), 0.0);
  for (double t : {0.1, 0.5, 1.0, 2.0}) {
    const double lr = lr_bound(t, 1, 1, k.c, k.norm_phi, k.d.value());
    double prev = std::numeric_limits<double>::infinity();
    for (int nmax : {1, 2, 4, 8, 16, 32}) {
      const double s = lr_series_bound(t, 1, 1, phi, l.sites(), x, y, nmax, k);
      EXPECT_LE(s, lr * (1 + 1e-12));
      EXPECT_LE(s, prev * (1 + 1e-12));
      prev = s;
    }
  }
}

TEST(LrSeries, ThreeWayComparisonOnReferenceChain) {
  const Lattice l = Lattice::chain(4);
  const Interaction phi = xx_chain(4, 1.0);
  const VolumeSystem sys = assemble(l.sites(), spin_models(4, 0.6, 1.0), phi);
  const LocalOperator a(qubits(SiteSet{0}), oracle::pauli_z()), b(qubits(SiteSet{3}), oracle::pauli_z());
  const LrConstants k = lr_constants(phi, l, two_to_minus_r(), a.support(), b.support());
  const LrSeries series(phi, l.sites(), a.support(), b.support(), 24, k);
  for (const auto& p : commutator_norm_profile(sys, a, b, symmetric_grid(2.0, 41))) {
    const double s = series(p.t, 1, 1);
    EXPECT_LE(p.value, s + 1e-9);
    EXPECT_LE(s, lr_bound(p.t, 1, 1, k.c, k.norm_phi, k.d.value()) * (1 + 1e-12));
  }
}

TEST(ThermoLimit, TrivialCasesAndErrors) {
  const Lattice l = Lattice::chain(6);
  const DecayFunction f = DecayFunction::power(2.0);
  const SiteSet four = range(4);
  EXPECT_EQ(thermo_limit_bound(1.0, 1.0, 2.0, 3.0, f, l, SiteSet{0}, four, four), 0.0);
  EXPECT_EQ(thermo_limit_bound(1.0, 1.0, 0.0, 3.0, f, l, SiteSet{0}, four, range(6)), 0.0);
  EXPECT_THROW(thermo_limit_bound(1.0, 1.0, 2.0, 3.0, f, l, SiteSet{0}, range(6), four), DomainError);
  EXPECT_THROW(thermo_limit_bound(1.0, 1.0, 2.0, 3.0, f, l, SiteSet{5}, four, range(6)), DomainError);
  EXPECT_THROW(thermo_limit_bound(0.0, 1.0, 2.0, 3.0, f, l, SiteSet{0}, four, range(6)), DomainError);
  const auto terms = thermo_limit_terms(1.0, 1.0, 2.0, 3.0, f, l, SiteSet{0}, four, range(6));
  EXPECT_NEAR(terms.value(), 2.0 * (1 + std::exp(12.0)) * 2.0 * (1.0 / 25 + 1.0 / 36), 1e-9 * terms.value());
}

TEST(ThermoLimit, DominatesVolumeDifferenceAndShrinks) {
  const DecayFunction f = DecayFunction::exp_power(1.0, 2.0);
  const LocalOperator a(qubits(SiteSet{0}), oracle::pauli_z());
  const auto grid = symmetric_grid(1.0, 21);
  {
    const Lattice l = Lattice::chain(6);
    const Interaction phi = xx_chain(6, 1.0);
    const auto models = spin_models(6, 0.6, 1.0);
    const VolumeSystem s4 = assemble(range(4), models, phi.restricted_to(range(4)));
    const VolumeSystem s6 = assemble(range(6), models, phi);
    const double bound = thermo_limit_bound(1.0, 1.0, interaction_norm(phi, l, f), convolution_constant(l, f), f, l,
                                            SiteSet{0}, range(4), range(6));
    const BoundReport r = certify(volume_difference_profile(s4, s6, a, grid), [&](double) { return bound; });
    EXPECT_TRUE(r.certified);
    EXPECT_GT(r.min_margin(), 0.0);
  }
  const Lattice l = Lattice::chain(8);
  const Interaction phi = xx_chain(8, 1.0);
  const double c = convolution_constant(l, f), np = interaction_norm(phi, l, f);
  double prev = std::numeric_limits<double>::infinity();
  for (int m : {5, 6, 7}) {
    const double b = thermo_limit_bound(1.0, 1.0, np, c, f, l, SiteSet{0}, range(m), range(8));
    EXPECT_LT(b, prev);
    prev = b;
  }
}

TEST(Certify, PlumbingExamples) {
  const Profile zero = {{-1, 0.0}, {0, 0.0}, {1, 0.0}};
  EXPECT_TRUE(certify(zero, std::vector<double>{0.0, 0.0, 0.0}).certified);
  const Profile lhs = {{-1, 0.0}, {0, 0.5}, {1, 2.0}};
  const BoundReport r = certify(lhs, std::vector<double>{1.0, 1.0, 1.0}, {{"T", 1.0}});
  EXPECT_FALSE(r.certified);
  EXPECT_EQ(r.worst_time(), 1.0);
  EXPECT_EQ(r.min_margin(), -1.0);
  EXPECT_EQ(r.metadata.at("T"), 1.0);
  EXPECT_THROW(certify(lhs, std::vector<double>{1.0}), DomainError);
  // Round-off sized violations pass, larger ones fail.
  EXPECT_TRUE(certify(Profile{{0.5, 1.0 + 5e-10}}, std::vector<double>{1.0}).certified);
  EXPECT_FALSE(certify(Profile{{0.5, 1.0 + 2e-9}}, std::vector<double>{1.0}).certified);
}

TEST(LiebRobinson, CertifiedOnRandomSystems) {
  std::mt19937 rng(7);
  const DecayFunction f = DecayFunction::exp_power(0.5, 2.0);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 4 + trial % 3;
    const Lattice l = Lattice::chain(n);
    const Interaction phi = random_pairs(n, 2, rng);
    std::map<SiteId, SiteModel> models;
    for (int s = 0; s < n; ++s)
      models.emplace(s, SiteModel::from_matrix(SiteModel::Kind::explicit_matrix, 3.0 * oracle::random_hermitian(2, rng)));
    const VolumeSystem sys = assemble(l.sites(), models, phi);
    const LocalOperator a(qubits(SiteSet{0}), oracle::random_matrix(2, rng));
    const LocalOperator b(qubits(SiteSet{n - 2, n - 1}), oracle::random_matrix(4, rng));
    const LrConstants k = lr_constants(phi, l, f, a.support(), b.support());
    const double na = operator_norm(a), nb = operator_norm(b);
    const BoundReport r = certify(commutator_norm_profile(sys, a, b, symmetric_grid(2.0, 41)),
                                  [&](double t) { return lr_bound(t, na, nb, k.c, k.norm_phi, k.d.value()); });
    EXPECT_TRUE(r.certified) << "trial " << trial << " margin " << r.min_margin() << " at " << r.worst_time();
  }
}

TEST(LiebRobinson, RhsIndependentOfOnSiteTerms) {
  const Lattice l = Lattice::chain(5);
  const Interaction phi = xx_chain(5, 1.0);
  const DecayFunction f = DecayFunction::exp_power(1.0, 2.0);
  const LocalOperator a(qubits(SiteSet{0}), oracle::pauli_z()), b(qubits(SiteSet{4}), oracle::pauli_z());
  std::vector<double> first;
  for (double hz : {0.0, 1.0, 10.0}) {
    const VolumeSystem sys = assemble(l.sites(), spin_models(5, 0.3, hz), phi);
    const LrConstants k = lr_constants(phi, l, f, a.support(), b.support());
    const Profile lhs = commutator_norm_profile(sys, a, b, symmetric_grid(2.0, 21));
    const BoundReport r = certify(lhs, [&](double t) { return lr_bound(t, 1, 1, k.c, k.norm_phi, k.d.value()); });
    EXPECT_TRUE(r.certified);
    if (first.empty())
      first = r.rhs;
    else
      EXPECT_EQ(r.rhs, first);
  }
}
