// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero when a gating criterion fails.
#include "lrlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace lrlab;
namespace ex = lrlab::experiment;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  bool gating;
  std::function<Verdict()> check;
};

ex::json load(const std::string& name) { return ex::load_config(fs::path(LRLAB_CONFIG_DIR) / name); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Matrix random_matrix(Index d, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) m(i, j) = Complex(g(rng), g(rng));
  return m / operator_norm(m);
}

/// 3-site spin chain shared by the interaction-picture and automorphism checks.
ex::Experiment three_site() {
  ex::json c = load("chain4_reference.json");
  c["lattice"]["n"] = 3;
  c["observables"]["B"]["sites"] = {2};
  c["run"] = ex::json::object();
  std::ostringstream sink;
  return ex::parse_experiment(c, sink);
}

// Criterion 2 produces the n_levels = 6 profile that criterion 3 compares against.
Profile oscillator_lhs;

Verdict spin_chain() {
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream sink;
  const ex::Outcome o = ex::run_certify(ex::parse_experiment(load("spin_chain8.json"), sink), sink);
  const double elapsed = seconds_since(start);
  const double margin = o.report["result"]["min_margin"].get<double>();
  const bool ok = o.passed && margin >= -kCertificationTolerance && elapsed <= 30.0;
  return {ok, "min margin " + fmt(margin) + ", " + std::to_string(o.report["result"]["points"].size()) + " points, " +
                  fmt(elapsed) + " s"};
}

Verdict oscillator_chain() {
  ex::json c = load("oscillator_chain4.json");
  c["run"]["sweep"] = {{"field", "sites.lambda"}, {"values", {0, 0.5, 5}}, {"command", "certify"}};
  std::ostringstream sink;
  const ex::Experiment e = ex::parse_experiment(c, sink);
  const int threads = std::max(1u, std::thread::hardware_concurrency());
  const std::vector<ex::Outcome> items = ex::run_sweep_items(e, threads, sink, false);
  const ex::Outcome summary = ex::summarize_sweep(e, items);
  std::string margins;
  bool all = true;
  for (std::size_t i = 0; i < items.size(); ++i) {
    all = all && items[i].passed;
    margins += (i ? ", " : "") + fmt(items[i].report["result"]["min_margin"].get<double>());
  }
  for (const auto& p : items[1].report["result"]["points"])
    oscillator_lhs.push_back({p["t"].get<double>(), p["lhs"].get<double>()});
  const bool identical = summary.report["rhs_identical"].get<bool>();
  return {all && identical, std::string("lambda 0, 0.5, 5 min margins ") + margins + "; rhs bit-identical: " +
                                (identical ? "yes" : "no")};
}

Verdict truncation_stability() {
  if (oscillator_lhs.empty()) return {false, "n_levels = 6 profile unavailable"};
  ex::json c = load("oscillator_chain4.json");
  c["sites"]["local_dim"] = 8;
  std::ostringstream sink;
  const ex::Experiment e = ex::parse_experiment(c, sink);
  const VolumeSystem sys = ex::detail::full_system(e);
  const CommutatorProfiler profiler(sys, e.a, e.b);
  if (!profiler.even()) return {false, "profile not even in t; early exit unavailable"};

  // Largest |t| first: the truncation error grows with time, so a violation shows up early.
  std::vector<ProfilePoint> order;
  for (const auto& p : oscillator_lhs)
    if (p.t >= 0.0) order.push_back(p);
  std::sort(order.begin(), order.end(), [](const ProfilePoint& l, const ProfilePoint& r) { return l.t > r.t; });
  double sup = 0.0, worst_t = 0.0;
  std::size_t evaluated = 0;
  for (const auto& p : order) {
    const double diff = std::abs(profiler.at(p.t) - p.value);
    ++evaluated;
    if (diff > sup) {
      sup = diff;
      worst_t = p.t;
    }
    if (sup > 1e-3) break;
  }
  std::string detail = "sup |LHS_6 - LHS_8| " + std::string(sup > 1e-3 ? ">= " : "= ") + fmt(sup) + " at |t| = " +
                       fmt(worst_t) + " (" + std::to_string(evaluated) + " of " + std::to_string(order.size()) +
                       " distinct |t| evaluated, limit 1e-3)";
  return {sup <= 1e-3, detail};
}

Verdict dominations() {
  std::ostringstream sink;
  const ex::Outcome o = ex::run_certify(ex::parse_experiment(load("chain4_reference.json"), sink), sink);
  const bool dominated = o.report["series"]["dominated"].get<bool>();
  const bool certified = o.report["result"]["certified"].get<bool>();
  return {dominated && certified, std::string("series order ") + std::to_string(o.report["series"]["order"].get<int>()) +
                                      ", measured <= series <= bound at every point: " + (dominated ? "yes" : "no")};
}

Verdict a_n_oracle() {
  std::ostringstream sink;
  const ex::Experiment e = ex::parse_experiment(load("chain4_reference.json"), sink);
  const SiteSet x = e.a.support(), y = e.b.support(), volume = e.lattice.sites();
  const LrConstants k = lr_constants(e.interaction, e.lattice, e.decay, x, y);
  const double j = 1.0;
  const double hand[] = {0.0, 0.0, j * j * j, 0.0};
  bool ok = true;
  std::string values;
  for (int n = 1; n <= 4; ++n) {
    const double a = a_n_exact(e.interaction, volume, x, y, n);
    const double bound = a_n_bound(n, k.norm_phi, k.c, k.d.boundary_x_to_y);
    ok = ok && std::abs(a - hand[n - 1]) <= 1e-12 && a <= bound * (1.0 + 1e-12);
    values += (n > 1 ? ", " : "") + fmt(a) + " <= " + fmt(bound);
  }
  return {ok, "a_1..a_4: " + values};
}

Verdict propagator_suite() {
  std::ostringstream sink;
  const ex::Outcome o = ex::run_propagator_check(ex::parse_experiment(load("propagator_check.json"), sink), sink);
  const auto& c = o.report["checks"];
  return {o.passed, "unitarity " + fmt(c["unitarity_defect"]["max"].get<double>()) + ", cocycle " +
                        fmt(c["cocycle_defect"]["max"].get<double>()) + ", constant " +
                        fmt(c["constant_generator_error"]["max"].get<double>()) + ", inverse " +
                        fmt(c["inverse_product_defect"]["max"].get<double>()) + ", min slack " +
                        fmt(c["norm_bound_slack"]["min"].get<double>())};
}

Verdict interaction_picture() {
  const ex::Experiment e = three_site();
  const VolumeSystem sys = ex::detail::full_system(e);
  const SiteSet x{0};
  const InteractionPicture ip(sys, x);
  const GeneratorFamily full = ip.generator(), surface = ip.surface_generator();
  std::mt19937 rng(7);
  double routes = 0.0, factorization = 0.0, reduction = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const LocalOperator a(LocalSpace(x, {2}), random_matrix(2, rng));
    const Matrix ea = sys.embed_here(a).matrix();
    for (double t : {-1.0, -0.4, 0.3, 1.0}) {
      const Matrix eig = ip.evolve(a, t).matrix();
      routes = std::max(routes, operator_norm(Matrix(eig - ip.evolve_dyson(a, t, 1e-11).matrix())));
      const Matrix composed = ip.evolve(ip.reference_evolve(a, t), t).matrix();
      factorization = std::max(factorization, operator_norm(Matrix(heisenberg_evolve(sys, a, t).matrix() - composed)));
      const Matrix d = full(t) - surface(t);
      reduction = std::max(reduction, operator_norm(Matrix(d * ea - ea * d)));
    }
  }
  const bool ok = routes <= 1e-7 && factorization <= 1e-9 && reduction <= 1e-10;
  return {ok, "eigen vs Dyson " + fmt(routes) + ", factorization " + fmt(factorization) + ", surface reduction " +
                  fmt(reduction)};
}

Verdict converge() {
  std::ostringstream sink;
  const ex::Outcome small = ex::run_converge(ex::parse_experiment(load("converge_chain6.json"), sink), sink);
  const ex::Outcome nested = ex::run_converge(ex::parse_experiment(load("converge_chain8.json"), sink), sink);
  bool shrinking = true;
  std::string bounds;
  const auto& runs = nested.report["runs"];
  for (std::size_t i = 0; i < runs.size(); ++i) {
    bounds += (i ? ", " : "") + fmt(runs[i]["bound"].get<double>());
    if (i > 0) shrinking = shrinking && runs[i]["bound"].get<double>() < runs[i - 1]["bound"].get<double>();
  }
  const double margin = small.report["runs"][0]["min_margin"].get<double>();
  return {small.passed && nested.passed && shrinking,
          "4 in 6 min margin " + fmt(margin) + "; bounds for 5, 6, 7 in 8: " + bounds +
              (shrinking ? " (strictly decreasing)" : " (not decreasing)")};
}

Verdict automorphism() {
  const ex::Experiment e = three_site();
  const VolumeSystem sys = ex::detail::full_system(e);
  const LocalSpace& space = sys.space();
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> time(-2.0, 2.0);
  double mult = 0.0, star = 0.0, group = 0.0, norm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const LocalOperator a(space, random_matrix(space.dim(), rng));
    const LocalOperator b(space, random_matrix(space.dim(), rng));
    const double s = time(rng), t = time(rng);
    const Matrix ta = heisenberg_evolve(sys, a, t).matrix();
    const Matrix tb = heisenberg_evolve(sys, b, t).matrix();
    const Matrix tab = heisenberg_evolve(sys, LocalOperator(space, a.matrix() * b.matrix()), t).matrix();
    mult = std::max(mult, operator_norm(Matrix(tab - ta * tb)));
    const Matrix tastar = heisenberg_evolve(sys, LocalOperator(space, a.matrix().adjoint()), t).matrix();
    star = std::max(star, operator_norm(Matrix(tastar - ta.adjoint())));
    const Matrix st = heisenberg_evolve(sys, LocalOperator(space, ta), s).matrix();
    group = std::max(group, operator_norm(Matrix(st - heisenberg_evolve(sys, a, s + t).matrix())));
    norm = std::max(norm, std::abs(operator_norm(ta) - operator_norm(a)));
  }
  const bool ok = mult <= 1e-10 && star <= 1e-10 && group <= 1e-9 && norm <= 1e-9;
  return {ok, "multiplicativity " + fmt(mult) + ", star " + fmt(star) + ", group law " + fmt(group) + ", norm " +
                  fmt(norm)};
}

Verdict determinism() {
  const fs::path base = fs::temp_directory_path() / "lrlab_acceptance_determinism";
  fs::remove_all(base);
  const ex::json c = load("spin_chain8.json");
  std::ostringstream sink;
  ex::RunOptions first, second;
  first.out = base / "first";
  second.out = base / "second";
  const int r1 = ex::run("certify", c, first, sink);
  const int r2 = ex::run("certify", c, second, sink);
  bool same = r1 == ex::kOk && r2 == ex::kOk;
  for (const char* f : {"report.json", "profile.csv"}) same = same && slurp(first.out / f) == slurp(second.out / f);
  fs::remove_all(base);
  return {same, same ? "report.json and profile.csv byte-identical" : "outputs differ"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "LR certificate, 8-site spin chain", true, spin_chain},
      {2, "LR certificate, anharmonic chain, on-site independence", true, oscillator_chain},
      {3, "truncation stability, n_levels 6 vs 8 (diagnostic)", false, truncation_stability},
      {4, "measured <= series bound <= closed-form bound", true, dominations},
      {5, "a_n enumeration oracle", true, a_n_oracle},
      {6, "propagator property suite", true, propagator_suite},
      {7, "interaction-picture consistency", true, interaction_picture},
      {8, "thermodynamic-limit certificate", true, converge},
      {9, "automorphism laws", true, automorphism},
      {10, "determinism", true, determinism},
  };
  int gating_failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& err) {
      v = {false, std::string("exception: ") + err.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.title << " | " << v.detail << " ["
              << fmt(seconds_since(start)) << " s]" << (!v.pass && !c.gating ? " (reported, not gating)" : "")
              << std::endl;
    if (!v.pass && c.gating) ++gating_failures;
  }
  return gating_failures == 0 ? 0 : 1;
}
