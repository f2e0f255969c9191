// Declarative experiment configs and the runners behind the lrlab command line.
#pragma once

#include "lrlab/bounds.hpp"
#include "lrlab/core.hpp"
#include "lrlab/dynamics.hpp"
#include "lrlab/geometry.hpp"
#include "lrlab/interactions.hpp"
#include "lrlab/observables.hpp"
#include "lrlab/propagator.hpp"

#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace lrlab::experiment {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kCertificationFailed = 1, kConfigError = 2, kResourceError = 3 };

namespace detail {

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(join(path, it.key()), "unknown key");
  }
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join(path, key), "missing required key");
  return *it;
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
  return x;
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
  return v.get<int>();
}

inline std::string text(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

/// Reads obj[key], inserting `fallback` when absent so the resolved config records it.
inline double number_or(json& obj, const std::string& key, const std::string& path, double fallback) {
  if (!obj.contains(key)) obj[key] = fallback;
  return number(obj[key], join(path, key));
}

inline int integer_or(json& obj, const std::string& key, const std::string& path, int fallback) {
  if (!obj.contains(key)) obj[key] = fallback;
  return integer(obj[key], join(path, key));
}

inline bool boolean_or(json& obj, const std::string& key, const std::string& path, bool fallback) {
  if (!obj.contains(key)) obj[key] = fallback;
  if (!obj[key].is_boolean()) throw ConfigError(join(path, key), "expected true or false");
  return obj[key].get<bool>();
}

inline Complex entry(const json& v, const std::string& path) {
  if (v.is_number()) return {number(v, path), 0.0};
  if (v.is_array() && v.size() == 2) return {number(v[0], path + "[0]"), number(v[1], path + "[1]")};
  throw ConfigError(path, "matrix entry must be a number or [re, im]");
}

inline Matrix matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty array of rows");
  const Index n = static_cast<Index>(v.size());
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i) {
    const std::string row = path + "[" + std::to_string(i) + "]";
    if (!v[i].is_array() || static_cast<Index>(v[i].size()) != n) throw ConfigError(row, "matrix must be square");
    for (Index j = 0; j < n; ++j) m(i, j) = entry(v[i][j], row + "[" + std::to_string(j) + "]");
  }
  return m;
}

inline SiteSet site_list(const json& v, const std::string& path, const Lattice& lattice) {
  if (!v.is_array() || v.empty()) throw ConfigError(path, "expected a nonempty list of site ids");
  std::vector<SiteId> ids;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const SiteId s = integer(v[i], path + "[" + std::to_string(i) + "]");
    if (!lattice.sites().contains(s)) throw ConfigError(path, "site " + std::to_string(s) + " is not in the lattice");
    ids.push_back(s);
  }
  return SiteSet(std::move(ids));
}

inline json to_json(const SiteSet& s) { return json(s.ids()); }

/// Wraps a library precondition failure as a config error on `path`.
template <class F>
auto guarded(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DomainError& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace detail

struct PropagatorCheckOptions {
  int instances = 100;
  int max_dim = 16;
  double t_max = 1.0;
  double tolerance = 1e-10;
  unsigned seed = 1;
};

struct SweepOptions {
  std::string field;
  std::vector<json> values;
  std::string command = "certify";
};

/// A parsed, validated experiment. `resolved` is the input with every default filled in.
struct Experiment {
  json resolved;
  Lattice lattice;
  DecayFunction decay;
  std::map<SiteId, SiteModel> site_models;
  Interaction interaction;
  LocalOperator a;
  LocalOperator b;
  std::vector<double> times;
  std::vector<SiteSet> volumes;
  int series_order = 0;  ///< 0 disables the series bound
  PropagatorCheckOptions propagator;
  std::optional<SweepOptions> sweep;
};

namespace detail {

inline Lattice parse_lattice(json& j) {
  const std::string path = "lattice";
  check_keys(j, path, {"kind", "n", "width", "height", "sites", "distances"});
  const std::string kind = text(require(j, "kind", path), "lattice.kind");
  if (kind == "chain") {
    check_keys(j, path, {"kind", "n"});
    const int n = integer(require(j, "n", path), "lattice.n");
    return guarded("lattice.n", [&] { return Lattice::chain(n); });
  }
  if (kind == "grid2d") {
    check_keys(j, path, {"kind", "width", "height"});
    const int w = integer(require(j, "width", path), "lattice.width");
    const int h = integer(require(j, "height", path), "lattice.height");
    return guarded(path, [&] { return Lattice::grid2d(w, h); });
  }
  if (kind == "explicit") {
    check_keys(j, path, {"kind", "sites", "distances"});
    const json& sites = require(j, "sites", path);
    const json& dist = require(j, "distances", path);
    if (!sites.is_array() || sites.empty()) throw ConfigError("lattice.sites", "expected a nonempty list of site ids");
    std::vector<SiteId> ids;
    for (std::size_t i = 0; i < sites.size(); ++i) ids.push_back(integer(sites[i], "lattice.sites[" + std::to_string(i) + "]"));
    const Index n = static_cast<Index>(ids.size());
    if (!dist.is_array() || static_cast<Index>(dist.size()) != n)
      throw ConfigError("lattice.distances", "expected one row per site");
    RealMatrix d(n, n);
    for (Index r = 0; r < n; ++r) {
      const std::string row = "lattice.distances[" + std::to_string(r) + "]";
      if (!dist[r].is_array() || static_cast<Index>(dist[r].size()) != n) throw ConfigError(row, "expected one entry per site");
      for (Index c = 0; c < n; ++c) d(r, c) = number(dist[r][c], row + "[" + std::to_string(c) + "]");
    }
    // Rows follow the listed order; the lattice stores sites sorted.
    std::vector<Index> order(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Index x, Index y) { return ids[x] < ids[y]; });
    std::vector<SiteId> sorted;
    RealMatrix ds(n, n);
    for (Index r = 0; r < n; ++r) {
      sorted.push_back(ids[order[r]]);
      for (Index c = 0; c < n; ++c) ds(r, c) = d(order[r], order[c]);
    }
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i] == sorted[i - 1]) throw ConfigError("lattice.sites", "duplicate site id " + std::to_string(sorted[i]));
    return guarded("lattice.distances", [&] { return Lattice(std::move(sorted), std::move(ds)); });
  }
  throw ConfigError("lattice.kind", "unknown lattice kind '" + kind + "' (chain, grid2d, explicit)");
}

inline DecayFunction parse_decay(json& j) {
  const std::string path = "decay";
  check_keys(j, path, {"kind", "a", "p"});
  const std::string kind = text(require(j, "kind", path), "decay.kind");
  if (kind == "power") {
    check_keys(j, path, {"kind", "p"});
    const double p = number(require(j, "p", path), "decay.p");
    return guarded("decay.p", [&] { return DecayFunction::power(p); });
  }
  if (kind == "exp_power") {
    const double a = number(require(j, "a", path), "decay.a");
    const double p = number(require(j, "p", path), "decay.p");
    return guarded(path, [&] { return DecayFunction::exp_power(a, p); });
  }
  throw ConfigError("decay.kind", "unknown decay kind '" + kind + "' (power, exp_power)");
}

inline SiteModel parse_site_model(json& j, const std::string& path) {
  const std::string kind = text(require(j, "kind", path), join(path, "kind"));
  if (kind == "spin") {
    check_keys(j, path, {"kind", "local_dim", "hx", "hz", "sites"});
    const int d = integer_or(j, "local_dim", path, 2);
    const double hx = number_or(j, "hx", path, 0.0);
    const double hz = number_or(j, "hz", path, 0.0);
    return guarded(join(path, "local_dim"), [&] { return spin_site(d, hx, hz); });
  }
  if (kind == "truncated_oscillator") {
    check_keys(j, path, {"kind", "local_dim", "lambda", "sites"});
    const int n = integer(require(j, "local_dim", path), join(path, "local_dim"));
    const double lambda = number_or(j, "lambda", path, 0.0);
    return guarded(join(path, "local_dim"), [&] { return truncate_oscillator(n, lambda); });
  }
  if (kind == "explicit") {
    check_keys(j, path, {"kind", "matrix", "sites"});
    Matrix h = matrix(require(j, "matrix", path), join(path, "matrix"));
    return guarded(join(path, "matrix"), [&] { return SiteModel::from_matrix(SiteModel::Kind::explicit_matrix, std::move(h)); });
  }
  throw ConfigError(join(path, "kind"), "unknown site kind '" + kind + "' (spin, truncated_oscillator, explicit)");
}

/// "sites": one model for every site, optionally with "overrides": [{"sites": [...], ...model}].
inline std::map<SiteId, SiteModel> parse_sites(json& j, const Lattice& lattice, std::ostream& log) {
  const std::string path = "sites";
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  json base = j;
  base.erase("overrides");
  std::map<SiteId, SiteModel> models;
  const SiteModel common = parse_site_model(base, path);
  if (base.contains("sites")) throw ConfigError("sites.sites", "only allowed inside overrides");
  for (auto it = base.begin(); it != base.end(); ++it) j[it.key()] = it.value();
  for (SiteId s : lattice.sites()) models.emplace(s, common);
  if (j.contains("overrides")) {
    json& overrides = j["overrides"];
    if (!overrides.is_array()) throw ConfigError("sites.overrides", "expected a list");
    for (std::size_t i = 0; i < overrides.size(); ++i) {
      const std::string p = "sites.overrides[" + std::to_string(i) + "]";
      const SiteSet where = site_list(require(overrides[i], "sites", p), join(p, "sites"), lattice);
      const SiteModel m = parse_site_model(overrides[i], p);
      for (SiteId s : where) models.insert_or_assign(s, m);
    }
  }
  for (const auto& [s, m] : models)
    if (m.symmetrization_correction > 1e-10)
      log << "warning: site " << s << " Hamiltonian symmetrized, correction " << m.symmetrization_correction << "\n";
  return models;
}

inline LocalSpace space_of(const SiteSet& sites, const std::map<SiteId, SiteModel>& models) {
  std::vector<int> dims;
  for (SiteId s : sites) dims.push_back(models.at(s).local_dim);
  return LocalSpace(sites, std::move(dims));
}

/// {"product": [names...]} | {"matrix": rows} | {"name": n} (single site), optional "scale".
inline LocalOperator parse_operator(json& j, const std::string& path, const SiteSet& sites,
                                    const std::map<SiteId, SiteModel>& models,
                                    std::initializer_list<const char*> extra_keys = {}) {
  std::vector<const char*> allowed = {"product", "matrix", "name", "scale"};
  allowed.insert(allowed.end(), extra_keys.begin(), extra_keys.end());
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }) == allowed.end())
      throw ConfigError(join(path, it.key()), "unknown key");
  const LocalSpace space = space_of(sites, models);
  const double scale = number_or(j, "scale", path, 1.0);
  const int forms = int(j.contains("product")) + int(j.contains("matrix")) + int(j.contains("name"));
  if (forms != 1) throw ConfigError(path, "give exactly one of product, matrix, name");
  Matrix m;
  if (j.contains("matrix")) {
    m = matrix(j["matrix"], join(path, "matrix"));
    if (m.rows() != space.dim())
      throw ConfigError(join(path, "matrix"), "dimension " + std::to_string(m.rows()) + " does not match " +
                                                  std::to_string(space.dim()) + " for sites " + sites.to_string());
  } else if (j.contains("name")) {
    if (sites.size() != 1) throw ConfigError(join(path, "name"), "a named operator needs exactly one site");
    const std::string name = text(j["name"], join(path, "name"));
    m = guarded(join(path, "name"), [&] { return site_ops::named(name, space.dims()[0]); });
  } else {
    const json& names = j["product"];
    if (!names.is_array() || names.size() != sites.size())
      throw ConfigError(join(path, "product"), "expected one operator name per site");
    std::vector<Matrix> factors;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string p = join(path, "product") + "[" + std::to_string(i) + "]";
      const std::string name = text(names[i], p);
      factors.push_back(guarded(p, [&] { return site_ops::named(name, space.dims()[i]); }));
    }
    m = product_operator(space, factors).matrix();
  }
  return LocalOperator(space, m * scale);
}

inline Interaction parse_interaction(json& j, const Lattice& lattice, const DecayFunction& decay,
                                     const std::map<SiteId, SiteModel>& models) {
  const std::string path = "interaction";
  const std::string kind = text(require(j, "kind", path), "interaction.kind");
  Interaction phi;
  auto add = [&](const LocalOperator& op, const std::string& p) { guarded(p, [&] { phi.add(op); return 0; }); };
  if (kind == "nn_coupling" || kind == "range_r") {
    const bool ranged = kind == "range_r";
    if (ranged)
      check_keys(j, path, {"kind", "J", "term", "r", "scaling"});
    else
      check_keys(j, path, {"kind", "J", "term"});
    const double coupling = number_or(j, "J", path, 1.0);
    const double r_min = lattice.min_positive_distance();
    const double r = ranged ? number(require(j, "r", path), "interaction.r") : r_min;
    if (ranged && !(r > 0.0)) throw ConfigError("interaction.r", "must be positive");
    std::string scaling = "uniform";
    if (ranged) {
      if (!j.contains("scaling")) j["scaling"] = scaling;
      scaling = text(j["scaling"], "interaction.scaling");
      if (scaling != "uniform" && scaling != "decay")
        throw ConfigError("interaction.scaling", "expected 'uniform' or 'decay'");
    }
    json& term = j.contains("term") ? j["term"] : throw ConfigError("interaction.term", "missing required key");
    const auto& ids = lattice.sites().ids();
    for (std::size_t p = 0; p < ids.size(); ++p)
      for (std::size_t q = p + 1; q < ids.size(); ++q) {
        const double d = lattice.distance(ids[p], ids[q]);
        if (d > r * (1.0 + 1e-12)) continue;
        const SiteSet pair{ids[p], ids[q]};
        json copy = term;
        LocalOperator op = parse_operator(copy, "interaction.term", pair, models);
        const double w = coupling * (scaling == "decay" ? decay(d) : 1.0);
        add(LocalOperator(op.space(), op.matrix() * w), "interaction.term");
      }
    if (!term.contains("scale")) term["scale"] = 1.0;
    return phi;
  }
  if (kind == "explicit") {
    check_keys(j, path, {"kind", "terms"});
    json& terms = j.contains("terms") ? j["terms"] : throw ConfigError("interaction.terms", "missing required key");
    if (!terms.is_array()) throw ConfigError("interaction.terms", "expected a list");
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string p = "interaction.terms[" + std::to_string(i) + "]";
      const SiteSet sites = site_list(require(terms[i], "sites", p), join(p, "sites"), lattice);
      add(parse_operator(terms[i], p, sites, models, {"sites"}), p);
    }
    return phi;
  }
  throw ConfigError("interaction.kind", "unknown interaction kind '" + kind + "' (nn_coupling, range_r, explicit)");
}

inline std::vector<double> parse_grid(json& j) {
  const std::string path = "grid";
  check_keys(j, path, {"T", "points", "times"});
  if (j.contains("times")) {
    if (j.contains("T") || j.contains("points")) throw ConfigError("grid", "give either times or T/points");
    const json& t = j["times"];
    if (!t.is_array() || t.empty()) throw ConfigError("grid.times", "expected a nonempty list");
    std::vector<double> out;
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back(number(t[i], "grid.times[" + std::to_string(i) + "]"));
    return out;
  }
  const double T = number(require(j, "T", path), "grid.T");
  const int points = integer(require(j, "points", path), "grid.points");
  return guarded(path, [&] { return symmetric_grid(T, points); });
}

}  // namespace detail

inline Experiment parse_experiment(const json& input, std::ostream& log = std::cerr) {
  using namespace detail;
  json cfg = input;
  check_keys(cfg, "", {"lattice", "decay", "sites", "interaction", "observables", "grid", "run"});
  for (const char* k : {"lattice", "decay", "sites", "interaction", "observables"})
    if (!cfg.contains(k)) throw ConfigError(k, "missing required section");
  if (!cfg.contains("grid")) cfg["grid"] = {{"T", 2.0}, {"points", 81}};
  if (!cfg.contains("run")) cfg["run"] = json::object();

  Lattice lattice = parse_lattice(cfg["lattice"]);
  DecayFunction decay = parse_decay(cfg["decay"]);
  std::map<SiteId, SiteModel> models = parse_sites(cfg["sites"], lattice, log);
  Interaction phi = parse_interaction(cfg["interaction"], lattice, decay, models);

  json& obs = cfg["observables"];
  check_keys(obs, "observables", {"A", "B"});
  json& ja = obs.contains("A") ? obs["A"] : throw ConfigError("observables.A", "missing required key");
  json& jb = obs.contains("B") ? obs["B"] : throw ConfigError("observables.B", "missing required key");
  const SiteSet x = site_list(require(ja, "sites", "observables.A"), "observables.A.sites", lattice);
  const SiteSet y = site_list(require(jb, "sites", "observables.B"), "observables.B.sites", lattice);
  LocalOperator a = parse_operator(ja, "observables.A", x, models, {"sites"});
  LocalOperator b = parse_operator(jb, "observables.B", y, models, {"sites"});

  std::vector<double> times = parse_grid(cfg["grid"]);

  json& run = cfg["run"];
  check_keys(run, "run", {"volumes", "series_order", "propagator_check", "sweep"});
  std::vector<SiteSet> volumes;
  if (run.contains("volumes")) {
    const json& v = run["volumes"];
    if (!v.is_array() || v.size() < 2) throw ConfigError("run.volumes", "expected a list of at least two nested volumes");
    for (std::size_t i = 0; i < v.size(); ++i) volumes.push_back(site_list(v[i], "run.volumes[" + std::to_string(i) + "]", lattice));
    const SiteSet& outer = volumes.back();
    for (std::size_t i = 0; i + 1 < volumes.size(); ++i)
      if (!volumes[i].subset_of(outer) || volumes[i] == outer)
        throw ConfigError("run.volumes[" + std::to_string(i) + "]", "must be a proper subset of the last volume");
    SiteSet smallest = volumes.front();
    for (const auto& v2 : volumes)
      if (v2.size() < smallest.size()) smallest = v2;
    if (!x.subset_of(smallest)) throw ConfigError("observables.A.sites", "not inside the smallest declared volume");
    if (!y.subset_of(smallest)) throw ConfigError("observables.B.sites", "not inside the smallest declared volume");
  }
  const int series_order = integer_or(run, "series_order", "run", 0);
  if (series_order < 0) throw ConfigError("run.series_order", "must be nonnegative");

  PropagatorCheckOptions pc;
  if (run.contains("propagator_check")) {
    json& p = run["propagator_check"];
    check_keys(p, "run.propagator_check", {"instances", "max_dim", "t_max", "tolerance", "seed"});
    pc.instances = integer_or(p, "instances", "run.propagator_check", pc.instances);
    pc.max_dim = integer_or(p, "max_dim", "run.propagator_check", pc.max_dim);
    pc.t_max = number_or(p, "t_max", "run.propagator_check", pc.t_max);
    pc.tolerance = number_or(p, "tolerance", "run.propagator_check", pc.tolerance);
    pc.seed = static_cast<unsigned>(integer_or(p, "seed", "run.propagator_check", static_cast<int>(pc.seed)));
    if (pc.instances < 1) throw ConfigError("run.propagator_check.instances", "must be positive");
    if (pc.max_dim < 1 || pc.max_dim > 64) throw ConfigError("run.propagator_check.max_dim", "must be in 1..64");
    if (!(pc.t_max > 0.0)) throw ConfigError("run.propagator_check.t_max", "must be positive");
    if (!(pc.tolerance > 0.0)) throw ConfigError("run.propagator_check.tolerance", "must be positive");
  }

  std::optional<SweepOptions> sweep;
  if (run.contains("sweep")) {
    json& s = run["sweep"];
    check_keys(s, "run.sweep", {"field", "values", "command"});
    SweepOptions so;
    so.field = text(require(s, "field", "run.sweep"), "run.sweep.field");
    const json& values = require(s, "values", "run.sweep");
    if (!values.is_array() || values.empty()) throw ConfigError("run.sweep.values", "expected a nonempty list");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!values[i].is_number()) throw ConfigError("run.sweep.values[" + std::to_string(i) + "]", "expected a number");
      so.values.push_back(values[i]);
    }
    if (!s.contains("command")) s["command"] = so.command;
    so.command = text(s["command"], "run.sweep.command");
    if (so.command != "bound" && so.command != "simulate" && so.command != "certify" && so.command != "converge")
      throw ConfigError("run.sweep.command", "expected bound, simulate, certify or converge");
    sweep = so;
  }

  return Experiment{std::move(cfg), std::move(lattice), std::move(decay), std::move(models), std::move(phi),
                    std::move(a),   std::move(b),       std::move(times), std::move(volumes), series_order,
                    pc,             std::move(sweep)};
}

/// One run's products: the report document and the CSV body.
struct Outcome {
  json report;
  std::string csv;
  bool passed = true;
  std::string message;
};

namespace detail {

inline std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json constants_json(const Experiment& e, const LrConstants& k) {
  json c;
  c["norm_F"] = k.norm_f;
  c["C"] = k.c;
  c["norm_Phi"] = k.norm_phi;
  c["D"] = k.d.value();
  c["D_minimands"] = {{"sum_X_boundaryY", k.d.x_to_boundary_y}, {"sum_boundaryX_Y", k.d.boundary_x_to_y}};
  c["boundary_X"] = to_json(k.d.boundary_x);
  c["boundary_Y"] = to_json(k.d.boundary_y);
  c["norm_A"] = operator_norm(e.a);
  c["norm_B"] = operator_norm(e.b);
  c["supports_overlap"] = k.overlap;
  c["decay"] = e.decay.description();
  double T = 0.0;
  for (double t : e.times) T = std::max(T, std::abs(t));
  c["T"] = T;
  return c;
}

inline void warn_edges(const Experiment& e, std::ostream& log) {
  const SiteSet edge = edge_sites(e.lattice);
  if (e.a.support().intersects(edge))
    log << "warning: X = " << e.a.support().to_string() << " touches the lattice edge; open boundaries shrink its Phi-boundary\n";
  if (e.b.support().intersects(edge))
    log << "warning: Y = " << e.b.support().to_string() << " touches the lattice edge; open boundaries shrink its Phi-boundary\n";
}

inline VolumeSystem full_system(const Experiment& e) {
  return assemble(e.lattice.sites(), e.site_models, e.interaction);
}

inline double max_abs_time(const std::vector<double>& times) {
  double T = 0.0;
  for (double t : times) T = std::max(T, std::abs(t));
  return T;
}

}  // namespace detail

/// Analytic right-hand sides only.
inline Outcome run_bound(const Experiment& e, std::ostream& log) {
  detail::warn_edges(e, log);
  const LrConstants k = lr_constants(e.interaction, e.lattice, e.decay, e.a.support(), e.b.support());
  const double na = operator_norm(e.a), nb = operator_norm(e.b);
  const bool exponential = e.decay.rate() > 0.0;
  const double norm_f_base = exponential ? f_norm(e.lattice, e.decay.unweighted()) : 0.0;
  const double dxy = e.lattice.set_distance(e.a.support(), e.b.support());
  Outcome out;
  out.report["subcommand"] = "bound";
  out.report["config"] = e.resolved;
  out.report["constants"] = detail::constants_json(e, k);
  json points = json::array();
  std::ostringstream csv;
  csv << "t,rhs_bound" << (exponential ? ",rhs_exponential" : "") << "\n";
  for (double t : e.times) {
    const double rhs = lr_bound(t, na, nb, k.c, k.norm_phi, k.d.value(), k.overlap);
    json p = {{"t", t}, {"rhs", rhs}};
    csv << detail::format17(t) << "," << detail::format17(rhs);
    if (exponential) {
      const double rx = lr_bound_exponential(t, na, nb, k.c, k.norm_phi, k.d.boundary_x.size(), k.d.boundary_y.size(),
                                             norm_f_base, e.decay.rate(), dxy);
      p["rhs_exponential"] = rx;
      csv << "," << detail::format17(rx);
    }
    csv << "\n";
    points.push_back(p);
  }
  if (exponential) out.report["constants"]["norm_F_unweighted"] = norm_f_base;
  out.report["points"] = points;
  out.csv = csv.str();
  return out;
}

/// Measured commutator norms only.
inline Outcome run_simulate(const Experiment& e, std::ostream&) {
  const VolumeSystem sys = detail::full_system(e);
  const Profile lhs = commutator_norm_profile(sys, e.a, e.b, e.times);
  Outcome out;
  out.report["subcommand"] = "simulate";
  out.report["config"] = e.resolved;
  out.report["dimension"] = sys.dim();
  json points = json::array();
  std::ostringstream csv;
  csv << "t,lhs_norm\n";
  for (const auto& p : lhs) {
    points.push_back({{"t", p.t}, {"lhs", p.value}});
    csv << detail::format17(p.t) << "," << detail::format17(p.value) << "\n";
  }
  out.report["points"] = points;
  out.csv = csv.str();
  return out;
}

inline json report_json(const BoundReport& r) {
  json points = json::array();
  for (std::size_t i = 0; i < r.times.size(); ++i)
    points.push_back({{"t", r.times[i]}, {"lhs", r.lhs[i]}, {"rhs", r.rhs[i]}, {"margin", r.margin[i]}});
  json j;
  j["certified"] = r.certified;
  j["min_margin"] = r.min_margin();
  j["worst_t"] = r.worst_time();
  j["metadata"] = r.metadata;
  j["points"] = points;
  return j;
}

inline std::string report_csv(const BoundReport& r) {
  std::ostringstream csv;
  csv << "t,lhs_norm,rhs_bound,margin\n";
  for (std::size_t i = 0; i < r.times.size(); ++i)
    csv << detail::format17(r.times[i]) << "," << detail::format17(r.lhs[i]) << "," << detail::format17(r.rhs[i]) << ","
        << detail::format17(r.margin[i]) << "\n";
  return csv.str();
}

/// Measured ||[tau_t(A), B]|| against the Lieb-Robinson bound.
inline Outcome run_certify(const Experiment& e, std::ostream& log, bool verbose = false) {
  detail::warn_edges(e, log);
  const LrConstants k = lr_constants(e.interaction, e.lattice, e.decay, e.a.support(), e.b.support());
  const double na = operator_norm(e.a), nb = operator_norm(e.b);
  const VolumeSystem sys = detail::full_system(e);
  const Profile lhs = commutator_norm_profile(sys, e.a, e.b, e.times);
  std::map<std::string, double> meta = {{"norm_A", na},       {"norm_B", nb},         {"norm_Phi", k.norm_phi},
                                        {"C", k.c},           {"D", k.d.value()},     {"T", detail::max_abs_time(e.times)},
                                        {"norm_F", k.norm_f}};
  BoundReport r = certify(
      lhs, [&](double t) { return lr_bound(t, na, nb, k.c, k.norm_phi, k.d.value(), k.overlap); }, meta);

  Outcome out;
  out.report["subcommand"] = "certify";
  out.report["config"] = e.resolved;
  out.report["constants"] = detail::constants_json(e, k);
  out.report["dimension"] = sys.dim();
  out.report["result"] = report_json(r);
  out.passed = r.certified;
  if (verbose)
    log << "D minimands: " << k.d.x_to_boundary_y << " (X to boundary of Y), " << k.d.boundary_x_to_y
        << " (boundary of X to Y)\n";

  if (e.series_order > 0) {
    const LrSeries series(e.interaction, e.lattice.sites(), e.a.support(), e.b.support(), e.series_order, k);
    json s = json::array();
    bool dominated = true;
    std::size_t bad = 0;
    for (std::size_t i = 0; i < r.times.size(); ++i) {
      const double v = series(r.times[i], na, nb);
      s.push_back(v);
      const bool ok = r.lhs[i] <= v + kCertificationTolerance && v <= r.rhs[i] * (1.0 + 1e-12) + 1e-300;
      if (!ok && dominated) bad = i;
      dominated = dominated && ok;
    }
    out.report["series"] = {{"order", e.series_order},
                            {"a_n_forward", series.coefficients_forward()},
                            {"a_n_backward", series.coefficients_backward()},
                            {"values", s},
                            {"dominated", dominated}};
    if (!dominated) {
      out.passed = false;
      out.message = "series domination fails at t = " + detail::format17(r.times[bad]);
    }
  }
  if (!r.certified)
    out.message = "certification fails at t = " + detail::format17(r.worst_time()) + ", margin " +
                  detail::format17(r.min_margin());
  out.csv = report_csv(r);
  return out;
}

/// Nested-volume comparison: every volume but the last against the last.
inline Outcome run_converge(const Experiment& e, std::ostream& log, bool verbose = false) {
  if (e.volumes.size() < 2) throw ConfigError("run.volumes", "converge needs at least two nested volumes");
  const SiteSet& outer_sites = e.volumes.back();
  const double T = detail::max_abs_time(e.times);
  if (!(T > 0.0)) throw ConfigError("grid", "converge needs a grid with nonzero times");
  const double c = convolution_constant(e.lattice, e.decay);
  const double norm_phi = interaction_norm(e.interaction, e.lattice, e.decay);
  const double na = operator_norm(e.a);
  const VolumeSystem outer = assemble(outer_sites, e.site_models, e.interaction.restricted_to(outer_sites));

  Outcome out;
  out.report["subcommand"] = "converge";
  out.report["config"] = e.resolved;
  out.report["constants"] = {{"C", c}, {"norm_Phi", norm_phi}, {"norm_A", na}, {"T", T},
                             {"norm_F", f_norm(e.lattice, e.decay)}, {"decay", e.decay.description()}};
  json runs = json::array();
  std::ostringstream csv;
  csv << "inner,t,lhs_norm,rhs_bound,margin\n";
  std::vector<std::pair<std::size_t, double>> by_size;
  for (std::size_t i = 0; i + 1 < e.volumes.size(); ++i) {
    const SiteSet& inner_sites = e.volumes[i];
    const VolumeSystem inner = assemble(inner_sites, e.site_models, e.interaction.restricted_to(inner_sites));
    const ThermoLimitTerms terms =
        thermo_limit_terms(T, na, norm_phi, c, e.decay, e.lattice, e.a.support(), inner_sites, outer_sites);
    const Profile lhs = volume_difference_profile(inner, outer, e.a, e.times);
    const BoundReport r = certify(lhs, [&](double) { return terms.value(); },
                                  {{"norm_A", na}, {"norm_Phi", norm_phi}, {"C", c}, {"T", T}});
    if (verbose)
      log << "volume " << inner_sites.to_string() << ": sigma1 " << terms.sigma1 << ", sigma2 " << terms.sigma2
          << ", pair sum " << terms.pair_sum << "\n";
    json run = report_json(r);
    run["inner"] = detail::to_json(inner_sites);
    run["outer"] = detail::to_json(outer_sites);
    run["bound"] = terms.value();
    run["sigma1"] = terms.sigma1;
    run["sigma2"] = terms.sigma2;
    run["pair_sum"] = terms.pair_sum;
    runs.push_back(run);
    for (std::size_t p = 0; p < r.times.size(); ++p)
      csv << i << "," << detail::format17(r.times[p]) << "," << detail::format17(r.lhs[p]) << ","
          << detail::format17(r.rhs[p]) << "," << detail::format17(r.margin[p]) << "\n";
    if (!r.certified) {
      out.passed = false;
      out.message = "convergence bound fails for volume " + inner_sites.to_string() + " at t = " +
                    detail::format17(r.worst_time()) + ", margin " + detail::format17(r.min_margin());
    }
    by_size.emplace_back(inner_sites.size(), terms.value());
  }
  std::stable_sort(by_size.begin(), by_size.end(), [](auto& l, auto& r) { return l.first < r.first; });
  bool monotone = true;
  for (std::size_t i = 1; i < by_size.size(); ++i) monotone = monotone && by_size[i].second <= by_size[i - 1].second;
  out.report["runs"] = runs;
  out.report["bounds_nonincreasing"] = monotone;
  out.report["certified"] = out.passed;
  out.csv = csv.str();
  return out;
}

/// Random continuous self-adjoint family H(t) = H0 + cos(w t) H1 + t H2.
inline GeneratorFamily random_hermitian_family(int dim, std::mt19937& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  auto herm = [&] {
    Matrix m(dim, dim);
    for (Index i = 0; i < dim; ++i)
      for (Index j = 0; j < dim; ++j) m(i, j) = Complex(g(rng), g(rng));
    Matrix h = (m + m.adjoint()) * 0.5;
    const double n = operator_norm(h);
    return Matrix(n > 0.0 ? Matrix(h / n) : h);
  };
  const Matrix h0 = herm(), h1 = herm(), h2 = herm();
  const double w = 1.0 + 2.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return GeneratorFamily([=](double t) { return Matrix(h0 + std::cos(w * t) * h1 + t * h2); }, dim, true);
}

/// Property suite for the Dyson-series propagator on random generator families.
inline Outcome run_propagator_check(const Experiment& e, std::ostream& log, bool verbose = false) {
  const PropagatorCheckOptions& o = e.propagator;
  std::mt19937 rng(o.seed);
  std::uniform_int_distribution<int> dim_dist(1, o.max_dim);
  std::uniform_real_distribution<double> time_dist(-o.t_max, o.t_max);
  double unitarity = 0.0, cocycle = 0.0, constant = 0.0, inverse = 0.0, slack = std::numeric_limits<double>::infinity();
  for (int i = 0; i < o.instances; ++i) {
    const int d = dim_dist(rng);
    const GeneratorFamily h = random_hermitian_family(d, rng);
    h.check_continuity(-o.t_max, o.t_max);
    const double r = time_dist(rng), s = time_dist(rng), t = time_dist(rng);
    const Matrix I = Matrix::Identity(d, d);
    const Matrix u_ts = unitary_propagator(h, s, t, o.tolerance).value;
    const Matrix u_sr = unitary_propagator(h, r, s, o.tolerance).value;
    const Matrix u_tr = unitary_propagator(h, r, t, o.tolerance).value;
    unitarity = std::max(unitarity, operator_norm(Matrix(u_ts.adjoint() * u_ts - I)));
    cocycle = std::max(cocycle, operator_norm(Matrix(u_ts * u_sr - u_tr)));

    const Matrix h_fixed = h(0.0);
    const Matrix exact = SpectralDecomposition(h_fixed).unitary(t - s);
    const Matrix dyson = unitary_propagator(GeneratorFamily::constant(h_fixed, true), s, t, o.tolerance).value;
    constant = std::max(constant, operator_norm(Matrix(dyson - exact)));

    const GeneratorFamily gen([h](double x) { return Matrix(Complex(0, -1) * h(x)); }, d, false);
    const Matrix v = dyson_solve(gen, s, t, I, o.tolerance).value;
    const Matrix w = dyson_inverse(gen, s, t, I, o.tolerance).value;
    inverse = std::max(inverse, operator_norm(Matrix(w * v - I)));

    const GeneratorFamily a = random_hermitian_family(d, rng);
    const GeneratorFamily b([h](double x) { return Matrix(h(x) * std::sin(x)); }, d, false);
    const Matrix f0 = random_hermitian_family(d, rng)(0.0);
    const SourcedSolution sol = heisenberg_source_solve(a, b, f0, s, t, o.tolerance);
    slack = std::min(slack, sol.norm_bound() - sol.norm());
    if (verbose) log << "instance " << i << ": dim " << d << "\n";
  }
  Outcome out;
  out.report["subcommand"] = "propagator-check";
  out.report["config"] = e.resolved;
  const json checks = {{"unitarity_defect", {{"max", unitarity}, {"limit", 1e-8}, {"pass", unitarity <= 1e-8}}},
                       {"cocycle_defect", {{"max", cocycle}, {"limit", 1e-7}, {"pass", cocycle <= 1e-7}}},
                       {"constant_generator_error", {{"max", constant}, {"limit", 1e-8}, {"pass", constant <= 1e-8}}},
                       {"inverse_product_defect", {{"max", inverse}, {"limit", 1e-7}, {"pass", inverse <= 1e-7}}},
                       {"norm_bound_slack", {{"min", slack}, {"limit", -1e-8}, {"pass", slack >= -1e-8}}}};
  out.report["checks"] = checks;
  out.passed = true;
  for (auto it = checks.begin(); it != checks.end(); ++it)
    if (!(*it)["pass"].get<bool>()) {
      out.passed = false;
      out.message = "propagator check failed: " + it.key();
    }
  out.report["passed"] = out.passed;
  std::ostringstream csv;
  csv << "check,value,limit\n";
  for (auto it = checks.begin(); it != checks.end(); ++it) {
    const json& c = *it;
    csv << it.key() << "," << detail::format17(c.contains("max") ? c["max"].get<double>() : c["min"].get<double>()) << ","
        << detail::format17(c["limit"].get<double>()) << "\n";
  }
  out.csv = csv.str();
  return out;
}

/// Sets a dotted path such as "sites.lambda" or "run.volumes.0.1" to `value`.
inline void set_field(json& cfg, const std::string& field, const json& value) {
  json* node = &cfg;
  std::stringstream ss(field);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("run.sweep.field", "empty field path");
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const bool last = i + 1 == parts.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(parts[i]);
      } catch (const std::exception&) {
        throw ConfigError("run.sweep.field", "'" + parts[i] + "' is not a list index");
      }
      if (idx >= node->size()) throw ConfigError("run.sweep.field", "index " + parts[i] + " out of range");
      node = &(*node)[idx];
    } else if (node->is_object()) {
      if (!node->contains(parts[i]) && !last) throw ConfigError("run.sweep.field", "no key '" + parts[i] + "'");
      node = &(*node)[parts[i]];
    } else {
      throw ConfigError("run.sweep.field", "'" + parts[i] + "' does not name a field");
    }
  }
  if (!node->is_null() && !node->is_number())
    throw ConfigError("run.sweep.field", "field '" + field + "' is not a scalar number");
  *node = value;
}

inline Outcome run_single(const std::string& command, const Experiment& e, std::ostream& log, bool verbose) {
  if (command == "bound") return run_bound(e, log);
  if (command == "simulate") return run_simulate(e, log);
  if (command == "certify") return run_certify(e, log, verbose);
  if (command == "converge") return run_converge(e, log, verbose);
  if (command == "propagator-check") return run_propagator_check(e, log, verbose);
  throw ConfigError("subcommand", "unknown subcommand '" + command + "'");
}

/// Runs each swept configuration; results are ordered by value regardless of `threads`.
inline std::vector<Outcome> run_sweep_items(const Experiment& e, int threads, std::ostream& log, bool verbose) {
  if (!e.sweep) throw ConfigError("run.sweep", "sweep needs a run.sweep section");
  const SweepOptions& s = *e.sweep;
  std::vector<Experiment> items;
  for (const json& v : s.values) {
    json cfg = e.resolved;
    cfg["run"].erase("sweep");
    set_field(cfg, s.field, v);
    std::ostringstream discard;
    items.push_back(parse_experiment(cfg, discard));
  }
  std::vector<Outcome> results(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        std::ostringstream sink;
        results[i] = run_single(s.command, items[i], sink, false);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(items.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  if (verbose)
    for (std::size_t i = 0; i < results.size(); ++i) log << s.field << " = " << s.values[i].dump() << " done\n";
  return results;
}

inline Outcome summarize_sweep(const Experiment& e, const std::vector<Outcome>& results) {
  const SweepOptions& s = *e.sweep;
  Outcome out;
  out.report["subcommand"] = "sweep";
  out.report["config"] = e.resolved;
  json items = json::array();
  std::ostringstream csv;
  csv << "index,value,passed\n";
  std::optional<json> first_rhs;
  bool rhs_identical = true;
  for (std::size_t i = 0; i < results.size(); ++i) {
    items.push_back({{"value", s.values[i]}, {"passed", results[i].passed}, {"directory", "sweep_" + std::to_string(i)}});
    csv << i << "," << s.values[i].dump() << "," << (results[i].passed ? "true" : "false") << "\n";
    if (!results[i].passed) {
      out.passed = false;
      out.message = s.field + " = " + s.values[i].dump() + ": " + results[i].message;
    }
    if (s.command == "certify" || s.command == "bound") {
      json rhs = json::array();
      const json& pts = s.command == "certify" ? results[i].report["result"]["points"] : results[i].report["points"];
      for (const auto& p : pts) rhs.push_back(p["rhs"]);
      if (!first_rhs)
        first_rhs = rhs;
      else
        rhs_identical = rhs_identical && rhs == *first_rhs;
    }
  }
  out.report["items"] = items;
  if (s.command == "certify" || s.command == "bound") out.report["rhs_identical"] = rhs_identical;
  out.report["passed"] = out.passed;
  out.csv = csv.str();
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << body;
}

inline void write_outcome(const std::filesystem::path& dir, const Outcome& o) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", o.report.dump(2) + "\n");
  write_text(dir / "profile.csv", o.csv);
}

struct RunOptions {
  std::filesystem::path out = ".";
  int threads = 1;
  bool verbose = false;
};

inline json load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("--config", "cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
  }
}

/// Full subcommand: parse, run, write reports, map failures to exit codes.
inline int run(const std::string& command, const json& config, const RunOptions& opt, std::ostream& log = std::cerr) {
  try {
    const Experiment e = parse_experiment(config, log);
    Outcome o;
    if (command == "sweep") {
      const std::vector<Outcome> items = run_sweep_items(e, opt.threads, log, opt.verbose);
      for (std::size_t i = 0; i < items.size(); ++i) write_outcome(opt.out / ("sweep_" + std::to_string(i)), items[i]);
      o = summarize_sweep(e, items);
    } else {
      o = run_single(command, e, log, opt.verbose);
    }
    write_outcome(opt.out, o);
    if (!o.passed) {
      log << "FAILED: " << o.message << "\n";
      return kCertificationFailed;
    }
    return kOk;
  } catch (const ConfigError& err) {
    log << "config error: " << err.what() << "\n";
    return kConfigError;
  } catch (const DomainError& err) {
    log << "config error: " << err.what() << "\n";
    return kConfigError;
  } catch (const ResourceError& err) {
    log << "resource limit: " << err.what() << "\n";
    return kResourceError;
  }
}

}  // namespace lrlab::experiment
