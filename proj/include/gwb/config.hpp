#pragma once

// Experiment configuration: flat INI sections, parsed with Boost.PropertyTree.
// emit() is canonical (fixed key order, shortest round-trip doubles), so
// parse -> emit -> parse reproduces the same config.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gwb/grid.hpp"
#include "gwb/models.hpp"

namespace gwb {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ExperimentKind { lemma_sweep, decay, model_pipeline, probes };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::lemma_sweep: return "lemma-sweep";
    case ExperimentKind::decay: return "decay";
    case ExperimentKind::model_pipeline: return "model-pipeline";
    case ExperimentKind::probes: return "probes";
  }
  return "?";
}

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::lemma_sweep, ExperimentKind::decay, ExperimentKind::model_pipeline, ExperimentKind::probes}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown experiment kind '" + s + "'");
}

inline std::string format_double(double v) {
  if (v == std::numeric_limits<double>::infinity()) return "inf";
  if (v == -std::numeric_limits<double>::infinity()) return "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& raw, const std::string& key) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + raw + "'");
  }
  return v;
}

inline std::vector<double> parse_list(const std::string& raw, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(raw);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_double(item, key));
  }
  return out;
}

inline std::string format_list(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + format_double(xs[i]);
  return out;
}

struct GridBlock {
  int d = 1;
  double L = 8.0;
  double h = 0.125;
  Boundary bc = Boundary::dirichlet;
  friend bool operator==(const GridBlock&, const GridBlock&) = default;
};

struct FamilyBlock {
  std::string kind = "power-law";  // power-law | exponential | extremely-localized
  double p = 2.0;
  double kappa = 3.0;
  double lattice_min = -8.0;
  double lattice_max = 8.0;
  friend bool operator==(const FamilyBlock&, const FamilyBlock&) = default;
};

struct ModelBlock {
  double v0 = 100.0;
  double a = 0.5;
  std::string convention = "wells";  // wells | barriers
  double gap_tol = 5.0;
  std::optional<double> energy_cap;
  int island = 0;  // index into the island list
  double alpha = 1.0;
  std::string deformation = "sine";  // zero | linear | sine
  friend bool operator==(const ModelBlock&, const ModelBlock&) = default;
};

struct SweepBlock {
  std::vector<double> s;
  std::vector<double> R;
  std::vector<double> xi;
  std::vector<double> fit_s;  // exponents for the tail-exponent fit (lemma sweep)
  std::vector<double> fit_R;  // cutoffs for the tail-exponent fit
  int samples = 100;
  double lattice_extent = 200.0;
  std::optional<double> fit_extent;  // lattice extent for the exponent fit (default lattice_extent)
  std::optional<double> eps;
  friend bool operator==(const SweepBlock&, const SweepBlock&) = default;
};

struct ProbeBlock {
  int trials = 20;
  double kernel_radius = 1.0;
  double kernel_radius2 = 0.5;
  double truncation_R = 2.0;
  friend bool operator==(const ProbeBlock&, const ProbeBlock&) = default;
};

struct ToleranceBlock {
  double orthonormality = 1e-8;
  double propagation = 1e-12;
  double guard = 1e-6;
  double slope_slack = 0.15;
  double certification = 1e-2;
  double interpolation = 1e-4;
  std::optional<double> guard_margin;  // default 2h
  friend bool operator==(const ToleranceBlock&, const ToleranceBlock&) = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::lemma_sweep;
  std::uint64_t seed = 0;
  std::string output;  // report directory; the CLI --out flag overrides it
  GridBlock grid;
  FamilyBlock family;
  ModelBlock model;
  SweepBlock sweep;
  ProbeBlock probes;
  ToleranceBlock tolerances;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

  TruncationGuard guard() const { return TruncationGuard{tolerances.guard_margin.value_or(-1.0), tolerances.guard}; }

  KronigPenneyParams kronig_penney() const {
    return KronigPenneyParams{model.v0, model.a,
                              model.convention == "barriers" ? PotentialConvention::barriers_on_cells
                                                             : PotentialConvention::wells_on_cells};
  }
};

namespace detail {

class Reader {
 public:
  explicit Reader(const boost::property_tree::ptree& pt) : pt_(pt) {
    for (const auto& [section, body] : pt_) {
      if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside any section");
      for (const auto& [key, value] : body) unused_.insert(section + "." + key);
    }
  }

  std::optional<std::string> raw(const std::string& path) {
    auto v = pt_.get_optional<std::string>(path);
    if (!v) return std::nullopt;
    unused_.erase(path);
    return *v;
  }

  void number(const std::string& path, double& out) {
    if (auto v = raw(path)) out = parse_double(*v, path);
  }
  void number(const std::string& path, std::optional<double>& out) {
    if (auto v = raw(path)) out = parse_double(*v, path);
  }
  void integer(const std::string& path, int& out) {
    if (auto v = raw(path)) {
      const double x = parse_double(*v, path);
      if (x != static_cast<double>(static_cast<long long>(x))) throw ConfigError("key '" + path + "': expected an integer");
      out = static_cast<int>(x);
    }
  }
  void text(const std::string& path, std::string& out) {
    if (auto v = raw(path)) out = *v;
  }
  void list(const std::string& path, std::vector<double>& out) {
    if (auto v = raw(path)) out = parse_list(*v, path);
  }

  void finish() const {
    if (!unused_.empty()) throw ConfigError("unknown config key '" + *unused_.begin() + "'");
  }

 private:
  const boost::property_tree::ptree& pt_;
  std::set<std::string> unused_;
};

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("tolerance '") + name + "' must be positive");
  };
  positive(c.tolerances.orthonormality, "orthonormality");
  positive(c.tolerances.propagation, "propagation");
  positive(c.tolerances.guard, "guard");
  positive(c.tolerances.slope_slack, "slope_slack");
  positive(c.tolerances.certification, "certification");
  positive(c.tolerances.interpolation, "interpolation");
  if (c.tolerances.guard_margin && !(*c.tolerances.guard_margin >= 0.0)) throw ConfigError("guard_margin must be >= 0");
  if (c.grid.d < 1 || c.grid.d > 2) throw ConfigError("grid.d must be 1 or 2");
  if (!(c.grid.L > 0.0) || !(c.grid.h > 0.0)) throw ConfigError("grid.L and grid.h must be positive");
  if (c.model.convention != "wells" && c.model.convention != "barriers") {
    throw ConfigError("model.convention must be wells or barriers");
  }
  if (c.model.deformation != "zero" && c.model.deformation != "linear" && c.model.deformation != "sine") {
    throw ConfigError("model.deformation must be zero, linear or sine");
  }
  if (c.family.kind != "power-law" && c.family.kind != "exponential" && c.family.kind != "extremely-localized") {
    throw ConfigError("family.kind must be power-law, exponential or extremely-localized");
  }
  auto nonempty = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string("sweep list '") + name + "' is empty");
  };
  switch (c.kind) {
    case ExperimentKind::lemma_sweep:
      nonempty(c.sweep.s, "s");
      nonempty(c.sweep.R, "R");
      if (c.sweep.samples < 1) throw ConfigError("sweep.samples must be >= 1");
      if (c.sweep.fit_s.empty() != c.sweep.fit_R.empty()) throw ConfigError("sweep.fit_s and sweep.fit_R go together");
      break;
    case ExperimentKind::decay:
      nonempty(c.sweep.s, "s");
      nonempty(c.sweep.R, "R");
      break;
    case ExperimentKind::model_pipeline:
      nonempty(c.sweep.s, "s");
      nonempty(c.sweep.R, "R");
      nonempty(c.sweep.xi, "xi");
      break;
    case ExperimentKind::probes:
      if (c.probes.trials < 0) throw ConfigError("probes.trials must be >= 0");
      break;
  }
}

inline ExperimentConfig parse_config(std::istream& in) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  detail::Reader r(pt);
  ExperimentConfig c;
  std::string kind;
  r.text("experiment.kind", kind);
  if (kind.empty()) throw ConfigError("experiment.kind is required");
  c.kind = experiment_kind_from_string(kind);
  if (auto seed = r.raw("experiment.seed")) {
    const double s = parse_double(*seed, "experiment.seed");
    if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s))) throw ConfigError("experiment.seed must be a nonnegative integer");
    c.seed = static_cast<std::uint64_t>(s);
  }
  r.text("experiment.output", c.output);
  r.integer("grid.d", c.grid.d);
  r.number("grid.L", c.grid.L);
  r.number("grid.h", c.grid.h);
  if (auto bc = r.raw("grid.bc")) {
    try {
      c.grid.bc = boundary_from_string(*bc);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  r.text("family.kind", c.family.kind);
  r.number("family.p", c.family.p);
  r.number("family.kappa", c.family.kappa);
  r.number("family.lattice_min", c.family.lattice_min);
  r.number("family.lattice_max", c.family.lattice_max);
  r.number("model.v0", c.model.v0);
  r.number("model.a", c.model.a);
  r.text("model.convention", c.model.convention);
  r.number("model.gap_tol", c.model.gap_tol);
  r.number("model.energy_cap", c.model.energy_cap);
  r.integer("model.island", c.model.island);
  r.number("model.alpha", c.model.alpha);
  r.text("model.deformation", c.model.deformation);
  r.list("sweep.s", c.sweep.s);
  r.list("sweep.R", c.sweep.R);
  r.list("sweep.xi", c.sweep.xi);
  r.list("sweep.fit_s", c.sweep.fit_s);
  r.list("sweep.fit_R", c.sweep.fit_R);
  r.integer("sweep.samples", c.sweep.samples);
  r.number("sweep.lattice_extent", c.sweep.lattice_extent);
  r.number("sweep.fit_extent", c.sweep.fit_extent);
  r.number("sweep.eps", c.sweep.eps);
  r.integer("probes.trials", c.probes.trials);
  r.number("probes.kernel_radius", c.probes.kernel_radius);
  r.number("probes.kernel_radius2", c.probes.kernel_radius2);
  r.number("probes.truncation_R", c.probes.truncation_R);
  r.number("tolerances.orthonormality", c.tolerances.orthonormality);
  r.number("tolerances.propagation", c.tolerances.propagation);
  r.number("tolerances.guard", c.tolerances.guard);
  r.number("tolerances.slope_slack", c.tolerances.slope_slack);
  r.number("tolerances.certification", c.tolerances.certification);
  r.number("tolerances.interpolation", c.tolerances.interpolation);
  r.number("tolerances.guard_margin", c.tolerances.guard_margin);
  r.finish();
  validate(c);
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

inline std::string emit_config(const ExperimentConfig& c) {
  std::ostringstream o;
  auto num = [&](const char* key, double v) { o << key << " = " << format_double(v) << '\n'; };
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) num(key, *v);
  };
  auto lst = [&](const char* key, const std::vector<double>& v) {
    if (!v.empty()) o << key << " = " << format_list(v) << '\n';
  };
  o << "[experiment]\nkind = " << to_string(c.kind) << "\nseed = " << c.seed << '\n';
  if (!c.output.empty()) o << "output = " << c.output << '\n';
  o << '\n';
  o << "[grid]\nd = " << c.grid.d << '\n';
  num("L", c.grid.L);
  num("h", c.grid.h);
  o << "bc = " << to_string(c.grid.bc) << "\n\n";
  o << "[family]\nkind = " << c.family.kind << '\n';
  num("p", c.family.p);
  num("kappa", c.family.kappa);
  num("lattice_min", c.family.lattice_min);
  num("lattice_max", c.family.lattice_max);
  o << "\n[model]\n";
  num("v0", c.model.v0);
  num("a", c.model.a);
  o << "convention = " << c.model.convention << '\n';
  num("gap_tol", c.model.gap_tol);
  opt("energy_cap", c.model.energy_cap);
  o << "island = " << c.model.island << '\n';
  num("alpha", c.model.alpha);
  o << "deformation = " << c.model.deformation << "\n\n[sweep]\n";
  lst("s", c.sweep.s);
  lst("R", c.sweep.R);
  lst("xi", c.sweep.xi);
  lst("fit_s", c.sweep.fit_s);
  lst("fit_R", c.sweep.fit_R);
  o << "samples = " << c.sweep.samples << '\n';
  num("lattice_extent", c.sweep.lattice_extent);
  opt("fit_extent", c.sweep.fit_extent);
  opt("eps", c.sweep.eps);
  o << "\n[probes]\ntrials = " << c.probes.trials << '\n';
  num("kernel_radius", c.probes.kernel_radius);
  num("kernel_radius2", c.probes.kernel_radius2);
  num("truncation_R", c.probes.truncation_R);
  o << "\n[tolerances]\n";
  num("orthonormality", c.tolerances.orthonormality);
  num("propagation", c.tolerances.propagation);
  num("guard", c.tolerances.guard);
  num("slope_slack", c.tolerances.slope_slack);
  num("certification", c.tolerances.certification);
  num("interpolation", c.tolerances.interpolation);
  opt("guard_margin", c.tolerances.guard_margin);
  return o.str();
}

}  // namespace gwb
