#pragma once

// Batch experiments behind the CLI subcommands. Each runner writes CSV tables and a
// verdict.json into the output directory (temp file + rename) and returns the verdict.
// Timestamps go to metadata.json only, so CSV bodies are reproducible from config + seed.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwb/config.hpp"
#include "gwb/discrete_sets.hpp"
#include "gwb/grid.hpp"
#include "gwb/localization.hpp"
#include "gwb/models.hpp"
#include "gwb/roe_ops.hpp"
#include "gwb/series_bounds.hpp"

namespace gwb {

struct RunReport {
  std::string experiment;
  bool pass = false;
  nlohmann::json summary;
  std::vector<std::filesystem::path> files;
};

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

using Row = std::vector<std::string>;

inline std::string cell(double v) { return format_double(v); }
inline std::string cell(bool v) { return v ? "1" : "0"; }

class CsvTable {
 public:
  explicit CsvTable(Row header) : width_(header.size()) { add(header); }

  void add(const Row& cells) {
    if (cells.size() != width_) throw Error("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) body_ += (i ? "," : "") + cells[i];
    body_ += '\n';
  }

  const std::string& str() const { return body_; }

 private:
  std::size_t width_;
  std::string body_;
};

namespace detail {

class Output {
 public:
  Output(std::filesystem::path dir, RunReport& report) : dir_(std::move(dir)), report_(report) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    write_atomic(dir_ / name, content);
    report_.files.push_back(dir_ / name);
  }

  void finish(const ExperimentConfig& cfg) {
    nlohmann::json verdict = report_.summary;
    verdict["experiment"] = report_.experiment;
    verdict["pass"] = report_.pass;
    verdict["seed"] = cfg.seed;
    write("verdict.json", verdict.dump(2) + "\n");
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    nlohmann::json meta{{"experiment", report_.experiment}, {"timestamp", stamp}, {"config", emit_config(cfg)}};
    write("metadata.json", meta.dump(2) + "\n");
  }

 private:
  std::filesystem::path dir_;
  RunReport& report_;
};

inline GridPtr config_grid(const ExperimentConfig& cfg) {
  return make_grid(cfg.grid.d, cfg.grid.L, cfg.grid.h, cfg.grid.bc);
}

inline UniformlyDiscreteSet config_lattice(const ExperimentConfig& cfg) {
  return integer_lattice(cfg.grid.d, {cfg.family.lattice_min, cfg.family.lattice_max});
}

inline WannierFamily build_family(const ExperimentConfig& cfg, const UniformlyDiscreteSet& centers, const GridPtr& grid) {
  if (cfg.family.kind == "power-law") return build_power_law_family(centers, grid, cfg.family.p);
  if (cfg.family.kind == "exponential") return build_exponential_family(centers, grid, cfg.family.kappa);
  return build_extremely_localized_family(centers, grid);
}

inline double max_escaped_mass(const WannierFamily& f, const TruncationGuard& guard) {
  double m = 0.0;
  for (const auto& psi : f.members()) m = std::max(m, escaped_mass(psi, guard));
  return m;
}

/// Refuses families whose mass reaches the box boundary; returns the reported maximum.
inline double check_escaped_mass(const WannierFamily& f, const TruncationGuard& guard) {
  for (const auto& psi : f.members()) require_contained(psi, guard);
  return max_escaped_mass(f, guard);
}

/// Norm-bound chain, MvN identities and decay fit for V = sum |phi><psi| over the
/// configured s and R lists. Appends rows (leading cells from `prefix`) to `table`.
inline bool decay_study(const ExperimentConfig& cfg, WannierFamily& psi, const WannierFamily& phi, CsvTable& table,
                        const Row& prefix, nlohmann::json& summary) {
  bool pass = true;
  const int d = psi.dim();
  const double r = psi.centers().radius();
  const auto v = build_intertwiner(psi, phi);
  const auto mvn = mvn_residuals(v, psi, phi);
  const bool mvn_pass = mvn.vstar_v <= cfg.tolerances.orthonormality && mvn.v_vstar <= cfg.tolerances.orthonormality;
  pass = pass && mvn_pass;
  summary["mvn"] = {{"vstar_v_minus_P_psi", mvn.vstar_v}, {"v_vstar_minus_P_phi", mvn.v_vstar}, {"pass", mvn_pass}};
  summary["orthonormality_residual"] = {{"psi", psi.orthonormality_residual()}, {"phi", phi.orthonormality_residual()}};
  summary["discreteness_radius"] = r;

  const auto& radii = cfg.sweep.R;
  const auto norms = truncation_norms(v, radii, cfg.tolerances.orthonormality);
  nlohmann::json per_s = nlohmann::json::array();
  for (double s : cfg.sweep.s) {
    if (!(s < psi.s_limit())) throw Error("family not s-localized at the requested s = " + format_double(s));
  }
  for (double s : cfg.sweep.s) {
    nlohmann::json rec{{"s", s}};
    if (!(s > d / 2.0)) {
      rec["status"] = "hypothesis violated";
      per_s.push_back(rec);
      continue;
    }
    const double m = certify_s_localized(psi, s, cfg.guard());
    rec["M"] = m;
    bool bounds_ok = true;
    for (std::size_t i = 0; i < radii.size(); ++i) {
      const double R = radii[i];
      const double eps = cfg.sweep.eps.value_or(default_lemma_eps(r, R));
      const double c = lemma_constant(d, s, eps, r, R);
      const double bound = truncation_norm_bound(m, d, s, r, R, eps);
      const bool ok = norms[i] * norms[i] <= bound;
      bounds_ok = bounds_ok && ok;
      Row row = prefix;
      for (double x : {s, R, norms[i], norms[i] * norms[i], c, bound}) row.push_back(cell(x));
      row.push_back(cell(ok));
      table.add(row);
    }
    rec["bound_pass"] = bounds_ok;
    bool exact = true;
    for (std::size_t i = 0; i < radii.size(); ++i) {
      if (radii[i] >= r && norms[i] != 0.0) exact = false;
    }
    bool fit_ok = false;
    try {
      const auto fit = decay_fit_from_norms(d, s, radii, norms, cfg.tolerances.slope_slack);
      rec["slope"] = fit.slope;
      rec["target"] = fit.target;
      rec["status"] = fit.pass ? "pass" : "slope above target";
      fit_ok = fit.pass;
    } catch (const Error&) {
      rec["target"] = (d - 2.0 * s) / 2.0;
      rec["status"] = exact ? "exact" : "underflow";
      fit_ok = exact;
    }
    rec["pass"] = bounds_ok && fit_ok;
    pass = pass && bounds_ok && fit_ok;
    per_s.push_back(rec);
  }
  summary["s"] = per_s;
  return pass;
}

inline Row decay_header(Row prefix) {
  for (const char* c : {"s", "R", "norm", "norm_squared", "C", "bound", "pass"}) prefix.emplace_back(c);
  return prefix;
}

inline double nearest_lattice_deviation(const UniformlyDiscreteSet& set) {
  double worst = 0.0;
  for (const auto& c : set.centers()) {
    Point n{};
    for (int k = 0; k < set.dim(); ++k) n[k] = std::round(c[k]);
    worst = std::max(worst, distance(c, n));
  }
  return worst;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// lemma-sweep

inline RunReport run_lemma_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport rep;
  rep.experiment = "lemma-sweep";
  detail::Output out(out_dir, rep);
  const int d = cfg.grid.d;
  const auto set = integer_lattice(d, {-cfg.sweep.lattice_extent, cfg.sweep.lattice_extent});
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Row header{"d", "s", "R", "eps"};
  for (int k = 0; k < d; ++k) header.push_back("x" + std::to_string(k + 1));
  for (const char* c : {"S", "B", "pass", "status"}) header.emplace_back(c);
  CsvTable table(header);

  std::size_t evaluated = 0, passed = 0, violated = 0;
  double worst_slack = std::numeric_limits<double>::infinity();
  double worst_ratio = 0.0;
  double worst_truncation = 0.0;
  for (double s : cfg.sweep.s) {
    for (double R : cfg.sweep.R) {
      for (int t = 0; t < cfg.sweep.samples; ++t) {
        Point x{};
        for (int k = 0; k < d; ++k) x[k] = unit(rng);
        Row row{std::to_string(d), cell(s), cell(R)};
        try {
          const auto r = verify_lemma(set, x, R, s, cfg.sweep.eps);
          ++evaluated;
          passed += r.pass ? 1 : 0;
          worst_slack = std::min(worst_slack, r.slack);
          worst_ratio = std::max(worst_ratio, r.sum / r.bound);
          worst_truncation = std::max(worst_truncation, r.truncation_residual);
          row.push_back(cell(r.eps));
          for (int k = 0; k < d; ++k) row.push_back(cell(x[k]));
          row.insert(row.end(), {cell(r.sum), cell(r.bound), cell(r.pass), "ok"});
        } catch (const Error&) {
          ++violated;
          row.push_back(cell(cfg.sweep.eps.value_or(default_lemma_eps(set.radius(), R))));
          for (int k = 0; k < d; ++k) row.push_back(cell(x[k]));
          row.insert(row.end(), {"", "", "0", "hypothesis violated"});
        }
        table.add(row);
      }
    }
  }
  out.write("lemma_sweep.csv", table.str());

  const double pass_rate = evaluated ? static_cast<double>(passed) / static_cast<double>(evaluated) : 0.0;
  nlohmann::json& sm = rep.summary;
  sm["d"] = d;
  sm["evaluated"] = evaluated;
  sm["hypothesis_violated"] = violated;
  sm["pass_rate"] = pass_rate;
  sm["worst_slack"] = evaluated ? nlohmann::json(worst_slack) : nlohmann::json(nullptr);
  sm["worst_ratio_S_over_B"] = worst_ratio;
  sm["max_truncation_residual"] = worst_truncation;
  rep.pass = evaluated > 0 && passed == evaluated;

  if (!cfg.sweep.fit_R.empty()) {
    const double extent = cfg.sweep.fit_extent.value_or(cfg.sweep.lattice_extent);
    const auto big = integer_lattice(d, {-extent, extent});
    CsvTable fits({"d", "s", "slope", "target", "pass"});
    nlohmann::json arr = nlohmann::json::array();
    for (double s : cfg.sweep.fit_s) {
      const double slope = tail_exponent_fit(big, Point{}, s, cfg.sweep.fit_R);
      const double target = d - 2.0 * s;
      const bool ok = std::abs(slope - target) <= cfg.tolerances.slope_slack;
      rep.pass = rep.pass && ok;
      fits.add({std::to_string(d), cell(s), cell(slope), cell(target), cell(ok)});
      arr.push_back({{"s", s}, {"slope", slope}, {"target", target}, {"pass", ok}});
    }
    out.write("tail_fit.csv", fits.str());
    sm["tail_fit"] = arr;
    if (d == 1) {
      const double sum = tail_sum(big, Point{}, 0.0, 1.0);
      const double exact = std::numbers::pi / std::tanh(std::numbers::pi);
      const bool ok = std::abs(sum - exact) <= 1e-2;
      rep.pass = rep.pass && ok;
      sm["closed_form"] = {{"sum_s1_R0", sum}, {"pi_coth_pi", exact}, {"pass", ok}};
    }
  }
  out.finish(cfg);
  return rep;
}

// ---------------------------------------------------------------------------
// decay

inline RunReport run_decay(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport rep;
  rep.experiment = "decay";
  detail::Output out(out_dir, rep);
  const auto grid = detail::config_grid(cfg);
  const auto centers = detail::config_lattice(cfg);
  auto psi = detail::build_family(cfg, centers, grid);
  const auto phi = build_extremely_localized_family(centers, grid);
  rep.summary["family"] = cfg.family.kind;
  rep.summary["centers"] = centers.size();
  rep.summary["escaped_mass"] = detail::check_escaped_mass(psi, cfg.guard());
  if (std::isfinite(psi.s_limit())) rep.summary["s_limit"] = psi.s_limit();
  CsvTable table(detail::decay_header({}));
  rep.pass = detail::decay_study(cfg, psi, phi, table, {}, rep.summary);
  out.write("decay.csv", table.str());
  out.write("family.json", family_manifest(psi).dump(2) + "\n");
  out.finish(cfg);
  return rep;
}

// ---------------------------------------------------------------------------
// model-pipeline

inline RunReport run_model_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport rep;
  rep.experiment = "model-pipeline";
  detail::Output out(out_dir, rep);
  const auto grid = detail::config_grid(cfg);
  const auto kp = cfg.kronig_penney();
  const auto guard = cfg.guard();
  nlohmann::json& sm = rep.summary;
  bool pass = true;

  // Undeformed spectrum, islands, projection, extraction.
  const auto h0 = build_kronig_penney(grid, kp);
  const auto sp0 = compute_spectrum(h0);
  const auto islands = find_spectral_islands(sp0, cfg.model.gap_tol, cfg.model.energy_cap);
  {
    CsvTable spec({"index", "eigenvalue", "island"});
    for (std::size_t k = 0; k < sp0.eigenvalues.size(); ++k) {
      long id = -1;
      for (std::size_t i = 0; i < islands.size(); ++i) {
        if (k >= islands[i].first && k < islands[i].first + islands[i].count) id = static_cast<long>(i);
      }
      spec.add({std::to_string(k), cell(sp0.eigenvalues[k]), std::to_string(id)});
    }
    out.write("spectrum.csv", spec.str());
  }
  nlohmann::json isl = nlohmann::json::array();
  for (const auto& i : islands) {
    isl.push_back({{"first", i.first},
                   {"count", i.count},
                   {"lambda_min", i.lambda_min},
                   {"lambda_max", i.lambda_max},
                   {"margin_below", std::isfinite(i.margin_below) ? nlohmann::json(i.margin_below) : nlohmann::json(nullptr)},
                   {"margin_above", std::isfinite(i.margin_above) ? nlohmann::json(i.margin_above) : nlohmann::json(nullptr)}});
  }
  sm["islands"] = isl;
  if (islands.empty() || cfg.model.island < 0 || static_cast<std::size_t>(cfg.model.island) >= islands.size()) {
    sm["failure"] = "requested spectral island not found below the energy cap";
    rep.pass = false;
    out.finish(cfg);
    return rep;
  }
  const auto& island = islands[static_cast<std::size_t>(cfg.model.island)];
  const auto p0 = spectral_projection(h0, sp0, island);
  auto family = extract_gwb(p0);
  const double span = span_residual(p0, family);
  const double lattice_dev = detail::nearest_lattice_deviation(family.centers());
  const double m_alpha = certify_exponential(family, cfg.model.alpha, guard);
  sm["gwb"] = {{"size", family.size()},
               {"span_residual", span},
               {"orthonormality_residual", family.orthonormality_residual()},
               {"max_center_offset_from_lattice", lattice_dev},
               {"alpha", cfg.model.alpha},
               {"M", m_alpha},
               {"escaped_mass", detail::check_escaped_mass(family, guard)}};
  pass = pass && span <= cfg.tolerances.orthonormality;
  out.write("gwb_manifest.json", family_manifest(family).dump(2) + "\n");

  // Deformation path.
  std::mt19937_64 rng(cfg.seed);
  CsvTable path({"xi", "gap", "persistent", "beta", "M_in", "M_out", "radius", "radius_required", "radius_reference",
                 "unitarity", "roundtrip", "inner_product", "pass"});
  CsvTable decay(detail::decay_header({"xi"}));
  nlohmann::json stages = nlohmann::json::array();
  for (double xi : cfg.sweep.xi) {
    nlohmann::json st{{"xi", xi}};
    const auto map = build_gubanov(make_deformation(cfg.model.deformation, grid->dim(), xi), grid);
    const auto hg = build_deformed_hamiltonian(map, grid, kp);
    const auto spg = compute_spectrum(hg);
    const auto islands_g = find_spectral_islands(spg, cfg.model.gap_tol, std::numeric_limits<double>::infinity());
    double gap = 0.0;
    bool persistent = false;
    for (const auto& i : islands_g) {
      if (i.first == island.first && i.count == island.count) {
        persistent = true;
        gap = i.gap();
      }
    }

    auto deformed = deform_gwb(map, family, guard, cfg.tolerances.certification);
    const auto& rec = *deformed.exponential_record();
    const double radius = deformed.centers().radius();
    const double required = (1.0 - 2.0 * map.xi()) / 2.0 - 2.0 * grid->spacing();

    double unitarity = 0.0, raw_ortho = 0.0;
    {
      std::vector<GridFunction> moved;
      for (const auto& m : family.members()) moved.push_back(apply_Y(map, m, YDirection::forward, guard));
      for (std::size_t i = 0; i < moved.size(); ++i) unitarity = std::max(unitarity, std::abs(moved[i].norm() - 1.0));
      raw_ortho = orthonormality_residual(moved);
    }
    double roundtrip = 0.0, inner = 0.0;
    {
      std::uniform_real_distribution<double> where(-grid->half_width() / 2.0, grid->half_width() / 2.0);
      std::uniform_real_distribution<double> width(0.5, 1.5), mom(-2.0, 2.0);
      std::vector<GridFunction> packets;
      for (int t = 0; t < 8; ++t) {
        Point c{}, k{};
        for (int a = 0; a < grid->dim(); ++a) {
          c[a] = where(rng);
          k[a] = mom(rng);
        }
        packets.push_back(wave_packet(grid, c, width(rng), k));
      }
      std::vector<GridFunction> images;
      for (const auto& f : packets) {
        images.push_back(apply_Y(map, f, YDirection::forward, guard));
        const auto back = apply_Y(map, images.back(), YDirection::inverse, guard);
        roundtrip = std::max(roundtrip, (back - f).norm());
      }
      for (std::size_t i = 0; i + 1 < packets.size(); ++i) {
        inner = std::max(inner, std::abs(inner_product(images[i], images[i + 1]) - inner_product(packets[i], packets[i + 1])));
      }
    }

    const bool stage_ok = persistent && gap > cfg.model.gap_tol && radius >= required &&
                          unitarity <= cfg.tolerances.interpolation && roundtrip <= cfg.tolerances.interpolation &&
                          inner <= cfg.tolerances.interpolation;
    path.add({cell(xi), cell(gap), cell(persistent), cell(rec.alpha), cell(m_alpha), cell(rec.bound), cell(radius),
              cell(required), cell(1.0 / (1.0 + 2.0 * map.xi())), cell(unitarity), cell(roundtrip), cell(inner),
              cell(stage_ok)});
    st["xi_estimate"] = map.xi();
    st["gap"] = gap;
    st["persistent"] = persistent;
    st["beta"] = rec.alpha;
    st["M_in"] = m_alpha;
    st["M_out"] = rec.bound;
    st["discreteness_radius"] = radius;
    st["radius_required"] = required;
    st["radius_reference"] = 1.0 / (1.0 + 2.0 * map.xi());
    st["transport_orthonormality_residual"] = raw_ortho;
    st["unitarity_residual"] = unitarity;
    st["roundtrip_residual"] = roundtrip;
    st["inner_product_residual"] = inner;

    const auto reference = build_extremely_localized_family(deformed.centers(), grid);
    nlohmann::json dec;
    const bool decay_ok = detail::decay_study(cfg, deformed, reference, decay, {cell(xi)}, dec);
    st["decay"] = dec;
    st["pass"] = stage_ok && decay_ok;
    pass = pass && stage_ok && decay_ok;
    stages.push_back(st);
  }
  out.write("deformation_path.csv", path.str());
  out.write("decay.csv", decay.str());
  sm["stages"] = stages;
  rep.pass = pass;
  out.finish(cfg);
  return rep;
}

// ---------------------------------------------------------------------------
// probes

inline RunReport run_probes(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  RunReport rep;
  rep.experiment = "probes";
  detail::Output out(out_dir, rep);
  const auto grid = detail::config_grid(cfg);
  const double h = grid->spacing();
  const double tol = cfg.tolerances.propagation;
  const int trials = cfg.probes.trials;
  std::uint64_t stream = cfg.seed;
  bool pass = true;

  CsvTable table({"operator", "measured", "lower", "upper", "separation", "residual", "expect", "pass"});
  nlohmann::json rows = nlohmann::json::array();
  auto record = [&](const std::string& name, double measured, double lower, double upper, double separation,
                    const PropagationProbeResult& probe, bool expect_zero) {
    const bool in_range = measured >= lower && measured <= upper;
    const bool probe_ok = expect_zero ? probe.residual <= tol : probe.residual > tol;
    const bool ok = in_range && probe_ok;
    pass = pass && ok;
    table.add({name, cell(measured), cell(lower), cell(upper), cell(separation), cell(probe.residual),
               expect_zero ? "zero" : "nonzero", cell(ok)});
    rows.push_back({{"operator", name}, {"measured", measured}, {"lower", lower}, {"upper", upper},
                    {"separation", separation}, {"residual", probe.residual}, {"pass", ok}});
  };

  // Multiplication by a smooth positive function.
  const auto mult = multiplication_operator(GridFunction::sample(grid, [](const Point& x) {
    return 1.0 + 0.5 * std::cos(x[0]) + 0.25 * std::sin(x[1]);
  }));
  const double m_mult = measured_propagation(mult);
  record("multiplication", m_mult, 0.0, 2.0 * h, h, probe_propagation(mult, h, trials, stream++, tol), true);

  // Convolution with the normalized indicator of the closed ball of radius R0.
  auto kernel_ball = [&](double r0) {
    auto k = GridFunction::sample(grid, [&](const Point& x) { return euclidean_norm(x) <= r0 + 1e-12 * h ? 1.0 : 0.0; });
    k *= 1.0 / k.norm();
    return convolution_operator(k);
  };
  const double r0 = cfg.probes.kernel_radius;
  const double r1 = cfg.probes.kernel_radius2;
  const auto conv = kernel_ball(r0);
  const auto conv2 = kernel_ball(r1);
  const double m_conv = measured_propagation(conv);
  const double m_conv2 = measured_propagation(conv2);
  record("convolution", m_conv, r0, r0 + 2.0 * h, r0 + 2.0 * h, probe_propagation(conv, r0 + 2.0 * h, trials, stream++, tol), true);
  record("convolution_half_separation", m_conv, r0, r0 + 2.0 * h, r0 / 2.0,
         probe_propagation(conv, r0 / 2.0, trials, stream++, tol), false);

  // Projections and the truncated intertwiner.
  const auto centers = detail::config_lattice(cfg);
  const double r = centers.radius();
  const auto phi = build_extremely_localized_family(centers, grid);
  auto psi = detail::build_family(cfg, centers, grid);
  const auto p_phi = projection(phi);
  const double m_p = measured_propagation(p_phi);
  record("P_phi", m_p, 0.0, 2.0 * r, 2.0 * r, probe_propagation(p_phi, 2.0 * r, trials, stream++, tol), true);

  const double big_r = cfg.probes.truncation_R;
  const auto v = build_intertwiner(psi, phi);
  const auto v_r = truncate_intertwiner(v, big_r);
  const double m_vr = measured_propagation(v_r);
  record("V^R", m_vr, big_r, big_r + r + 4.0 * h, big_r + r + 2.0 * h,
         probe_propagation(v_r, big_r + r + 2.0 * h, trials, stream++, tol), true);

  // Compositions.
  const auto cc = compose(conv, conv2);
  const double m_cc = measured_propagation(cc);
  record("convolution*convolution", m_cc, std::max(m_conv, m_conv2), m_conv + m_conv2 + 4.0 * h,
         m_conv + m_conv2 + 4.0 * h, probe_propagation(cc, m_conv + m_conv2 + 4.0 * h, trials, stream++, tol), true);
  const auto vc = compose(v_r, conv2);
  const double m_vc = measured_propagation(vc);
  record("V^R*convolution", m_vc, 0.0, m_vr + m_conv2 + 4.0 * h, m_vr + m_conv2 + 4.0 * h,
         probe_propagation(vc, m_vr + m_conv2 + 4.0 * h, trials, stream++, tol), true);
  const auto vp = compose(v_r, p_phi);
  const double m_vp = measured_propagation(vp);
  record("V^R*P_phi", m_vp, 0.0, m_vr + m_p + 4.0 * h, m_vr + m_p + 4.0 * h,
         probe_propagation(vp, m_vr + m_p + 4.0 * h, trials, stream++, tol), true);
  out.write("propagation.csv", table.str());

  // Local compactness: ranks of f T for compactly supported f.
  CsvTable ranks({"operator", "support", "rank", "expected", "pass"});
  nlohmann::json rank_rows = nlohmann::json::array();
  auto rank_row = [&](const std::string& op, const std::string& support, int rank, int expected) {
    const bool ok = rank == expected;
    pass = pass && ok;
    ranks.add({op, support, std::to_string(rank), std::to_string(expected), cell(ok)});
    rank_rows.push_back({{"operator", op}, {"support", support}, {"rank", rank}, {"expected", expected}, {"pass", ok}});
  };
  const Point c0 = centers[centers.size() / 2];
  const auto one_ball = indicator(grid, [&](const Point& x) { return in_ball(x, c0, r); });
  const auto three_balls = indicator(grid, [&](const Point& x) { return in_ball(x, c0, 2.0 * r + r); });
  Point far{};
  far[0] = grid->upper();
  const auto none = indicator(grid, [&](const Point& x) {
    for (const auto& c : centers.centers()) {
      if (in_ball(x, c, r)) return false;
    }
    return in_ball(x, far, 2.0 * h);
  });
  rank_row("P_phi", "one ball", probe_local_compactness(p_phi, one_ball), members_meeting_support(p_phi, one_ball));
  rank_row("P_phi", "three balls", probe_local_compactness(p_phi, three_balls), members_meeting_support(p_phi, three_balls));
  rank_row("P_phi", "disjoint", probe_local_compactness(p_phi, none), 0);
  rank_row("V^R", "one ball", probe_local_compactness(v_r, one_ball), members_meeting_support(v_r, one_ball));
  out.write("compactness.csv", ranks.str());

  rep.summary["propagation"] = rows;
  rep.summary["compactness"] = rank_rows;
  rep.pass = pass;
  out.finish(cfg);
  return rep;
}

inline RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  switch (cfg.kind) {
    case ExperimentKind::lemma_sweep: return run_lemma_sweep(cfg, out_dir);
    case ExperimentKind::decay: return run_decay(cfg, out_dir);
    case ExperimentKind::model_pipeline: return run_model_pipeline(cfg, out_dir);
    case ExperimentKind::probes: return run_probes(cfg, out_dir);
  }
  throw Error("unknown experiment");
}

}  // namespace gwb
