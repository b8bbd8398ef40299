// tfm: command-line front end for threshold factor model estimation.
//
// Subcommands:
//   fit        estimate k, the threshold value, and the loading spaces
//   screen     rank threshold-variable candidates by the CUSUM statistic
//   simulate   generate a synthetic data set from a JSON process spec
//   replicate  run one of the four built-in simulation studies

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tfm/digest.hpp"
#include "tfm/errors.hpp"
#include "tfm/screening.hpp"
#include "tfm/simulate.hpp"
#include "tfm/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitConfig = 4;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// No partial output files: write to a sibling temp path, then rename.
void write_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw tfm::input_error("cannot write '" + tmp.string() + "'");
    out << content;
  }
  fs::rename(tmp, path);
}

std::string two_column_tsv(const std::string& h1, const std::string& h2,
                           const std::vector<double>& a, const std::vector<double>& b) {
  std::string out = h1 + "\t" + h2 + "\n";
  for (std::size_t i = 0; i < a.size(); ++i) {
    out += fmt(a[i]) + "\t" + fmt(b[i]) + "\n";
  }
  return out;
}

std::string matrix_tsv(const Eigen::MatrixXd& m, const std::vector<std::string>& col_labels) {
  std::string out;
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    out += col_labels[c];
    out += c + 1 < col_labels.size() ? '\t' : '\n';
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out += fmt(m(r, c));
      out += c + 1 < m.cols() ? '\t' : '\n';
    }
  }
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

struct CommonOptions {
  std::string delimiter = ",";
  bool no_header = false;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--delim", opt.delimiter, "field delimiter (single character)");
  cmd->add_flag("--no-header", opt.no_header, "input file has no header row");
  cmd->add_option("--out", opt.out_dir, "output directory");
}

char delimiter_char(const std::string& d) {
  if (d.size() != 1) throw tfm::input_error("delimiter must be a single character");
  return d[0];
}

// z source: 'csd:<lag>' derives the series from the panel; an existing file
// path reads its first data column; anything else is a column label.
struct ZResolution {
  tfm::PanelSeries panel;
  tfm::ThresholdSeries z;
  std::string spec;
};

ZResolution resolve_panel_and_z(const std::string& panel_path, const std::string& z_spec,
                                const CommonOptions& opt) {
  tfm::LoadOptions lopt;
  lopt.delimiter = delimiter_char(opt.delimiter);
  lopt.has_header = !opt.no_header;

  ZResolution out;
  out.spec = z_spec;
  if (z_spec.rfind("csd:", 0) == 0) {
    int lag = 0;
    try {
      lag = std::stoi(z_spec.substr(4));
    } catch (const std::exception&) {
      throw tfm::input_error("cannot parse lag in '" + z_spec + "'");
    }
    auto loaded = tfm::load_panel(panel_path, lopt);
    out.panel = std::move(loaded.panel);
    out.z = tfm::cross_sectional_sd(out.panel, lag);
  } else if (fs::exists(z_spec) && !fs::is_directory(z_spec)) {
    auto loaded = tfm::load_panel(panel_path, lopt);
    out.panel = std::move(loaded.panel);
    auto zfile = tfm::load_panel(z_spec, lopt);
    if (zfile.panel.n() != out.panel.n()) {
      throw tfm::input_error("z file length does not match the panel");
    }
    out.z = tfm::make_threshold_series(zfile.panel.values.row(0).transpose(),
                                       zfile.panel.series_labels[0]);
  } else {
    lopt.z_column = z_spec;
    auto loaded = tfm::load_panel(panel_path, lopt);
    out.panel = std::move(loaded.panel);
    out.z = std::move(*loaded.z);
  }
  return out;
}

// Candidate tokens, comma separated:
//   csd:A..B (or csd:L)  cross-sectional sd of the panel at those lags
//   z:A..B               lags of the --z series
//   sq:A..B              lags of the squared --z series
std::vector<tfm::ThresholdSeries> parse_candidates(const std::string& spec,
                                                   const tfm::PanelSeries& panel,
                                                   const tfm::ThresholdSeries* zref) {
  std::vector<tfm::ThresholdSeries> out;
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t comma = spec.find(',', start);
    if (comma == std::string::npos) comma = spec.size();
    const std::string token = spec.substr(start, comma - start);
    start = comma + 1;
    if (token.empty()) continue;

    const std::size_t colon = token.find(':');
    if (colon == std::string::npos) {
      throw tfm::input_error("candidate token '" + token + "' needs the form kind:lags");
    }
    const std::string kind = token.substr(0, colon);
    const std::string lags = token.substr(colon + 1);
    int lo = 0, hi = 0;
    const std::size_t dots = lags.find("..");
    try {
      if (dots == std::string::npos) {
        lo = hi = std::stoi(lags);
      } else {
        lo = std::stoi(lags.substr(0, dots));
        hi = std::stoi(lags.substr(dots + 2));
      }
    } catch (const std::exception&) {
      throw tfm::input_error("cannot parse lag range in '" + token + "'");
    }
    if (lo > hi) throw tfm::input_error("empty lag range in '" + token + "'");

    for (int ell = lo; ell <= hi; ++ell) {
      if (kind == "csd") {
        out.push_back(tfm::cross_sectional_sd(panel, ell));
      } else if (kind == "z" || kind == "sq") {
        if (!zref) throw tfm::input_error("'" + kind + ":' candidates need --z");
        out.push_back(kind == "z" ? tfm::lag_series(*zref, ell)
                                  : tfm::lag_series(tfm::square_series(*zref), ell));
      } else {
        throw tfm::input_error("unknown candidate kind '" + kind + "'");
      }
    }
  }
  if (out.empty()) throw tfm::input_error("no candidates given");
  return out;
}

int cmd_fit(const std::string& panel_path, const std::string& z_spec,
            const CommonOptions& opt, const tfm::FitConfig& config, int forced_k,
            bool signals) {
  tfm::FitConfig fc = config;
  if (forced_k > 0) fc.k = forced_k;
  ZResolution in = resolve_panel_and_z(panel_path, z_spec, opt);
  const tfm::ThresholdFactorFit fit = tfm::fit_threshold_factor_model(in.panel, in.z, fc);

  json cfg;
  cfg["input"] = panel_path;
  cfg["z"] = z_spec;
  cfg["delimiter"] = opt.delimiter;
  cfg["has_header"] = !opt.no_header;
  cfg["h0"] = fc.h0;
  cfg["eta_quantiles"] = {fc.eta_lo_quantile, fc.eta_hi_quantile};
  cfg["k"] = fc.k ? json(*fc.k) : json(nullptr);
  cfg["R"] = fc.R;
  cfg["min_tail_count"] = fc.min_tail_count;

  json report;
  report["command"] = "fit";
  report["version"] = tfm::kVersion;
  report["config"] = cfg;
  report["config_digest"] = tfm::digest_hex(cfg.dump());
  report["k_hat"] = fit.k_hat;
  if (fit.k_selection) {
    report["k_per_regime"] = {fit.k_selection->per_regime[0], fit.k_selection->per_regime[1]};
    report["k_chosen_regime"] = fit.k_selection->chosen_regime;
  }
  report["r_hat"] = fit.r_hat;
  report["eta_values"] = {fit.eta.first, fit.eta.second};
  report["grid_size"] = fit.profile.grid.size();
  report["g_min"] = fit.profile.values[fit.profile.argmin_index];
  report["g_max"] = *std::max_element(fit.profile.values.begin(), fit.profile.values.end());
  report["n_regime1"] = fit.diagnostics.n_regime1;
  report["n_regime2"] = fit.diagnostics.n_regime2;
  report["space_distance_q1_q2"] = fit.diagnostics.space_distance;
  report["top_eigenvalues_regime1"] =
      std::vector<double>(fit.diagnostics.top_eigenvalues_1.begin(),
                          fit.diagnostics.top_eigenvalues_1.end());
  report["top_eigenvalues_regime2"] =
      std::vector<double>(fit.diagnostics.top_eigenvalues_2.begin(),
                          fit.diagnostics.top_eigenvalues_2.end());
  report["q1"] = matrix_json(fit.q1.basis);
  report["q2"] = matrix_json(fit.q2.basis);
  report["warnings"] = fit.diagnostics.warnings;

  const fs::path out_dir(opt.out_dir);
  write_atomic(out_dir / "fit_report.json", report.dump(2) + "\n");
  write_atomic(out_dir / "g_profile.tsv",
               two_column_tsv("r", "g", fit.profile.grid, fit.profile.values));
  if (fit.k_selection) {
    for (int i = 0; i < 2; ++i) {
      const auto& ratios = fit.k_selection->ratio_profiles[static_cast<std::size_t>(i)];
      std::vector<double> ks(ratios.size());
      for (std::size_t k = 0; k < ratios.size(); ++k) ks[k] = static_cast<double>(k + 1);
      write_atomic(out_dir / ("eigen_ratios_regime" + std::to_string(i + 1) + ".tsv"),
                   two_column_tsv("k", "ratio", ks, ratios));
    }
  }
  if (signals) {
    const tfm::SignalRecovery rec = tfm::recover_signal_factors(fit, in.panel, in.z);
    write_atomic(out_dir / "signal.tsv", matrix_tsv(rec.s_hat.transpose(), in.panel.series_labels));
    std::vector<std::string> flabels;
    for (int f = 1; f <= fit.k_hat; ++f) flabels.push_back("factor" + std::to_string(f));
    write_atomic(out_dir / "factors.tsv", matrix_tsv(rec.factors.transpose(), flabels));
    std::string regimes = "regime\n";
    for (int r : rec.regime_of_t) regimes += std::to_string(r) + "\n";
    write_atomic(out_dir / "regimes.tsv", regimes);
  }
  std::cout << "fit: k_hat=" << fit.k_hat << " r_hat=" << fmt(fit.r_hat)
            << " D(Q1,Q2)=" << fmt(fit.diagnostics.space_distance) << "\n";
  for (const auto& w : fit.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_screen(const std::string& panel_path, const std::string& z_spec,
               const std::string& candidates_spec, const CommonOptions& opt,
               int k, int h0, std::pair<double, double> band, std::size_t top_m,
               bool compare, int t0, const tfm::FitConfig& fit_config) {
  tfm::LoadOptions lopt;
  lopt.delimiter = delimiter_char(opt.delimiter);
  lopt.has_header = !opt.no_header;

  tfm::PanelSeries panel;
  std::optional<tfm::ThresholdSeries> zref;
  if (!z_spec.empty()) {
    ZResolution in = resolve_panel_and_z(panel_path, z_spec, opt);
    panel = std::move(in.panel);
    zref = std::move(in.z);
  } else {
    panel = tfm::load_panel(panel_path, lopt).panel;
  }

  const std::vector<tfm::ThresholdSeries> candidates =
      parse_candidates(candidates_spec, panel, zref ? &*zref : nullptr);

  const int k_use = k > 0 ? k : tfm::estimate_num_factors_one_regime(panel, h0, 0);
  tfm::RegimeLabels labels = tfm::classify_regimes(panel, k_use, {50, h0});
  tfm::align_labels(labels, candidates.front());
  const tfm::ScreeningReport report = tfm::screen_candidates(labels, candidates, top_m, band);

  std::vector<double> e_values;
  if (compare) {
    tfm::FitConfig fc = fit_config;
    if (!fc.k) fc.k = k_use;  // an overestimate still compares candidates fairly
    const int t0_use = t0 > 0 ? t0 : static_cast<int>(panel.n() / 2);
    for (const auto& entry : report.entries) {
      const auto cand = std::find_if(candidates.begin(), candidates.end(),
                                     [&](const auto& c) { return c.label == entry.label; });
      e_values.push_back(tfm::model_compare_e(panel, *cand, t0_use, fc));
    }
  }

  std::string tsv = compare ? "rank\tcandidate\tq\targmax_r\te\n"
                            : "rank\tcandidate\tq\targmax_r\n";
  json jentries = json::array();
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const auto& e = report.entries[i];
    tsv += std::to_string(i + 1) + "\t" + e.label + "\t" + fmt(e.q_value) + "\t" +
           fmt(e.argmax_r);
    json je{{"rank", i + 1}, {"candidate", e.label}, {"q", e.q_value},
            {"argmax_r", e.argmax_r}};
    if (compare) {
      tsv += "\t" + fmt(e_values[i]);
      je["e"] = e_values[i];
    }
    tsv += "\n";
    jentries.push_back(je);
  }

  json jreport;
  jreport["command"] = "screen";
  jreport["version"] = tfm::kVersion;
  json cfg{{"input", panel_path}, {"z", z_spec}, {"candidates", candidates_spec},
           {"k", k_use}, {"h0", h0}, {"band", {band.first, band.second}},
           {"compare", compare}};
  jreport["config"] = cfg;
  jreport["config_digest"] = tfm::digest_hex(cfg.dump());
  jreport["classifier"] = {{"method", labels.method},
                           {"iterations", labels.iterations},
                           {"converged", labels.converged},
                           {"degenerate", labels.degenerate}};
  jreport["entries"] = jentries;
  if (compare && !e_values.empty()) {
    const std::size_t best =
        std::min_element(e_values.begin(), e_values.end()) - e_values.begin();
    jreport["selected"] = report.entries[best].label;
  }

  const fs::path out_dir(opt.out_dir);
  write_atomic(out_dir / "screening.tsv", tsv);
  write_atomic(out_dir / "screening_report.json", jreport.dump(2) + "\n");
  if (labels.degenerate) {
    std::cerr << "warning: classifier converged to a degenerate labeling\n";
  }
  std::cout << "screen: " << report.entries.size() << " candidates, best '"
            << report.entries.front().label << "' q=" << fmt(report.entries.front().q_value)
            << "\n";
  return 0;
}

int cmd_simulate(const std::string& spec_path, std::uint64_t seed, bool seed_given,
                 const CommonOptions& opt) {
  tfm::DgpSpec spec = tfm::parse_dgp_spec(spec_path);
  if (seed_given) spec.seed = seed;
  const tfm::GeneratedData data = tfm::generate_dgp(spec);

  std::string panel_csv;
  for (Eigen::Index q = 0; q < data.panel.p(); ++q) {
    panel_csv += data.panel.series_labels[static_cast<std::size_t>(q)];
    panel_csv += q + 1 < data.panel.p() ? ',' : '\n';
  }
  for (Eigen::Index t = 0; t < data.panel.n(); ++t) {
    for (Eigen::Index q = 0; q < data.panel.p(); ++q) {
      panel_csv += fmt(data.panel.values(q, t));
      panel_csv += q + 1 < data.panel.p() ? ',' : '\n';
    }
  }
  std::string z_csv = data.z.label + "\n";
  for (Eigen::Index t = 0; t < data.z.n(); ++t) z_csv += fmt(data.z.z[t]) + "\n";

  json truth;
  truth["spec"] = json::parse(tfm::dgp_spec_to_json(spec));
  truth["r0"] = data.truth.r0;
  truth["a1"] = matrix_json(data.truth.a1);
  truth["a2"] = matrix_json(data.truth.a2);
  truth["x"] = matrix_json(data.truth.x);
  truth["regime_of_t"] = data.truth.regime_of_t;

  const fs::path out_dir(opt.out_dir);
  write_atomic(out_dir / "panel.csv", panel_csv);
  write_atomic(out_dir / "z.csv", z_csv);
  write_atomic(out_dir / "truth.json", truth.dump(2) + "\n");
  std::cout << "simulate: wrote panel.csv (" << data.panel.p() << " x " << data.panel.n()
            << "), z.csv, truth.json\n";
  return 0;
}

int cmd_replicate(int example_id, bool quick, std::uint64_t seed, int workers,
                  const CommonOptions& opt) {
  const std::vector<tfm::McTable> tables =
      tfm::replicate_example(example_id, quick, seed, workers);
  const fs::path out_dir(opt.out_dir);
  for (const auto& table : tables) {
    write_atomic(out_dir / (table.name + ".tsv"), tfm::to_tsv(table));
    std::cout << "replicate: wrote " << (out_dir / (table.name + ".tsv")).string() << "\n";
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"threshold factor models for high-dimensional time series"};
  app.set_version_flag("--version", std::string("tfm ") + tfm::kVersion);
  app.require_subcommand(1);
  // config handling lives on the root app (subcommand config options are not
  // processed); fallthrough lets --config appear after the subcommand, and
  // the file addresses subcommand flags through [fit]/[screen]/... sections.
  app.fallthrough();
  app.set_config("--config", "",
                 "key=value file supplying flag defaults, one [section] per subcommand");

  // fit
  auto* fit = app.add_subcommand("fit", "estimate factor count, threshold, loading spaces");
  std::string fit_panel, fit_z;
  CommonOptions fit_opt;
  tfm::FitConfig fit_config;
  int fit_k = 0;
  bool fit_signals = false;
  std::vector<double> fit_eta{0.30, 0.70};
  fit->add_option("panel", fit_panel, "panel file")->required();
  fit->add_option("--z", fit_z, "threshold series: column label, file, or csd:<lag>")
      ->required();
  fit->add_option("--h0", fit_config.h0, "maximum lead for cross moments");
  fit->add_option("--eta", fit_eta, "tail quantiles for complement estimation")
      ->expected(2);
  fit->add_option("--k", fit_k, "fix the number of factors");
  fit->add_option("--R", fit_config.R, "eigenvalue-ratio search bound");
  fit->add_option("--min-tail", fit_config.min_tail_count,
                  "warn when a tail has fewer observations");
  fit->add_flag("--signals", fit_signals, "also write recovered signal/factor series");
  add_common(fit, fit_opt);

  // screen
  auto* screen = app.add_subcommand("screen", "rank threshold-variable candidates");
  std::string screen_panel, screen_z, screen_cands;
  CommonOptions screen_opt;
  int screen_k = 0, screen_h0 = 1, screen_t0 = 0;
  std::size_t screen_top = static_cast<std::size_t>(-1);
  bool screen_compare = false;
  std::vector<double> screen_band{0.10, 0.90};
  std::vector<double> screen_eta{0.30, 0.70};
  tfm::FitConfig screen_fit_config;
  screen->add_option("panel", screen_panel, "panel file")->required();
  screen->add_option("--candidates", screen_cands,
                     "comma-separated tokens: csd:A..B, z:A..B, sq:A..B")
      ->required();
  screen->add_option("--z", screen_z, "reference series for z:/sq: candidates");
  screen->add_option("--k", screen_k, "number of factors for the classifier");
  screen->add_option("--h0", screen_h0, "maximum lead for cross moments");
  screen->add_option("--band", screen_band, "quantile band for the CUSUM maximizer")
      ->expected(2);
  screen->add_option("--top", screen_top, "keep only the top-m candidates");
  screen->add_flag("--compare", screen_compare,
                   "also compute the held-out residual criterion per candidate");
  screen->add_option("--t0", screen_t0, "training length for --compare (default n/2)");
  screen->add_option("--eta", screen_eta, "tail quantiles for --compare fits")->expected(2);
  add_common(screen, screen_opt);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic data set");
  std::string sim_spec;
  CommonOptions sim_opt;
  std::uint64_t sim_seed = 0;
  simulate->add_option("--spec", sim_spec, "JSON process description")->required();
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "override the spec's seed");
  add_common(simulate, sim_opt);

  // replicate
  auto* replicate = app.add_subcommand("replicate", "run a built-in simulation study");
  int rep_id = 0, rep_workers = 0;
  bool rep_quick = false;
  std::uint64_t rep_seed = 20240801;
  CommonOptions rep_opt;
  replicate->add_option("id", rep_id, "study id (1-4)")->required();
  replicate->add_flag("--quick", rep_quick, "20 replications, smallest cell only");
  replicate->add_option("--seed", rep_seed, "master seed");
  replicate->add_option("--workers", rep_workers, "worker threads (default TFM_WORKERS)");
  add_common(replicate, rep_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit) {
      fit_config.eta_lo_quantile = fit_eta[0];
      fit_config.eta_hi_quantile = fit_eta[1];
      return cmd_fit(fit_panel, fit_z, fit_opt, fit_config, fit_k, fit_signals);
    }
    if (*screen) {
      screen_fit_config.eta_lo_quantile = screen_eta[0];
      screen_fit_config.eta_hi_quantile = screen_eta[1];
      screen_fit_config.h0 = screen_h0;
      return cmd_screen(screen_panel, screen_z, screen_cands, screen_opt, screen_k,
                        screen_h0, {screen_band[0], screen_band[1]}, screen_top,
                        screen_compare, screen_t0, screen_fit_config);
    }
    if (*simulate) {
      return cmd_simulate(sim_spec, sim_seed, sim_seed_opt->count() > 0, sim_opt);
    }
    if (*replicate) {
      return cmd_replicate(rep_id, rep_quick, rep_seed, rep_workers, rep_opt);
    }
  } catch (const tfm::input_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const tfm::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const tfm::numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
