#include "tfm/simulate.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include <json.hpp>

#include "tfm/digest.hpp"
#include "tfm/errors.hpp"
#include "tfm/version.hpp"

namespace tfm {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t x = state;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double stationary_sd(double coef, double sd) {
  return sd / std::sqrt(1.0 - coef * coef);
}

void validate_spec(const DgpSpec& spec) {
  if (spec.p < 2) throw input_error("dgp needs p >= 2");
  if (spec.n < 10) throw input_error("dgp needs n >= 10");
  if (spec.k0 < 1 || spec.k0 >= spec.p) throw input_error("dgp needs 1 <= k0 < p");
  if (static_cast<int>(spec.factor_ar.size()) != spec.k0) {
    throw input_error("factor_ar must list one (coef, sd) pair per factor");
  }
  for (const auto& ar : spec.factor_ar) {
    if (std::abs(ar.coef) >= 1.0) {
      throw input_error("factor AR coefficient must satisfy |coef| < 1");
    }
    if (ar.innovation_sd < 0.0) throw input_error("factor innovation sd must be >= 0");
  }
  if (spec.strengths.first < 0.0 || spec.strengths.first > 1.0 ||
      spec.strengths.second < 0.0 || spec.strengths.second > 1.0) {
    throw input_error("strengths must lie in [0, 1]");
  }
  if (spec.loading.kind == LoadingScheme::Kind::correlated_bivariate && spec.k0 != 1) {
    throw input_error("correlated bivariate loadings are defined for k0 = 1");
  }
  if (spec.noise_variance < 0.0) throw input_error("noise variance must be >= 0");
  if (spec.threshold.kind == ThresholdProcess::Kind::ar1 &&
      std::abs(spec.threshold.coef) >= 1.0) {
    throw input_error("threshold AR coefficient must satisfy |coef| < 1");
  }
  if (spec.threshold.kind == ThresholdProcess::Kind::cross_sectional_sd &&
      spec.threshold.lag < 1) {
    throw input_error("cross-sectional-sd threshold needs lag >= 1");
  }
}

class NoiseSampler {
public:
  NoiseSampler(int p, double variance) : p_(p), scale_(std::sqrt(0.5 * variance)) {}

  // Equicorrelated draw: sqrt(var) * (sqrt(.5) w 1 + sqrt(.5) v), giving
  // covariance var * (0.5 I + 0.5 11'). Exact for this structure, no
  // factorization needed.
  Eigen::VectorXd draw(std::mt19937_64& rng, std::normal_distribution<double>& std_normal) const {
    if (scale_ == 0.0) return Eigen::VectorXd::Zero(p_);
    const double shared = std_normal(rng);
    Eigen::VectorXd eps(p_);
    for (int q = 0; q < p_; ++q) eps[q] = scale_ * (shared + std_normal(rng));
    return eps;
  }

private:
  int p_;
  double scale_;
};

Eigen::VectorXd ar1_path(int n, double coef, double sd, bool burn_in,
                         std::mt19937_64& rng, std::normal_distribution<double>& std_normal) {
  Eigen::VectorXd path(n);
  double value = 0.0;
  if (sd > 0.0) {
    if (burn_in) {
      value = 0.0;
      for (int s = 0; s < 500; ++s) value = coef * value + sd * std_normal(rng);
    } else {
      value = stationary_sd(coef, sd) * std_normal(rng);
    }
  }
  for (int t = 0; t < n; ++t) {
    path[t] = value;
    if (sd > 0.0) value = coef * value + sd * std_normal(rng);
    else value = coef * value;
  }
  return path;
}

double cross_sectional_sd_of(const Eigen::VectorXd& col) {
  const double mean = col.mean();
  return std::sqrt((col.array() - mean).square().sum() /
                   static_cast<double>(col.size() - 1));
}

int env_workers() {
  if (const char* env = std::getenv("TFM_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t state = master ^ (0x632be59bd9b4e019ULL * (index + 1));
  splitmix64(state);
  return splitmix64(state);
}

GeneratedData generate_dgp(const DgpSpec& spec) {
  validate_spec(spec);
  const int p = spec.p, n = spec.n, k0 = spec.k0;

  std::mt19937_64 rng(derive_seed(spec.seed, 0x7f6d));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);

  // Loadings first, in a fixed order, so every scheme consumes the stream
  // deterministically.
  Eigen::MatrixXd a1(p, k0), a2(p, k0);
  if (spec.loading.kind == LoadingScheme::Kind::independent_uniform) {
    const double half1 = std::pow(static_cast<double>(p), -spec.strengths.first / 2.0);
    const double half2 = std::pow(static_cast<double>(p), -spec.strengths.second / 2.0);
    for (int f = 0; f < k0; ++f)
      for (int q = 0; q < p; ++q) a1(q, f) = half1 * uniform(rng);
    for (int f = 0; f < k0; ++f)
      for (int q = 0; q < p; ++q) a2(q, f) = half2 * uniform(rng);
  } else {
    // Paired entries from a bivariate normal with unit variances and
    // correlation sqrt(1 - d^2): the cosine between the spanned lines
    // concentrates at sqrt(1 - d^2), putting their distance at |d|.
    const double rho = std::sqrt(std::max(0.0, 1.0 - spec.loading.d * spec.loading.d));
    const double resid = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    for (int q = 0; q < p; ++q) {
      const double u = std_normal(rng);
      const double v = std_normal(rng);
      a1(q, 0) = u;
      a2(q, 0) = rho * u + resid * v;
    }
  }

  // Latent factor paths.
  Eigen::MatrixXd x(k0, n);
  for (int f = 0; f < k0; ++f) {
    x.row(f) = ar1_path(n, spec.factor_ar[static_cast<std::size_t>(f)].coef,
                        spec.factor_ar[static_cast<std::size_t>(f)].innovation_sd,
                        spec.burn_in, rng, std_normal)
                   .transpose();
  }

  NoiseSampler noise(p, spec.noise_variance);
  Eigen::VectorXd z(n);
  Eigen::MatrixXd y(p, n);
  std::vector<int> regime(static_cast<std::size_t>(n), 0);

  if (spec.threshold.kind == ThresholdProcess::Kind::cross_sectional_sd) {
    // z_t depends on lagged y, so generation is sequential in t. Regimes of
    // the first `lag` observations condition on pure-noise pre-samples.
    const int lag = spec.threshold.lag;
    std::vector<Eigen::VectorXd> pre(static_cast<std::size_t>(lag));
    for (int s = 0; s < lag; ++s) pre[static_cast<std::size_t>(s)] = noise.draw(rng, std_normal);
    for (int t = 0; t < n; ++t) {
      const Eigen::VectorXd& source =
          t - lag >= 0 ? y.col(t - lag).eval() : pre[static_cast<std::size_t>(t)];
      z[t] = cross_sectional_sd_of(source);
      const int i = z[t] < spec.r0 ? 1 : 2;
      regime[static_cast<std::size_t>(t)] = i;
      y.col(t) = (i == 1 ? a1 : a2) * x.col(t) + noise.draw(rng, std_normal);
    }
  } else {
    if (spec.threshold.kind == ThresholdProcess::Kind::ar1) {
      z = ar1_path(n, spec.threshold.coef, spec.threshold.sd, spec.burn_in, rng, std_normal);
    } else {
      for (int t = 0; t < n; ++t) z[t] = std_normal(rng);
    }
    for (int t = 0; t < n; ++t) {
      const int i = z[t] < spec.r0 ? 1 : 2;
      regime[static_cast<std::size_t>(t)] = i;
      y.col(t) = (i == 1 ? a1 : a2) * x.col(t) + noise.draw(rng, std_normal);
    }
  }

  GeneratedData out;
  out.panel = make_panel(std::move(y));
  std::string zlabel;
  switch (spec.threshold.kind) {
    case ThresholdProcess::Kind::ar1: zlabel = "z_ar1"; break;
    case ThresholdProcess::Kind::iid_normal: zlabel = "z_iid"; break;
    case ThresholdProcess::Kind::cross_sectional_sd:
      zlabel = "csd_lag" + std::to_string(spec.threshold.lag);
      break;
  }
  out.z = make_threshold_series(std::move(z), zlabel);
  out.truth.a1 = std::move(a1);
  out.truth.a2 = std::move(a2);
  out.truth.r0 = spec.r0;
  out.truth.x = std::move(x);
  out.truth.regime_of_t = std::move(regime);
  return out;
}

std::string dgp_spec_to_json(const DgpSpec& spec) {
  nlohmann::json j;
  j["p"] = spec.p;
  j["n"] = spec.n;
  j["k0"] = spec.k0;
  auto& ar = j["factor_ar"] = nlohmann::json::array();
  for (const auto& f : spec.factor_ar) {
    ar.push_back({{"coef", f.coef}, {"sd", f.innovation_sd}});
  }
  j["strengths"] = {spec.strengths.first, spec.strengths.second};
  if (spec.loading.kind == LoadingScheme::Kind::independent_uniform) {
    j["loading"] = {{"scheme", "independent_uniform"}};
  } else {
    j["loading"] = {{"scheme", "correlated_bivariate"}, {"d", spec.loading.d}};
  }
  j["noise_variance"] = spec.noise_variance;
  switch (spec.threshold.kind) {
    case ThresholdProcess::Kind::ar1:
      j["threshold"] = {{"process", "ar1"}, {"coef", spec.threshold.coef},
                        {"sd", spec.threshold.sd}};
      break;
    case ThresholdProcess::Kind::iid_normal:
      j["threshold"] = {{"process", "iid_normal"}};
      break;
    case ThresholdProcess::Kind::cross_sectional_sd:
      j["threshold"] = {{"process", "cross_sectional_sd"}, {"lag", spec.threshold.lag}};
      break;
  }
  j["r0"] = spec.r0;
  j["seed"] = spec.seed;
  j["burn_in"] = spec.burn_in;
  return j.dump();
}

DgpSpec parse_dgp_spec_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw input_error(std::string("invalid dgp spec JSON: ") + e.what());
  }
  DgpSpec spec;
  try {
    spec.p = j.at("p").get<int>();
    spec.n = j.at("n").get<int>();
    spec.k0 = j.value("k0", 1);
    spec.factor_ar.clear();
    if (j.contains("factor_ar")) {
      for (const auto& f : j.at("factor_ar")) {
        spec.factor_ar.push_back({f.at("coef").get<double>(), f.at("sd").get<double>()});
      }
    } else {
      spec.factor_ar.assign(static_cast<std::size_t>(spec.k0), FactorAr{});
    }
    if (j.contains("strengths")) {
      spec.strengths = {j.at("strengths").at(0).get<double>(),
                        j.at("strengths").at(1).get<double>()};
    }
    if (j.contains("loading")) {
      const std::string scheme = j.at("loading").at("scheme").get<std::string>();
      if (scheme == "independent_uniform") {
        spec.loading.kind = LoadingScheme::Kind::independent_uniform;
      } else if (scheme == "correlated_bivariate") {
        spec.loading.kind = LoadingScheme::Kind::correlated_bivariate;
        spec.loading.d = j.at("loading").at("d").get<double>();
      } else {
        throw input_error("unknown loading scheme '" + scheme + "'");
      }
    }
    spec.noise_variance = j.value("noise_variance", 1.0);
    if (j.contains("threshold")) {
      const std::string process = j.at("threshold").at("process").get<std::string>();
      if (process == "ar1") {
        spec.threshold.kind = ThresholdProcess::Kind::ar1;
        spec.threshold.coef = j.at("threshold").value("coef", 0.3);
        spec.threshold.sd = j.at("threshold").value("sd", 1.0);
      } else if (process == "iid_normal") {
        spec.threshold.kind = ThresholdProcess::Kind::iid_normal;
      } else if (process == "cross_sectional_sd") {
        spec.threshold.kind = ThresholdProcess::Kind::cross_sectional_sd;
        spec.threshold.lag = j.at("threshold").value("lag", 1);
      } else {
        throw input_error("unknown threshold process '" + process + "'");
      }
    }
    spec.r0 = j.value("r0", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.burn_in = j.value("burn_in", false);
  } catch (const input_error&) {
    throw;
  } catch (const std::exception& e) {
    throw input_error(std::string("invalid dgp spec: ") + e.what());
  }
  validate_spec(spec);
  return spec;
}

DgpSpec parse_dgp_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_dgp_spec_json(text);
}

namespace {

McRecord run_one_replication(const DgpSpec& spec, int rep, const PipelineConfig& cfg) {
  McRecord rec;
  rec.rep = rep;
  const auto start = std::chrono::steady_clock::now();
  try {
    DgpSpec rep_spec = spec;
    rep_spec.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
    const GeneratedData data = generate_dgp(rep_spec);

    if (cfg.screening) {
      const int k = cfg.screening_k > 0 ? cfg.screening_k : spec.k0;
      RegimeLabels labels = classify_regimes(data.panel, k, {50, cfg.h0});
      std::vector<ThresholdSeries> candidates;
      for (int ell = 0; ell <= cfg.screen_max_lag; ++ell) {
        candidates.push_back(lag_series(data.z, ell));
      }
      const ScreeningReport report = screen_candidates(labels, candidates);
      for (std::size_t r = 0; r < report.entries.size(); ++r) {
        if (report.entries[r].label == data.z.label) {
          rec.true_rank = static_cast<int>(r + 1);
          break;
        }
      }
      rec.ok = true;
    } else if (cfg.k_only) {
      const std::vector<double> usable = data.z.usable_values();
      const std::pair<double, double> eta{
          sample_quantile(usable, cfg.eta_lo_quantile),
          sample_quantile(usable, cfg.eta_hi_quantile)};
      const RegimePartition tails = make_partition(data.z, eta.first, eta.second);
      const MMatrix m1 = build_m_matrix(data.panel, tails, cfg.h0, 1);
      const MMatrix m2 = build_m_matrix(data.panel, tails, cfg.h0, 2);
      const int R = cfg.R > 0 ? cfg.R : std::max(1, spec.p / 2);
      rec.k_hat = estimate_num_factors(m1, m2, R).k_hat;
      rec.ok = true;
    } else {
      const ThresholdSeries z_fit = cfg.threshold_var_lag > 0
                                        ? lag_series(data.z, cfg.threshold_var_lag)
                                        : data.z;
      FitConfig fc;
      fc.eta_lo_quantile = cfg.eta_lo_quantile;
      fc.eta_hi_quantile = cfg.eta_hi_quantile;
      fc.h0 = cfg.h0;
      fc.k = cfg.forced_k;
      fc.R = cfg.R;
      fc.min_tail_count = cfg.min_tail_count;
      const ThresholdFactorFit fit = fit_threshold_factor_model(data.panel, z_fit, fc);

      rec.r_hat = fit.r_hat;
      rec.k_hat = fit.k_hat;
      rec.abs_r_err = std::abs(fit.r_hat - spec.r0);
      rec.below = fit.r_hat < spec.r0;
      rec.d_err1 = subspace_distance(fit.q1, span_of(data.truth.a1));
      rec.d_err2 = subspace_distance(fit.q2, span_of(data.truth.a2));
      rec.d_q1_q2 = fit.diagnostics.space_distance;
      rec.ok = true;
    }
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  rec.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

} // namespace

McSummary run_monte_carlo(const DgpSpec& spec, int n_rep, const PipelineConfig& cfg) {
  if (n_rep < 1) throw input_error("n_rep must be >= 1");
  McSummary summary;
  summary.n_rep = n_rep;
  summary.seed = spec.seed;
  summary.spec_digest = digest_hex(dgp_spec_to_json(spec));
  summary.records.resize(static_cast<std::size_t>(n_rep));

  const auto start = std::chrono::steady_clock::now();
  int workers = cfg.workers > 0 ? cfg.workers : env_workers();
  workers = std::min(workers, n_rep);

  std::atomic<int> next{0};
  auto work = [&] {
    for (int rep = next.fetch_add(1); rep < n_rep; rep = next.fetch_add(1)) {
      summary.records[static_cast<std::size_t>(rep)] = run_one_replication(spec, rep, cfg);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  summary.total_runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // Aggregation runs in replication order regardless of worker count.
  std::vector<double> r_all, r_below, r_above, d1, d2, d1_below, d1_above,
      d2_below, d2_above, dq;
  int n_below = 0, n_ok = 0, n_k_correct = 0, n_true_first = 0;
  for (const McRecord& rec : summary.records) {
    if (!rec.ok) {
      ++summary.n_failed;
      continue;
    }
    ++n_ok;
    if (std::isfinite(rec.abs_r_err)) {
      r_all.push_back(rec.abs_r_err);
      (rec.below ? r_below : r_above).push_back(rec.abs_r_err);
      if (rec.below) ++n_below;
    }
    if (std::isfinite(rec.d_err1)) {
      d1.push_back(rec.d_err1);
      (rec.below ? d1_below : d1_above).push_back(rec.d_err1);
    }
    if (std::isfinite(rec.d_err2)) {
      d2.push_back(rec.d_err2);
      (rec.below ? d2_below : d2_above).push_back(rec.d_err2);
    }
    if (std::isfinite(rec.d_q1_q2)) dq.push_back(rec.d_q1_q2);
    if (rec.k_hat == spec.k0) ++n_k_correct;
    if (rec.true_rank == 1) ++n_true_first;
  }
  summary.mean_abs_r_err = mean_of(r_all);
  summary.mean_abs_r_err_below = mean_of(r_below);
  summary.mean_abs_r_err_above = mean_of(r_above);
  summary.freq_below =
      r_all.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : static_cast<double>(n_below) / static_cast<double>(r_all.size());
  summary.freq_k_correct =
      n_ok == 0 ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(n_k_correct) / static_cast<double>(n_ok);
  summary.mean_d1 = mean_of(d1);
  summary.mean_d2 = mean_of(d2);
  summary.mean_d1_below = mean_of(d1_below);
  summary.mean_d1_above = mean_of(d1_above);
  summary.mean_d2_below = mean_of(d2_below);
  summary.mean_d2_above = mean_of(d2_above);
  summary.mean_d_q1q2 = mean_of(dq);
  summary.sd_d_q1q2 = sd_of(dq);
  summary.freq_true_first =
      n_ok == 0 ? std::numeric_limits<double>::quiet_NaN()
                : static_cast<double>(n_true_first) / static_cast<double>(n_ok);
  return summary;
}

std::string McSummary::to_tsv() const {
  std::string out;
  out += "# tool\ttfm " + std::string(kVersion) + "\n";
  out += "# spec_digest\t" + spec_digest + "\n";
  out += "# seed\t" + std::to_string(seed) + "\n";
  out += "# n_rep\t" + std::to_string(n_rep) + "\n";
  out += "# n_failed\t" + std::to_string(n_failed) + "\n";
  const auto agg = [&](const char* name, double v) {
    out += "# " + std::string(name) + "\t" + fmt(v) + "\n";
  };
  agg("mean_abs_r_err", mean_abs_r_err);
  agg("mean_abs_r_err_below", mean_abs_r_err_below);
  agg("mean_abs_r_err_above", mean_abs_r_err_above);
  agg("freq_below", freq_below);
  agg("freq_k_correct", freq_k_correct);
  agg("mean_d1", mean_d1);
  agg("mean_d2", mean_d2);
  agg("mean_d1_below", mean_d1_below);
  agg("mean_d1_above", mean_d1_above);
  agg("mean_d2_below", mean_d2_below);
  agg("mean_d2_above", mean_d2_above);
  agg("mean_d_q1q2", mean_d_q1q2);
  agg("sd_d_q1q2", sd_d_q1q2);
  agg("freq_true_first", freq_true_first);
  out += "rep\tok\tr_hat\tk_hat\tabs_r_err\tside\td_err1\td_err2\td_q1_q2\ttrue_rank\terror\n";
  for (const McRecord& rec : records) {
    out += std::to_string(rec.rep) + "\t" + (rec.ok ? "1" : "0") + "\t" + fmt(rec.r_hat) +
           "\t" + std::to_string(rec.k_hat) + "\t" + fmt(rec.abs_r_err) + "\t" +
           (rec.below ? "below" : "above") + "\t" + fmt(rec.d_err1) + "\t" +
           fmt(rec.d_err2) + "\t" + fmt(rec.d_q1_q2) + "\t" +
           std::to_string(rec.true_rank) + "\t" + rec.error + "\n";
  }
  return out;
}

DgpSpec example1_spec(int setting, int n, int p, std::uint64_t seed) {
  if (setting < 1 || setting > 3) throw input_error("setting must be 1, 2, or 3");
  DgpSpec spec;
  spec.p = p;
  spec.n = n;
  spec.k0 = 1;
  spec.factor_ar = {{0.9, 2.0}};
  spec.strengths = setting == 1 ? std::pair{0.0, 0.0}
                   : setting == 2 ? std::pair{0.0, 1.0}
                                  : std::pair{1.0, 1.0};
  spec.threshold = {ThresholdProcess::Kind::ar1, 0.3, 1.0, 1};
  spec.r0 = 0.0;
  spec.seed = seed;
  return spec;
}

DgpSpec example2_spec(int setting, int n, int p, std::uint64_t seed) {
  if (setting < 1 || setting > 3) throw input_error("setting must be 1, 2, or 3");
  DgpSpec spec;
  spec.p = p;
  spec.n = n;
  spec.k0 = 3;
  spec.factor_ar = {{0.9, 2.0}, {-0.7, 2.0}, {0.8, 2.0}};
  spec.strengths = setting == 1 ? std::pair{0.0, 0.0}
                   : setting == 2 ? std::pair{0.0, 0.5}
                                  : std::pair{0.5, 0.5};
  spec.threshold = {ThresholdProcess::Kind::ar1, -0.7, 1.0, 1};
  spec.r0 = 0.0;
  spec.seed = seed;
  return spec;
}

DgpSpec example3_spec(int setting, int n, int p, std::uint64_t seed) {
  if (setting < 1 || setting > 3) throw input_error("setting must be 1, 2, or 3");
  DgpSpec spec;
  spec.p = p;
  spec.n = n;
  spec.k0 = 1;
  spec.factor_ar = {{0.9, 2.0}};
  spec.strengths = setting == 1 ? std::pair{0.0, 0.0}
                   : setting == 2 ? std::pair{0.0, 0.5}
                                  : std::pair{0.5, 0.5};
  spec.threshold.kind = ThresholdProcess::Kind::cross_sectional_sd;
  spec.threshold.lag = 1;
  spec.r0 = setting == 1 ? 1.5 : setting == 2 ? 1.2 : 1.0;
  spec.seed = seed;
  return spec;
}

DgpSpec example4_spec(double d, int n, int p, std::uint64_t seed) {
  if (d < 0.0 || d > 1.0) throw input_error("d must lie in [0, 1]");
  DgpSpec spec;
  spec.p = p;
  spec.n = n;
  spec.k0 = 1;
  spec.factor_ar = {{0.9, 1.0}};
  spec.strengths = {0.0, 0.0};
  spec.loading = {LoadingScheme::Kind::correlated_bivariate, d};
  spec.threshold.kind = ThresholdProcess::Kind::iid_normal;
  spec.r0 = 0.0;
  spec.seed = seed;
  return spec;
}

std::string to_tsv(const McTable& table) {
  std::string out;
  for (const auto& m : table.meta) out += "# " + m + "\n";
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    out += table.columns[c];
    out += c + 1 < table.columns.size() ? '\t' : '\n';
  }
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      out += c + 1 < row.size() ? '\t' : '\n';
    }
  }
  return out;
}

namespace {

struct Cell {
  int n;
  int p;
  std::string name() const { return "n" + std::to_string(n) + "_p" + std::to_string(p); }
};

std::vector<Cell> study_cells(bool quick) {
  if (quick) return {{200, 20}};
  return {{200, 20}, {200, 40}, {200, 100}, {1000, 20}, {1000, 40}, {1000, 100}};
}

std::vector<Cell> wide_cells(bool quick, int n_fixed) {
  if (quick) return {{n_fixed, 20}};
  return {{n_fixed, 20}, {n_fixed, 40}, {n_fixed, 100}};
}

std::vector<std::string> table_meta(const std::string& study, std::uint64_t seed, int n_rep) {
  const std::string resolved =
      study + ":" + std::to_string(seed) + ":" + std::to_string(n_rep);
  return {"tool\ttfm " + std::string(kVersion), "study\t" + study,
          "seed\t" + std::to_string(seed), "n_rep\t" + std::to_string(n_rep),
          "config_digest\t" + digest_hex(resolved)};
}

std::string side_mean(const McSummary& s, bool below, int which_d) {
  const double v = which_d == 0
                       ? (below ? s.mean_abs_r_err_below : s.mean_abs_r_err_above)
                       : which_d == 1 ? (below ? s.mean_d1_below : s.mean_d1_above)
                                      : (below ? s.mean_d2_below : s.mean_d2_above);
  return fmt3(v);
}

} // namespace

std::vector<McTable> replicate_example(int example_id, bool quick, std::uint64_t seed,
                                       int workers) {
  const int n_rep = quick ? 20 : 100;
  PipelineConfig base;
  base.workers = workers;
  std::vector<McTable> tables;

  const auto run = [&](const DgpSpec& spec, PipelineConfig cfg) {
    return run_monte_carlo(spec, n_rep, cfg);
  };

  if (example_id == 1 || example_id == 3) {
    const auto make_spec = example_id == 1 ? example1_spec : example3_spec;
    const std::string study = example_id == 1 ? "example1" : "example3";
    const std::vector<Cell> cells = study_cells(quick);

    std::vector<std::vector<McSummary>> results(3);
    for (int s = 1; s <= 3; ++s) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        PipelineConfig cfg = base;
        cfg.forced_k = 1;
        results[static_cast<std::size_t>(s - 1)].push_back(
            run(make_spec(s, cells[c].n, cells[c].p,
                          derive_seed(seed, static_cast<std::uint64_t>(s * 100 + c))),
                cfg));
      }
    }

    McTable freq{study + "_freq_r_below", table_meta(study, seed, n_rep), {"setting"}, {}};
    McTable rerr{study + "_r_err", table_meta(study, seed, n_rep), {"setting"}, {}};
    McTable dlo{study + "_d_err_r_below", table_meta(study, seed, n_rep), {"setting"}, {}};
    McTable dhi{study + "_d_err_r_above", table_meta(study, seed, n_rep), {"setting"}, {}};
    for (const auto& cell : cells) {
      freq.columns.push_back(cell.name());
      rerr.columns.push_back(cell.name());
      dlo.columns.push_back(cell.name());
      dhi.columns.push_back(cell.name());
    }
    for (int s = 1; s <= 3; ++s) {
      const auto& row_results = results[static_cast<std::size_t>(s - 1)];
      if (example_id == 1) {
        std::vector<std::string> f{"setting" + std::to_string(s)};
        for (const auto& r : row_results) f.push_back(fmt2(r.freq_below));
        freq.rows.push_back(f);
        std::vector<std::string> below{"setting" + std::to_string(s) + " r_hat<r0"};
        std::vector<std::string> above{"setting" + std::to_string(s) + " r_hat>r0"};
        for (const auto& r : row_results) {
          below.push_back(side_mean(r, true, 0));
          above.push_back(side_mean(r, false, 0));
        }
        rerr.rows.push_back(below);
        rerr.rows.push_back(above);
        std::vector<std::string> d1lo{"setting" + std::to_string(s) + " regime1"};
        std::vector<std::string> d2lo{"setting" + std::to_string(s) + " regime2"};
        std::vector<std::string> d1hi{"setting" + std::to_string(s) + " regime1"};
        std::vector<std::string> d2hi{"setting" + std::to_string(s) + " regime2"};
        for (const auto& r : row_results) {
          d1lo.push_back(side_mean(r, true, 1));
          d2lo.push_back(side_mean(r, true, 2));
          d1hi.push_back(side_mean(r, false, 1));
          d2hi.push_back(side_mean(r, false, 2));
        }
        dlo.rows.push_back(d1lo);
        dlo.rows.push_back(d2lo);
        dhi.rows.push_back(d1hi);
        dhi.rows.push_back(d2hi);
      } else {
        std::vector<std::string> rrow{"setting" + std::to_string(s)};
        std::vector<std::string> d1row{"setting" + std::to_string(s) + " regime1"};
        std::vector<std::string> d2row{"setting" + std::to_string(s) + " regime2"};
        for (const auto& r : row_results) {
          rrow.push_back(fmt3(r.mean_abs_r_err));
          d1row.push_back(fmt3(r.mean_d1));
          d2row.push_back(fmt3(r.mean_d2));
        }
        rerr.rows.push_back(rrow);
        dlo.rows.push_back(d1row);
        dlo.rows.push_back(d2row);
      }
    }
    if (example_id == 1) {
      tables = {freq, rerr, dlo, dhi};
    } else {
      rerr.name = study + "_r_err";
      dlo.name = study + "_d_err";
      tables = {rerr, dlo};
    }
    return tables;
  }

  if (example_id == 2) {
    const std::vector<Cell> k_cells = study_cells(quick);
    McTable kfreq{"example2_k_freq", table_meta("example2", seed, n_rep), {"setting"}, {}};
    for (const auto& cell : k_cells) kfreq.columns.push_back(cell.name());
    for (int s = 1; s <= 3; ++s) {
      std::vector<std::string> row{"setting" + std::to_string(s)};
      for (std::size_t c = 0; c < k_cells.size(); ++c) {
        PipelineConfig cfg = base;
        cfg.k_only = true;
        const McSummary r =
            run(example2_spec(s, k_cells[c].n, k_cells[c].p,
                              derive_seed(seed, static_cast<std::uint64_t>(s * 100 + c))),
                cfg);
        row.push_back(fmt2(r.freq_k_correct));
      }
      kfreq.rows.push_back(row);
    }

    const std::vector<Cell> cells = wide_cells(quick, 1000);
    McTable rerr{"example2_r_err_by_k", table_meta("example2", seed, n_rep), {"setting"}, {}};
    McTable derr{"example2_d_err_by_k", table_meta("example2", seed, n_rep), {"setting"}, {}};
    McTable screen{"example2_screen_freq", table_meta("example2", seed, n_rep), {"setting"}, {}};
    for (int k = 2; k <= 4; ++k) {
      for (const auto& cell : cells) {
        rerr.columns.push_back("k" + std::to_string(k) + "_" + cell.name());
        derr.columns.push_back("k" + std::to_string(k) + "_" + cell.name());
        screen.columns.push_back("k" + std::to_string(k) + "_" + cell.name());
      }
    }
    for (int s = 1; s <= 3; ++s) {
      std::vector<std::string> rrow{"setting" + std::to_string(s)};
      std::vector<std::string> d1row{"setting" + std::to_string(s) + " regime1"};
      std::vector<std::string> d2row{"setting" + std::to_string(s) + " regime2"};
      std::vector<std::string> srow{"setting" + std::to_string(s)};
      for (int k = 2; k <= 4; ++k) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
          const std::uint64_t sub =
              derive_seed(seed, static_cast<std::uint64_t>(10000 + s * 1000 + k * 10 + c));
          PipelineConfig cfg = base;
          cfg.forced_k = k;
          const McSummary r = run(example2_spec(s, cells[c].n, cells[c].p, sub), cfg);
          rrow.push_back(fmt3(r.mean_abs_r_err));
          d1row.push_back(fmt3(r.mean_d1));
          d2row.push_back(fmt3(r.mean_d2));
          PipelineConfig scfg = base;
          scfg.screening = true;
          scfg.screening_k = k;
          const McSummary rs = run(example2_spec(s, cells[c].n, cells[c].p,
                                                 derive_seed(sub, 1)),
                                   scfg);
          srow.push_back(fmt2(rs.freq_true_first));
        }
      }
      rerr.rows.push_back(rrow);
      derr.rows.push_back(d1row);
      derr.rows.push_back(d2row);
      screen.rows.push_back(srow);
    }
    return {kfreq, rerr, derr, screen};
  }

  if (example_id == 4) {
    const std::vector<double> ds = quick ? std::vector<double>{1.0, 0.3}
                                         : std::vector<double>{1.0, 0.7, 0.3, 0.2, 0.1, 0.0};
    const std::vector<Cell> cells = study_cells(quick);
    McTable dbet{"example4_d_between", table_meta("example4", seed, n_rep), {"d"}, {}};
    McTable dload{"example4_d_loading", table_meta("example4", seed, n_rep), {"d"}, {}};
    McTable rerr{"example4_r_err", table_meta("example4", seed, n_rep), {"d"}, {}};
    for (const auto& cell : cells) {
      dbet.columns.push_back(cell.name());
      dload.columns.push_back(cell.name());
      rerr.columns.push_back(cell.name());
    }
    for (std::size_t di = 0; di < ds.size(); ++di) {
      std::vector<std::string> brow{"d=" + fmt2(ds[di])};
      std::vector<std::string> l1row{"d=" + fmt2(ds[di]) + " regime1"};
      std::vector<std::string> l2row{"d=" + fmt2(ds[di]) + " regime2"};
      std::vector<std::string> rrow{"d=" + fmt2(ds[di])};
      for (std::size_t c = 0; c < cells.size(); ++c) {
        PipelineConfig cfg = base;
        cfg.forced_k = 1;
        const McSummary r =
            run(example4_spec(ds[di], cells[c].n, cells[c].p,
                              derive_seed(seed, static_cast<std::uint64_t>(di * 100 + c))),
                cfg);
        brow.push_back(fmt3(r.mean_d_q1q2) + "(" + fmt3(r.sd_d_q1q2) + ")");
        l1row.push_back(fmt3(r.mean_d1));
        l2row.push_back(fmt3(r.mean_d2));
        rrow.push_back(fmt3(r.mean_abs_r_err));
      }
      dbet.rows.push_back(brow);
      dload.rows.push_back(l1row);
      dload.rows.push_back(l2row);
      rerr.rows.push_back(rrow);
    }
    return {dbet, dload, rerr};
  }

  throw input_error("example id must be 1, 2, 3, or 4");
}

} // namespace tfm
