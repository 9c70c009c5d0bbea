#include "lhfi/synth.hpp"

#include <cmath>
#include <optional>
#include <set>
#include <unordered_map>

#include "lhfi/covariates.hpp"
#include "lhfi/diagnostics.hpp"
#include "lhfi/errors.hpp"
#include "lhfi/parameters.hpp"
#include "lhfi/rng.hpp"
#include "lhfi/stats.hpp"

namespace lhfi {

namespace {

Eigen::VectorXd scheme_values(const CovariateScheme& scheme, int n, Rng& rng) {
  Eigen::VectorXd v(n);
  switch (scheme.kind) {
    case CovariateScheme::Kind::Grid:
      for (int i = 0; i < n; ++i) {
        v[i] = scheme.lo + (scheme.hi - scheme.lo) * static_cast<double>(i) /
                               static_cast<double>(n - 1);
      }
      break;
    case CovariateScheme::Kind::Uniform:
      for (int i = 0; i < n; ++i) v[i] = rng.uniform(scheme.lo, scheme.hi);
      break;
  }
  return v;
}

Eigen::VectorXd mvn_draw(const Eigen::MatrixXd& cov, Rng& rng) {
  Eigen::MatrixXd lower;
  if (!cholesky(cov, &lower)) {
    throw ValidationError("synthetic metric-effect covariance is not positive definite");
  }
  Eigen::VectorXd z(cov.rows());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return lower * z;
}

}  // namespace

void SynthDesign::validate() const {
  if (n_sites < 2) throw ValidationError("synthetic design needs at least two sites");
  if (replicates < 1) {
    throw ValidationError("synthetic design needs at least one replicate per site");
  }
  if (cardinality_min < 1 || cardinality_max < cardinality_min) {
    throw ValidationError("synthetic cardinality range is empty");
  }
  spec.validate();

  std::set<std::string> names;
  for (const CovariateScheme& s : schemes) {
    if (s.name.empty()) throw ValidationError("covariate scheme has an empty name");
    if (!names.insert(s.name).second) {
      throw ValidationError("duplicate covariate scheme '" + s.name + "'");
    }
    if (!(s.hi > s.lo)) {
      throw ValidationError("covariate scheme '" + s.name + "' has an empty range");
    }
  }
  if (spec.regression.two_level()) {
    if (names.count(spec.regression.upstream_response)) {
      throw ValidationError("two-level response '" + spec.regression.upstream_response +
                            "' is generated from the driver and must not have its own scheme");
    }
    if (!names.count(spec.regression.upstream_driver)) {
      throw ValidationError("upstream driver '" + spec.regression.upstream_driver +
                            "' has no covariate scheme");
    }
  }

  const int q = static_cast<int>(spec.regression.covariate_names.size());
  const int n_alpha = q + (spec.regression.two_level() ? 1 : 0);
  if (static_cast<int>(truth.alpha.size()) != n_alpha) {
    throw ValidationError("truth alpha has length " + std::to_string(truth.alpha.size()) +
                          ", spec requires " + std::to_string(n_alpha));
  }
  if (!(truth.sigma_H2 > 0.0)) throw ValidationError("truth sigma_H^2 must be positive");
  if (spec.regression.two_level() && !(truth.sigma_delta2 > 0.0)) {
    throw ValidationError("truth sigma_delta^2 must be positive");
  }
  if (spec.covariance.variant == CovarianceKind::Diagonal) {
    if (!(truth.sigma_beta2 > 0.0)) throw ValidationError("truth sigma_beta^2 must be positive");
  } else if (truth.Sigma.rows() != kNumMetrics || truth.Sigma.cols() != kNumMetrics ||
             !is_positive_definite(truth.Sigma)) {
    throw ValidationError("truth Sigma must be a positive definite 5x5 matrix");
  }
}

SynthData generate(const SynthDesign& design) {
  design.validate();
  Rng rng(design.seed);
  const int n = design.n_sites;
  const LatentRegressionSpec& reg = design.spec.regression;

  std::vector<int> site_ids(n);
  for (int i = 0; i < n; ++i) site_ids[i] = i + 1;
  CovariateTable table(site_ids);

  // Draw order is fixed so a design+seed pins the data set exactly:
  // scheme columns, upstream residuals, latent noise, metric effects, counts.
  for (const CovariateScheme& scheme : design.schemes) {
    table.add_column(scheme.name, scheme_values(scheme, n, rng));
  }

  ParameterState truth = design.truth;
  if (reg.two_level()) {
    ResolvedColumn driver = resolve_token(reg.upstream_driver, table);
    const double sigma_delta = std::sqrt(truth.sigma_delta2);
    Eigen::VectorXd response(n);
    for (int i = 0; i < n; ++i) {
      response[i] = truth.alpha_dd() * driver.values[i] + rng.normal(0.0, sigma_delta);
    }
    table.add_column(reg.upstream_response, response);
  }

  // Resolve the latent covariates exactly as a fit will: same tokens, same
  // centring.  H is generated from these columns, so the coefficients in
  // `truth` are what the fitted parameterization estimates, with no gap from
  // re-centring.  (The realized upstream residuals get shifted by their own
  // mean in the process; `truth.delta` records the model-consistent values.)
  const int q = static_cast<int>(reg.covariate_names.size());
  Eigen::MatrixXd X(n, q);
  for (int j = 0; j < q; ++j) {
    X.col(j) = resolve_token(reg.covariate_names[j], table).values;
  }

  const double sigma_H = std::sqrt(truth.sigma_H2);
  truth.H.resize(n);
  for (int i = 0; i < n; ++i) {
    double mean = truth.alpha0;
    if (q > 0) mean += X.row(i).head(q).dot(truth.alpha.head(q));
    truth.H[i] = mean + rng.normal(0.0, sigma_H);
  }

  truth.beta = mvn_draw(realize_sigma(truth, design.spec), rng);

  if (reg.two_level()) {
    int resp = -1;
    for (int j = 0; j < q; ++j) {
      if (reg.covariate_names[j] == reg.upstream_response) resp = j;
    }
    ResolvedColumn driver = resolve_token(reg.upstream_driver, table);
    truth.delta = X.col(resp) - truth.alpha_dd() * driver.values;
  } else {
    truth.delta.resize(0);
  }

  std::vector<SiteObservation> observations;
  observations.reserve(static_cast<std::size_t>(n) * design.replicates);
  for (int i = 0; i < n; ++i) {
    GroupProbabilities p =
        group_probabilities(site_ids[i], truth.H[i], truth.theta_minus, truth.beta);
    const std::vector<double> pos{p.positive.p[0], p.positive.p[1], p.positive.residual};
    const std::vector<double> neg{p.negative.p[0], p.negative.p[1], p.negative.p[2],
                                  p.negative.residual};
    for (int r = 0; r < design.replicates; ++r) {
      SiteObservation obs;
      obs.site_id = site_ids[i];
      obs.replicate_id = r + 1;
      obs.cardinality = rng.uniform_int(design.cardinality_min, design.cardinality_max);
      std::vector<long> cp = rng.multinomial(obs.cardinality, pos);
      std::vector<long> cn = rng.multinomial(obs.cardinality, neg);
      obs.counts << cp[0], cp[1], cn[0], cn[1], cn[2];
      obs.validate();
      observations.push_back(std::move(obs));
    }
  }

  return SynthData{std::move(observations), std::move(table), std::move(truth)};
}

SynthDesign default_benchmark_design() {
  SynthDesign d;
  d.n_sites = 18;
  d.replicates = 3;
  d.cardinality_min = 200;
  d.cardinality_max = 2000;
  // Grid span chosen so sd(DD) ~ 1.68, which together with sigma_delta = 0.7
  // and alpha_DD = 0.77 induces a sal-DD correlation of about 0.88.
  d.schemes = {{"dd", CovariateScheme::Kind::Grid, 0.0, 5.5}};
  d.spec.covariance.variant = CovarianceKind::Diagonal;
  d.spec.regression.covariate_names = {"salinity"};
  d.spec.regression.level = CovariateLevel::TwoLevel;
  d.spec.regression.upstream_response = "salinity";
  d.spec.regression.upstream_driver = "dd";
  d.truth.alpha0 = -1.56;
  d.truth.alpha = (Eigen::VectorXd(2) << 0.39, 0.77).finished();
  d.truth.theta_minus = 2.09;
  d.truth.sigma_H2 = 0.67 * 0.67;
  d.truth.sigma_delta2 = 0.70 * 0.70;
  d.truth.sigma_beta2 = 1.12 * 1.12;
  d.truth.Sigma = Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics);
  d.seed = 7451;
  return d;
}

const RecoveryRow& RecoveryReport::row(const std::string& name) const {
  for (const RecoveryRow& r : rows) {
    if (r.name == name) return r;
  }
  throw ValidationError("recovery report has no row named '" + name + "'");
}

namespace {

// Generative value for a reported parameter, or nullopt when no fixed truth
// exists (per-replication latents, correlation structure the design lacks).
std::optional<double> truth_value(const std::string& name, const SynthDesign& design,
                                  const ModelData& fit) {
  const ParameterState& t = design.truth;
  const LatentRegressionSpec& dreg = design.spec.regression;
  if (name == "alpha_0") return t.alpha0;
  if (name == "theta_2") return t.theta_minus;
  if (name == "sigma_H") return std::sqrt(t.sigma_H2);
  if (name == "sigma_delta") {
    if (dreg.two_level()) return std::sqrt(t.sigma_delta2);
    return std::nullopt;
  }
  if (name == "sigma_beta") {
    if (design.spec.covariance.variant == CovarianceKind::Diagonal) {
      return std::sqrt(t.sigma_beta2);
    }
    return std::nullopt;
  }
  if (name == "alpha_DD") {
    if (dreg.two_level()) return t.alpha_dd();
    return std::nullopt;
  }
  if (name == "variance_ratio") {
    if (!dreg.two_level()) return std::nullopt;
    for (std::size_t j = 0; j < dreg.covariate_names.size(); ++j) {
      if (dreg.covariate_names[j] == dreg.upstream_response) {
        return variance_ratio(t.sigma_H2, t.alpha[j], t.sigma_delta2);
      }
    }
    return std::nullopt;
  }
  // Latent coefficients: a fitted covariate the design never used has true
  // coefficient 0; latent health enters through the design covariates only.
  for (std::size_t j = 0; j < fit.covariate_tokens.size(); ++j) {
    if (name != "alpha_" + display_name(fit.covariate_tokens[j])) continue;
    for (std::size_t k = 0; k < dreg.covariate_names.size(); ++k) {
      if (dreg.covariate_names[k] == fit.covariate_tokens[j]) return t.alpha[k];
    }
    return 0.0;
  }
  return std::nullopt;
}

}  // namespace

RecoveryReport recovery_study(const SynthDesign& design, const ModelSpec& fit_spec,
                              const SamplerConfig& config, int n_replications) {
  design.validate();
  fit_spec.validate();
  config.validate();
  if (n_replications < 0) {
    throw ValidationError("recovery study needs a nonnegative replication count");
  }

  RecoveryReport report;
  report.n_replications = n_replications;
  std::unordered_map<std::string, std::size_t> row_index;

  for (int rep = 0; rep < n_replications; ++rep) {
    SynthDesign d = design;
    d.seed = derive_stream_seed(design.seed, static_cast<std::uint64_t>(rep));
    try {
      SynthData sim = generate(d);
      ModelData data = bind_data(sim.observations, sim.table, fit_spec);
      SamplerConfig c = config;
      c.seed = derive_stream_seed(config.seed, static_cast<std::uint64_t>(rep) + 1);
      std::vector<ChainOutput> chains = run_chains(data, c);
      std::vector<ParameterEntry> layout = summary_layout(data);
      std::vector<PosteriorSummary> summaries = summarize(collect_draws(layout, chains));

      if (report.rows.empty()) {
        for (const PosteriorSummary& s : summaries) {
          std::optional<double> truth = truth_value(s.name, d, data);
          if (!truth) continue;
          row_index[s.name] = report.rows.size();
          report.rows.push_back({s.name, *truth, 0, 0, 0.0});
        }
      }
      for (const PosteriorSummary& s : summaries) {
        auto it = row_index.find(s.name);
        if (it == row_index.end()) continue;
        RecoveryRow& row = report.rows[it->second];
        CredibleInterval ci = s.interval(0.95);
        ++row.attempted;
        if (ci.lower <= row.truth && row.truth <= ci.upper) ++row.covered;
        row.mean_ci_width += ci.upper - ci.lower;
      }
    } catch (const Error& e) {
      ++report.failures;
      report.failure_messages.push_back("replication " + std::to_string(rep) + ": " + e.what());
    }
  }

  for (RecoveryRow& row : report.rows) {
    if (row.attempted > 0) row.mean_ci_width /= row.attempted;
  }
  return report;
}

}  // namespace lhfi
