#include "lhfi/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "lhfi/stats.hpp"

namespace lhfi {

void MetricGrouping::validate() const {
  if (positive_metrics.size() != 2 || negative_metrics.size() != 3) {
    throw ValidationError("metric grouping must have 2 positive and 3 negative metrics");
  }
  std::set<int> all(positive_metrics.begin(), positive_metrics.end());
  all.insert(negative_metrics.begin(), negative_metrics.end());
  if (all != std::set<int>{1, 2, 3, 4, 5}) {
    throw ValidationError("metric grouping must cover exactly metrics {1,...,5}");
  }
}

void SiteObservation::validate() const {
  if (cardinality < 1) {
    throw ValidationError("site " + std::to_string(site_id) + " replicate " +
                          std::to_string(replicate_id) + ": cardinality " +
                          std::to_string(cardinality) + " < 1");
  }
  for (int j = 0; j < kNumMetrics; ++j) {
    if (counts[j] < 0) {
      throw ValidationError("site " + std::to_string(site_id) + " replicate " +
                            std::to_string(replicate_id) + ": metric m" +
                            std::to_string(j + 1) + " count is negative");
    }
  }
  if (positive_total() > cardinality) {
    throw ValidationError("site " + std::to_string(site_id) + " replicate " +
                          std::to_string(replicate_id) +
                          ": positive-group counts exceed cardinality");
  }
  if (negative_total() > cardinality) {
    throw ValidationError("site " + std::to_string(site_id) + " replicate " +
                          std::to_string(replicate_id) +
                          ": negative-group counts exceed cardinality");
  }
}

void GroupShares::validate(const char* what) const {
  double sum = residual;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] > 0.0 && p[j] < 1.0)) {
      throw ValidationError(std::string(what) + ": probability outside (0,1)");
    }
    sum += p[j];
  }
  if (!(residual > 0.0)) {
    throw ValidationError(std::string(what) + ": residual category not positive");
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ValidationError(std::string(what) + ": probabilities do not sum to 1");
  }
}

const char* to_string(CovarianceKind kind) {
  switch (kind) {
    case CovarianceKind::Diagonal: return "diagonal";
    case CovarianceKind::UnstructuredIW: return "unstructured";
    case CovarianceKind::BlockDiagonal: return "block_diagonal";
    case CovarianceKind::StructuredOffset: return "structured_offset";
  }
  return "?";
}

CovarianceKind covariance_kind_from_string(const std::string& name) {
  if (name == "diagonal") return CovarianceKind::Diagonal;
  if (name == "unstructured") return CovarianceKind::UnstructuredIW;
  if (name == "block_diagonal") return CovarianceKind::BlockDiagonal;
  if (name == "structured_offset") return CovarianceKind::StructuredOffset;
  throw ValidationError("unknown covariance variant '" + name + "'");
}

const char* to_string(CovariateLevel level) {
  return level == CovariateLevel::SingleLevel ? "single_level" : "two_level";
}

CovariateLevel covariate_level_from_string(const std::string& name) {
  if (name == "single_level") return CovariateLevel::SingleLevel;
  if (name == "two_level") return CovariateLevel::TwoLevel;
  throw ValidationError("unknown level structure '" + name + "'");
}

const char* to_string(CoefficientPrior prior) {
  return prior == CoefficientPrior::Independent ? "independent" : "correlated";
}

CoefficientPrior coefficient_prior_from_string(const std::string& name) {
  if (name == "independent") return CoefficientPrior::Independent;
  if (name == "correlated") return CoefficientPrior::Correlated;
  throw ValidationError("unknown coefficient prior '" + name + "'");
}

void ModelSpec::validate() const {
  grouping.validate();
  const auto& reg = regression;
  std::set<std::string> seen;
  for (const auto& token : reg.covariate_names) {
    if (token.empty()) throw ValidationError("empty covariate token");
    if (!seen.insert(token).second) {
      throw ValidationError("duplicate covariate token '" + token + "'");
    }
  }
  if (reg.two_level()) {
    if (std::find(reg.covariate_names.begin(), reg.covariate_names.end(),
                  reg.upstream_response) == reg.covariate_names.end()) {
      throw ValidationError("two-level response '" + reg.upstream_response +
                            "' is not among the covariates");
    }
    if (std::find(reg.covariate_names.begin(), reg.covariate_names.end(),
                  reg.upstream_driver) != reg.covariate_names.end()) {
      throw ValidationError("two-level driver '" + reg.upstream_driver +
                            "' must not appear among the covariates; it enters "
                            "only through the response");
    }
    if (reg.upstream_response == reg.upstream_driver) {
      throw ValidationError("two-level response and driver must differ");
    }
  } else if (reg.correlated()) {
    throw ValidationError("correlated coefficient prior requires the two-level structure");
  }
}

namespace {

inline double clamp_nu(double nu) {
  if (!std::isfinite(nu)) throw ValidationError("non-finite linear predictor");
  return std::clamp(nu, -kNuClamp, kNuClamp);
}

}  // namespace

GroupShares link_inverse_positive(const Eigen::Vector2d& nu) {
  const double n1 = clamp_nu(nu[0]), n2 = clamp_nu(nu[1]);
  const double m = std::max(0.0, std::max(n1, n2));
  const double e0 = std::exp(-m);
  const double e1 = std::exp(n1 - m);
  const double e2 = std::exp(n2 - m);
  const double denom = e0 + e1 + e2;
  GroupShares out;
  out.p.resize(2);
  out.p << e1 / denom, e2 / denom;
  out.residual = e0 / denom;
  return out;
}

GroupShares link_inverse_negative(const Eigen::Vector3d& nu) {
  const double w1 = -clamp_nu(nu[0]), w2 = -clamp_nu(nu[1]), w3 = -clamp_nu(nu[2]);
  const double m = std::max(0.0, std::max(w1, std::max(w2, w3)));
  const double e0 = std::exp(-m);
  const double e1 = std::exp(w1 - m);
  const double e2 = std::exp(w2 - m);
  const double e3 = std::exp(w3 - m);
  const double denom = e0 + e1 + e2 + e3;
  GroupShares out;
  out.p.resize(3);
  out.p << e1 / denom, e2 / denom, e3 / denom;
  out.residual = e0 / denom;
  return out;
}

Eigen::Vector2d link_forward_positive(const GroupShares& shares) {
  shares.validate("positive group");
  if (shares.p.size() != 2) {
    throw ValidationError("positive group expects 2 probabilities");
  }
  return {std::log(shares.p[0]) - std::log(shares.residual),
          std::log(shares.p[1]) - std::log(shares.residual)};
}

Eigen::Vector3d link_forward_negative(const GroupShares& shares) {
  shares.validate("negative group");
  if (shares.p.size() != 3) {
    throw ValidationError("negative group expects 3 probabilities");
  }
  return {std::log(shares.residual) - std::log(shares.p[0]),
          std::log(shares.residual) - std::log(shares.p[1]),
          std::log(shares.residual) - std::log(shares.p[2])};
}

double linear_predictor(double H_i, double theta, double beta_j) {
  const double nu = H_i + theta + beta_j;
  if (!std::isfinite(nu)) throw ValidationError("non-finite linear predictor");
  return nu;
}

GroupProbabilities group_probabilities(int site_id, double H_i,
                                       double theta_minus,
                                       const Eigen::VectorXd& beta) {
  if (beta.size() != kNumMetrics) {
    throw ValidationError("group_probabilities: beta must have 5 entries");
  }
  GroupProbabilities out;
  out.site_id = site_id;
  out.positive = link_inverse_positive(
      {linear_predictor(H_i, 0.0, beta[0]), linear_predictor(H_i, 0.0, beta[1])});
  out.negative = link_inverse_negative({linear_predictor(H_i, theta_minus, beta[2]),
                                        linear_predictor(H_i, theta_minus, beta[3]),
                                        linear_predictor(H_i, theta_minus, beta[4])});
  return out;
}

double multinomial_loglik(const Eigen::VectorXd& counts, long cardinality,
                          const GroupShares& p) {
  if (counts.size() != p.p.size()) {
    throw ValidationError("multinomial_loglik: counts/probabilities size mismatch");
  }
  double total = 0.0;
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0.0 || std::floor(counts[j]) != counts[j]) {
      throw ValidationError("multinomial_loglik: counts must be nonnegative integers");
    }
    total += counts[j];
  }
  if (total > static_cast<double>(cardinality)) {
    throw ValidationError("multinomial_loglik: counts exceed cardinality");
  }
  p.validate("multinomial_loglik");
  const double residual_count = static_cast<double>(cardinality) - total;

  double ll = std::lgamma(static_cast<double>(cardinality) + 1.0) -
              std::lgamma(residual_count + 1.0) +
              residual_count * std::log(p.residual);
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    ll += counts[j] * std::log(p.p[j]) - std::lgamma(counts[j] + 1.0);
  }
  return ll;
}

double latent_health_mean(double alpha0, const Eigen::VectorXd& alpha,
                          const Eigen::VectorXd& x_i) {
  if (alpha.size() != x_i.size()) {
    throw ValidationError("latent_health_mean: coefficient/covariate length mismatch");
  }
  return alpha0 + alpha.dot(x_i);
}

Eigen::VectorXd collapse_two_level(const Eigen::VectorXd& alpha, double alpha_dd,
                                   int response_index) {
  if (response_index < 0 || response_index >= alpha.size()) {
    throw ValidationError("collapse_two_level: response coefficient absent");
  }
  Eigen::VectorXd out = alpha;
  out[response_index] *= alpha_dd;  // now multiplies the driver covariate
  return out;
}

double variance_ratio(double sigma_H2, double alpha_sal, double sigma_delta2) {
  if (!(sigma_H2 > 0.0) || !(sigma_delta2 > 0.0)) {
    throw ValidationError("variance_ratio: variances must be positive");
  }
  return sigma_H2 / (alpha_sal * alpha_sal * sigma_delta2 + sigma_H2);
}

int ModelData::site_index(int site_id) const {
  auto it = std::lower_bound(site_ids.begin(), site_ids.end(), site_id);
  if (it == site_ids.end() || *it != site_id) {
    throw ValidationError("unknown site id " + std::to_string(site_id));
  }
  return static_cast<int>(it - site_ids.begin());
}

namespace {

SiteAggregate aggregate_site(int site_id,
                             const std::vector<SiteObservation>& observations) {
  SiteAggregate a;
  a.site_id = site_id;
  for (const auto& obs : observations) {
    if (obs.site_id != site_id) continue;
    const double n = static_cast<double>(obs.cardinality);
    for (int j = 0; j < kNumPositive; ++j) {
      a.y_positive[j] += static_cast<double>(obs.counts[j]);
      a.log_coef -= std::lgamma(static_cast<double>(obs.counts[j]) + 1.0);
    }
    for (int j = 0; j < kNumNegative; ++j) {
      a.y_negative[j] += static_cast<double>(obs.counts[kNumPositive + j]);
      a.log_coef -= std::lgamma(static_cast<double>(obs.counts[kNumPositive + j]) + 1.0);
    }
    a.residual_positive += static_cast<double>(obs.residual_positive());
    a.residual_negative += static_cast<double>(obs.residual_negative());
    a.n_positive += n;
    a.n_negative += n;
    a.log_coef += 2.0 * std::lgamma(n + 1.0) -
                  std::lgamma(static_cast<double>(obs.residual_positive()) + 1.0) -
                  std::lgamma(static_cast<double>(obs.residual_negative()) + 1.0);
  }
  return a;
}

}  // namespace

ModelData bind_data(const std::vector<SiteObservation>& observations,
                    const CovariateTable& table, const ModelSpec& spec) {
  spec.validate();
  if (observations.empty()) throw ValidationError("no observations");

  std::set<std::pair<int, int>> keys;
  std::set<int> ids;
  for (const auto& obs : observations) {
    obs.validate();
    if (!keys.insert({obs.site_id, obs.replicate_id}).second) {
      throw ValidationError("duplicate observation for site " +
                            std::to_string(obs.site_id) + " replicate " +
                            std::to_string(obs.replicate_id));
    }
    ids.insert(obs.site_id);
  }

  ModelData data;
  data.spec = spec;
  data.site_ids.assign(ids.begin(), ids.end());
  data.observations = observations;

  const CovariateTable rows = table.subset(data.site_ids);
  const auto& tokens = spec.regression.covariate_names;
  data.X.resize(data.n_sites(), static_cast<Eigen::Index>(tokens.size()));
  data.covariate_tokens = tokens;
  for (std::size_t c = 0; c < tokens.size(); ++c) {
    ResolvedColumn col = resolve_token(tokens[c], rows);
    data.X.col(static_cast<Eigen::Index>(c)) = col.values;
    for (auto& rec : col.centring) data.centring.push_back(std::move(rec));
  }

  if (spec.regression.two_level()) {
    const auto it = std::find(tokens.begin(), tokens.end(),
                              spec.regression.upstream_response);
    data.response_column = static_cast<int>(it - tokens.begin());
    ResolvedColumn driver = resolve_token(spec.regression.upstream_driver, rows);
    data.x_driver = driver.values;
    for (auto& rec : driver.centring) data.centring.push_back(std::move(rec));
  }

  data.aggregates.reserve(data.site_ids.size());
  for (int id : data.site_ids) {
    data.aggregates.push_back(aggregate_site(id, observations));
  }
  return data;
}

Eigen::MatrixXd realize_sigma(const ParameterState& state, const ModelSpec& spec) {
  switch (spec.covariance.variant) {
    case CovarianceKind::Diagonal:
      return state.sigma_beta2 * Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics);
    case CovarianceKind::UnstructuredIW:
    case CovarianceKind::BlockDiagonal:
    case CovarianceKind::StructuredOffset:
      if (state.Sigma.rows() != kNumMetrics || state.Sigma.cols() != kNumMetrics) {
        throw ValidationError("Sigma must be 5x5");
      }
      return state.Sigma;
  }
  throw ValidationError("unknown covariance variant");
}

namespace {

void check_sigma_structure(const ParameterState& state, const ModelSpec& spec) {
  const auto variant = spec.covariance.variant;
  if (variant == CovarianceKind::Diagonal) return;
  if (state.Sigma.rows() != kNumMetrics || state.Sigma.cols() != kNumMetrics) {
    throw ValidationError("Sigma must be 5x5");
  }
  if (variant == CovarianceKind::BlockDiagonal) {
    if (state.Sigma.block(0, kNumPositive, kNumPositive, kNumNegative)
            .cwiseAbs()
            .maxCoeff() > 1e-12) {
      throw ValidationError("block-diagonal Sigma has nonzero cross-group entries");
    }
  } else if (variant == CovarianceKind::StructuredOffset) {
    const auto cross = state.Sigma.block(0, kNumPositive, kNumPositive, kNumNegative);
    if ((cross.array() - state.varsigma).abs().maxCoeff() > 1e-9) {
      throw ValidationError("structured Sigma cross-group entries do not equal varsigma");
    }
  }
}

int response_index(const ModelSpec& spec) {
  const auto& tokens = spec.regression.covariate_names;
  const auto it = std::find(tokens.begin(), tokens.end(),
                            spec.regression.upstream_response);
  if (it == tokens.end()) {
    throw ValidationError("two-level response token not among covariates");
  }
  return static_cast<int>(it - tokens.begin());
}

}  // namespace

double log_prior(const ParameterState& state, const ModelSpec& spec) {
  // Assumes a spec that already passed ModelSpec::validate() (bind_data
  // enforces this); here only state-vs-spec structure is checked.
  const auto& reg = spec.regression;
  const int n_alpha = static_cast<int>(reg.covariate_names.size()) +
                      (reg.two_level() ? 1 : 0);
  if (state.alpha.size() != n_alpha) {
    throw ValidationError("alpha has " + std::to_string(state.alpha.size()) +
                          " entries, spec requires " + std::to_string(n_alpha));
  }
  if (state.beta.size() != kNumMetrics) {
    throw ValidationError("beta must have 5 entries");
  }
  check_sigma_structure(state, spec);

  double lp = normal_logpdf(state.alpha0, 0.0, kCoefPriorVar) +
              normal_logpdf(state.theta_minus, 0.0, kCoefPriorVar);

  const bool correlated_pair = reg.two_level() && reg.correlated();
  const int resp = reg.two_level() ? response_index(spec) : -1;
  const int dd = n_alpha - 1;
  for (int i = 0; i < n_alpha; ++i) {
    if (correlated_pair && (i == resp || i == dd)) continue;
    lp += normal_logpdf(state.alpha[i], 0.0, kCoefPriorVar);
  }
  if (correlated_pair) {
    if (!(state.rho > -1.0 && state.rho < 1.0)) return kNegInf;
    lp += std::log(0.5);  // Unif(-1,1) density for rho
    const double a = state.alpha[resp], b = state.alpha[dd];
    if (state.rho == 0.0) {
      // Shared path with the Independent prior so the two agree bit-for-bit.
      lp += normal_logpdf(a, 0.0, kCoefPriorVar) +
            normal_logpdf(b, 0.0, kCoefPriorVar);
    } else {
      const double r2 = 1.0 - state.rho * state.rho;
      lp += -kLogTwoPi - std::log(kCoefPriorVar) - 0.5 * std::log(r2) -
            (a * a - 2.0 * state.rho * a * b + b * b) / (2.0 * kCoefPriorVar * r2);
    }
  }

  lp += inverse_gamma_logpdf(state.sigma_H2, kIgShape, kIgScale);
  if (reg.two_level()) {
    lp += inverse_gamma_logpdf(state.sigma_delta2, kIgShape, kIgScale);
  }

  switch (spec.covariance.variant) {
    case CovarianceKind::Diagonal:
      lp += inverse_gamma_logpdf(state.sigma_beta2, kIgShape, kIgScale);
      break;
    case CovarianceKind::UnstructuredIW:
      lp += inverse_wishart_logpdf(state.Sigma, kNumMetrics,
                                   Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics));
      break;
    case CovarianceKind::BlockDiagonal:
      lp += inverse_wishart_logpdf(state.Sigma.topLeftCorner(kNumPositive, kNumPositive),
                                   kNumPositive,
                                   Eigen::MatrixXd::Identity(kNumPositive, kNumPositive));
      lp += inverse_wishart_logpdf(
          state.Sigma.bottomRightCorner(kNumNegative, kNumNegative), kNumNegative,
          Eigen::MatrixXd::Identity(kNumNegative, kNumNegative));
      break;
    case CovarianceKind::StructuredOffset: {
      const Eigen::MatrixXd jp =
          Eigen::MatrixXd::Ones(kNumPositive, kNumPositive);
      const Eigen::MatrixXd jn =
          Eigen::MatrixXd::Ones(kNumNegative, kNumNegative);
      lp += inverse_wishart_logpdf(
          state.Sigma.topLeftCorner(kNumPositive, kNumPositive) - state.varsigma * jp,
          kNumPositive, Eigen::MatrixXd::Identity(kNumPositive, kNumPositive));
      lp += inverse_wishart_logpdf(
          state.Sigma.bottomRightCorner(kNumNegative, kNumNegative) -
              state.varsigma * jn,
          kNumNegative, Eigen::MatrixXd::Identity(kNumNegative, kNumNegative));
      lp += normal_logpdf(state.varsigma, 0.0, kCoefPriorVar);
      if (!is_positive_definite(state.Sigma)) return kNegInf;
      break;
    }
  }
  return lp;
}

double site_metric_loglik(const SiteAggregate& a, double H_i, double theta_minus,
                          const Eigen::VectorXd& beta) {
  // Positive group: p_j = exp(nu_j) / (1 + sum exp), so the aggregated log
  // PMF reduces to sum_j y_j nu_j - N (m + log D) plus the count constant.
  const double n1 = std::clamp(H_i + beta[0], -kNuClamp, kNuClamp);
  const double n2 = std::clamp(H_i + beta[1], -kNuClamp, kNuClamp);
  double m = std::max(0.0, std::max(n1, n2));
  double log_denom =
      std::log(std::exp(-m) + std::exp(n1 - m) + std::exp(n2 - m));
  double ll = a.y_positive[0] * n1 + a.y_positive[1] * n2 -
              a.n_positive * (m + log_denom);

  // Negative group in terms of w_j = -nu_j.
  const double w1 = -std::clamp(H_i + theta_minus + beta[2], -kNuClamp, kNuClamp);
  const double w2 = -std::clamp(H_i + theta_minus + beta[3], -kNuClamp, kNuClamp);
  const double w3 = -std::clamp(H_i + theta_minus + beta[4], -kNuClamp, kNuClamp);
  m = std::max(0.0, std::max(w1, std::max(w2, w3)));
  log_denom = std::log(std::exp(-m) + std::exp(w1 - m) + std::exp(w2 - m) +
                       std::exp(w3 - m));
  ll += a.y_negative[0] * w1 + a.y_negative[1] * w2 + a.y_negative[2] * w3 -
        a.n_negative * (m + log_denom);

  return ll + a.log_coef;
}

double total_metric_loglik(const ParameterState& state, const ModelData& data) {
  check_state(state, data);
  double ll = 0.0;
  for (int i = 0; i < data.n_sites(); ++i) {
    ll += site_metric_loglik(data.aggregates[i], state.H[i], state.theta_minus,
                             state.beta);
  }
  return ll;
}

double joint_log_posterior(const ParameterState& state, const ModelData& data) {
  check_state(state, data);
  double lp = log_prior(state, data.spec);
  if (lp == kNegInf) return kNegInf;

  for (int i = 0; i < data.n_sites(); ++i) {
    lp += site_metric_loglik(data.aggregates[i], state.H[i], state.theta_minus,
                             state.beta);
  }

  const int q = data.n_latent_covariates();
  const Eigen::VectorXd alpha_latent = state.alpha.head(q);
  for (int i = 0; i < data.n_sites(); ++i) {
    const double mean = state.alpha0 + alpha_latent.dot(data.X.row(i));
    lp += normal_logpdf(state.H[i], mean, state.sigma_H2);
    if (lp == kNegInf) return kNegInf;
  }

  lp += mvn_logpdf(state.beta, Eigen::VectorXd::Zero(kNumMetrics),
                   realize_sigma(state, data.spec));

  if (data.spec.regression.two_level()) {
    const double alpha_dd = state.alpha_dd();
    for (int i = 0; i < data.n_sites(); ++i) {
      lp += normal_logpdf(data.X(i, data.response_column),
                          alpha_dd * data.x_driver[i], state.sigma_delta2);
    }
  }
  return lp;
}

void check_state(const ParameterState& state, const ModelData& data) {
  if (state.H.size() != data.n_sites()) {
    throw ValidationError("H has " + std::to_string(state.H.size()) +
                          " entries, expected " + std::to_string(data.n_sites()));
  }
  if (state.alpha.size() != data.n_alpha()) {
    throw ValidationError("alpha has " + std::to_string(state.alpha.size()) +
                          " entries, expected " + std::to_string(data.n_alpha()));
  }
  if (state.beta.size() != kNumMetrics) {
    throw ValidationError("beta must have 5 entries");
  }
  check_sigma_structure(state, data.spec);
}

ParameterState make_initial_state(const ModelData& data) {
  ParameterState s;
  s.H = Eigen::VectorXd::Zero(data.n_sites());
  s.alpha = Eigen::VectorXd::Zero(data.n_alpha());
  s.beta = Eigen::VectorXd::Zero(kNumMetrics);
  s.Sigma = Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics);
  if (data.spec.regression.two_level()) {
    s.delta = data.X.col(data.response_column);  // alpha_DD = 0
  }
  return s;
}

}  // namespace lhfi
