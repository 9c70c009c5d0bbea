#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lhfi/covariates.hpp"
#include "lhfi/types.hpp"

namespace lhfi {

// Linear predictors are clamped to this magnitude before exponentiation in
// the link inverses; overflow guard only, far outside any realistic
// posterior region.
inline constexpr double kNuClamp = 500.0;

/// Generalized-logit inverse for the positive group:
/// p_j = exp(nu_j) / (1 + sum_j' exp(nu_j')).  Larger nu means a larger
/// share relative to the residual category.
GroupShares link_inverse_positive(const Eigen::Vector2d& nu);

/// Generalized-logit inverse for the negative group with reversed sign:
/// p_j = exp(-nu_j) / (1 + sum_j' exp(-nu_j')); larger nu (healthier site)
/// shrinks every named share.
GroupShares link_inverse_negative(const Eigen::Vector3d& nu);

/// Forward links: nu_j = log(p_j / residual) for the positive group and
/// nu_j = log(residual / p_j) for the negative group.
Eigen::Vector2d link_forward_positive(const GroupShares& shares);
Eigen::Vector3d link_forward_negative(const GroupShares& shares);

/// nu_ijs = H_i + theta_s + beta_j(s); theta must be 0 for the positive
/// group.
double linear_predictor(double H_i, double theta, double beta_j);

/// Both groups' shares at one site given its latent health and the metric
/// effects (beta in metric order 1..5).
GroupProbabilities group_probabilities(int site_id, double H_i,
                                       double theta_minus,
                                       const Eigen::VectorXd& beta);

/// Log PMF of one group's multinomial, residual category derived as
/// cardinality - sum(counts).  Includes the multinomial coefficient so that
/// deviances are comparable across model variants on identical data.
double multinomial_loglik(const Eigen::VectorXd& counts, long cardinality,
                          const GroupShares& p);

/// Regression mean alpha_0 + alpha'x_i (epsilon excluded).
double latent_health_mean(double alpha0, const Eigen::VectorXd& alpha,
                          const Eigen::VectorXd& x_i);

/// Coefficients of the collapsed single-level regression implied by the
/// two-level structure: the response slot of alpha is replaced by
/// alpha_sal * alpha_DD, which now multiplies the driver covariate.
/// Diagnostic use only; the sampler never touches the collapsed form.
Eigen::VectorXd collapse_two_level(const Eigen::VectorXd& alpha,
                                   double alpha_dd, int response_index);

/// sigma_H^2 / (alpha_sal^2 sigma_delta^2 + sigma_H^2), in (0,1]; the share
/// of latent-regression error variance not attributable to the implicit
/// (response-on-driver) covariate.  Evaluated per posterior draw.
double variance_ratio(double sigma_H2, double alpha_sal, double sigma_delta2);

/// Per-site sufficient statistics for the metric-level likelihood.  Group
/// probabilities are shared by all replicates of a site, so counts aggregate
/// across replicates and the log multinomial coefficients collapse into one
/// constant per site.
struct SiteAggregate {
  int site_id = 0;
  Eigen::Vector2d y_positive = Eigen::Vector2d::Zero();
  double residual_positive = 0.0;
  Eigen::Vector3d y_negative = Eigen::Vector3d::Zero();
  double residual_negative = 0.0;
  double n_positive = 0.0;  // total positive-group trials over replicates
  double n_negative = 0.0;
  double log_coef = 0.0;    // sum of log multinomial coefficients, both groups
};

/// Observations joined with engineered covariates for one ModelSpec.
struct ModelData {
  ModelSpec spec;
  std::vector<int> site_ids;                   // ascending
  std::vector<SiteObservation> observations;   // validated
  std::vector<SiteAggregate> aggregates;       // one per site, site_ids order

  Eigen::MatrixXd X;                           // n_sites x q, centred
  std::vector<std::string> covariate_tokens;   // tokens per column of X
  Eigen::VectorXd x_driver;                    // TwoLevel: centred driver
  int response_column = -1;                    // TwoLevel: response index in X
  std::vector<std::pair<std::string, double>> centring;  // token -> constant

  int n_sites() const { return static_cast<int>(site_ids.size()); }
  int n_latent_covariates() const { return static_cast<int>(X.cols()); }
  /// Length of ParameterState::alpha under this spec.
  int n_alpha() const {
    return n_latent_covariates() + (spec.regression.two_level() ? 1 : 0);
  }
  int site_index(int site_id) const;
};

/// Joins validated observations with the covariate table, resolving the
/// spec's covariate tokens (raw / log_ / interaction), centring each column
/// on its exact mean, and recording the constants for prediction-time reuse.
ModelData bind_data(const std::vector<SiteObservation>& observations,
                    const CovariateTable& table, const ModelSpec& spec);

/// The 5x5 covariance the ModelSpec realizes at this state: sigma_beta2 * I for
/// Diagonal, the stored Sigma otherwise.  For StructuredOffset the stored
/// Sigma must carry varsigma in every cross-group cell.
Eigen::MatrixXd realize_sigma(const ParameterState& state, const ModelSpec& spec);

/// Sum of all log prior densities for the fields the ModelSpec uses.  Support
/// violations (nonpositive variances, rho outside (-1,1), a StructuredOffset
/// Sigma that is not positive definite) yield -inf; structural mismatches
/// between state and spec throw ValidationError.
double log_prior(const ParameterState& state, const ModelSpec& spec);

/// Metric-level log-likelihood (both groups, all replicates) at this state.
double total_metric_loglik(const ParameterState& state, const ModelData& data);

/// log prior + metric likelihood + latent-regression density of H +
/// MVN(beta | 0, Sigma) + (TwoLevel) the response-on-driver density.
/// Unnormalized only by state-independent constants.
double joint_log_posterior(const ParameterState& state, const ModelData& data);

/// Zero-initialized state of the right shape for (spec, data); variances 1,
/// Sigma = I, delta synchronized with alpha_DD = 0.
ParameterState make_initial_state(const ModelData& data);

/// Shape/consistency check of state against spec; throws ValidationError.
void check_state(const ParameterState& state, const ModelData& data);

/// Aggregated metric-level log-likelihood of one site (both groups, all
/// replicates), evaluated directly from the linear predictors.  Hot path of
/// every Metropolis update.
double site_metric_loglik(const SiteAggregate& aggregate, double H_i,
                          double theta_minus, const Eigen::VectorXd& beta);

}  // namespace lhfi
