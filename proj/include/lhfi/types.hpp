#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lhfi/errors.hpp"

namespace lhfi {

/// Split of the five AMBI metric groups by their preconceived association
/// with health: groups 1-2 increase with health ("positive"), groups 3-5
/// decrease with it ("negative").  Indices are 1-based metric-group labels.
struct MetricGrouping {
  std::vector<int> positive_metrics{1, 2};
  std::vector<int> negative_metrics{3, 4, 5};

  static MetricGrouping ambi() { return MetricGrouping{}; }

  /// Throws ValidationError unless the two sets are disjoint, sized 2 and 3,
  /// and together cover exactly {1,...,5}.
  void validate() const;
};

inline constexpr int kNumMetrics = 5;
inline constexpr int kNumPositive = 2;
inline constexpr int kNumNegative = 3;

/// One replicate grab sample at one site.  counts holds the five named
/// metric-group counts; the residual cell of each group's multinomial is
/// derived as cardinality minus the group's named counts, never stored.
struct SiteObservation {
  int site_id = 0;
  int replicate_id = 0;
  Eigen::Matrix<long, 5, 1> counts = Eigen::Matrix<long, 5, 1>::Zero();
  long cardinality = 1;  // N_ik, total organisms in the grab sample

  long positive_total() const { return counts[0] + counts[1]; }
  long negative_total() const { return counts[2] + counts[3] + counts[4]; }
  long residual_positive() const { return cardinality - positive_total(); }
  long residual_negative() const { return cardinality - negative_total(); }

  /// Throws ValidationError when counts are negative, cardinality < 1, or a
  /// group's named counts exceed the cardinality.
  void validate() const;
};

/// Probabilities for one multinomial group at one site, with the residual
/// category stored alongside.  The residual is computed inside the link
/// inverse from the same stabilized denominator as the named shares; deriving
/// it afterwards as 1 - sum(p) would destroy it by cancellation whenever the
/// named shares dominate, which breaks round-trips through the links.
struct GroupShares {
  Eigen::VectorXd p;       // named metric probabilities, each in (0,1)
  double residual = 1.0;   // 1 - sum(p), strictly positive

  void validate(const char* what) const;
};

struct GroupProbabilities {
  int site_id = 0;
  GroupShares positive;  // p_i1+, p_i2+
  GroupShares negative;  // p_i3-, p_i4-, p_i5-

  void validate() const {
    positive.validate("positive group");
    negative.validate("negative group");
  }
};

enum class CovarianceKind { Diagonal, UnstructuredIW, BlockDiagonal, StructuredOffset };

const char* to_string(CovarianceKind kind);
CovarianceKind covariance_kind_from_string(const std::string& name);

/// Prior/structure choice for the 5x5 metric-effect covariance.  The scalar
/// offset for StructuredOffset lives in ParameterState::varsigma; realized
/// matrices are produced by realize_sigma().
struct CovarianceSpec {
  CovarianceKind variant = CovarianceKind::Diagonal;
};

enum class CovariateLevel { SingleLevel, TwoLevel };
enum class CoefficientPrior { Independent, Correlated };

const char* to_string(CovariateLevel level);
CovariateLevel covariate_level_from_string(const std::string& name);
const char* to_string(CoefficientPrior prior);
CoefficientPrior coefficient_prior_from_string(const std::string& name);

/// Latent health regression H_i = alpha_0 + alpha'x_i + eps_i and, when
/// TwoLevel, the upstream regression of the response covariate on its driver
/// (salinity on DD in the motivating analysis).
struct LatentRegressionSpec {
  /// Covariate tokens in coefficient order.  Grammar: a raw column name,
  /// log_<column>, or <token>*<token> (interaction of two centred tokens).
  std::vector<std::string> covariate_names;
  CovariateLevel level = CovariateLevel::SingleLevel;
  /// TwoLevel only: upstream pair, response regressed on driver.  The
  /// response must appear in covariate_names; the driver must not (the
  /// driver enters latent health only through the response).
  std::string upstream_response = "salinity";
  std::string upstream_driver = "dd";
  CoefficientPrior coefficient_prior = CoefficientPrior::Independent;

  bool two_level() const { return level == CovariateLevel::TwoLevel; }
  bool correlated() const { return coefficient_prior == CoefficientPrior::Correlated; }
};

struct ModelSpec {
  MetricGrouping grouping = MetricGrouping::ambi();
  CovarianceSpec covariance;
  LatentRegressionSpec regression;

  /// Throws ValidationError on internally inconsistent specs (Correlated
  /// prior without TwoLevel, TwoLevel response missing from covariates, ...).
  void validate() const;
};

// Fixed prior constants shared by every model variant.
inline constexpr double kCoefPriorVar = 100.0;   // alpha_0, alpha, theta-, varsigma
inline constexpr double kIgShape = 1.0;          // sigma_H^2, sigma_delta^2, sigma_beta^2
inline constexpr double kIgScale = 1.0;

/// Full parameter vector of the hierarchical model.  Fields not used by a
/// given ModelSpec (e.g. rho under Independent, sigma_beta2 under a
/// non-Diagonal covariance) are carried but never read by evaluation code.
struct ParameterState {
  Eigen::VectorXd H;            // per-site latent health
  double alpha0 = 0.0;
  Eigen::VectorXd alpha;        // latent coefficients; TwoLevel appends alpha_DD last
  double theta_minus = 0.0;     // theta+ = 0 fixed, never stored
  Eigen::VectorXd beta;         // 5 metric effects, metric order 1..5
  double sigma_H2 = 1.0;
  double sigma_delta2 = 1.0;    // TwoLevel only
  double sigma_beta2 = 1.0;     // Diagonal covariance only
  Eigen::MatrixXd Sigma;        // 5x5, non-Diagonal covariances
  double varsigma = 0.0;        // StructuredOffset only
  double rho = 0.0;             // Correlated prior only
  Eigen::VectorXd delta;        // TwoLevel residuals x_sal - alpha_DD * x_DD

  double alpha_dd() const { return alpha[alpha.size() - 1]; }
};

}  // namespace lhfi
