#pragma once

// Shared helpers for the test suites: summary statistics, distribution CDFs
// for goodness-of-fit checks, and a generator of tiny-but-complete model
// instances that cycles through every covariance variant and both regression
// levels.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "lhfi/model.hpp"
#include "lhfi/rng.hpp"

namespace testutil {

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Kolmogorov-Smirnov statistic of a sample against a reference CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> sample, Cdf cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

/// CDF of the inverse gamma with the model's shape/scale convention:
/// P(X <= x) = P(Gamma(shape, rate=scale) >= scale to the inverse) = Q(shape, scale/x).
inline double inverse_gamma_cdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return 0.0;
  return boost::math::gamma_q(shape, scale / x);
}

inline double chi_squared_cdf(double x, double df) {
  if (!(x > 0.0)) return 0.0;
  return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

/// Batch-means Monte Carlo standard error of the sample mean of a
/// (possibly autocorrelated) chain segment.
inline double batch_means_mcse(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const std::size_t b = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  const std::size_t n_batches = n / b;
  if (n_batches < 2) throw std::runtime_error("batch_means_mcse: too few draws");
  std::vector<double> batch_mean(n_batches);
  for (std::size_t k = 0; k < n_batches; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < b; ++j) s += x[k * b + j];
    batch_mean[k] = s / static_cast<double>(b);
  }
  return std::sqrt(variance(batch_mean) / static_cast<double>(n_batches));
}

struct TinyInstance {
  lhfi::ModelData data;
  lhfi::ParameterState state;
};

/// Small random-but-valid instance number `which`: covariance variant cycles
/// with which % 4, regression level with (which / 4) % 2, and the Correlated
/// prior is exercised on every third two-level instance.  States are drawn
/// inside the support of every prior.
inline TinyInstance make_tiny_instance(int which, lhfi::Rng& rng) {
  lhfi::ModelSpec spec;
  spec.covariance.variant = static_cast<lhfi::CovarianceKind>(which % 4);
  const bool two_level = ((which / 4) % 2) == 1;
  const int n_sites = 2 + which % 2;
  const int n_reps = 1 + which % 2;

  if (two_level) {
    spec.regression.level = lhfi::CovariateLevel::TwoLevel;
    spec.regression.covariate_names = {"salinity"};
    spec.regression.upstream_response = "salinity";
    spec.regression.upstream_driver = "dd";
    if (which % 3 == 0) {
      spec.regression.coefficient_prior = lhfi::CoefficientPrior::Correlated;
    }
  } else {
    spec.regression.covariate_names = {"x1"};
    if (which % 2 == 1) spec.regression.covariate_names.push_back("x2");
  }

  std::vector<lhfi::SiteObservation> obs;
  std::vector<int> site_ids;
  for (int i = 0; i < n_sites; ++i) {
    const int site = 10 + i;
    site_ids.push_back(site);
    for (int r = 1; r <= n_reps; ++r) {
      lhfi::SiteObservation o;
      o.site_id = site;
      o.replicate_id = r;
      o.cardinality = rng.uniform_int(2, 6);
      const long y1 = rng.uniform_int(0, o.cardinality);
      const long y2 = rng.uniform_int(0, o.cardinality - y1);
      const long y3 = rng.uniform_int(0, o.cardinality);
      const long y4 = rng.uniform_int(0, o.cardinality - y3);
      const long y5 = rng.uniform_int(0, o.cardinality - y3 - y4);
      o.counts << y1, y2, y3, y4, y5;
      obs.push_back(o);
    }
  }

  lhfi::CovariateTable table(site_ids);
  auto random_column = [&]() {
    Eigen::VectorXd col(n_sites);
    for (int i = 0; i < n_sites; ++i) col[i] = rng.uniform(-2.0, 2.0);
    return col;
  };
  if (two_level) {
    table.add_column("salinity", random_column());
    table.add_column("dd", random_column());
  } else {
    table.add_column("x1", random_column());
    if (spec.regression.covariate_names.size() == 2) {
      table.add_column("x2", random_column());
    }
  }

  TinyInstance out{lhfi::bind_data(obs, table, spec), {}};
  lhfi::ParameterState& s = out.state;
  s.H.resize(n_sites);
  for (int i = 0; i < n_sites; ++i) s.H[i] = rng.uniform(-1.0, 1.0);
  s.alpha0 = rng.uniform(-1.0, 1.0);
  s.theta_minus = rng.uniform(-1.0, 1.0);
  s.alpha.resize(out.data.n_alpha());
  for (int j = 0; j < s.alpha.size(); ++j) s.alpha[j] = rng.uniform(-1.0, 1.0);
  s.beta.resize(lhfi::kNumMetrics);
  for (int j = 0; j < lhfi::kNumMetrics; ++j) s.beta[j] = rng.uniform(-1.0, 1.0);
  s.sigma_H2 = 0.5 + rng.uniform();
  s.sigma_delta2 = 0.5 + rng.uniform();
  s.sigma_beta2 = 0.5 + rng.uniform();
  s.rho = rng.uniform(-0.8, 0.8);

  auto random_gram = [&](int d, double ridge) {
    Eigen::MatrixXd b(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) b(i, j) = rng.uniform(-1.0, 1.0);
    }
    return Eigen::MatrixXd(b * b.transpose() + ridge * Eigen::MatrixXd::Identity(d, d));
  };
  s.Sigma = Eigen::MatrixXd::Identity(5, 5);
  switch (spec.covariance.variant) {
    case lhfi::CovarianceKind::Diagonal:
      break;
    case lhfi::CovarianceKind::UnstructuredIW:
      s.Sigma = random_gram(5, 1.5);
      break;
    case lhfi::CovarianceKind::BlockDiagonal:
      s.Sigma.setZero();
      s.Sigma.topLeftCorner(2, 2) = random_gram(2, 1.0);
      s.Sigma.bottomRightCorner(3, 3) = random_gram(3, 1.0);
      break;
    case lhfi::CovarianceKind::StructuredOffset: {
      // A including the ridge keeps every eigenvalue >= 1, so adding the
      // rank-one varsigma * J (|varsigma| <= 0.15) keeps Sigma positive
      // definite.
      s.varsigma = rng.uniform(-0.15, 0.15);
      s.Sigma = s.varsigma * Eigen::MatrixXd::Ones(5, 5);
      s.Sigma.topLeftCorner(2, 2) += random_gram(2, 1.0);
      s.Sigma.bottomRightCorner(3, 3) += random_gram(3, 1.0);
      break;
    }
  }
  return out;
}

}  // namespace testutil
