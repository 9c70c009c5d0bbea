#pragma once

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "lhfi/errors.hpp"

namespace lhfi {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454836;

/// log N(x | mean, var).  Non-positive variance is outside the support of
/// every variance parameter in the model, so it yields -inf rather than an
/// exception: Metropolis steps treat it as an automatic rejection.
inline double normal_logpdf(double x, double mean, double var) {
  if (!(var > 0.0)) return kNegInf;
  const double d = x - mean;
  return -0.5 * (kLogTwoPi + std::log(var)) - 0.5 * d * d / var;
}

/// log IG(x | shape, scale), density scale^shape / Gamma(shape) *
/// x^{-shape-1} exp(-scale/x).
inline double inverse_gamma_logpdf(double x, double shape, double scale) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - scale / x;
}

/// log multivariate gamma function, dimension d.
inline double log_mv_gamma(int d, double a) {
  double s = 0.25 * d * (d - 1) * std::log(M_PI);
  for (int i = 1; i <= d; ++i) s += std::lgamma(a + 0.5 * (1 - i));
  return s;
}

/// Cholesky factor of a symmetric matrix, or failure flag for matrices that
/// are not positive definite.
inline bool cholesky(const Eigen::MatrixXd& m, Eigen::MatrixXd* lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  if (lower != nullptr) *lower = llt.matrixL();
  return true;
}

inline bool is_positive_definite(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) return false;
  if (!m.isApprox(m.transpose(), 1e-10)) return false;
  return cholesky(m, nullptr);
}

/// log MVN(x | mean, cov) via Cholesky; returns -inf when cov is not
/// positive definite (rejection semantics, as with normal_logpdf).
inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::MatrixXd& cov) {
  const int d = static_cast<int>(x.size());
  if (mean.size() != d || cov.rows() != d || cov.cols() != d) {
    throw ValidationError("mvn_logpdf: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return kNegInf;
  const Eigen::MatrixXd L = llt.matrixL();
  double log_det = 0.0;
  for (int i = 0; i < d; ++i) log_det += std::log(L(i, i));
  log_det *= 2.0;
  const Eigen::VectorXd z = llt.matrixL().solve(x - mean);
  return -0.5 * (d * kLogTwoPi + log_det + z.squaredNorm());
}

/// log IW(X | df, scale): density |scale|^{df/2} |X|^{-(df+d+1)/2}
/// exp(-tr(scale X^{-1})/2) / (2^{df d/2} Gamma_d(df/2)).
inline double inverse_wishart_logpdf(const Eigen::MatrixXd& x, double df,
                                     const Eigen::MatrixXd& scale) {
  const int d = static_cast<int>(x.rows());
  if (x.cols() != d || scale.rows() != d || scale.cols() != d) {
    throw ValidationError("inverse_wishart_logpdf: dimension mismatch");
  }
  if (!(df > d - 1)) return kNegInf;
  Eigen::LLT<Eigen::MatrixXd> lltx(x);
  if (lltx.info() != Eigen::Success) return kNegInf;
  Eigen::LLT<Eigen::MatrixXd> llts(scale);
  if (llts.info() != Eigen::Success) {
    throw ValidationError("inverse_wishart_logpdf: scale not positive definite");
  }
  const Eigen::MatrixXd Lx = lltx.matrixL();
  const Eigen::MatrixXd Ls = llts.matrixL();
  double log_det_x = 0.0, log_det_s = 0.0;
  for (int i = 0; i < d; ++i) {
    log_det_x += std::log(Lx(i, i));
    log_det_s += std::log(Ls(i, i));
  }
  log_det_x *= 2.0;
  log_det_s *= 2.0;
  const double trace = lltx.solve(scale).trace();
  return 0.5 * df * log_det_s - 0.5 * (df + d + 1.0) * log_det_x -
         0.5 * trace - 0.5 * df * d * std::log(2.0) - log_mv_gamma(d, 0.5 * df);
}

/// log of the multinomial coefficient n! / (y_1! ... y_k!), with n the sum
/// of the cells.
inline double log_multinomial_coef(const Eigen::VectorXd& counts) {
  double n = 0.0, s = 0.0;
  for (int i = 0; i < counts.size(); ++i) {
    n += counts[i];
    s -= std::lgamma(counts[i] + 1.0);
  }
  return std::lgamma(n + 1.0) + s;
}

}  // namespace lhfi
