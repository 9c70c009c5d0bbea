#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lhfi/model.hpp"
#include "lhfi/rng.hpp"

namespace lhfi {

struct SamplerConfig {
  int n_chains = 2;
  long n_iterations = 120000;
  long burn_in = 20000;
  int thin = 100;
  std::uint64_t seed = 1;
  long adapt_window = 50;            // iterations per Robbins-Monro batch
  double target_accept = 0.44;       // scalar random-walk updates
  double target_accept_block = 0.23; // multivariate blocks
  bool hierarchical_centring = true;

  long n_stored() const { return (n_iterations - burn_in) / thin; }
  void validate() const;
};

struct ChainOutput {
  int chain_id = 0;
  std::vector<ParameterState> draws;  // thinned, post burn-in
  std::vector<double> deviance;       // -2 x metric log-likelihood per draw
  std::vector<std::pair<std::string, double>> acceptance_rates;  // post burn-in
  std::vector<std::pair<std::string, double>> proposal_scales;   // frozen values
};

/// Called periodically with (chain_id, iteration, n_iterations); may be
/// invoked concurrently from different chains.
using ProgressFn = std::function<void(int, long, long)>;

/// IG(1,1)-conjugate draw of sigma_H^2 given residuals H - mean:
/// IG(1 + n/2, 1 + SSR/2).
double gibbs_update_sigma_H2(const Eigen::VectorXd& H,
                             const Eigen::VectorXd& regression_means, Rng& rng);

/// Same conjugate family for the response-on-driver residuals.
double gibbs_update_sigma_delta2(const Eigen::VectorXd& residuals, Rng& rng);

/// Diagonal-variant conjugate draw of sigma_beta^2 given beta.
double gibbs_update_sigma_beta2(const Eigen::VectorXd& beta, Rng& rng);

/// Conjugate inverse-Wishart draw of Sigma given beta.  UnstructuredIW:
/// IW(5+1, I + beta beta').  BlockDiagonal: independent IW(2+1, .) and
/// IW(3+1, .) on the group blocks, zero cross-block.  Other variants have no
/// conjugate update and are rejected.
Eigen::MatrixXd gibbs_update_Sigma_blocks(const Eigen::VectorXd& beta,
                                          const CovarianceSpec& spec, Rng& rng);

struct MhBlockResult {
  Eigen::VectorXd value;
  bool accepted = false;
};

struct MhScalarResult {
  double value = 0.0;
  bool accepted = false;
};

/// One Gaussian random-walk Metropolis step on a sub-vector.  -inf proposals
/// are always rejected; a -inf target at the current point means the chain
/// sits outside the support and throws SamplerError.
MhBlockResult mh_update_block(const Eigen::VectorXd& current,
                              const std::function<double(const Eigen::VectorXd&)>& log_target,
                              double proposal_scale, Rng& rng);

MhScalarResult mh_update_scalar(double current,
                                const std::function<double(double)>& log_target,
                                double proposal_scale, Rng& rng);

enum class CentringDirection { ToCentred, FromCentred };

/// Hierarchical-centring reparameterization at the metric level: ToCentred
/// replaces beta with the directly-sampled centred effects
/// b_j = theta_s(j) + beta_j (theta+ = 0 leaves the positive slots
/// untouched); FromCentred recovers beta = b - theta.  The site level needs
/// no transform because H itself is the centred quantity.  Round-trips are
/// the identity up to one floating add/subtract.
ParameterState hierarchical_centring_transform(const ParameterState& state,
                                               CentringDirection direction);

/// One MCMC chain.  Per-iteration sweep, in fixed order: each H_i (scalar
/// MH), the (alpha_0, alpha) block, theta-, the beta block, sigma_H^2
/// (Gibbs), sigma_delta^2 (Gibbs, TwoLevel), Sigma (conjugate IW draw, or
/// Cholesky-log MH on the group blocks under StructuredOffset), varsigma
/// (MH, StructuredOffset), rho (MH, Correlated).  Proposal scales adapt by
/// Robbins-Monro during burn-in only.  All randomness comes from a stream
/// derived from (config.seed, chain_id).
ChainOutput run_chain(const ModelData& data, const SamplerConfig& config,
                      int chain_id, const ProgressFn& progress = nullptr);

/// All chains, concurrently when n_chains > 1; output ordered by chain_id.
std::vector<ChainOutput> run_chains(const ModelData& data,
                                    const SamplerConfig& config,
                                    const ProgressFn& progress = nullptr);

}  // namespace lhfi
