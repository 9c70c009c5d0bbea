#include "lhfi/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>

#include "lhfi/stats.hpp"

namespace lhfi {

void SamplerConfig::validate() const {
  if (n_chains < 1) throw ValidationError("n_chains must be >= 1");
  if (n_iterations < 1) throw ValidationError("n_iterations must be >= 1");
  if (burn_in < 0) throw ValidationError("burn_in must be >= 0");
  if (burn_in >= n_iterations) {
    throw ValidationError("burn_in must be smaller than n_iterations");
  }
  if (thin < 1) throw ValidationError("thin must be >= 1");
  if (adapt_window < 1) throw ValidationError("adapt_window must be >= 1");
  if (!(target_accept > 0.0 && target_accept < 1.0) ||
      !(target_accept_block > 0.0 && target_accept_block < 1.0)) {
    throw ValidationError("acceptance targets must lie in (0,1)");
  }
}

namespace {

double gibbs_variance(const Eigen::VectorXd& residuals, Rng& rng) {
  const double shape = kIgShape + 0.5 * static_cast<double>(residuals.size());
  const double scale = kIgScale + 0.5 * residuals.squaredNorm();
  return rng.inverse_gamma(shape, scale);
}

}  // namespace

double gibbs_update_sigma_H2(const Eigen::VectorXd& H,
                             const Eigen::VectorXd& regression_means, Rng& rng) {
  if (H.size() != regression_means.size()) {
    throw ValidationError("gibbs_update_sigma_H2: H/means length mismatch");
  }
  return gibbs_variance(H - regression_means, rng);
}

double gibbs_update_sigma_delta2(const Eigen::VectorXd& residuals, Rng& rng) {
  return gibbs_variance(residuals, rng);
}

double gibbs_update_sigma_beta2(const Eigen::VectorXd& beta, Rng& rng) {
  return gibbs_variance(beta, rng);
}

Eigen::MatrixXd gibbs_update_Sigma_blocks(const Eigen::VectorXd& beta,
                                          const CovarianceSpec& spec, Rng& rng) {
  if (beta.size() != kNumMetrics) {
    throw ValidationError("gibbs_update_Sigma_blocks: beta must have 5 entries");
  }
  switch (spec.variant) {
    case CovarianceKind::UnstructuredIW: {
      const Eigen::MatrixXd scale =
          Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics) +
          beta * beta.transpose();
      return rng.inverse_wishart(kNumMetrics + 1.0, scale);
    }
    case CovarianceKind::BlockDiagonal: {
      const Eigen::VectorXd bp = beta.head(kNumPositive);
      const Eigen::VectorXd bn = beta.tail(kNumNegative);
      Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(kNumMetrics, kNumMetrics);
      sigma.topLeftCorner(kNumPositive, kNumPositive) = rng.inverse_wishart(
          kNumPositive + 1.0,
          Eigen::MatrixXd::Identity(kNumPositive, kNumPositive) + bp * bp.transpose());
      sigma.bottomRightCorner(kNumNegative, kNumNegative) = rng.inverse_wishart(
          kNumNegative + 1.0,
          Eigen::MatrixXd::Identity(kNumNegative, kNumNegative) + bn * bn.transpose());
      return sigma;
    }
    case CovarianceKind::Diagonal:
    case CovarianceKind::StructuredOffset:
      throw ValidationError(
          "gibbs_update_Sigma_blocks does not apply to this covariance variant");
  }
  throw ValidationError("unknown covariance variant");
}

MhBlockResult mh_update_block(const Eigen::VectorXd& current,
                              const std::function<double(const Eigen::VectorXd&)>& log_target,
                              double proposal_scale, Rng& rng) {
  const double lt_current = log_target(current);
  if (!(lt_current > kNegInf)) {
    throw SamplerError("Metropolis update started outside the target support");
  }
  Eigen::VectorXd proposal = current;
  for (Eigen::Index i = 0; i < proposal.size(); ++i) {
    proposal[i] += proposal_scale * rng.normal();
  }
  const double lt_proposal = log_target(proposal);
  const double log_u = std::log(rng.uniform_pos());
  if (log_u < lt_proposal - lt_current) return {std::move(proposal), true};
  return {current, false};
}

MhScalarResult mh_update_scalar(double current,
                                const std::function<double(double)>& log_target,
                                double proposal_scale, Rng& rng) {
  const double lt_current = log_target(current);
  if (!(lt_current > kNegInf)) {
    throw SamplerError("Metropolis update started outside the target support");
  }
  const double proposal = current + proposal_scale * rng.normal();
  const double lt_proposal = log_target(proposal);
  const double log_u = std::log(rng.uniform_pos());
  if (log_u < lt_proposal - lt_current) return {proposal, true};
  return {current, false};
}

ParameterState hierarchical_centring_transform(const ParameterState& state,
                                               CentringDirection direction) {
  if (state.beta.size() != kNumMetrics) {
    throw ValidationError("hierarchical_centring_transform: beta must have 5 entries");
  }
  ParameterState out = state;
  const double shift =
      direction == CentringDirection::ToCentred ? state.theta_minus : -state.theta_minus;
  for (int j = kNumPositive; j < kNumMetrics; ++j) out.beta[j] += shift;
  return out;
}

namespace {

constexpr long kProgressEvery = 10000;

/// Robbins-Monro tuner for one proposal scale; active during burn-in,
/// frozen after, with post-burn-in acceptance tracked separately.
class AdaptiveScale {
 public:
  AdaptiveScale(std::string name, double initial, double target)
      : name_(std::move(name)), log_scale_(std::log(initial)), target_(target) {}

  double value() const { return std::exp(log_scale_); }
  const std::string& name() const { return name_; }

  void record(bool accepted, bool adapting, long window) {
    if (adapting) {
      ++n_;
      acc_ += accepted ? 1 : 0;
      if (n_ >= window) {
        ++batch_;
        const double step =
            std::min(0.25, 1.0 / std::sqrt(static_cast<double>(batch_)));
        log_scale_ += step * (static_cast<double>(acc_) / n_ - target_);
        log_scale_ = std::clamp(log_scale_, -12.0, 12.0);
        n_ = 0;
        acc_ = 0;
      }
    } else {
      ++post_n_;
      post_acc_ += accepted ? 1 : 0;
    }
  }

  double post_rate() const {
    return post_n_ > 0 ? static_cast<double>(post_acc_) / post_n_ : 0.0;
  }

 private:
  std::string name_;
  double log_scale_;
  double target_;
  long n_ = 0, acc_ = 0, batch_ = 0;
  long post_n_ = 0, post_acc_ = 0;
};

// Cholesky-log coordinates for an SPD block: row-major lower triangle with
// logs on the diagonal.  The MH target in these coordinates needs the
// Jacobian log|dA/dphi| = d log 2 + sum_i (d - i + 1) log l_ii (i 0-based).
Eigen::VectorXd chol_log_encode(const Eigen::MatrixXd& a) {
  const int d = static_cast<int>(a.rows());
  Eigen::MatrixXd L;
  if (!cholesky(a, &L)) {
    throw SamplerError("structured covariance block is not positive definite");
  }
  Eigen::VectorXd phi(d * (d + 1) / 2);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) {
      phi[k] = (i == j) ? std::log(L(i, i)) : L(i, j);
    }
  }
  return phi;
}

Eigen::MatrixXd chol_log_decode(const Eigen::VectorXd& phi, int d) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(d, d);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) {
      L(i, j) = (i == j) ? std::exp(phi[k]) : phi[k];
    }
  }
  return L * L.transpose();
}

double chol_log_jacobian(const Eigen::VectorXd& phi, int d) {
  double lj = d * std::log(2.0);
  int k = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j, ++k) {
      if (i == j) lj += (d - i + 1) * phi[k];
    }
  }
  return lj;
}

class Chain {
 public:
  Chain(const ModelData& data, const SamplerConfig& config, int chain_id)
      : data_(data),
        config_(config),
        chain_id_(chain_id),
        rng_(config.seed, static_cast<std::uint64_t>(chain_id)),
        state_(make_initial_state(data)),
        two_level_(data.spec.regression.two_level()),
        correlated_(data.spec.regression.correlated()),
        variant_(data.spec.covariance.variant) {
    initialize_state();
    build_scales();
    if (!std::isfinite(joint_log_posterior(state_, data_))) {
      throw InitializationError("chain " + std::to_string(chain_id_) +
                                ": non-finite log-posterior at initialization");
    }
  }

  ChainOutput run(const ProgressFn& progress) {
    ChainOutput out;
    out.chain_id = chain_id_;
    out.draws.reserve(config_.n_stored());
    out.deviance.reserve(config_.n_stored());
    for (long iter = 0; iter < config_.n_iterations; ++iter) {
      adapting_ = iter < config_.burn_in;
      sweep();
      if (iter >= config_.burn_in &&
          (iter - config_.burn_in + 1) % config_.thin == 0) {
        store(out);
      }
      if (progress &&
          ((iter + 1) % kProgressEvery == 0 || iter + 1 == config_.n_iterations)) {
        progress(chain_id_, iter + 1, config_.n_iterations);
      }
    }
    if (static_cast<long>(out.draws.size()) != config_.n_stored()) {
      throw SamplerError("stored draw count mismatch");
    }
    for (const auto* s : scales_) {
      out.acceptance_rates.emplace_back(s->name(), s->post_rate());
      out.proposal_scales.emplace_back(s->name(), s->value());
    }
    return out;
  }

 private:
  Eigen::VectorXd regression_means(const ParameterState& s) const {
    const int q = data_.n_latent_covariates();
    return (data_.X * s.alpha.head(q)).array() + s.alpha0;
  }

  Eigen::VectorXd response_residuals(const ParameterState& s) const {
    return data_.X.col(data_.response_column) - s.alpha_dd() * data_.x_driver;
  }

  void initialize_state() {
    auto jitter = [this] { return 0.1 * rng_.uniform(-1.0, 1.0); };
    for (int i = 0; i < data_.n_sites(); ++i) state_.H[i] += jitter();
    state_.alpha0 += jitter();
    for (Eigen::Index i = 0; i < state_.alpha.size(); ++i) state_.alpha[i] += jitter();
    state_.theta_minus += jitter();
    for (int j = 0; j < kNumMetrics; ++j) state_.beta[j] += jitter();
    state_.sigma_H2 += jitter();
    if (two_level_) state_.sigma_delta2 += jitter();
    if (variant_ == CovarianceKind::Diagonal) state_.sigma_beta2 += jitter();
    if (correlated_) state_.rho += jitter();
    // Sigma = I and varsigma = 0 stay put: jitter there risks leaving the
    // positive-definite region before the first sweep.
    sync_delta();
  }

  void build_scales() {
    h_scales_.reserve(data_.n_sites());
    for (int id : data_.site_ids) {
      h_scales_.emplace_back("H_" + std::to_string(id), 0.5, config_.target_accept);
    }
    for (auto& s : h_scales_) scales_.push_back(&s);
    alpha_scale_.emplace("alpha", 0.2, config_.target_accept_block);
    scales_.push_back(&*alpha_scale_);
    theta_scale_.emplace("theta_minus", 0.3, config_.target_accept);
    scales_.push_back(&*theta_scale_);
    beta_scale_.emplace("beta", 0.2, config_.target_accept_block);
    scales_.push_back(&*beta_scale_);
    level_scale_.emplace("level", 0.5, config_.target_accept);
    scales_.push_back(&*level_scale_);
    if (variant_ == CovarianceKind::StructuredOffset) {
      a_pos_scale_.emplace("Sigma_pos", 0.1, config_.target_accept_block);
      scales_.push_back(&*a_pos_scale_);
      a_neg_scale_.emplace("Sigma_neg", 0.1, config_.target_accept_block);
      scales_.push_back(&*a_neg_scale_);
      varsigma_scale_.emplace("varsigma", 0.1, config_.target_accept);
      scales_.push_back(&*varsigma_scale_);
    }
    if (correlated_) {
      rho_scale_.emplace("rho", 0.2, config_.target_accept);
      scales_.push_back(&*rho_scale_);
    }
  }

  void sync_delta() {
    if (two_level_) state_.delta = response_residuals(state_);
  }

  void sweep() {
    update_H();
    update_alpha();
    update_theta();
    update_beta();
    update_level();
    state_.sigma_H2 =
        gibbs_update_sigma_H2(state_.H, regression_means(state_), rng_);
    if (two_level_) {
      state_.sigma_delta2 =
          gibbs_update_sigma_delta2(response_residuals(state_), rng_);
    }
    update_sigma();
    if (correlated_) update_rho();
  }

  // Everything the joint touches through H_i: site i's metric likelihood and
  // its latent-regression density.  (The beta prior, the response-on-driver
  // term and all other priors are H_i-free.)
  void update_H() {
    const Eigen::VectorXd means = regression_means(state_);
    for (int i = 0; i < data_.n_sites(); ++i) {
      auto target = [&](double h) {
        return site_metric_loglik(data_.aggregates[i], h, state_.theta_minus,
                                  state_.beta) +
               normal_logpdf(h, means[i], state_.sigma_H2);
      };
      const MhScalarResult r =
          mh_update_scalar(state_.H[i], target, h_scales_[i].value(), rng_);
      state_.H[i] = r.value;
      h_scales_[i].record(r.accepted, adapting_, config_.adapt_window);
    }
  }

  // (alpha_0, alpha) as one block.  Centred: H stays fixed, so the metric
  // likelihood drops out of the ratio and only Gaussian terms move.
  // Non-centred: the regression residuals stay fixed instead, so H shifts
  // with the proposed mean and the metric likelihood drives acceptance.
  void update_alpha() {
    const int n_alpha = data_.n_alpha();
    Eigen::VectorXd current(1 + n_alpha);
    current[0] = state_.alpha0;
    current.tail(n_alpha) = state_.alpha;
    const Eigen::VectorXd means = regression_means(state_);

    auto target = [&](const Eigen::VectorXd& v) {
      ParameterState cand = state_;
      cand.alpha0 = v[0];
      cand.alpha = v.tail(n_alpha);
      if (!config_.hierarchical_centring) {
        cand.H = state_.H + (regression_means(cand) - means);
      }
      return joint_log_posterior(cand, data_);
    };
    const MhBlockResult r =
        mh_update_block(current, target, alpha_scale_->value(), rng_);
    if (r.accepted) {
      state_.alpha0 = r.value[0];
      state_.alpha = r.value.tail(n_alpha);
      if (!config_.hierarchical_centring) {
        state_.H += regression_means(state_) - means;
      }
    }
    alpha_scale_->record(r.accepted, adapting_, config_.adapt_window);
  }

  // theta-.  Centred: the directly-sampled quantities b = theta + beta stay
  // fixed, so beta moves opposite theta and the metric likelihood cancels;
  // acceptance is driven by the beta prior.  Non-centred: beta stays fixed
  // and the metric likelihood drives acceptance.
  void update_theta() {
    if (config_.hierarchical_centring) {
      const ParameterState centred =
          hierarchical_centring_transform(state_, CentringDirection::ToCentred);
      auto target = [&](double th) {
        ParameterState c = centred;
        c.theta_minus = th;
        return joint_log_posterior(
            hierarchical_centring_transform(c, CentringDirection::FromCentred),
            data_);
      };
      const MhScalarResult r = mh_update_scalar(state_.theta_minus, target,
                                                theta_scale_->value(), rng_);
      if (r.accepted) {
        ParameterState c = centred;
        c.theta_minus = r.value;
        state_ =
            hierarchical_centring_transform(c, CentringDirection::FromCentred);
      }
      theta_scale_->record(r.accepted, adapting_, config_.adapt_window);
    } else {
      auto target = [&](double th) {
        ParameterState cand = state_;
        cand.theta_minus = th;
        return joint_log_posterior(cand, data_);
      };
      const MhScalarResult r = mh_update_scalar(state_.theta_minus, target,
                                                theta_scale_->value(), rng_);
      state_.theta_minus = r.value;
      theta_scale_->record(r.accepted, adapting_, config_.adapt_window);
    }
  }

  void update_beta() {
    auto target = [&](const Eigen::VectorXd& b) {
      ParameterState cand = state_;
      cand.beta = b;
      return joint_log_posterior(cand, data_);
    };
    const MhBlockResult r =
        mh_update_block(state_.beta, target, beta_scale_->value(), rng_);
    state_.beta = r.value;
    beta_scale_->record(r.accepted, adapting_, config_.adapt_window);
  }

  // The likelihood is invariant under (H + c, beta - c, alpha_0 + c): every
  // linear predictor keeps its value and the latent-regression residuals do
  // not move.  The single-coordinate updates are each tightly pinned by the
  // large counts, so without a dedicated move this flat direction is crossed
  // only by slow diffusion and the common level (alpha_0, theta_2, the H
  // marginals) never decorrelates.  Plain MH on the shift c with a symmetric
  // proposal; the ratio reduces to the alpha_0 and beta priors.
  void update_level() {
    auto target = [&](double c) {
      ParameterState cand = state_;
      cand.alpha0 = state_.alpha0 + c;
      cand.H = state_.H.array() + c;
      cand.beta = state_.beta.array() - c;
      return joint_log_posterior(cand, data_);
    };
    const MhScalarResult r =
        mh_update_scalar(0.0, target, level_scale_->value(), rng_);
    if (r.accepted && r.value != 0.0) {
      state_.alpha0 += r.value;
      state_.H.array() += r.value;
      state_.beta.array() -= r.value;
    }
    level_scale_->record(r.accepted, adapting_, config_.adapt_window);
  }

  void update_sigma() {
    switch (variant_) {
      case CovarianceKind::Diagonal:
        state_.sigma_beta2 = gibbs_update_sigma_beta2(state_.beta, rng_);
        break;
      case CovarianceKind::UnstructuredIW:
      case CovarianceKind::BlockDiagonal:
        state_.Sigma =
            gibbs_update_Sigma_blocks(state_.beta, data_.spec.covariance, rng_);
        break;
      case CovarianceKind::StructuredOffset:
        update_structured_block(true);
        update_structured_block(false);
        update_varsigma();
        break;
    }
  }

  // MH on the Cholesky-log coordinates of one offset-free group block
  // A = Sigma_block - varsigma J, with the change-of-variables Jacobian in
  // the target.
  void update_structured_block(bool positive) {
    const int d = positive ? kNumPositive : kNumNegative;
    const int off = positive ? 0 : kNumPositive;
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(d, d);
    const Eigen::MatrixXd a =
        state_.Sigma.block(off, off, d, d) - state_.varsigma * ones;
    AdaptiveScale& scale = positive ? *a_pos_scale_ : *a_neg_scale_;

    auto target = [&](const Eigen::VectorXd& phi) {
      ParameterState cand = state_;
      cand.Sigma.block(off, off, d, d) =
          chol_log_decode(phi, d) + state_.varsigma * ones;
      return joint_log_posterior(cand, data_) + chol_log_jacobian(phi, d);
    };
    const MhBlockResult r =
        mh_update_block(chol_log_encode(a), target, scale.value(), rng_);
    if (r.accepted) {
      state_.Sigma.block(off, off, d, d) =
          chol_log_decode(r.value, d) + state_.varsigma * ones;
    }
    scale.record(r.accepted, adapting_, config_.adapt_window);
  }

  // MH on varsigma holding the offset-free blocks fixed, so the whole Sigma
  // moves with the proposal; positive definiteness of the result is enforced
  // through the joint's -inf.
  void update_varsigma() {
    const Eigen::MatrixXd a_pos =
        state_.Sigma.topLeftCorner(kNumPositive, kNumPositive) -
        state_.varsigma * Eigen::MatrixXd::Ones(kNumPositive, kNumPositive);
    const Eigen::MatrixXd a_neg =
        state_.Sigma.bottomRightCorner(kNumNegative, kNumNegative) -
        state_.varsigma * Eigen::MatrixXd::Ones(kNumNegative, kNumNegative);
    auto assemble = [&](double vs) {
      Eigen::MatrixXd sigma = vs * Eigen::MatrixXd::Ones(kNumMetrics, kNumMetrics);
      sigma.topLeftCorner(kNumPositive, kNumPositive) += a_pos;
      sigma.bottomRightCorner(kNumNegative, kNumNegative) += a_neg;
      return sigma;
    };
    auto target = [&](double vs) {
      ParameterState cand = state_;
      cand.varsigma = vs;
      cand.Sigma = assemble(vs);
      return joint_log_posterior(cand, data_);
    };
    const MhScalarResult r = mh_update_scalar(state_.varsigma, target,
                                              varsigma_scale_->value(), rng_);
    if (r.accepted) {
      state_.varsigma = r.value;
      state_.Sigma = assemble(r.value);
    }
    varsigma_scale_->record(r.accepted, adapting_, config_.adapt_window);
  }

  void update_rho() {
    auto target = [&](double rho) {
      ParameterState cand = state_;
      cand.rho = rho;
      return joint_log_posterior(cand, data_);
    };
    const MhScalarResult r =
        mh_update_scalar(state_.rho, target, rho_scale_->value(), rng_);
    state_.rho = r.value;
    rho_scale_->record(r.accepted, adapting_, config_.adapt_window);
  }

  void store(ChainOutput& out) {
    sync_delta();
    ParameterState draw = state_;
    if (variant_ == CovarianceKind::Diagonal) {
      draw.Sigma = realize_sigma(state_, data_.spec);
    }
    out.deviance.push_back(-2.0 * total_metric_loglik(draw, data_));
    out.draws.push_back(std::move(draw));
  }

  const ModelData& data_;
  const SamplerConfig& config_;
  int chain_id_;
  Rng rng_;
  ParameterState state_;
  bool two_level_;
  bool correlated_;
  CovarianceKind variant_;
  bool adapting_ = true;

  std::vector<AdaptiveScale> h_scales_;
  std::optional<AdaptiveScale> alpha_scale_, theta_scale_, beta_scale_, level_scale_;
  std::optional<AdaptiveScale> a_pos_scale_, a_neg_scale_, varsigma_scale_, rho_scale_;
  std::vector<AdaptiveScale*> scales_;  // report order
};

}  // namespace

ChainOutput run_chain(const ModelData& data, const SamplerConfig& config,
                      int chain_id, const ProgressFn& progress) {
  config.validate();
  Chain chain(data, config, chain_id);
  return chain.run(progress);
}

std::vector<ChainOutput> run_chains(const ModelData& data,
                                    const SamplerConfig& config,
                                    const ProgressFn& progress) {
  config.validate();
  if (config.n_chains == 1) return {run_chain(data, config, 0, progress)};
  std::vector<std::future<ChainOutput>> futures;
  futures.reserve(config.n_chains);
  for (int c = 0; c < config.n_chains; ++c) {
    futures.push_back(std::async(std::launch::async, [&data, &config, &progress, c] {
      return run_chain(data, config, c, progress);
    }));
  }
  std::vector<ChainOutput> out;
  out.reserve(config.n_chains);
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

}  // namespace lhfi
