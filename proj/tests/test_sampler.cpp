#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "lhfi/sampler.hpp"

#include "testutil.hpp"

using namespace lhfi;

TEST_CASE("sampler configuration validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.n_stored() == 1000);  // (120000 - 20000) / 100

  c.n_chains = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.burn_in = c.n_iterations;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = SamplerConfig{};
  c.adapt_window = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("conjugate variance draw: zero residuals give IG(3,1)") {
  Rng rng(555);
  const Eigen::VectorXd H = Eigen::VectorXd::Constant(4, 2.5);
  std::vector<double> draws(200000);
  for (double& d : draws) d = gibbs_update_sigma_H2(H, H, rng);
  // IG(1 + 4/2, 1 + 0): mean scale/(shape-1) = 1/2.
  CHECK(testutil::mean(draws) == doctest::Approx(0.5).epsilon(0.02));
  const double ks = testutil::ks_statistic(
      draws, [](double x) { return testutil::inverse_gamma_cdf(x, 3.0, 1.0); });
  CHECK(ks < 2.0 / std::sqrt(static_cast<double>(draws.size())));
}

TEST_CASE("conjugate variance draw: worked posterior IG(4,3)") {
  Rng rng(556);
  Eigen::VectorXd resid(6);
  resid << 1.0, -1.0, 1.0, -1.0, 0.0, 0.0;  // SSR = 4
  std::vector<double> draws(200000);
  for (double& d : draws) d = gibbs_update_sigma_delta2(resid, rng);
  // IG(1 + 3, 1 + 2): mean 3/3 = 1, variance 9/(9*2) = 1/2.
  CHECK(testutil::mean(draws) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(testutil::variance(draws) == doctest::Approx(0.5).epsilon(0.08));
  const double ks = testutil::ks_statistic(
      draws, [](double x) { return testutil::inverse_gamma_cdf(x, 4.0, 3.0); });
  CHECK(ks < 2.0 / std::sqrt(static_cast<double>(draws.size())));
}

TEST_CASE("conjugate draw for the diagonal metric-effect variance") {
  Rng rng(557);
  Eigen::VectorXd beta(5);
  beta << 1.0, 1.0, -1.0, -1.0, 0.0;  // beta'beta = 4
  std::vector<double> draws(200000);
  for (double& d : draws) d = gibbs_update_sigma_beta2(beta, rng);
  // IG(1 + 5/2, 1 + 2) = IG(3.5, 3): mean 3/2.5 = 1.2.
  CHECK(testutil::mean(draws) == doctest::Approx(1.2).epsilon(0.02));
  const double ks = testutil::ks_statistic(
      draws, [](double x) { return testutil::inverse_gamma_cdf(x, 3.5, 3.0); });
  CHECK(ks < 2.0 / std::sqrt(static_cast<double>(draws.size())));
}

TEST_CASE("conjugate inverse-Wishart draw for the unstructured covariance") {
  Rng rng(558);
  Eigen::VectorXd beta(5);
  beta << 0.5, -0.3, 0.8, 0.0, -0.6;
  CovarianceSpec spec;
  spec.variant = CovarianceKind::UnstructuredIW;
  const Eigen::MatrixXd S =
      Eigen::MatrixXd::Identity(5, 5) + beta * beta.transpose();
  const Eigen::MatrixXd S_inv = S.inverse();

  const int n = 40000;
  Eigen::MatrixXd mean_inv = Eigen::MatrixXd::Zero(5, 5);
  std::vector<double> w11(n);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd sigma = gibbs_update_Sigma_blocks(beta, spec, rng);
    const Eigen::MatrixXd inv = sigma.inverse();
    mean_inv += inv;
    w11[k] = inv(0, 0) / S_inv(0, 0);
  }
  mean_inv /= static_cast<double>(n);
  // X ~ IW(6, S) means X^-1 ~ Wishart(6, S^-1) with mean 6 S^-1.
  CHECK((mean_inv - 6.0 * S_inv).cwiseAbs().maxCoeff() <
        0.02 * (6.0 * S_inv).cwiseAbs().maxCoeff());
  // Marginal of a Wishart diagonal entry: W_11 / V_11 ~ chi^2_6.
  const double ks = testutil::ks_statistic(
      w11, [](double x) { return testutil::chi_squared_cdf(x, 6.0); });
  CHECK(ks < 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("conjugate inverse-Wishart draw for the block-diagonal covariance") {
  Rng rng(559);
  Eigen::VectorXd beta(5);
  beta << 0.5, -0.3, 0.8, 0.0, -0.6;
  CovarianceSpec spec;
  spec.variant = CovarianceKind::BlockDiagonal;
  const Eigen::MatrixXd Sp =
      Eigen::MatrixXd::Identity(2, 2) + beta.head(2) * beta.head(2).transpose();
  const Eigen::MatrixXd Sn =
      Eigen::MatrixXd::Identity(3, 3) + beta.tail(3) * beta.tail(3).transpose();

  const int n = 40000;
  Eigen::MatrixXd mean_inv_p = Eigen::MatrixXd::Zero(2, 2);
  Eigen::MatrixXd mean_inv_n = Eigen::MatrixXd::Zero(3, 3);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd sigma = gibbs_update_Sigma_blocks(beta, spec, rng);
    // Cross-group cells are exactly zero, not merely small.
    CHECK(sigma.block(0, 2, 2, 3).cwiseAbs().maxCoeff() == 0.0);
    mean_inv_p += sigma.topLeftCorner(2, 2).inverse();
    mean_inv_n += sigma.bottomRightCorner(3, 3).inverse();
  }
  mean_inv_p /= static_cast<double>(n);
  mean_inv_n /= static_cast<double>(n);
  CHECK((mean_inv_p - 3.0 * Sp.inverse()).cwiseAbs().maxCoeff() < 0.05);
  CHECK((mean_inv_n - 4.0 * Sn.inverse()).cwiseAbs().maxCoeff() < 0.05);

  spec.variant = CovarianceKind::Diagonal;
  CHECK_THROWS_AS(gibbs_update_Sigma_blocks(beta, spec, rng), ValidationError);
  spec.variant = CovarianceKind::StructuredOffset;
  CHECK_THROWS_AS(gibbs_update_Sigma_blocks(beta, spec, rng), ValidationError);
}

TEST_CASE("scalar Metropolis targets a standard normal") {
  Rng rng(560);
  auto log_target = [](double x) { return -0.5 * x * x; };
  double x = 0.0;
  const int n = 100000;
  std::vector<double> draws(n);
  int accepted = 0;
  for (int k = 0; k < n; ++k) {
    const MhScalarResult r = mh_update_scalar(x, log_target, 2.4, rng);
    x = r.value;
    accepted += r.accepted ? 1 : 0;
    draws[k] = x;
  }
  CHECK(std::fabs(testutil::mean(draws)) < 0.03);
  CHECK(testutil::variance(draws) == doctest::Approx(1.0).epsilon(0.05));
  const double rate = static_cast<double>(accepted) / n;
  CHECK(rate > 0.3);
  CHECK(rate < 0.6);
}

TEST_CASE("Metropolis support handling") {
  Rng rng(561);
  auto positive_only = [](double x) { return x > 0.0 ? -x : -std::numeric_limits<double>::infinity(); };
  // Starting outside the support is a hard error...
  CHECK_THROWS_AS(mh_update_scalar(-1.0, positive_only, 0.5, rng), SamplerError);
  // ...while proposals outside it are silently rejected.
  double x = 0.05;
  for (int k = 0; k < 2000; ++k) {
    x = mh_update_scalar(x, positive_only, 1.0, rng).value;
    REQUIRE(x > 0.0);
  }

  Eigen::VectorXd v(2);
  v << -1.0, 0.0;
  auto block_positive = [](const Eigen::VectorXd& y) {
    return y[0] > 0.0 ? -y.squaredNorm() : -std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(mh_update_block(v, block_positive, 0.5, rng), SamplerError);
}

TEST_CASE("hierarchical centring transform round-trips") {
  Rng rng(562);
  const testutil::TinyInstance t = testutil::make_tiny_instance(5, rng);
  const ParameterState centred =
      hierarchical_centring_transform(t.state, CentringDirection::ToCentred);
  // Positive-group slots carry theta+ = 0 and are untouched bit-for-bit.
  CHECK(centred.beta[0] == t.state.beta[0]);
  CHECK(centred.beta[1] == t.state.beta[1]);
  for (int j = 2; j < 5; ++j) {
    CHECK(centred.beta[j] == doctest::Approx(t.state.beta[j] + t.state.theta_minus));
  }
  const ParameterState back =
      hierarchical_centring_transform(centred, CentringDirection::FromCentred);
  CHECK((back.beta - t.state.beta).cwiseAbs().maxCoeff() < 1e-15);
}

namespace {

SamplerConfig tiny_config() {
  SamplerConfig c;
  c.n_chains = 2;
  c.n_iterations = 600;
  c.burn_in = 200;
  c.thin = 20;
  c.seed = 99;
  return c;
}

}  // namespace

TEST_CASE("chains are deterministic in the seed and distinct across ids") {
  Rng rng(563);
  for (int which : {4, 3}) {  // a two-level diagonal and a structured-offset case
    const testutil::TinyInstance t = testutil::make_tiny_instance(which, rng);
    const SamplerConfig config = tiny_config();

    const ChainOutput a = run_chain(t.data, config, 0);
    const ChainOutput b = run_chain(t.data, config, 0);
    const ChainOutput c = run_chain(t.data, config, 1);
    REQUIRE(a.draws.size() == static_cast<std::size_t>(config.n_stored()));
    REQUIRE(a.deviance.size() == a.draws.size());

    bool differs = false;
    for (std::size_t k = 0; k < a.draws.size(); ++k) {
      CHECK((a.draws[k].H - b.draws[k].H).cwiseAbs().maxCoeff() == 0.0);
      CHECK((a.draws[k].alpha - b.draws[k].alpha).cwiseAbs().maxCoeff() == 0.0);
      CHECK(a.deviance[k] == b.deviance[k]);
      if (a.deviance[k] != c.deviance[k]) differs = true;
    }
    CHECK(differs);  // a different chain id uses a different stream
  }
}

TEST_CASE("run_chains reproduces per-chain runs in chain order") {
  Rng rng(564);
  const testutil::TinyInstance t = testutil::make_tiny_instance(4, rng);
  const SamplerConfig config = tiny_config();
  const std::vector<ChainOutput> all = run_chains(t.data, config);
  REQUIRE(all.size() == 2);
  for (int chain = 0; chain < 2; ++chain) {
    CHECK(all[chain].chain_id == chain);
    const ChainOutput solo = run_chain(t.data, config, chain);
    REQUIRE(all[chain].draws.size() == solo.draws.size());
    for (std::size_t k = 0; k < solo.draws.size(); ++k) {
      CHECK(all[chain].deviance[k] == solo.deviance[k]);
      CHECK((all[chain].draws[k].H - solo.draws[k].H).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("stored draws satisfy the model's structural constraints") {
  Rng rng(565);
  for (int which = 0; which < 8; ++which) {
    const testutil::TinyInstance t = testutil::make_tiny_instance(which, rng);
    SamplerConfig config = tiny_config();
    config.n_chains = 1;
    const ChainOutput out = run_chain(t.data, config, 0);
    for (const ParameterState& d : out.draws) {
      CHECK(d.sigma_H2 > 0.0);
      CHECK(std::isfinite(joint_log_posterior(d, t.data)));
      if (t.data.spec.covariance.variant == CovarianceKind::BlockDiagonal) {
        CHECK(d.Sigma.block(0, 2, 2, 3).cwiseAbs().maxCoeff() == 0.0);
      }
      if (t.data.spec.covariance.variant == CovarianceKind::StructuredOffset) {
        CHECK((d.Sigma.block(0, 2, 2, 3).array() - d.varsigma).abs().maxCoeff() <
              1e-9);
      }
    }
    // Deviance is stored alongside each draw, recomputable from it.
    for (std::size_t k = 0; k < out.draws.size(); ++k) {
      CHECK(out.deviance[k] ==
            doctest::Approx(-2.0 * total_metric_loglik(out.draws[k], t.data))
                .epsilon(1e-12));
    }
  }
}

TEST_CASE("both centring modes sample and adaptation freezes after burn-in") {
  Rng rng(566);
  const testutil::TinyInstance t = testutil::make_tiny_instance(4, rng);
  SamplerConfig config = tiny_config();
  config.n_chains = 1;
  config.hierarchical_centring = false;
  const ChainOutput non_centred = run_chain(t.data, config, 0);
  CHECK(non_centred.draws.size() == static_cast<std::size_t>(config.n_stored()));

  config.hierarchical_centring = true;
  const ChainOutput centred = run_chain(t.data, config, 0);
  // Reported proposal scales are the frozen post-burn-in values: rerunning
  // with more post-burn-in iterations must not change them.
  SamplerConfig longer = config;
  longer.n_iterations = config.n_iterations + 400;
  const ChainOutput more = run_chain(t.data, longer, 0);
  REQUIRE(centred.proposal_scales.size() == more.proposal_scales.size());
  for (std::size_t i = 0; i < centred.proposal_scales.size(); ++i) {
    CHECK(centred.proposal_scales[i].first == more.proposal_scales[i].first);
    CHECK(centred.proposal_scales[i].second == more.proposal_scales[i].second);
  }
  for (const auto& [name, scale] : centred.proposal_scales) {
    CHECK(scale > 0.0);
    CHECK(std::isfinite(scale));
  }
  CHECK_FALSE(centred.acceptance_rates.empty());
  for (const auto& [name, rate] : centred.acceptance_rates) {
    CHECK(rate >= 0.0);
    CHECK(rate <= 1.0);
  }
}
