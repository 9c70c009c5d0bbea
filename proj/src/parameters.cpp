#include "lhfi/parameters.hpp"

#include <cmath>

namespace lhfi {

std::vector<ParameterEntry> summary_layout(const ModelData& data) {
  std::vector<ParameterEntry> out;
  const auto& reg = data.spec.regression;
  const bool two_level = reg.two_level();

  out.push_back({"alpha_0", [](const ParameterState& s) { return s.alpha0; }});
  for (int c = 0; c < data.n_latent_covariates(); ++c) {
    out.push_back({"alpha_" + display_name(data.covariate_tokens[c]),
                   [c](const ParameterState& s) { return s.alpha[c]; }});
  }
  if (two_level) {
    const int dd = data.n_alpha() - 1;
    out.push_back({"alpha_DD", [dd](const ParameterState& s) { return s.alpha[dd]; }});
    if (reg.correlated()) {
      out.push_back({"rho", [](const ParameterState& s) { return s.rho; }});
    }
  }
  out.push_back({"theta_2", [](const ParameterState& s) { return s.theta_minus; }});
  out.push_back({"sigma_H",
                 [](const ParameterState& s) { return std::sqrt(s.sigma_H2); }});
  if (two_level) {
    out.push_back({"sigma_delta",
                   [](const ParameterState& s) { return std::sqrt(s.sigma_delta2); }});
  }
  switch (data.spec.covariance.variant) {
    case CovarianceKind::Diagonal:
      out.push_back({"sigma_beta",
                     [](const ParameterState& s) { return std::sqrt(s.sigma_beta2); }});
      break;
    case CovarianceKind::UnstructuredIW:
    case CovarianceKind::BlockDiagonal:
    case CovarianceKind::StructuredOffset:
      for (int i = 0; i < kNumMetrics; ++i) {
        for (int j = i; j < kNumMetrics; ++j) {
          out.push_back({"Sigma_" + std::to_string(i + 1) + "_" + std::to_string(j + 1),
                         [i, j](const ParameterState& s) { return s.Sigma(i, j); }});
        }
      }
      if (data.spec.covariance.variant == CovarianceKind::StructuredOffset) {
        out.push_back({"varsigma", [](const ParameterState& s) { return s.varsigma; }});
      }
      break;
  }
  if (two_level) {
    const int resp = data.response_column;
    out.push_back({"variance_ratio", [resp](const ParameterState& s) {
                     return variance_ratio(s.sigma_H2, s.alpha[resp], s.sigma_delta2);
                   }});
  }
  for (int i = 0; i < data.n_sites(); ++i) {
    out.push_back({"H_" + std::to_string(data.site_ids[i]),
                   [i](const ParameterState& s) { return s.H[i]; }});
  }
  return out;
}

std::vector<ParameterEntry> trace_layout(const ModelData& data) {
  std::vector<ParameterEntry> out = summary_layout(data);
  for (int j = 0; j < kNumMetrics; ++j) {
    out.push_back({"beta_" + std::to_string(j + 1),
                   [j](const ParameterState& s) { return s.beta[j]; }});
  }
  return out;
}

std::vector<ParameterDraws> collect_draws(const std::vector<ParameterEntry>& layout,
                                          const std::vector<ChainOutput>& chains) {
  std::vector<ParameterDraws> out(layout.size());
  for (std::size_t p = 0; p < layout.size(); ++p) {
    out[p].name = layout[p].name;
    out[p].chains.resize(chains.size());
    for (std::size_t c = 0; c < chains.size(); ++c) {
      out[p].chains[c].reserve(chains[c].draws.size());
      for (const ParameterState& s : chains[c].draws) {
        out[p].chains[c].push_back(layout[p].extract(s));
      }
    }
  }
  return out;
}

}  // namespace lhfi
