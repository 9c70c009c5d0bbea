#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lhfi/diagnostics.hpp"
#include "lhfi/model.hpp"
#include "lhfi/sampler.hpp"

namespace lhfi {

/// One reportable scalar: a display name plus its extractor from a draw.
struct ParameterEntry {
  std::string name;
  std::function<double(const ParameterState&)> extract;
};

/// Scalars reported in summary.csv, in report order: alpha_0, the latent
/// coefficients (abbreviated display names: sal, DD, dep, ...), alpha_DD /
/// rho for two-level variants, theta_2, the standard deviations, covariance
/// entries as the variant exposes them, the per-draw variance ratio, then
/// per-site health. Metric effects beta are traced but not summarized.
std::vector<ParameterEntry> summary_layout(const ModelData& data);

/// Everything in summary_layout plus beta_1..beta_5.
std::vector<ParameterEntry> trace_layout(const ModelData& data);

/// Applies each extractor to every stored draw, preserving chain boundaries,
/// so the result feeds straight into summarize().
std::vector<ParameterDraws> collect_draws(const std::vector<ParameterEntry>& layout,
                                          const std::vector<ChainOutput>& chains);

}  // namespace lhfi
