#pragma once

#include <string>
#include <vector>

#include "lhfi/errors.hpp"

namespace lhfi {

/// Raised when a diagnostic needs spread that the sample does not have
/// (e.g. zero within-chain interval width in the BGR statistic).
class DegenerateSampleError : public SamplerError {
 public:
  explicit DegenerateSampleError(const std::string& msg) : SamplerError(msg) {}
};

struct BgrPoint {
  long prefix_end = 0;       // draws per chain included
  double pooled_width = 0.0; // 80% interval width, chains pooled
  double within_width = 0.0; // mean per-chain 80% interval width
  double ratio = 1.0;
};

struct BgrResult {
  double r_hat = 1.0;
  double pooled_width = 0.0;
  double within_width = 0.0;
  std::vector<BgrPoint> curve;  // over growing prefixes, last = full length
};

/// Brooks-Gelman interval form of R-hat: the ratio of the pooled 80%
/// interval width to the mean within-chain width, computed over the second
/// half of each growing prefix.  Interval endpoints use inverse-ecdf
/// quantiles, which make duplicated chains give a ratio of exactly 1; the
/// final ratio is floored at 1.
BgrResult bgr_statistic(const std::vector<std::vector<double>>& chains,
                        int curve_points = 20);

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double mean_deviance = 0.0;
};

/// DIC = D-bar + p_D with p_D = D-bar - D(posterior mean); deviance is
/// -2 x the metric-level log-likelihood.
DicResult dic(const std::vector<double>& deviance_draws, double deviance_at_mean);

struct CredibleInterval {
  double level = 0.95;
  double lower = 0.0;
  double upper = 0.0;
  bool excludes_zero = false;
};

struct PosteriorSummary {
  std::string name;
  double mean = 0.0;
  double median = 0.0;
  std::vector<CredibleInterval> intervals;  // one per requested level
  double r_hat = 0.0;              // NaN when only one chain
  double pooled_width80 = 0.0;     // BGR numerator at full length
  double within_width80 = 0.0;     // BGR denominator at full length

  const CredibleInterval& interval(double level) const;
};

struct ParameterDraws {
  std::string name;
  std::vector<std::vector<double>> chains;  // post burn-in, thinned
};

/// Pooled mean/median, equal-tailed quantile intervals at each level, and
/// the BGR statistic per parameter.  Default levels 0.8/0.95/0.99.
std::vector<PosteriorSummary> summarize(
    const std::vector<ParameterDraws>& draws,
    const std::vector<double>& levels = {0.8, 0.95, 0.99});

struct SiteHealth {
  int site_id = 0;
  double mean = 0.0;
  double lower = 0.0;  // 95% CI
  double upper = 0.0;
};

struct HealthRanking {
  std::vector<SiteHealth> ordered;  // best (highest mean) first
  std::vector<std::pair<int, int>> distinguishable;  // site-id pairs with disjoint CIs
};

/// Sites sorted by posterior mean health (descending, ties by site_id), with
/// the list of pairs whose CIs do not overlap.
HealthRanking rank_sites(const std::vector<SiteHealth>& sites);

/// Equal-tailed interpolated sample quantile (the common "type 7" rule) on a
/// copy of the data.
double quantile(std::vector<double> values, double p);

/// Inverse-ecdf sample quantile ("type 1"); invariant under duplication of
/// the sample, which the BGR identical-chain identity requires.
double quantile_inverse_ecdf(std::vector<double> values, double p);

}  // namespace lhfi
