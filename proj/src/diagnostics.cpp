#include "lhfi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lhfi {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double quantile_inverse_ecdf(std::vector<double> values, double p) {
  if (values.empty()) throw ValidationError("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("quantile: p outside [0,1]");
  std::sort(values.begin(), values.end());
  const double np = static_cast<double>(values.size()) * p;
  std::size_t k = static_cast<std::size_t>(std::ceil(np));
  if (k < 1) k = 1;
  if (k > values.size()) k = values.size();
  return values[k - 1];
}

namespace {

// 80% interval width over one window of each chain ([begin, end) draw
// indices), pooled and mean-within.
std::pair<double, double> interval_widths(
    const std::vector<std::vector<double>>& chains, std::size_t begin,
    std::size_t end) {
  std::vector<double> pooled;
  pooled.reserve(chains.size() * (end - begin));
  double within = 0.0;
  for (const auto& chain : chains) {
    std::vector<double> window(chain.begin() + begin, chain.begin() + end);
    pooled.insert(pooled.end(), window.begin(), window.end());
    within += quantile_inverse_ecdf(window, 0.9) - quantile_inverse_ecdf(window, 0.1);
  }
  within /= static_cast<double>(chains.size());
  const double pw =
      quantile_inverse_ecdf(pooled, 0.9) - quantile_inverse_ecdf(pooled, 0.1);
  return {pw, within};
}

}  // namespace

BgrResult bgr_statistic(const std::vector<std::vector<double>>& chains,
                        int curve_points) {
  if (chains.size() < 2) {
    throw ValidationError("bgr_statistic: need at least 2 chains");
  }
  const std::size_t n = chains[0].size();
  for (const auto& c : chains) {
    if (c.size() != n) {
      throw ValidationError("bgr_statistic: chains must have equal lengths");
    }
  }
  if (n < 10) throw ValidationError("bgr_statistic: need at least 10 draws per chain");
  if (curve_points < 1) curve_points = 1;

  BgrResult out;
  const std::size_t min_prefix = 10;
  for (int k = 0; k < curve_points; ++k) {
    // Prefix ends spaced evenly from min_prefix to n, always ending at n.
    const std::size_t prefix =
        curve_points == 1
            ? n
            : min_prefix + (n - min_prefix) * static_cast<std::size_t>(k) /
                               (static_cast<std::size_t>(curve_points) - 1);
    const std::size_t begin = prefix / 2;  // second half of the prefix
    auto [pooled, within] = interval_widths(chains, begin, prefix);
    BgrPoint point;
    point.prefix_end = static_cast<long>(prefix);
    point.pooled_width = pooled;
    point.within_width = within;
    if (within > 0.0) {
      point.ratio = pooled / within;
    } else {
      point.ratio = pooled == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    if (out.curve.empty() || out.curve.back().prefix_end != point.prefix_end) {
      out.curve.push_back(point);
    }
  }

  const BgrPoint& last = out.curve.back();
  if (last.within_width == 0.0) {
    throw DegenerateSampleError(
        "bgr_statistic: zero within-chain interval width");
  }
  out.pooled_width = last.pooled_width;
  out.within_width = last.within_width;
  // Sampling noise can push the raw ratio a hair under 1 for well-mixed
  // chains; R-hat below 1 carries no information, so floor it.
  out.r_hat = std::max(1.0, last.pooled_width / last.within_width);
  return out;
}

DicResult dic(const std::vector<double>& deviance_draws, double deviance_at_mean) {
  if (deviance_draws.empty()) throw ValidationError("dic: no deviance draws");
  DicResult out;
  out.mean_deviance =
      std::accumulate(deviance_draws.begin(), deviance_draws.end(), 0.0) /
      static_cast<double>(deviance_draws.size());
  out.p_d = out.mean_deviance - deviance_at_mean;
  out.dic = out.mean_deviance + out.p_d;
  return out;
}

const CredibleInterval& PosteriorSummary::interval(double level) const {
  for (const auto& ci : intervals) {
    if (ci.level == level) return ci;
  }
  throw ValidationError("no credible interval at level " + std::to_string(level) +
                        " for parameter " + name);
}

std::vector<PosteriorSummary> summarize(const std::vector<ParameterDraws>& draws,
                                        const std::vector<double>& levels) {
  std::vector<PosteriorSummary> out;
  out.reserve(draws.size());
  for (const auto& par : draws) {
    std::vector<double> pooled;
    for (const auto& chain : par.chains) {
      pooled.insert(pooled.end(), chain.begin(), chain.end());
    }
    if (pooled.empty()) {
      throw ValidationError("summarize: no draws for parameter " + par.name);
    }
    PosteriorSummary s;
    s.name = par.name;
    s.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) /
             static_cast<double>(pooled.size());
    s.median = quantile(pooled, 0.5);
    for (double level : levels) {
      if (!(level > 0.0 && level < 1.0)) {
        throw ValidationError("summarize: credible level outside (0,1)");
      }
      CredibleInterval ci;
      ci.level = level;
      ci.lower = quantile(pooled, 0.5 * (1.0 - level));
      ci.upper = quantile(pooled, 0.5 * (1.0 + level));
      ci.excludes_zero = ci.lower > 0.0 || ci.upper < 0.0;
      s.intervals.push_back(ci);
    }
    if (par.chains.size() >= 2) {
      try {
        const BgrResult bgr = bgr_statistic(par.chains, 1);
        s.r_hat = bgr.r_hat;
        s.pooled_width80 = bgr.pooled_width;
        s.within_width80 = bgr.within_width;
      } catch (const DegenerateSampleError&) {
        // Structurally constant parameters (e.g. the zero cross-block of a
        // block-diagonal Sigma) have no spread to compare.
        s.r_hat = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      s.r_hat = std::numeric_limits<double>::quiet_NaN();
      s.pooled_width80 =
          quantile_inverse_ecdf(pooled, 0.9) - quantile_inverse_ecdf(pooled, 0.1);
      s.within_width80 = s.pooled_width80;
    }
    out.push_back(std::move(s));
  }
  return out;
}

HealthRanking rank_sites(const std::vector<SiteHealth>& sites) {
  HealthRanking out;
  out.ordered = sites;
  std::sort(out.ordered.begin(), out.ordered.end(),
            [](const SiteHealth& a, const SiteHealth& b) {
              if (a.mean != b.mean) return a.mean > b.mean;
              return a.site_id < b.site_id;
            });
  for (std::size_t i = 0; i < out.ordered.size(); ++i) {
    for (std::size_t j = i + 1; j < out.ordered.size(); ++j) {
      const SiteHealth& a = out.ordered[i];
      const SiteHealth& b = out.ordered[j];
      if (a.lower > b.upper || b.lower > a.upper) {
        out.distinguishable.emplace_back(std::min(a.site_id, b.site_id),
                                         std::max(a.site_id, b.site_id));
      }
    }
  }
  std::sort(out.distinguishable.begin(), out.distinguishable.end());
  return out;
}

}  // namespace lhfi
