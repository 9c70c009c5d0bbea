#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lhfi/model.hpp"
#include "lhfi/sampler.hpp"

namespace lhfi {

// How a raw covariate column is laid out across sites.
struct CovariateScheme {
  enum class Kind {
    Grid,     // equally spaced from lo to hi in site-id order
    Uniform,  // iid U(lo, hi)
  };

  std::string name;
  Kind kind = Kind::Grid;
  double lo = 0.0;
  double hi = 1.0;
};

// Everything needed to simulate a survey data set from known parameters.
//
// `truth` supplies the generative coefficients and variances; its H, beta and
// delta slots are overwritten by generate() with the realized values so that
// recovery studies can compare against exactly what produced the counts.
struct SynthDesign {
  int n_sites = 18;
  int replicates = 3;
  long cardinality_min = 200;
  long cardinality_max = 2000;
  std::vector<CovariateScheme> schemes;
  ModelSpec spec;
  ParameterState truth;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthData {
  std::vector<SiteObservation> observations;
  CovariateTable table;
  ParameterState truth;  // realized: includes generated H, beta, delta
};

// Simulates counts, covariates and latent values for the given design.
//
// The latent means are computed from the *centred* covariates exactly as a
// subsequent fit will see them (same token resolution, same centring), so the
// coefficients in `truth` are recoverable without any reparameterization gap.
SynthData generate(const SynthDesign& design);

// The 18-site / 3-replicate benchmark used throughout the test suite.
// Distance downstream runs on a grid wide enough that the induced
// sal-DD correlation is about 0.88.
SynthDesign default_benchmark_design();

// Coverage bookkeeping for one reported parameter across replications.
struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  int covered = 0;    // replications whose 95% CI contained `truth`
  int attempted = 0;  // replications that produced a summary for this row
  double mean_ci_width = 0.0;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;
  int n_replications = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;

  const RecoveryRow& row(const std::string& name) const;
};

// Repeatedly simulates from `design`, fits `fit_spec`, and tallies 95% CI
// coverage of the generative values. The fitted spec may differ from the
// design's spec (e.g. to study misspecification); coefficients of covariates
// absent from the generative regression count as truth 0.
RecoveryReport recovery_study(const SynthDesign& design, const ModelSpec& fit_spec,
                              const SamplerConfig& config, int n_replications);

}  // namespace lhfi
