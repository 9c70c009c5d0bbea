#pragma once

#include <string>
#include <vector>

#include "lhfi/covariates.hpp"
#include "lhfi/model.hpp"
#include "lhfi/sampler.hpp"
#include "lhfi/synth.hpp"

namespace lhfi {

// Fully resolved run description: file locations, the model to fit, sampler
// settings and output options.  Assembled from a JSON config file, an
// optional named preset, and command-line overrides.
struct RunConfig {
  std::string counts_csv;
  std::string covariates_csv;
  std::string geometry_csv;  // empty = no geometry available
  std::string output_dir = "lhfi_out";
  int west_anchor = -1;  // site ids anchoring the downstream axis; -1 = unset
  int east_anchor = -1;

  ModelSpec spec;
  SamplerConfig sampler;

  std::vector<double> ci_levels;  // merged with the standard 0.8/0.95/0.99
  bool write_trace = true;
  bool write_bgr = true;

  void validate() const;
};

struct IngestResult {
  std::vector<SiteObservation> observations;
  CovariateTable table;
  std::vector<SiteGeometry> geometry;  // empty when no geometry file given
};

/// Reads and validates the raw CSV inputs.  Counts: site, replicate, m1..m5,
/// cardinality.  Covariates: site plus one column per covariate.  Geometry:
/// site, easting, northing.  Violations raise ValidationError naming the file,
/// row and column; unreadable files raise IoError.
IngestResult ingest(const std::string& counts_csv, const std::string& covariates_csv,
                    const std::string& geometry_csv = "");

/// Reads a site,easting,northing CSV on its own (the `dd` subcommand needs
/// geometry without the rest of the inputs).
std::vector<SiteGeometry> read_geometry(const std::string& path);

/// Applies one of the named model presets (model1..model5) to a ModelSpec:
///   model1  two-level sal-on-DD, diagonal covariance, independent prior
///   model2  model1 with correlated (alpha_sal, alpha_DD)
///   model3  model1 plus log depth, log silt-clay and their interaction
///   model4  single level, DD only
///   model5  single level, salinity only
void apply_preset(const std::string& name, ModelSpec* spec);

/// Loads a flat key-value JSON config.  `preset` (may be empty) is applied
/// before the file's own model keys so the file can override preset fields.
RunConfig load_run_config(const std::string& path, const std::string& preset);

/// Loads a flat key-value JSON synthetic-data design.
SynthDesign load_design(const std::string& path);

/// End-to-end fit: ingest, engineer covariates, sample, diagnose, and write
/// summary.csv, health.csv, dic.txt, bgr.csv, trace.csv and centring.csv to
/// the output directory.  All writes are write-then-rename; on failure every
/// artifact of this run is removed before the error propagates.
void run(const RunConfig& config);

/// Writes a generated data set as counts.csv / covariates.csv in the `fit`
/// input formats, plus truth.csv with the generative parameter values.
void write_dataset(const SynthData& data, const ModelSpec& spec, const std::string& out_dir);

}  // namespace lhfi
