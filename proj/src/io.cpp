#include "lhfi/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <unordered_map>
#include <utility>

#include <json.hpp>

#include "lhfi/diagnostics.hpp"
#include "lhfi/errors.hpp"
#include "lhfi/parameters.hpp"

namespace fs = std::filesystem;

namespace lhfi {

namespace {

using json = nlohmann::ordered_json;

int log_level() {
  const char* v = std::getenv("LHFI_LOG");
  if (v == nullptr) return 1;
  const std::string s(v);
  if (s == "0" || s == "quiet" || s == "silent") return 0;
  return 1;
}

void note(const std::string& msg) {
  if (log_level() > 0) std::cerr << "lhfi: " << msg << "\n";
}

// Rethrows any library error with a stage prefix so failures are attributable
// from the exit message alone.  Derived error types collapse to their exit
// category, which is all the caller distinguishes.
template <typename Fn>
auto with_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError("[" + stage + "] " + e.what());
  } catch (const IoError& e) {
    throw IoError("[" + stage + "] " + e.what());
  } catch (const InitializationError& e) {
    throw InitializationError("[" + stage + "] " + e.what());
  } catch (const SamplerError& e) {
    throw SamplerError("[" + stage + "] " + e.what());
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.push_back("");
  return out;
}

// ---------------------------------------------------------------------------
// CSV reading

struct Csv {
  std::string name;  // basename, used in error messages
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& col) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == col) return static_cast<int>(i);
    }
    throw ValidationError(name + ": missing column '" + col + "'");
  }
};

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  Csv csv;
  csv.name = fs::path(path).filename().string();
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(line, ',');
    if (!have_header) {
      csv.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != csv.header.size()) {
      throw ValidationError(csv.name + " row " + std::to_string(csv.rows.size() + 1) +
                            ": expected " + std::to_string(csv.header.size()) +
                            " fields, got " + std::to_string(fields.size()));
    }
    csv.rows.push_back(std::move(fields));
  }
  if (!have_header) throw ValidationError(csv.name + ": empty file");
  return csv;
}

std::string cell_address(const Csv& csv, std::size_t row, int col) {
  return csv.name + " row " + std::to_string(row + 1) + ", column '" + csv.header[col] + "'";
}

double parse_double(const Csv& csv, std::size_t row, int col) {
  const std::string& s = csv.rows[row][col];
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(cell_address(csv, row, col) + ": '" + s + "' is not a number");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw ValidationError(cell_address(csv, row, col) + ": '" + s + "' is not a finite number");
  }
  return v;
}

long parse_long(const Csv& csv, std::size_t row, int col) {
  const std::string& s = csv.rows[row][col];
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(cell_address(csv, row, col) + ": '" + s + "' is not an integer");
  }
  if (used != s.size()) {
    throw ValidationError(cell_address(csv, row, col) + ": '" + s + "' is not an integer");
  }
  return v;
}

// ---------------------------------------------------------------------------
// Atomic artifact writing

class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) {
      throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path tmp = dir_ / (name + ".tmp");
    const fs::path target = dir_ / name;
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
      out << content;
      out.flush();
      if (!out) {
        std::error_code ec;
        fs::remove(tmp, ec);
        throw IoError("failed while writing '" + tmp.string() + "'");
      }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
      fs::remove(tmp, ec);
      throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
    written_.push_back(target);
  }

  // Failure path: a run either completes with every artifact in place or
  // leaves none of this run's files behind.
  void discard_all() {
    for (const fs::path& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
    written_.clear();
  }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
};

// ---------------------------------------------------------------------------
// JSON config plumbing

json parse_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " '" + path + "'");
  try {
    return json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + " '" + path + "': " + e.what());
  }
}

// Pulls typed values out of a flat JSON object while recording which keys
// were consumed, so leftovers can be reported as typos.
class FlatConfig {
 public:
  FlatConfig(json doc, std::string what) : doc_(std::move(doc)), what_(std::move(what)) {
    if (!doc_.is_object()) throw ValidationError(what_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return doc_.contains(key); }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    if (!doc_.contains(key)) return std::nullopt;
    used_.insert(key);
    try {
      return doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(what_ + ": key '" + key + "' has the wrong type");
    }
  }

  template <typename T>
  void read(const std::string& key, T* into) {
    if (auto v = get<T>(key)) *into = *v;
  }

  // Keys in document order whose names start with `prefix` (for scheme_*).
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (it.key().rfind(prefix, 0) == 0) out.push_back(it.key());
    }
    return out;
  }

  void reject_unknown() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!used_.count(it.key())) {
        throw ValidationError(what_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  json doc_;
  std::string what_;
  std::set<std::string> used_;
};

std::vector<std::string> split_list(const std::string& value, const std::string& what) {
  std::vector<std::string> out;
  for (const std::string& item : split(value, ',')) {
    if (item.empty()) throw ValidationError(what + " contains an empty entry");
    out.push_back(item);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& value, const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split_list(value, what)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError(what + ": '" + item + "' is not a number");
    }
    if (used != item.size() || !std::isfinite(v)) {
      throw ValidationError(what + ": '" + item + "' is not a finite number");
    }
    out.push_back(v);
  }
  return out;
}

void read_model_keys(FlatConfig& cfg, ModelSpec* spec) {
  if (auto v = cfg.get<std::string>("model_covariates")) {
    spec->regression.covariate_names = split_list(*v, "model_covariates");
  }
  if (auto v = cfg.get<std::string>("covariance")) {
    spec->covariance.variant = covariance_kind_from_string(*v);
  }
  if (auto v = cfg.get<std::string>("level")) {
    spec->regression.level = covariate_level_from_string(*v);
  }
  cfg.read("upstream_response", &spec->regression.upstream_response);
  cfg.read("upstream_driver", &spec->regression.upstream_driver);
  if (auto v = cfg.get<std::string>("coefficient_prior")) {
    spec->regression.coefficient_prior = coefficient_prior_from_string(*v);
  }
}

void read_sampler_keys(FlatConfig& cfg, SamplerConfig* s) {
  cfg.read("n_chains", &s->n_chains);
  cfg.read("n_iterations", &s->n_iterations);
  cfg.read("burn_in", &s->burn_in);
  cfg.read("thin", &s->thin);
  cfg.read("seed", &s->seed);
  cfg.read("adapt_window", &s->adapt_window);
  cfg.read("target_accept", &s->target_accept);
  cfg.read("target_accept_block", &s->target_accept_block);
  cfg.read("hierarchical_centring", &s->hierarchical_centring);
}

// Base column names a token pulls from the covariate table.
void collect_base_columns(const std::string& token, std::set<std::string>* out) {
  for (const std::string& factor : split(token, '*')) {
    if (factor.rfind("log_", 0) == 0) {
      out->insert(factor.substr(4));
    } else {
      out->insert(factor);
    }
  }
}

std::set<std::string> required_columns(const ModelSpec& spec) {
  std::set<std::string> out;
  for (const std::string& token : spec.regression.covariate_names) {
    collect_base_columns(token, &out);
  }
  if (spec.regression.two_level()) {
    collect_base_columns(spec.regression.upstream_response, &out);
    collect_base_columns(spec.regression.upstream_driver, &out);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ingestion

std::vector<SiteGeometry> read_geometry(const std::string& path) {
  Csv csv = read_csv(path);
  const int c_site = csv.column("site");
  const int c_east = csv.column("easting");
  const int c_north = csv.column("northing");
  std::vector<SiteGeometry> out;
  std::set<int> seen;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    SiteGeometry g;
    g.site_id = static_cast<int>(parse_long(csv, r, c_site));
    g.easting = parse_double(csv, r, c_east);
    g.northing = parse_double(csv, r, c_north);
    if (!seen.insert(g.site_id).second) {
      throw ValidationError(csv.name + " row " + std::to_string(r + 1) + ": duplicate site " +
                            std::to_string(g.site_id));
    }
    out.push_back(g);
  }
  return out;
}

IngestResult ingest(const std::string& counts_csv, const std::string& covariates_csv,
                    const std::string& geometry_csv) {
  IngestResult result;

  Csv counts = read_csv(counts_csv);
  const int c_site = counts.column("site");
  const int c_rep = counts.column("replicate");
  const int c_card = counts.column("cardinality");
  int c_metric[kNumMetrics];
  for (int j = 0; j < kNumMetrics; ++j) {
    c_metric[j] = counts.column("m" + std::to_string(j + 1));
  }
  std::set<std::pair<int, int>> keys;
  for (std::size_t r = 0; r < counts.rows.size(); ++r) {
    SiteObservation obs;
    obs.site_id = static_cast<int>(parse_long(counts, r, c_site));
    obs.replicate_id = static_cast<int>(parse_long(counts, r, c_rep));
    for (int j = 0; j < kNumMetrics; ++j) obs.counts[j] = parse_long(counts, r, c_metric[j]);
    obs.cardinality = parse_long(counts, r, c_card);
    if (!keys.insert({obs.site_id, obs.replicate_id}).second) {
      throw ValidationError(counts.name + " row " + std::to_string(r + 1) +
                            ": duplicate site " + std::to_string(obs.site_id) + " replicate " +
                            std::to_string(obs.replicate_id));
    }
    obs.validate();
    result.observations.push_back(obs);
  }
  if (result.observations.empty()) throw ValidationError(counts.name + ": no observations");

  Csv cov = read_csv(covariates_csv);
  const int v_site = cov.column("site");
  std::vector<int> site_ids;
  std::set<int> seen;
  for (std::size_t r = 0; r < cov.rows.size(); ++r) {
    int id = static_cast<int>(parse_long(cov, r, v_site));
    if (!seen.insert(id).second) {
      throw ValidationError(cov.name + " row " + std::to_string(r + 1) + ": duplicate site " +
                            std::to_string(id));
    }
    site_ids.push_back(id);
  }
  result.table = CovariateTable(site_ids);
  for (std::size_t c = 0; c < cov.header.size(); ++c) {
    if (static_cast<int>(c) == v_site) continue;
    const std::string& name = cov.header[c];
    if (name.empty()) {
      throw ValidationError(cov.name + ": empty covariate column name");
    }
    Eigen::VectorXd values(static_cast<int>(cov.rows.size()));
    for (std::size_t r = 0; r < cov.rows.size(); ++r) {
      double v = parse_double(cov, r, static_cast<int>(c));
      if (name == "sc" && !(v > 0.0 && v <= 1.0)) {
        throw ValidationError(cell_address(cov, r, static_cast<int>(c)) +
                              ": silt-clay fraction must lie in (0, 1]");
      }
      if (name == "depth" && !(v > 0.0)) {
        throw ValidationError(cell_address(cov, r, static_cast<int>(c)) +
                              ": depth must be positive");
      }
      values[static_cast<int>(r)] = v;
    }
    result.table.add_column(name, std::move(values));
  }

  if (!geometry_csv.empty()) result.geometry = read_geometry(geometry_csv);
  return result;
}

// ---------------------------------------------------------------------------
// Presets and config files

void apply_preset(const std::string& name, ModelSpec* spec) {
  LatentRegressionSpec& reg = spec->regression;
  spec->covariance.variant = CovarianceKind::Diagonal;
  reg.upstream_response = "salinity";
  reg.upstream_driver = "dd";
  reg.coefficient_prior = CoefficientPrior::Independent;
  if (name == "model1") {
    reg.covariate_names = {"salinity"};
    reg.level = CovariateLevel::TwoLevel;
  } else if (name == "model2") {
    reg.covariate_names = {"salinity"};
    reg.level = CovariateLevel::TwoLevel;
    reg.coefficient_prior = CoefficientPrior::Correlated;
  } else if (name == "model3") {
    reg.covariate_names = {"salinity", "log_depth", "log_sc", "log_depth*log_sc"};
    reg.level = CovariateLevel::TwoLevel;
  } else if (name == "model4") {
    reg.covariate_names = {"dd"};
    reg.level = CovariateLevel::SingleLevel;
  } else if (name == "model5") {
    reg.covariate_names = {"salinity"};
    reg.level = CovariateLevel::SingleLevel;
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected model1..model5)");
  }
}

void RunConfig::validate() const {
  if (counts_csv.empty()) throw ValidationError("config: counts_csv is required");
  if (covariates_csv.empty()) throw ValidationError("config: covariates_csv is required");
  if (output_dir.empty()) throw ValidationError("config: output_dir must not be empty");
  if ((west_anchor < 0) != (east_anchor < 0)) {
    throw ValidationError("config: west_anchor and east_anchor must be given together");
  }
  for (double level : ci_levels) {
    if (!(level > 0.0 && level < 1.0)) {
      throw ValidationError("config: ci_levels must lie strictly between 0 and 1");
    }
  }
  spec.validate();
  sampler.validate();
}

RunConfig load_run_config(const std::string& path, const std::string& preset) {
  FlatConfig cfg(parse_json_file(path, "config"), "config");
  RunConfig out;

  std::string file_preset;
  cfg.read("preset", &file_preset);
  const std::string effective = preset.empty() ? file_preset : preset;
  if (!effective.empty()) apply_preset(effective, &out.spec);

  read_model_keys(cfg, &out.spec);
  read_sampler_keys(cfg, &out.sampler);

  cfg.read("counts_csv", &out.counts_csv);
  cfg.read("covariates_csv", &out.covariates_csv);
  cfg.read("geometry_csv", &out.geometry_csv);
  cfg.read("output_dir", &out.output_dir);
  cfg.read("west_anchor", &out.west_anchor);
  cfg.read("east_anchor", &out.east_anchor);
  if (auto v = cfg.get<std::string>("ci_levels")) {
    out.ci_levels = parse_double_list(*v, "ci_levels");
  }
  cfg.read("write_trace", &out.write_trace);
  cfg.read("write_bgr", &out.write_bgr);

  cfg.reject_unknown();
  return out;
}

SynthDesign load_design(const std::string& path) {
  FlatConfig cfg(parse_json_file(path, "design"), "design");
  SynthDesign d;

  cfg.read("n_sites", &d.n_sites);
  cfg.read("replicates", &d.replicates);
  cfg.read("cardinality_min", &d.cardinality_min);
  cfg.read("cardinality_max", &d.cardinality_max);
  cfg.read("seed", &d.seed);

  read_model_keys(cfg, &d.spec);

  for (const std::string& key : cfg.keys_with_prefix("scheme_")) {
    auto v = cfg.get<std::string>(key);
    std::vector<std::string> parts = split_list(*v, key);
    if (parts.size() != 3) {
      throw ValidationError("design: " + key + " must be '<grid|uniform>,<lo>,<hi>'");
    }
    CovariateScheme scheme;
    scheme.name = key.substr(7);
    if (parts[0] == "grid") {
      scheme.kind = CovariateScheme::Kind::Grid;
    } else if (parts[0] == "uniform") {
      scheme.kind = CovariateScheme::Kind::Uniform;
    } else {
      throw ValidationError("design: unknown scheme kind '" + parts[0] + "' in " + key);
    }
    std::vector<double> range = parse_double_list(parts[1] + "," + parts[2], key);
    scheme.lo = range[0];
    scheme.hi = range[1];
    d.schemes.push_back(scheme);
  }

  cfg.read("true_alpha_0", &d.truth.alpha0);
  if (auto v = cfg.get<std::string>("true_alpha")) {
    std::vector<double> a = parse_double_list(*v, "true_alpha");
    d.truth.alpha = Eigen::Map<Eigen::VectorXd>(a.data(), static_cast<int>(a.size()));
  }
  cfg.read("true_theta_2", &d.truth.theta_minus);
  double sd = 0.0;
  if (auto v = cfg.get<double>("true_sigma_H")) {
    sd = *v;
    d.truth.sigma_H2 = sd * sd;
  }
  if (auto v = cfg.get<double>("true_sigma_delta")) {
    sd = *v;
    d.truth.sigma_delta2 = sd * sd;
  }
  if (auto v = cfg.get<double>("true_sigma_beta")) {
    sd = *v;
    d.truth.sigma_beta2 = sd * sd;
  }
  if (auto v = cfg.get<std::string>("true_Sigma")) {
    std::vector<double> entries = parse_double_list(*v, "true_Sigma");
    if (entries.size() != kNumMetrics * kNumMetrics) {
      throw ValidationError("design: true_Sigma needs 25 row-major entries");
    }
    d.truth.Sigma = Eigen::Map<Eigen::Matrix<double, kNumMetrics, kNumMetrics, Eigen::RowMajor>>(
        entries.data());
  } else {
    d.truth.Sigma = Eigen::MatrixXd::Identity(kNumMetrics, kNumMetrics);
  }

  cfg.reject_unknown();
  return d;
}

// ---------------------------------------------------------------------------
// Fit orchestration

namespace {

ModelData engineer_and_bind(const RunConfig& config, IngestResult& in) {
  const std::set<std::string> needed = required_columns(config.spec);
  const bool wants_dd = needed.count("dd") > 0;
  const bool anchors_given = config.west_anchor >= 0;

  if (wants_dd && !in.table.has_column("dd")) {
    if (in.geometry.empty() || !anchors_given) {
      throw ValidationError(
          "model uses 'dd' but the covariates have no such column; provide geometry_csv "
          "with west_anchor/east_anchor so it can be computed");
    }
    std::vector<double> dd = compute_dd(in.geometry, config.west_anchor, config.east_anchor);
    std::unordered_map<int, double> by_site;
    for (std::size_t i = 0; i < in.geometry.size(); ++i) {
      by_site[in.geometry[i].site_id] = dd[i];
    }
    Eigen::VectorXd column(in.table.n_sites());
    for (int i = 0; i < in.table.n_sites(); ++i) {
      auto it = by_site.find(in.table.site_ids()[i]);
      if (it == by_site.end()) {
        throw ValidationError("geometry has no entry for site " +
                              std::to_string(in.table.site_ids()[i]));
      }
      column[i] = it->second;
    }
    in.table.add_column("dd", std::move(column));
    note("computed distance downstream from geometry");
  } else if (wants_dd && in.table.has_column("dd") && anchors_given && !in.geometry.empty()) {
    throw ValidationError(
        "covariates already provide 'dd'; drop the geometry anchors or the column");
  }

  for (const std::string& col : needed) {
    if (!in.table.has_column(col)) {
      throw ValidationError("model needs covariate column '" + col +
                            "' which the covariates file does not provide");
    }
  }
  return bind_data(in.observations, in.table, config.spec);
}

std::vector<double> merged_levels(const std::vector<double>& extra) {
  std::vector<double> levels{0.8, 0.95, 0.99};
  levels.insert(levels.end(), extra.begin(), extra.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  return levels;
}

std::string render_summary(const std::vector<PosteriorSummary>& summaries) {
  std::ostringstream out;
  out << "parameter,mean,median,q2.5,q97.5,r_hat,cred80,cred95,cred99\n";
  for (const PosteriorSummary& s : summaries) {
    const CredibleInterval& ci95 = s.interval(0.95);
    out << s.name << ',' << format_double(s.mean) << ',' << format_double(s.median) << ','
        << format_double(ci95.lower) << ',' << format_double(ci95.upper) << ','
        << format_double(s.r_hat) << ',' << (s.interval(0.8).excludes_zero ? 1 : 0) << ','
        << (ci95.excludes_zero ? 1 : 0) << ',' << (s.interval(0.99).excludes_zero ? 1 : 0)
        << '\n';
  }
  return out.str();
}

std::string render_health(const ModelData& data, const std::vector<PosteriorSummary>& summaries) {
  std::unordered_map<std::string, const PosteriorSummary*> by_name;
  for (const PosteriorSummary& s : summaries) by_name[s.name] = &s;

  std::vector<SiteHealth> sites;
  for (int site_id : data.site_ids) {
    const PosteriorSummary& s = *by_name.at("H_" + std::to_string(site_id));
    const CredibleInterval& ci = s.interval(0.95);
    sites.push_back({site_id, s.mean, ci.lower, ci.upper});
  }
  HealthRanking ranking = rank_sites(sites);
  std::unordered_map<int, int> rank_of;
  for (std::size_t i = 0; i < ranking.ordered.size(); ++i) {
    rank_of[ranking.ordered[i].site_id] = static_cast<int>(i) + 1;
  }

  std::ostringstream out;
  out << "site,lhfi,q2.5,q97.5,rank\n";
  for (const SiteHealth& s : sites) {
    out << s.site_id << ',' << format_double(s.mean) << ',' << format_double(s.lower) << ','
        << format_double(s.upper) << ',' << rank_of.at(s.site_id) << '\n';
  }
  return out.str();
}

std::string render_dic(const DicResult& d) {
  std::ostringstream out;
  out << "dic " << format_double(d.dic) << '\n'
      << "p_d " << format_double(d.p_d) << '\n'
      << "mean_deviance " << format_double(d.mean_deviance) << '\n';
  return out.str();
}

std::string render_bgr(const std::vector<ParameterDraws>& draws) {
  std::ostringstream out;
  out << "parameter,prefix_end,pooled_width,within_width,ratio\n";
  for (const ParameterDraws& p : draws) {
    if (p.chains.size() < 2) continue;
    try {
      BgrResult r = bgr_statistic(p.chains);
      for (const BgrPoint& pt : r.curve) {
        out << p.name << ',' << pt.prefix_end << ',' << format_double(pt.pooled_width) << ','
            << format_double(pt.within_width) << ',' << format_double(pt.ratio) << '\n';
      }
    } catch (const DegenerateSampleError&) {
      // Structurally constant parameters have no convergence curve to report.
    }
  }
  return out.str();
}

std::string render_trace(const ModelData& data, const std::vector<ChainOutput>& chains) {
  const std::vector<ParameterEntry> layout = trace_layout(data);
  std::ostringstream out;
  out << "chain,draw";
  for (const ParameterEntry& e : layout) out << ',' << e.name;
  out << ",deviance\n";
  for (const ChainOutput& chain : chains) {
    for (std::size_t d = 0; d < chain.draws.size(); ++d) {
      out << chain.chain_id << ',' << (d + 1);
      for (const ParameterEntry& e : layout) {
        out << ',' << format_double(e.extract(chain.draws[d]));
      }
      out << ',' << format_double(chain.deviance[d]) << '\n';
    }
  }
  return out.str();
}

std::string render_centring(const ModelData& data) {
  std::ostringstream out;
  out << "token,constant\n";
  for (const auto& [token, constant] : data.centring) {
    out << token << ',' << format_double(constant) << '\n';
  }
  return out.str();
}

DicResult compute_dic(const ModelData& data, const std::vector<ChainOutput>& chains) {
  ParameterState mean_state = make_initial_state(data);
  mean_state.H.setZero();
  mean_state.theta_minus = 0.0;
  mean_state.beta.setZero();
  std::vector<double> deviance;
  long total = 0;
  for (const ChainOutput& chain : chains) {
    for (const ParameterState& s : chain.draws) {
      mean_state.H += s.H;
      mean_state.theta_minus += s.theta_minus;
      mean_state.beta += s.beta;
      ++total;
    }
    deviance.insert(deviance.end(), chain.deviance.begin(), chain.deviance.end());
  }
  if (total == 0) throw SamplerError("no stored draws to compute DIC from");
  mean_state.H /= static_cast<double>(total);
  mean_state.theta_minus /= static_cast<double>(total);
  mean_state.beta /= static_cast<double>(total);
  const double deviance_at_mean = -2.0 * total_metric_loglik(mean_state, data);
  return dic(deviance, deviance_at_mean);
}

}  // namespace

void run(const RunConfig& config) {
  with_stage("config", [&] { config.validate(); });

  IngestResult in = with_stage("ingest", [&] {
    note("reading " + config.counts_csv + " and " + config.covariates_csv);
    return ingest(config.counts_csv, config.covariates_csv, config.geometry_csv);
  });

  ModelData data = with_stage("covariates", [&] { return engineer_and_bind(config, in); });

  std::vector<ChainOutput> chains = with_stage("sampler", [&] {
    note("sampling " + std::to_string(config.sampler.n_chains) + " chains x " +
         std::to_string(config.sampler.n_iterations) + " iterations");
    std::mutex progress_mutex;
    ProgressFn progress;
    if (log_level() > 0) {
      progress = [&progress_mutex](int chain_id, long iter, long total) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        std::cerr << "lhfi: chain " << chain_id << ": " << iter << "/" << total << "\n";
      };
    }
    return run_chains(data, config.sampler, progress);
  });

  with_stage("diagnostics+write", [&] {
    const std::vector<ParameterEntry> layout = summary_layout(data);
    const std::vector<ParameterDraws> draws = collect_draws(layout, chains);
    const std::vector<PosteriorSummary> summaries =
        summarize(draws, merged_levels(config.ci_levels));
    const DicResult dic_result = compute_dic(data, chains);

    ArtifactWriter writer{fs::path(config.output_dir)};
    try {
      writer.write("summary.csv", render_summary(summaries));
      writer.write("health.csv", render_health(data, summaries));
      writer.write("dic.txt", render_dic(dic_result));
      if (config.write_bgr) writer.write("bgr.csv", render_bgr(draws));
      if (config.write_trace) writer.write("trace.csv", render_trace(data, chains));
      writer.write("centring.csv", render_centring(data));
    } catch (...) {
      writer.discard_all();
      throw;
    }
    note("wrote results to " + config.output_dir);
  });
}

// ---------------------------------------------------------------------------
// Synthetic data persistence

void write_dataset(const SynthData& data, const ModelSpec& spec, const std::string& out_dir) {
  std::ostringstream counts;
  counts << "site,replicate,m1,m2,m3,m4,m5,cardinality\n";
  for (const SiteObservation& obs : data.observations) {
    counts << obs.site_id << ',' << obs.replicate_id;
    for (int j = 0; j < kNumMetrics; ++j) counts << ',' << obs.counts[j];
    counts << ',' << obs.cardinality << '\n';
  }

  std::ostringstream cov;
  cov << "site";
  for (const std::string& name : data.table.column_names()) cov << ',' << name;
  cov << '\n';
  for (int i = 0; i < data.table.n_sites(); ++i) {
    cov << data.table.site_ids()[i];
    for (const std::string& name : data.table.column_names()) {
      cov << ',' << format_double(data.table.column(name)[i]);
    }
    cov << '\n';
  }

  std::ostringstream truth;
  truth << "name,value\n";
  truth << "alpha_0," << format_double(data.truth.alpha0) << '\n';
  const std::vector<std::string>& tokens = spec.regression.covariate_names;
  for (std::size_t j = 0; j < tokens.size(); ++j) {
    truth << "alpha_" << display_name(tokens[j]) << ',' << format_double(data.truth.alpha[j])
          << '\n';
  }
  if (spec.regression.two_level()) {
    truth << "alpha_DD," << format_double(data.truth.alpha_dd()) << '\n';
    truth << "sigma_delta," << format_double(std::sqrt(data.truth.sigma_delta2)) << '\n';
  }
  truth << "theta_2," << format_double(data.truth.theta_minus) << '\n';
  truth << "sigma_H," << format_double(std::sqrt(data.truth.sigma_H2)) << '\n';
  if (spec.covariance.variant == CovarianceKind::Diagonal) {
    truth << "sigma_beta," << format_double(std::sqrt(data.truth.sigma_beta2)) << '\n';
  }
  for (int i = 0; i < data.truth.H.size(); ++i) {
    truth << "H_" << data.table.site_ids()[i] << ',' << format_double(data.truth.H[i]) << '\n';
  }

  ArtifactWriter writer{fs::path(out_dir)};
  try {
    writer.write("counts.csv", counts.str());
    writer.write("covariates.csv", cov.str());
    writer.write("truth.csv", truth.str());
  } catch (...) {
    writer.discard_all();
    throw;
  }
}

}  // namespace lhfi
