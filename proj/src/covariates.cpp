#include "lhfi/covariates.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace lhfi {

CovariateTable::CovariateTable(std::vector<int> site_ids)
    : site_ids_(std::move(site_ids)) {}

void CovariateTable::add_column(const std::string& name, Eigen::VectorXd values,
                                bool centred) {
  if (values.size() != static_cast<Eigen::Index>(site_ids_.size())) {
    throw ValidationError("covariate column '" + name + "' has " +
                          std::to_string(values.size()) + " rows, expected " +
                          std::to_string(site_ids_.size()));
  }
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("covariate column '" + name + "' row " +
                            std::to_string(i + 1) + " is not finite");
    }
  }
  if (has_column(name)) {
    throw ValidationError("duplicate covariate column '" + name + "'");
  }
  names_.push_back(name);
  columns_.push_back(std::move(values));
  centred_.push_back(centred);
}

bool CovariateTable::has_column(const std::string& name) const {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

int CovariateTable::index_of(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) {
    throw ValidationError("missing covariate column '" + name + "'");
  }
  return static_cast<int>(it - names_.begin());
}

const Eigen::VectorXd& CovariateTable::column(const std::string& name) const {
  return columns_[index_of(name)];
}

bool CovariateTable::is_centred(const std::string& name) const {
  return centred_[index_of(name)];
}

CovariateTable CovariateTable::subset(const std::vector<int>& site_ids) const {
  std::vector<int> rows;
  rows.reserve(site_ids.size());
  for (int id : site_ids) {
    auto it = std::find(site_ids_.begin(), site_ids_.end(), id);
    if (it == site_ids_.end()) {
      throw ValidationError("covariate table has no row for site " +
                            std::to_string(id));
    }
    rows.push_back(static_cast<int>(it - site_ids_.begin()));
  }
  CovariateTable out(site_ids);
  for (std::size_t c = 0; c < names_.size(); ++c) {
    Eigen::VectorXd col(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) col[r] = columns_[c][rows[r]];
    out.add_column(names_[c], std::move(col), centred_[c]);
  }
  return out;
}

std::vector<double> compute_dd(const std::vector<SiteGeometry>& geometry,
                               int west_anchor, int east_anchor) {
  const SiteGeometry* west = nullptr;
  const SiteGeometry* east = nullptr;
  for (const auto& g : geometry) {
    if (!std::isfinite(g.easting) || !std::isfinite(g.northing)) {
      throw ValidationError("site " + std::to_string(g.site_id) +
                            " has non-finite coordinates");
    }
    if (g.site_id == west_anchor) west = &g;
    if (g.site_id == east_anchor) east = &g;
  }
  if (west == nullptr) {
    throw ValidationError("west anchor site " + std::to_string(west_anchor) +
                          " not present in geometry");
  }
  if (east == nullptr) {
    throw ValidationError("east anchor site " + std::to_string(east_anchor) +
                          " not present in geometry");
  }
  const double dx = east->easting - west->easting;
  const double dy = east->northing - west->northing;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) {
    throw ValidationError("anchor sites " + std::to_string(west_anchor) + " and " +
                          std::to_string(east_anchor) + " are coincident");
  }
  const double ux = dx / len, uy = dy / len;
  std::vector<double> dd;
  dd.reserve(geometry.size());
  for (const auto& g : geometry) {
    dd.push_back((g.easting - west->easting) * ux + (g.northing - west->northing) * uy);
  }
  return dd;
}

std::pair<Eigen::VectorXd, double> center(const Eigen::VectorXd& column,
                                          std::optional<double> constant) {
  if (column.size() == 0) throw ValidationError("center: empty column");
  const double c = constant.has_value() ? *constant : column.mean();
  return {column.array() - c, c};
}

Eigen::VectorXd interaction(const Eigen::VectorXd& col_a, bool a_centred,
                            const Eigen::VectorXd& col_b, bool b_centred) {
  if (col_a.size() != col_b.size()) {
    throw ValidationError("interaction: column lengths differ");
  }
  if (!a_centred || !b_centred) {
    throw ValidationError("interaction requires centred inputs");
  }
  return col_a.cwiseProduct(col_b);
}

Eigen::MatrixXd correlation_matrix(const std::vector<std::string>& names,
                                   const std::vector<Eigen::VectorXd>& columns) {
  if (names.size() != columns.size()) {
    throw ValidationError("correlation_matrix: names/columns size mismatch");
  }
  const int k = static_cast<int>(columns.size());
  if (k == 0) throw ValidationError("correlation_matrix: no columns");
  const Eigen::Index n = columns[0].size();
  if (n < 2) throw ValidationError("correlation_matrix: need >= 2 observations");

  std::vector<Eigen::VectorXd> dev(k);
  std::vector<double> norm(k);
  for (int j = 0; j < k; ++j) {
    if (columns[j].size() != n) {
      throw ValidationError("correlation_matrix: column '" + names[j] +
                            "' length differs");
    }
    dev[j] = columns[j].array() - columns[j].mean();
    norm[j] = dev[j].norm();
    if (norm[j] == 0.0) {
      throw DegenerateInputError("correlation_matrix: column '" + names[j] +
                                 "' has zero variance");
    }
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const double v =
          std::clamp(dev[a].dot(dev[b]) / (norm[a] * norm[b]), -1.0, 1.0);
      r(a, b) = v;
      r(b, a) = v;
    }
  }
  return r;
}

namespace {

// A non-interaction token: NAME or log_NAME. Resolves against the raw
// table, applies the log, centres on the exact mean.
ResolvedColumn resolve_simple(const std::string& token, const CovariateTable& table) {
  ResolvedColumn out;
  out.token = token;
  Eigen::VectorXd raw;
  if (table.has_column(token)) {
    raw = table.column(token);
    // Pre-centred columns (e.g. synthetic fixtures) pass through untouched.
    if (table.is_centred(token)) {
      out.values = raw;
      out.centring.emplace_back(token, 0.0);
      return out;
    }
  } else if (token.rfind("log_", 0) == 0) {
    const std::string base = token.substr(4);
    if (!table.has_column(base)) {
      throw ValidationError("covariate token '" + token + "': no column '" +
                            base + "'");
    }
    const Eigen::VectorXd& col = table.column(base);
    raw.resize(col.size());
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      if (!(col[i] > 0.0)) {
        throw ValidationError("covariate token '" + token + "': column '" + base +
                              "' row " + std::to_string(i + 1) +
                              " is not positive");
      }
      raw[i] = std::log(col[i]);
    }
  } else {
    throw ValidationError("unknown covariate token '" + token + "'");
  }
  auto [centred, constant] = center(raw);
  out.values = std::move(centred);
  out.centring.emplace_back(token, constant);
  return out;
}

}  // namespace

ResolvedColumn resolve_token(const std::string& token, const CovariateTable& table) {
  const auto star = token.find('*');
  if (star == std::string::npos) return resolve_simple(token, table);
  const std::string left = token.substr(0, star);
  const std::string right = token.substr(star + 1);
  if (left.empty() || right.empty() || right.find('*') != std::string::npos) {
    throw ValidationError("malformed interaction token '" + token + "'");
  }
  ResolvedColumn a = resolve_simple(left, table);
  ResolvedColumn b = resolve_simple(right, table);
  ResolvedColumn out;
  out.token = token;
  out.values = interaction(a.values, true, b.values, true);
  out.centring = std::move(a.centring);
  out.centring.insert(out.centring.end(), b.centring.begin(), b.centring.end());
  return out;
}

std::string display_name(const std::string& token) {
  static const std::map<std::string, std::string> kShort = {
      {"salinity", "sal"}, {"dd", "DD"},   {"depth", "dep"},
      {"sc", "SC"},        {"temperature", "temp"},
  };
  const auto star = token.find('*');
  if (star != std::string::npos) {
    return display_name(token.substr(0, star)) + "_x_" +
           display_name(token.substr(star + 1));
  }
  if (token.rfind("log_", 0) == 0) return display_name(token.substr(4));
  auto it = kShort.find(token);
  return it == kShort.end() ? token : it->second;
}

}  // namespace lhfi
