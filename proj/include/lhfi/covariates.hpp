#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lhfi/errors.hpp"

namespace lhfi {

/// Planar site coordinates (km).
struct SiteGeometry {
  int site_id = 0;
  double easting = 0.0;
  double northing = 0.0;
};

/// Degenerate-input failure (e.g. a zero-variance column passed to
/// correlation_matrix).
class DegenerateInputError : public ValidationError {
 public:
  explicit DegenerateInputError(const std::string& msg) : ValidationError(msg) {}
};

/// Named per-site covariate columns.  Column order is insertion order;
/// site_ids give the row order shared by every column.
class CovariateTable {
 public:
  CovariateTable() = default;
  explicit CovariateTable(std::vector<int> site_ids);

  const std::vector<int>& site_ids() const { return site_ids_; }
  int n_sites() const { return static_cast<int>(site_ids_.size()); }

  void add_column(const std::string& name, Eigen::VectorXd values,
                  bool centred = false);
  bool has_column(const std::string& name) const;
  const Eigen::VectorXd& column(const std::string& name) const;
  bool is_centred(const std::string& name) const;
  const std::vector<std::string>& column_names() const { return names_; }

  /// Reorders rows to the given site id order; every requested id must be
  /// present exactly once.
  CovariateTable subset(const std::vector<int>& site_ids) const;

 private:
  int index_of(const std::string& name) const;

  std::vector<int> site_ids_;
  std::vector<std::string> names_;
  std::vector<Eigen::VectorXd> columns_;
  std::vector<bool> centred_;
};

/// Distance downstream: scalar projection of each site onto the unit vector
/// from the west anchor toward the east anchor, so the west anchor maps to 0
/// and the east anchor to the anchor separation.  Sites projecting west of
/// the west anchor get negative values and are passed through as-is.
std::vector<double> compute_dd(const std::vector<SiteGeometry>& geometry,
                               int west_anchor, int east_anchor);

/// Column minus the centring constant; when the constant is omitted the
/// exact sample mean is used.  Returns the centred column and the constant
/// actually subtracted, which callers persist for prediction-time reuse.
std::pair<Eigen::VectorXd, double> center(const Eigen::VectorXd& column,
                                          std::optional<double> constant = std::nullopt);

/// Elementwise product of two centred columns; the result is deliberately
/// NOT re-centred.  Throws unless both inputs are flagged centred.
Eigen::VectorXd interaction(const Eigen::VectorXd& col_a, bool a_centred,
                            const Eigen::VectorXd& col_b, bool b_centred);

/// Pearson correlation matrix of the named columns, in the given order.
Eigen::MatrixXd correlation_matrix(const std::vector<std::string>& names,
                                   const std::vector<Eigen::VectorXd>& columns);

/// Token resolution against a covariate table: NAME, log_NAME, or A*B with
/// A and B themselves tokens.  Result is the fully engineered, centred
/// column, plus the centring constants recorded along the way (one per
/// non-interaction token touched).
struct ResolvedColumn {
  std::string token;
  Eigen::VectorXd values;  // centred (for interactions: product of centred factors)
  std::vector<std::pair<std::string, double>> centring;
};

ResolvedColumn resolve_token(const std::string& token, const CovariateTable& table);

/// Abbreviated display name for a token: salinity -> sal, dd -> DD,
/// depth -> dep, sc -> SC, log_X -> display(X), A*B -> A_x_B.  Unknown
/// names pass through unchanged.
std::string display_name(const std::string& token);

}  // namespace lhfi
