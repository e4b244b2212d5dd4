#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace countgam {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Long-format unit-month panel.  Months are indexed from 2020-03.
// Covariate columns may contain NaN for missing values; a fit referencing
// such a column drops those rows and reports the count.
struct Panel {
  std::vector<std::string> unit_ids;
  std::vector<int> months;
  Eigen::VectorXd deaths;
  Eigen::VectorXd popsize;
  std::map<std::string, Eigen::VectorXd> covariates;

  std::size_t n_rows() const { return unit_ids.size(); }

  bool has_column(const std::string& name) const;
  // Resolves covariates plus the built-in names deaths, popsize, and
  // time/month (the month index as a real number).
  Eigen::VectorXd column(const std::string& name) const;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;
  std::vector<std::string> messages;
};

struct LoadOptions {
  // When set, only these unit ids are kept (e.g. a contiguous-US roster).
  std::optional<std::set<std::string>> unit_roster;
  // Row-level parse failures above this fraction abort the load.
  double max_bad_row_fraction = 0.01;
};

// Index of Concentration at the Extremes: (privileged - deprived) / total.
double ice(double privileged_count, double deprived_count, double total);

// (Republican - Democratic votes) / total votes cast, in [-1, 1].
double political_lean(double rep_votes, double dem_votes, double total_votes);

// log(popsize / 1e5 / 12): monthly exposure in units of 100,000 person-years.
double person_years_offset(double popsize);

int month_index_from_iso(const std::string& year_month);  // "2020-03" -> 0
std::string iso_from_month_index(int index);

// Loads a panel CSV (header mandatory; columns fips,month,deaths,popsize
// required, everything else numeric and kept as covariates).  Appends the
// derived columns ICEraceinc, political_lean, and log10_density when their
// raw inputs are present.
Panel load_panel(const std::string& path, const LoadOptions& options = {},
                 LoadReport* report = nullptr);

void save_panel(const Panel& panel, const std::string& path);

}  // namespace countgam
