#include "countgam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace countgam {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ACS-derived measures are cross-sectional: they must be constant within a
// unit across months.
const std::set<std::string> kCrossSectional = {
    "median_age",       "median_income", "prop_poverty", "area_sqmi",
    "white_hi_inc_hh",  "poc_lo_inc_hh", "total_hh",     "rep_votes",
    "dem_votes",        "total_votes",   "latitude",     "longitude"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  for (auto& f : fields) {
    auto first = f.find_first_not_of(" \t");
    auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? "" : f.substr(first, last - first + 1);
  }
  return fields;
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty() || text == "NA" || text == "nan") {
    out = kNaN;
    return true;
  }
  try {
    std::size_t used = 0;
    out = std::stod(text, &used);
    return used == text.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

bool Panel::has_column(const std::string& name) const {
  if (name == "deaths" || name == "popsize" || name == "time" || name == "month") return true;
  return covariates.count(name) > 0;
}

Eigen::VectorXd Panel::column(const std::string& name) const {
  const Eigen::Index n = static_cast<Eigen::Index>(n_rows());
  if (name == "deaths") return deaths;
  if (name == "popsize") return popsize;
  if (name == "time" || name == "month") {
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) t[i] = static_cast<double>(months[i]);
    return t;
  }
  auto it = covariates.find(name);
  if (it == covariates.end()) throw DataError("unknown column '" + name + "'");
  return it->second;
}

double ice(double privileged_count, double deprived_count, double total) {
  if (!(total > 0)) throw DataError("ice: total must be positive");
  if (privileged_count < 0 || deprived_count < 0)
    throw DataError("ice: counts must be non-negative");
  if (privileged_count + deprived_count > total * (1.0 + 1e-12))
    throw DataError("ice: category counts exceed total");
  return (privileged_count - deprived_count) / total;
}

double political_lean(double rep_votes, double dem_votes, double total_votes) {
  if (!(total_votes > 0)) throw DataError("political_lean: total votes must be positive");
  if (rep_votes < 0 || dem_votes < 0) throw DataError("political_lean: counts must be non-negative");
  if (rep_votes + dem_votes > total_votes * (1.0 + 1e-12))
    throw DataError("political_lean: party votes exceed total");
  return (rep_votes - dem_votes) / total_votes;
}

double person_years_offset(double popsize) {
  if (!(popsize > 0)) throw DataError("popsize must be positive");
  return std::log(popsize / 1e5 / 12.0);
}

int month_index_from_iso(const std::string& year_month) {
  if (year_month.size() != 7 || year_month[4] != '-')
    throw DataError("month must be YYYY-MM, got '" + year_month + "'");
  int year = 0, month = 0;
  try {
    year = std::stoi(year_month.substr(0, 4));
    month = std::stoi(year_month.substr(5, 2));
  } catch (const std::exception&) {
    throw DataError("month must be YYYY-MM, got '" + year_month + "'");
  }
  if (month < 1 || month > 12) throw DataError("month out of range in '" + year_month + "'");
  return (year - 2020) * 12 + (month - 3);
}

std::string iso_from_month_index(int index) {
  int months_since_jan2020 = index + 2;
  int year = 2020 + (months_since_jan2020 >= 0 ? months_since_jan2020 / 12
                                               : (months_since_jan2020 - 11) / 12);
  int month = months_since_jan2020 - (year - 2020) * 12 + 1;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

Panel load_panel(const std::string& path, const LoadOptions& options, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
  std::vector<std::string> header = split_csv_line(line);
  std::map<std::string, std::size_t> col_index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw DataError("empty column name in header");
    if (!col_index.emplace(header[i], i).second)
      throw DataError("duplicate column '" + header[i] + "' in header");
  }
  for (const char* required : {"fips", "month", "deaths", "popsize"})
    if (!col_index.count(required))
      throw DataError(std::string("missing mandatory column '") + required + "'");

  std::vector<std::string> extra_cols;
  for (const auto& name : header)
    if (name != "fips" && name != "month" && name != "deaths" && name != "popsize")
      extra_cols.push_back(name);

  Panel panel;
  std::vector<double> deaths, popsize;
  std::map<std::string, std::vector<double>> extras;
  for (const auto& name : extra_cols) extras[name];
  std::set<std::pair<std::string, int>> seen_keys;
  std::size_t bad_rows = 0;
  std::size_t line_no = 1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    ++rep.rows_read;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      ++bad_rows;
      rep.messages.push_back("line " + std::to_string(line_no) + ": wrong field count");
      continue;
    }
    const std::string& fips = fields[col_index["fips"]];
    int month = 0;
    double d = 0, p = 0;
    bool ok = !fips.empty();
    try {
      month = month_index_from_iso(fields[col_index["month"]]);
    } catch (const DataError& e) {
      ok = false;
      rep.messages.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
    ok = ok && parse_double(fields[col_index["deaths"]], d) && std::isfinite(d) && d >= 0;
    ok = ok && parse_double(fields[col_index["popsize"]], p) && std::isfinite(p) && p > 0;
    if (ok && d > p) {
      ok = false;
      rep.messages.push_back("line " + std::to_string(line_no) + ": deaths exceed popsize");
    }
    if (!ok) {
      ++bad_rows;
      continue;
    }
    if (options.unit_roster && !options.unit_roster->count(fips)) {
      ++rep.rows_dropped;
      continue;
    }
    if (!seen_keys.emplace(fips, month).second)
      throw DataError("duplicate key (" + fips + ", " + iso_from_month_index(month) + ")");

    panel.unit_ids.push_back(fips);
    panel.months.push_back(month);
    deaths.push_back(d);
    popsize.push_back(p);
    for (const auto& name : extra_cols) {
      double value;
      if (!parse_double(fields[col_index[name]], value)) value = kNaN;
      extras[name].push_back(value);
    }
  }

  if (rep.rows_read > 0 &&
      static_cast<double>(bad_rows) > options.max_bad_row_fraction * static_cast<double>(rep.rows_read))
    throw DataError("too many malformed rows: " + std::to_string(bad_rows) + " of " +
                    std::to_string(rep.rows_read));
  rep.rows_dropped += bad_rows;
  if (panel.n_rows() == 0) throw DataError("no usable rows in '" + path + "'");

  const Eigen::Index n = static_cast<Eigen::Index>(panel.n_rows());
  panel.deaths = Eigen::Map<Eigen::VectorXd>(deaths.data(), n);
  panel.popsize = Eigen::Map<Eigen::VectorXd>(popsize.data(), n);
  for (auto& [name, values] : extras)
    panel.covariates[name] = Eigen::Map<Eigen::VectorXd>(values.data(), n);

  // Cross-sectional covariates must not vary within a unit.
  for (const auto& name : kCrossSectional) {
    auto it = panel.covariates.find(name);
    if (it == panel.covariates.end()) continue;
    std::map<std::string, double> first_value;
    for (Eigen::Index i = 0; i < n; ++i) {
      double v = it->second[i];
      if (std::isnan(v)) continue;
      auto [entry, inserted] = first_value.emplace(panel.unit_ids[i], v);
      if (!inserted && entry->second != v)
        throw DataError("column '" + name + "' varies within unit " + panel.unit_ids[i] +
                        " but is cross-sectional");
    }
  }

  // Derived covariates, where the raw inputs exist.
  auto have = [&](const char* c) { return panel.covariates.count(c) > 0; };
  if (have("white_hi_inc_hh") && have("poc_lo_inc_hh") && have("total_hh")) {
    Eigen::VectorXd out(n);
    const auto& priv = panel.covariates["white_hi_inc_hh"];
    const auto& depr = panel.covariates["poc_lo_inc_hh"];
    const auto& tot = panel.covariates["total_hh"];
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = (std::isnan(priv[i]) || std::isnan(depr[i]) || std::isnan(tot[i]))
                   ? kNaN
                   : ice(priv[i], depr[i], tot[i]);
    panel.covariates["ICEraceinc"] = out;
  }
  if (have("rep_votes") && have("dem_votes") && have("total_votes")) {
    Eigen::VectorXd out(n);
    const auto& r = panel.covariates["rep_votes"];
    const auto& dm = panel.covariates["dem_votes"];
    const auto& tot = panel.covariates["total_votes"];
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = (std::isnan(r[i]) || std::isnan(dm[i]) || std::isnan(tot[i]))
                   ? kNaN
                   : political_lean(r[i], dm[i], tot[i]);
    panel.covariates["political_lean"] = out;
  }
  if (have("area_sqmi")) {
    Eigen::VectorXd out(n);
    const auto& area = panel.covariates["area_sqmi"];
    for (Eigen::Index i = 0; i < n; ++i)
      out[i] = (std::isnan(area[i]) || !(area[i] > 0)) ? kNaN
                                                       : std::log10(panel.popsize[i] / area[i]);
    panel.covariates["log10_density"] = out;
  }
  return panel;
}

void save_panel(const Panel& panel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.precision(17);
  std::vector<std::string> extra;
  for (const auto& [name, values] : panel.covariates) extra.push_back(name);
  out << "fips,month,deaths,popsize";
  for (const auto& name : extra) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < panel.n_rows(); ++i) {
    out << panel.unit_ids[i] << ',' << iso_from_month_index(panel.months[i]) << ','
        << static_cast<std::int64_t>(panel.deaths[i]) << ','
        << static_cast<std::int64_t>(panel.popsize[i]);
    for (const auto& name : extra) {
      double v = panel.covariates.at(name)[i];
      out << ',';
      if (!std::isnan(v)) out << v;
    }
    out << '\n';
  }
}

}  // namespace countgam
