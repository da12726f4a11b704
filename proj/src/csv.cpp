#include "fdaw/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include "fdaw/error.hpp"

namespace fdaw {

namespace {

bool is_missing_token(const std::string& s) { return s.empty() || s == "NA" || s == "na" || s == "NaN"; }

std::optional<double> parse_number(const std::string& s) {
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
};

Table read_table(std::istream& in) {
  Table tab;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
      tab.header = split_csv_line(line);
      for (auto& h : tab.header) h = trim(h);
      first = false;
      continue;
    }
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != tab.header.size())
      fail("csv line " + std::to_string(line_no) + ": expected " + std::to_string(tab.header.size()) + " fields, got " +
           std::to_string(fields.size()));
    for (auto& f : fields) f = trim(f);
    tab.rows.push_back(std::move(fields));
  }
  if (first) fail("csv: empty input");
  return tab;
}

int parse_visit(const std::string& s, std::size_t row) {
  const auto v = parse_number(s);
  if (!v || *v != std::floor(*v) || *v < 1)
    fail("csv row " + std::to_string(row) + ": visit must be a positive integer, got '" + s + "'");
  return static_cast<int>(*v);
}

// Collects covariate cells per curve; columns with any non-numeric value
// (or listed in the schema) become categorical.
void build_covariates(FunctionalDataset& ds, const std::vector<std::string>& names,
                      const std::vector<std::vector<std::string>>& cells, const CsvSchema& schema) {
  for (std::size_t c = 0; c < names.size(); ++c) {
    Covariate cov;
    cov.name = names[c];
    cov.categorical = std::find(schema.categorical.begin(), schema.categorical.end(), names[c]) != schema.categorical.end();
    if (!cov.categorical)
      for (const auto& row : cells)
        if (!is_missing_token(row[c]) && !parse_number(row[c])) {
          cov.categorical = true;
          break;
        }
    std::set<std::string> levels;
    for (const auto& row : cells) {
      const std::string& v = row[c];
      if (cov.categorical) {
        cov.labels.push_back(is_missing_token(v) ? std::string() : v);
        if (!is_missing_token(v)) levels.insert(v);
      } else {
        cov.numeric.push_back(is_missing_token(v) ? std::numeric_limits<double>::quiet_NaN() : *parse_number(v));
      }
    }
    cov.levels.assign(levels.begin(), levels.end());
    ds.covariates.push_back(std::move(cov));
  }
}

FunctionalDataset load_long(const Table& tab, const CsvSchema& schema) {
  const int c_subject = tab.column(schema.subject), c_visit = tab.column(schema.visit);
  const int c_t = tab.column(schema.t), c_y = tab.column(schema.y), c_time = tab.column(schema.visit_time);
  if (c_subject < 0 || c_visit < 0 || c_t < 0 || c_y < 0)
    fail("long csv: header must contain " + schema.subject + ", " + schema.visit + ", " + schema.t + ", " + schema.y);
  std::vector<int> cov_cols;
  std::vector<std::string> cov_names;
  for (int c = 0; c < static_cast<int>(tab.header.size()); ++c)
    if (c != c_subject && c != c_visit && c != c_t && c != c_y && c != c_time) {
      cov_cols.push_back(c);
      cov_names.push_back(tab.header[c]);
    }

  struct Curve {
    std::string subject;
    int visit;
    std::optional<double> time;
    std::vector<std::string> covs;
    std::size_t first_row;
    std::map<double, std::pair<std::optional<double>, std::size_t>> cells;  // t -> (y, row)
  };
  std::vector<Curve> curves;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::set<double> grid;

  for (std::size_t r = 0; r < tab.rows.size(); ++r) {
    const auto& row = tab.rows[r];
    const std::size_t row_no = r + 2;  // header is line 1
    const std::string& subject = row[c_subject];
    if (subject.empty()) fail("csv row " + std::to_string(row_no) + ": empty subject");
    const int visit = parse_visit(row[c_visit], row_no);
    const auto t = parse_number(row[c_t]);
    if (!t || !std::isfinite(*t)) fail("csv row " + std::to_string(row_no) + ": non-numeric t '" + row[c_t] + "'");
    std::optional<double> y;
    if (!is_missing_token(row[c_y])) {
      y = parse_number(row[c_y]);
      if (!y || !std::isfinite(*y)) fail("csv row " + std::to_string(row_no) + ": non-numeric y '" + row[c_y] + "'");
    }
    std::optional<double> time;
    if (c_time >= 0 && !is_missing_token(row[c_time])) {
      time = parse_number(row[c_time]);
      if (!time) fail("csv row " + std::to_string(row_no) + ": non-numeric visit_time '" + row[c_time] + "'");
    }
    std::vector<std::string> covs;
    for (int c : cov_cols) covs.push_back(row[c]);

    auto [it, inserted] = index.try_emplace({subject, visit}, curves.size());
    if (inserted) curves.push_back(Curve{subject, visit, time, covs, row_no, {}});
    Curve& curve = curves[it->second];
    if (curve.time != time)
      fail("csv row " + std::to_string(row_no) + ": visit_time differs within (" + subject + ", " +
           std::to_string(visit) + ")");
    if (curve.covs != covs)
      fail("csv row " + std::to_string(row_no) + ": covariates differ within (" + subject + ", " +
           std::to_string(visit) + ")");
    auto [cell, fresh] = curve.cells.try_emplace(*t, y, row_no);
    if (!fresh)
      fail("duplicate cell (" + subject + ", " + std::to_string(visit) + ", t=" + format_double(*t) + ") at rows " +
           std::to_string(cell->second.second) + " and " + std::to_string(row_no));
    grid.insert(*t);
  }
  if (curves.empty()) fail("long csv: no data rows");

  Eigen::VectorXd pts(static_cast<Eigen::Index>(grid.size()));
  std::map<double, Eigen::Index> col;
  Eigen::Index k = 0;
  for (double t : grid) {
    col[t] = k;
    pts[k++] = t;
  }
  FunctionalDataset ds;
  ds.grid = Grid(pts);
  const auto n = static_cast<Eigen::Index>(curves.size());
  ds.values = Eigen::MatrixXd::Zero(n, pts.size());
  ds.observed = Mask::Constant(n, pts.size(), false);
  const bool has_time = c_time >= 0;
  if (has_time) ds.visit_time = Eigen::VectorXd(n);
  std::vector<std::vector<std::string>> cov_cells;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Curve& c = curves[i];
    ds.subject_id.push_back(c.subject);
    ds.visit_index.push_back(c.visit);
    if (has_time) (*ds.visit_time)[i] = c.time ? *c.time : std::numeric_limits<double>::quiet_NaN();
    for (const auto& [t, cell] : c.cells)
      if (cell.first) {
        ds.values(i, col[t]) = *cell.first;
        ds.observed(i, col[t]) = true;
      }
    cov_cells.push_back(c.covs);
    if (ds.observed.row(i).count() < 2)
      fail("curve (" + c.subject + ", " + std::to_string(c.visit) + ") starting at row " + std::to_string(c.first_row) +
           " has fewer than 2 non-missing values");
  }
  build_covariates(ds, cov_names, cov_cells, schema);
  require_valid(ds, true);
  return ds;
}

FunctionalDataset load_wide(const Table& tab, const CsvSchema& schema) {
  const int c_subject = tab.column(schema.subject), c_visit = tab.column(schema.visit);
  const int c_time = tab.column(schema.visit_time);
  if (c_subject < 0) fail("wide csv: header must contain " + schema.subject);
  std::vector<std::pair<double, int>> grid_cols;
  std::vector<int> cov_cols;
  std::vector<std::string> cov_names;
  for (int c = 0; c < static_cast<int>(tab.header.size()); ++c) {
    const std::string& h = tab.header[c];
    if (c == c_subject || c == c_visit || c == c_time) continue;
    if (h.rfind("t=", 0) == 0) {
      const auto v = parse_number(h.substr(2));
      if (!v) fail("wide csv: bad grid column '" + h + "'");
      grid_cols.emplace_back(*v, c);
    } else {
      cov_cols.push_back(c);
      cov_names.push_back(h);
    }
  }
  std::sort(grid_cols.begin(), grid_cols.end());
  Eigen::VectorXd pts(static_cast<Eigen::Index>(grid_cols.size()));
  for (std::size_t k = 0; k < grid_cols.size(); ++k) pts[k] = grid_cols[k].first;

  FunctionalDataset ds;
  ds.grid = Grid(pts);
  const auto n = static_cast<Eigen::Index>(tab.rows.size());
  ds.values = Eigen::MatrixXd::Zero(n, pts.size());
  ds.observed = Mask::Constant(n, pts.size(), false);
  if (c_time >= 0) ds.visit_time = Eigen::VectorXd(n);
  std::vector<std::vector<std::string>> cov_cells;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = tab.rows[i];
    const std::size_t row_no = static_cast<std::size_t>(i) + 2;
    ds.subject_id.push_back(row[c_subject]);
    ds.visit_index.push_back(c_visit >= 0 ? parse_visit(row[c_visit], row_no) : 1);
    if (c_time >= 0) {
      const auto v = is_missing_token(row[c_time]) ? std::optional<double>(std::numeric_limits<double>::quiet_NaN())
                                                   : parse_number(row[c_time]);
      if (!v) fail("csv row " + std::to_string(row_no) + ": non-numeric visit_time");
      (*ds.visit_time)[i] = *v;
    }
    for (std::size_t k = 0; k < grid_cols.size(); ++k) {
      const std::string& cell = row[grid_cols[k].second];
      if (is_missing_token(cell)) continue;
      const auto v = parse_number(cell);
      if (!v || !std::isfinite(*v))
        fail("csv row " + std::to_string(row_no) + ": non-numeric y '" + cell + "' in column " + tab.header[grid_cols[k].second]);
      ds.values(i, static_cast<Eigen::Index>(k)) = *v;
      ds.observed(i, static_cast<Eigen::Index>(k)) = true;
    }
    if (ds.observed.row(i).count() < 2)
      fail("csv row " + std::to_string(row_no) + " (subject " + row[c_subject] + ") has fewer than 2 non-missing values");
    std::vector<std::string> covs;
    for (int c : cov_cols) covs.push_back(row[c]);
    cov_cells.push_back(std::move(covs));
  }
  build_covariates(ds, cov_names, cov_cells, schema);
  require_valid(ds, true);
  return ds;
}

std::string covariate_cell(const Covariate& c, std::size_t row) {
  if (c.missing(row)) return "NA";
  return c.categorical ? c.labels[row] : format_double(c.numeric[row]);
}

}  // namespace

Layout parse_layout(const std::string& name) {
  if (name == "long") return Layout::long_format;
  if (name == "wide") return Layout::wide;
  fail("unknown layout '" + name + "' (expected long or wide)");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

FunctionalDataset load_csv(std::istream& in, Layout layout, const CsvSchema& schema) {
  const Table tab = read_table(in);
  return layout == Layout::long_format ? load_long(tab, schema) : load_wide(tab, schema);
}

FunctionalDataset load_csv_file(const std::string& path, Layout layout, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path + "'");
  return load_csv(in, layout, schema);
}

void write_csv(std::ostream& out, const FunctionalDataset& ds, Layout layout) {
  const Eigen::Index n = ds.n_curves(), d = ds.grid_size();
  if (layout == Layout::long_format) {
    out << "subject,visit";
    if (ds.visit_time) out << ",visit_time";
    out << ",t,y";
    for (const auto& c : ds.covariates) out << ',' << c.name;
    out << '\n';
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index a = 0; a < d; ++a) {
        out << ds.subject_id[i] << ',' << ds.visit_index[i];
        if (ds.visit_time) out << ',' << format_double((*ds.visit_time)[i]);
        out << ',' << format_double(ds.grid.points[a]) << ',' << (ds.observed(i, a) ? format_double(ds.values(i, a)) : "NA");
        for (const auto& c : ds.covariates) out << ',' << covariate_cell(c, static_cast<std::size_t>(i));
        out << '\n';
      }
    return;
  }
  out << "subject,visit";
  if (ds.visit_time) out << ",visit_time";
  for (const auto& c : ds.covariates) out << ',' << c.name;
  for (Eigen::Index a = 0; a < d; ++a) out << ",t=" << format_double(ds.grid.points[a]);
  out << '\n';
  for (Eigen::Index i = 0; i < n; ++i) {
    out << ds.subject_id[i] << ',' << ds.visit_index[i];
    if (ds.visit_time) out << ',' << format_double((*ds.visit_time)[i]);
    for (const auto& c : ds.covariates) out << ',' << covariate_cell(c, static_cast<std::size_t>(i));
    for (Eigen::Index a = 0; a < d; ++a) out << ',' << (ds.observed(i, a) ? format_double(ds.values(i, a)) : "NA");
    out << '\n';
  }
}

}  // namespace fdaw
