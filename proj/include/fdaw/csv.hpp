#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fdaw/data.hpp"

namespace fdaw {

enum class Layout { long_format, wide };

Layout parse_layout(const std::string& name);

// Maps the canonical roles onto the column names used in a file.
struct CsvSchema {
  std::string subject{"subject"};
  std::string visit{"visit"};
  std::string visit_time{"visit_time"};
  std::string t{"t"};
  std::string y{"y"};
  std::vector<std::string> categorical;  // covariates forced categorical even if numeric-looking
};

// Long: one row per (subject, visit, t) cell. Wide: one row per curve with
// grid columns named t=<value>. Missing cells are empty or NA.
FunctionalDataset load_csv(std::istream& in, Layout layout, const CsvSchema& schema = {});
FunctionalDataset load_csv_file(const std::string& path, Layout layout, const CsvSchema& schema = {});

void write_csv(std::ostream& out, const FunctionalDataset& ds, Layout layout);

// Shortest decimal representation that round-trips.
std::string format_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace fdaw
