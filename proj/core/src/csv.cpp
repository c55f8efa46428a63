#include "enkbs/csv.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace enkbs {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& metadata,
                     const std::vector<std::string>& columns)
    : out_(path), columns_(columns.size()) {
  if (!out_) throw std::runtime_error("CsvWriter: cannot open " + path.string());
  out_ << "# " << metadata << "\n";
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << "\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != columns_) throw std::invalid_argument("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    out_ << (i ? "," : "") << format_double(values[i]);
  out_ << "\n";
}

void CsvWriter::raw_row(const std::string& line) { out_ << line << "\n"; }

void write_moment_series_csv(const std::filesystem::path& path, const std::string& metadata,
                             const MomentSeries& series) {
  const Eigen::Index n = series.dim();
  std::vector<std::string> cols{"t"};
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back("mean_" + std::to_string(i));
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back("var_" + std::to_string(i));
  CsvWriter csv(path, metadata, cols);

  std::vector<double> row(cols.size());
  for (std::size_t k = 0; k <= series.grid.steps; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    row[0] = series.grid.time(k);
    for (Eigen::Index i = 0; i < n; ++i) row[1 + i] = series.means(i, kk);
    for (Eigen::Index i = 0; i < n; ++i) row[1 + n + i] = series.covs[k](i, i);
    csv.row(row);
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const std::string& metadata,
                          const Trajectory& trajectory) {
  const Eigen::Index n = trajectory.dim();
  std::vector<std::string> cols{"t"};
  for (Eigen::Index i = 0; i < n; ++i) cols.push_back("x_" + std::to_string(i));
  CsvWriter csv(path, metadata, cols);

  std::vector<double> row(cols.size());
  for (std::size_t k = 0; k <= trajectory.grid.steps; ++k) {
    row[0] = trajectory.grid.time(k);
    for (Eigen::Index i = 0; i < n; ++i) row[1 + i] = trajectory.values(i, static_cast<Eigen::Index>(k));
    csv.row(row);
  }
}

void write_member_csv(const std::filesystem::path& path, const std::string& metadata,
                      const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& members,
                      Eigen::Index component) {
  if (members.empty()) throw std::invalid_argument("write_member_csv: empty history");
  const Eigen::Index m = members.front().cols();
  std::vector<std::string> cols{"t"};
  for (Eigen::Index i = 0; i < m; ++i) cols.push_back("member_" + std::to_string(i));
  CsvWriter csv(path, metadata, cols);

  std::vector<double> row(cols.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < members.size(); ++k) {
    row[0] = grid.time(k);
    for (Eigen::Index i = 0; i < m; ++i)
      row[1 + i] = members[k].size() ? members[k](component, i) : nan;
    csv.row(row);
  }
}

}  // namespace enkbs
