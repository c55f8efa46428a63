#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "enkbs/ensemble.hpp"

namespace enkbs {

// CSV files carry one leading metadata comment line ("# key=value ...") and a
// header row. Doubles print with %.17g so reruns under an identical config
// are byte-identical; NaN prints as "nan" and marks divergence.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& metadata,
            const std::vector<std::string>& columns);

  void row(const std::vector<double>& values);
  void raw_row(const std::string& line);

 private:
  std::ofstream out_;
  std::size_t columns_ = 0;
};

std::string format_double(double value);

// Time series schema: t, mean_<i>..., var_<i>... (diagonal covariance only).
void write_moment_series_csv(const std::filesystem::path& path, const std::string& metadata,
                             const MomentSeries& series);

// Trajectory schema: t, x_<i>...
void write_trajectory_csv(const std::filesystem::path& path, const std::string& metadata,
                          const Trajectory& trajectory);

// Member trajectories of one state component: t, member_0...member_{m-1}.
void write_member_csv(const std::filesystem::path& path, const std::string& metadata,
                      const TimeGrid& grid, const std::vector<Eigen::MatrixXd>& members,
                      Eigen::Index component);

}  // namespace enkbs
