#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "drfd/design.hpp"
#include "drfd/types.hpp"

namespace drfd::calibrate {

struct CalibrationReport {
  std::vector<double> grid;            // ascending radii
  std::vector<double> mean_far;        // per grid point
  Matrix fold_fars;                    // grid x K
  double selected_theta = 0.0;
  int selected_index = -1;
  int folds = 0;
  std::uint64_t seed = 0;
};

/// Raised when no grid point keeps the mean held-out FAR within alpha; the
/// partial report (FAR table) rides along for diagnostics.
class GridExhausted : public std::runtime_error {
 public:
  GridExhausted(std::string msg, CalibrationReport report)
      : std::runtime_error(std::move(msg)), report(std::move(report)) {}
  CalibrationReport report;
};

/// K-fold cross-validation of the Wasserstein radius: for each theta and
/// fold, train the generic design on the merged remainder and measure the
/// held-out empirical FAR (strict threshold). Selects the largest qualifying
/// theta as written in the source procedure; set select_smallest for the
/// least-conservative variant.
CalibrationReport cross_validate(const MatrixRef& samples,
                                 const std::vector<double>& grid, int K,
                                 double alpha, design::Metric metric,
                                 std::uint64_t seed,
                                 const design::DesignConfig& base = {},
                                 bool select_smallest = false);

}  // namespace drfd::calibrate
