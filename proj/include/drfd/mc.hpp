#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "drfd/ambiguity.hpp"
#include "drfd/design.hpp"
#include "drfd/residual.hpp"
#include "drfd/sim.hpp"
#include "drfd/types.hpp"

namespace drfd::mc {

struct McConfig {
  int runs = 250;
  Eigen::Index T = 800;
  Eigen::Index onset = 400;            // 0-based sample index of fault injection
  std::vector<Vector> faults;          // constant profiles under test
  std::uint64_t seed = 1;
  int parallelism = 0;                 // 0 = DRFD_THREADS / hardware

  void validate(Eigen::Index window) const;
};

struct RatesRow {
  std::string name;
  double far_pct = 0.0;
  std::vector<double> fdr_pct;
  std::vector<double> eta;
  double rho = 0.0;
  int iterations = 0;
  double seconds = 0.0;
};

/// Per run: the fault-free prefix [0, onset) supplies FAR windows and the
/// faulted tail supplies FDR windows; windows straddling the onset are
/// excluded from both counts. Rates are per-run fractions averaged over runs.
RatesRow run_monte_carlo(const sim::StateSpaceModel& model,
                         const residual::ResidualGenerator& gen,
                         const sim::DisturbanceSpec& dist, const McConfig& mc,
                         const std::string& name = "design");

/// Evaluates several designs under identical seeds (Table-1 style report).
std::vector<RatesRow> table_report(
    const sim::StateSpaceModel& model,
    const std::vector<std::pair<std::string, residual::ResidualGenerator>>& designs,
    const sim::DisturbanceSpec& dist, const McConfig& mc);

struct SweepPoint {
  double beta = 0.0, gamma = 0.0;
  double rho = 0.0, eta = 0.0;
  std::string status;
};

/// One sequential design per (beta, gamma) grid point; the initialization is
/// shared across points since it does not depend on beta or gamma.
std::vector<SweepPoint> tradeoff_sweep(const design::DesignConfig& base,
                                       const std::vector<double>& gamma_grid,
                                       const std::vector<double>& beta_grid,
                                       const ambiguity::WassersteinBall& ball,
                                       const MatrixRef& V);

struct BenchPoint {
  Eigen::Index N = 0;
  double seconds = 0.0;
  int iterations = 0;
};

std::vector<BenchPoint> timing_benchmark(const std::vector<Eigen::Index>& sizes,
                                         const design::DesignConfig& config,
                                         const ambiguity::WassersteinBall& ball,
                                         const MatrixRef& V);

/// Deterministic parallel map over run indices (results land in caller slots).
void parallel_runs(int runs, int threads, const std::function<void(int)>& body);

}  // namespace drfd::mc
