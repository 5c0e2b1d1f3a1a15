#include "drfd/mc.hpp"

#include <atomic>
#include <functional>
#include <stdexcept>
#include <thread>

#include "drfd/io.hpp"
#include "drfd/rng.hpp"

namespace drfd::mc {

void McConfig::validate(Eigen::Index window) const {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (onset >= T) throw std::invalid_argument("onset must precede T");
  if (T < window + 1) throw std::invalid_argument("T too short for one window");
}

void parallel_runs(int runs, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, std::min(threads, runs));
  if (threads == 1) {
    for (int r = 0; r < runs; ++r) body(r);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int r = next.fetch_add(1); r < runs; r = next.fetch_add(1)) body(r);
    });
  for (auto& t : pool) t.join();
}

namespace {

struct RunCounts {
  double far = 0.0;
  std::vector<double> fdr;
};

RunCounts evaluate_run(const sim::StateSpaceModel& model,
                       const residual::ResidualGenerator& gen,
                       const sim::DisturbanceSpec& dist, const McConfig& mc,
                       std::uint64_t run_seed) {
  const Eigen::Index s = gen.basis.s;
  const Matrix U = Matrix::Zero(mc.T, model.nu());
  const Vector x0 = Vector::Zero(model.nx());

  RunCounts rc;
  Eigen::Index far_hits = 0, far_windows = 0;
  const Matrix PtP = gen.P.transpose() * gen.P;

  auto window_J = [&](const sim::Trajectory& traj, Eigen::Index k) {
    Vector u_s((s + 1) * model.nu()), y_s((s + 1) * model.ny());
    for (Eigen::Index b = 0; b <= s; ++b) {
      u_s.segment(b * model.nu(), model.nu()) = traj.U.row(k - s + b).transpose();
      y_s.segment(b * model.ny(), model.ny()) = traj.Y.row(k - s + b).transpose();
    }
    const Vector xi = gen.basis.primary_residual(u_s, y_s);
    return xi.dot(PtP * xi);
  };

  bool far_done = false;
  for (const auto& profile : mc.faults) {
    sim::FaultScenario fault;
    fault.profile = profile;
    fault.onset = mc.onset;
    const auto traj = sim::simulate(model, U, dist, fault, x0, run_seed);

    if (!far_done) {
      for (Eigen::Index k = s; k < mc.onset; ++k) {
        ++far_windows;
        if (window_J(traj, k) > 1.0) ++far_hits;
      }
      far_done = true;
    }
    Eigen::Index hits = 0, windows = 0;
    for (Eigen::Index k = mc.onset + s; k < mc.T; ++k) {
      ++windows;
      if (window_J(traj, k) > 1.0) ++hits;
    }
    rc.fdr.push_back(windows ? static_cast<double>(hits) / windows : 0.0);
  }
  if (mc.faults.empty()) {
    sim::FaultScenario fault = sim::FaultScenario::none(model.nf());
    const auto traj = sim::simulate(model, U, dist, fault, x0, run_seed);
    for (Eigen::Index k = s; k < mc.onset; ++k) {
      ++far_windows;
      if (window_J(traj, k) > 1.0) ++far_hits;
    }
  }
  rc.far = far_windows ? static_cast<double>(far_hits) / far_windows : 0.0;
  return rc;
}

}  // namespace

RatesRow run_monte_carlo(const sim::StateSpaceModel& model,
                         const residual::ResidualGenerator& gen,
                         const sim::DisturbanceSpec& dist, const McConfig& mc,
                         const std::string& name) {
  mc.validate(gen.basis.s);
  const int threads =
      mc.parallelism > 0 ? mc.parallelism
                         : io::env_threads(static_cast<int>(
                               std::thread::hardware_concurrency()));
  std::vector<RunCounts> per_run(static_cast<std::size_t>(mc.runs));
  Rng master(mc.seed);
  std::vector<std::uint64_t> run_seeds(static_cast<std::size_t>(mc.runs));
  for (int r = 0; r < mc.runs; ++r)
    run_seeds[static_cast<std::size_t>(r)] =
        master.derive(static_cast<std::uint64_t>(r)).next_u64();

  parallel_runs(mc.runs, threads, [&](int r) {
    per_run[static_cast<std::size_t>(r)] = evaluate_run(
        model, gen, dist, mc, run_seeds[static_cast<std::size_t>(r)]);
  });

  RatesRow row;
  row.name = name;
  row.fdr_pct.assign(mc.faults.size(), 0.0);
  for (int r = 0; r < mc.runs; ++r) {
    const auto& rc = per_run[static_cast<std::size_t>(r)];
    row.far_pct += rc.far;
    for (std::size_t j = 0; j < rc.fdr.size(); ++j) row.fdr_pct[j] += rc.fdr[j];
  }
  row.far_pct *= 100.0 / mc.runs;
  for (auto& f : row.fdr_pct) f *= 100.0 / mc.runs;
  return row;
}

std::vector<RatesRow> table_report(
    const sim::StateSpaceModel& model,
    const std::vector<std::pair<std::string, residual::ResidualGenerator>>& designs,
    const sim::DisturbanceSpec& dist, const McConfig& mc) {
  std::vector<RatesRow> rows;
  for (const auto& [name, gen] : designs)
    rows.push_back(run_monte_carlo(model, gen, dist, mc, name));
  return rows;
}

std::vector<SweepPoint> tradeoff_sweep(const design::DesignConfig& base,
                                       const std::vector<double>& gamma_grid,
                                       const std::vector<double>& beta_grid,
                                       const ambiguity::WassersteinBall& ball,
                                       const MatrixRef& V) {
  if (gamma_grid.empty() || beta_grid.empty())
    throw std::invalid_argument("sweep grids must be nonempty");
  if (base.faults.empty())
    throw std::invalid_argument("sweep requires a critical fault");

  std::vector<SweepPoint> points;
  for (const double beta : beta_grid) {
    for (const double gamma : gamma_grid) {
      design::DesignConfig cfg = base;
      for (auto& f : cfg.faults) {
        f.beta = beta;
        f.gamma = gamma;
      }
      SweepPoint pt;
      pt.beta = beta;
      pt.gamma = gamma;
      try {
        const auto result = design::sequential_design(cfg, ball, V);
        pt.status = design::to_string(result.status);
        if (result.status == design::DesignStatus::Converged ||
            result.status == design::DesignStatus::MaxIters) {
          pt.rho = design::detectability_metric(cfg.metric, result.Pbar, V);
          pt.eta = result.eta.size() ? result.eta(0) : 0.0;
        }
      } catch (const std::exception&) {
        pt.status = "error";
      }
      points.push_back(pt);
    }
  }
  return points;
}

std::vector<BenchPoint> timing_benchmark(const std::vector<Eigen::Index>& sizes,
                                         const design::DesignConfig& config,
                                         const ambiguity::WassersteinBall& ball,
                                         const MatrixRef& V) {
  std::vector<BenchPoint> points;
  for (const auto N : sizes) {
    if (N > ball.count())
      throw std::invalid_argument("benchmark size exceeds available samples");
    ambiguity::WassersteinBall sub;
    sub.theta = ball.theta;
    sub.samples = ball.samples.leftCols(N);
    BenchPoint pt;
    pt.N = N;
    const auto result = design::sequential_design(config, sub, V);
    pt.seconds = result.seconds;
    pt.iterations = result.iterations;
    points.push_back(pt);
  }
  return points;
}

}  // namespace drfd::mc
