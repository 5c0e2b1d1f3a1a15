#include "drfd/calibrate.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "drfd/ambiguity.hpp"
#include "drfd/rng.hpp"

namespace drfd::calibrate {

CalibrationReport cross_validate(const MatrixRef& samples,
                                 const std::vector<double>& grid, int K,
                                 double alpha, design::Metric metric,
                                 std::uint64_t seed,
                                 const design::DesignConfig& base,
                                 bool select_smallest) {
  if (grid.empty()) throw std::invalid_argument("radius grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw std::invalid_argument("radius grid must be strictly ascending");
  const Eigen::Index N = samples.cols();
  if (K < 2 || K > N) throw std::invalid_argument("fold count out of range");

  // seeded permutation, then contiguous folds with the remainder spread over
  // the leading folds
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(N));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (Eigen::Index i = N - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.next_u64() %
                                             static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(K));
  {
    const Eigen::Index base_size = N / K, extra = N % K;
    Eigen::Index pos = 0;
    for (int k = 0; k < K; ++k) {
      const Eigen::Index size = base_size + (k < extra ? 1 : 0);
      for (Eigen::Index i = 0; i < size; ++i)
        folds[static_cast<std::size_t>(k)].push_back(perm[static_cast<std::size_t>(pos++)]);
    }
  }

  CalibrationReport report;
  report.grid = grid;
  report.folds = K;
  report.seed = seed;
  report.fold_fars.resize(static_cast<Eigen::Index>(grid.size()), K);
  const Eigen::Index n = samples.rows();
  const Matrix V = Matrix::Identity(n, n);

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    for (int k = 0; k < K; ++k) {
      const auto& test = folds[static_cast<std::size_t>(k)];
      ambiguity::WassersteinBall ball;
      ball.theta = grid[gi];
      ball.samples.resize(n, N - static_cast<Eigen::Index>(test.size()));
      Eigen::Index col = 0;
      for (int k2 = 0; k2 < K; ++k2) {
        if (k2 == k) continue;
        for (const auto idx : folds[static_cast<std::size_t>(k2)])
          ball.samples.col(col++) = samples.col(idx);
      }
      design::DesignConfig cfg = base;
      cfg.alpha = alpha;
      cfg.theta = grid[gi];
      cfg.faults.clear();
      cfg.metric = metric;
      const auto result = design::generic_design(cfg, ball, V);
      Eigen::Index hits = 0;
      for (const auto idx : test) {
        const Vector xi = samples.col(idx);
        if (xi.dot(result.Pbar * xi) > 1.0) ++hits;
      }
      report.fold_fars(static_cast<Eigen::Index>(gi), k) =
          static_cast<double>(hits) / static_cast<double>(test.size());
    }
    report.mean_far.push_back(
        report.fold_fars.row(static_cast<Eigen::Index>(gi)).mean());
  }

  report.selected_index = -1;
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    if (report.mean_far[gi] > alpha) continue;
    if (report.selected_index < 0) {
      report.selected_index = static_cast<int>(gi);
    } else if (!select_smallest) {
      report.selected_index = static_cast<int>(gi);  // keep the largest
    }
  }
  if (report.selected_index < 0) {
    std::ostringstream msg;
    msg << "grid exhausted: no radius keeps mean held-out FAR within "
        << alpha << " (";
    for (std::size_t gi = 0; gi < grid.size(); ++gi)
      msg << (gi ? ", " : "") << "theta=" << grid[gi] << " FAR="
          << report.mean_far[gi];
    msg << ")";
    throw GridExhausted(msg.str(), report);
  }
  report.selected_theta = grid[static_cast<std::size_t>(report.selected_index)];
  return report;
}

}  // namespace drfd::calibrate
