#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "drfd/types.hpp"

namespace drfd::sim {

/// Discrete-time stochastic LTI plant
///   x(k+1) = A x + B u + B_d d + B_f f
///   y(k)   = C x + D u + D_d d + D_f f
struct StateSpaceModel {
  Matrix A, B, Bd, Bf, C, D, Dd, Df;

  Eigen::Index nx() const { return A.rows(); }
  Eigen::Index nu() const { return B.cols(); }
  Eigen::Index ny() const { return C.rows(); }
  Eigen::Index nd() const { return Bd.cols(); }
  Eigen::Index nf() const { return Bf.cols(); }

  /// Throws std::invalid_argument on inconsistent dimensions or an
  /// unobservable (A, C) pair.
  void validate() const;

  /// Rank of [C; CA; ...; CA^{nx-1}].
  bool observable() const;
};

enum class DisturbanceKind { Gaussian, Laplace, EmpiricalFile };

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::Gaussian;
  Vector mean;
  Matrix covariance;  // diagonal required for Laplace
  std::string source_path;          // EmpiricalFile only
  Matrix empirical;                 // rows = pool of samples, loaded by io
  void validate() const;
};

struct FaultScenario {
  Vector profile;                       // constant magnitude per channel
  Eigen::Index onset = 0;               // sample index
  std::optional<Eigen::Index> duration; // empty = until end

  static FaultScenario none(Eigen::Index nf);
  bool active_at(Eigen::Index k) const;
};

struct Trajectory {
  Matrix U, Y, D, F;  // T x (nu|ny|nd|nf)
  Vector x0;
  std::uint64_t seed = 0;
  Eigen::Index length() const { return Y.rows(); }
};

/// Three-tank benchmark linearized around the operating point, 5 s sampling.
StateSpaceModel three_tank_model();

/// count i.i.d. draws (rows) from the disturbance law. For Laplace the
/// per-coordinate scale is sqrt(cov_jj / 2) so that the variance matches the
/// declared covariance.
Matrix sample_disturbance(const DisturbanceSpec& spec, Eigen::Index count,
                          std::uint64_t seed);

Trajectory simulate(const StateSpaceModel& model, const MatrixRef& U,
                    const DisturbanceSpec& dist, const FaultScenario& fault,
                    const VectorRef& x0, std::uint64_t seed);

/// Pseudo-random binary input, +-amplitude per channel, held for `hold` steps.
Matrix prbs_input(Eigen::Index T, Eigen::Index nu, double amplitude,
                  Eigen::Index hold, std::uint64_t seed);

/// Block Hankel matrix of N stacked windows: column j is
/// [x(k-N+j-s); ...; x(k-N+j)] with k the last index of the signal (1-based j).
Matrix hankel(const MatrixRef& signal, Eigen::Index s, Eigen::Index N);

}  // namespace drfd::sim
