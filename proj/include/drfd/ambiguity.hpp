#pragma once

#include <vector>

#include "drfd/types.hpp"

namespace drfd::ambiguity {

/// Empirical residual samples (columns) plus Wasserstein radius theta.
struct WassersteinBall {
  Matrix samples;  // n_xi x N
  double theta = 0.0;

  Eigen::Index dim() const { return samples.rows(); }
  Eigen::Index count() const { return samples.cols(); }
  void validate() const;
};

/// Quadratic alarm geometry: the faulted no-alarm set is
/// S = { xi : (xi + c)' Pbar (xi + c) <= 1 } and the alarm set is
/// { xi : xi' Pbar xi >= 1 }.
struct AlarmGeometry {
  Matrix Pbar;
  Vector shift;  // c = Vbar fbar, zero for the fault-free set
  void validate() const;
};

/// Eigendecomposition cache for repeated projections against one Pbar.
class EllipsoidEig {
 public:
  explicit EllipsoidEig(const MatrixRef& Pbar);
  const Vector& eigenvalues() const { return w_; }
  double max_eigenvalue() const { return w_.size() ? w_(w_.size() - 1) : 0.0; }

  /// Distance from xi to {z : (z+c)' Pbar (z+c) <= 1} and the Lagrange
  /// multiplier of the projection (0 when inside).
  std::pair<double, double> project_to_safe(const VectorRef& xi,
                                            const VectorRef& c) const;

  /// Distance from xi to {z : z' Pbar z >= 1} and its multiplier. Throws
  /// std::domain_error when Pbar = 0 (empty alarm set).
  std::pair<double, double> project_to_alarm(const VectorRef& xi) const;

 private:
  Matrix Q_;
  Vector w_;  // ascending, negatives clipped at validation tolerance
};

/// Euclidean distance from xi to the faulted no-alarm set; 0 if inside.
/// Kernel directions of Pbar are unconstrained (cylinder semantics).
double dist_to_faulted_set(const VectorRef& xi, const MatrixRef& Pbar,
                           const VectorRef& c);

/// Distance from xi to the alarm set; 0 if already alarmed. Throws
/// std::domain_error for Pbar = 0.
double dist_to_alarm_set(const VectorRef& xi, const MatrixRef& Pbar);

Vector faulted_distances(const MatrixRef& samples, const MatrixRef& Pbar,
                         const VectorRef& c);
Vector alarm_distances(const MatrixRef& samples, const MatrixRef& Pbar);

/// Exact worst-case FAR over the Wasserstein ball:
///   min_{lt >= 0} lt theta + (1/N) sum max{1 - lt d_i, 0}
/// with d_i the alarm-set distances. Equals the empirical (closure) FAR at
/// theta = 0, and 0 when Pbar = 0.
double worst_case_far_oracle(const WassersteinBall& ball, const MatrixRef& Pbar);

/// Value of the relaxed-FDR subproblem in scaled form,
///   (1/N) sum max{eta - d_i, 0} - (1 - beta) eta,
/// nonpositive exactly when the relaxed DRCC holds at (Pbar, eta).
/// Requires eta > 0.
double relaxed_fdr_deficit_oracle(const MatrixRef& samples, const MatrixRef& Pbar,
                                  const VectorRef& c, double eta, double beta);

/// Same expression extended continuously to eta = 0 (used for certificates).
double fdr_deficit_value(const Vector& faulted_dists, double eta, double beta);

/// 1-D piecewise-linear value of the FAR dual subproblem,
///   min_{lambda >= 0} theta + (1/N) sum max{lambda - d_i, 0} - lambda alpha.
double far_dual_value_oracle(const WassersteinBall& ball, const MatrixRef& Pbar,
                             double alpha);
double far_dual_value_from_distances(const Vector& d, double theta, double alpha);

struct Rates {
  double far = 0.0;
  std::vector<double> fdr;  // per fault shift
};

/// Strict-threshold empirical rates per Definition 1: alarms are J > 1.
Rates empirical_rates(const MatrixRef& samples, const MatrixRef& Pbar,
                      const std::vector<Vector>& shifts);

}  // namespace drfd::ambiguity
