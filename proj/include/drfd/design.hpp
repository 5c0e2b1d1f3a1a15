#pragma once

#include <vector>

#include "drfd/ambiguity.hpp"
#include "drfd/sdp.hpp"
#include "drfd/types.hpp"

namespace drfd::design {

enum class Metric { Rho1, Rho2 };
enum class DesignStatus { Converged, MaxIters, Infeasible, NumericalFailure };

const char* to_string(DesignStatus s);

struct FaultSpec {
  Vector signature;     // c = Vbar fbar in residual space
  double beta = 0.9;    // nominal FDR floor, in (0,1)
  double gamma = 0.0;   // trade-off weight, >= 0
};

struct SupportEllipsoid {
  Matrix omega;   // positive definite shape
  Vector center;
};

struct DesignConfig {
  double alpha = 0.01;
  double theta = 0.0;
  Metric metric = Metric::Rho1;
  std::vector<FaultSpec> faults;
  std::vector<SupportEllipsoid> support;
  int max_iters = 50;
  double conv_tol = 1e-6;
  int init_iters = 10;          // alternation budget for the initialization
  double mult_headroom = 1.4;   // certificate headroom in multiplier extraction
  sdp::SolveOptions sdp_opts;

  void validate() const;
};

struct MultiplierSet {
  Vector tau;   // N
  Matrix pi;    // N x K
};

struct DesignResult {
  Matrix Pbar, P;
  Vector eta;                          // per fault
  MultiplierSet multipliers;
  std::vector<double> objective_trace; // accepted iterates, nondecreasing
  DesignStatus status = DesignStatus::NumericalFailure;
  double objective = 0.0;
  double oracle_far = 0.0;
  std::vector<double> oracle_fdr_deficit;
  double seconds = 0.0;
  int iterations = 0;
};

/// rho1 = tr(V' Pbar V); rho2 = logdet(Lam U1' Pbar U1 Lam) from the compact
/// SVD V = U1 Lam U2' (singular values below 1e-10 of the largest truncated).
/// rho2 of a singular inner matrix is -infinity.
double detectability_metric(Metric metric, const MatrixRef& Pbar,
                            const MatrixRef& V);

// ---- problem builders; each returns the SdpProblem plus variable handles ----

struct DistanceProblem {
  sdp::SdpProblem problem;
  int pi = 0, p = 0, u = 0;
  std::vector<int> omega;
};

/// Lemma-2 projection SDP: max u s.t. the S-procedure block and [p u; u 1].
DistanceProblem distance_sdp(const VectorRef& xi, const MatrixRef& Pbar,
                             const VectorRef& c);

/// Support-aware variant; all samples must lie inside every ellipsoid.
DistanceProblem bounded_support_distance_sdp(
    const VectorRef& xi, const MatrixRef& Pbar, const VectorRef& c,
    const std::vector<SupportEllipsoid>& support);

struct FarDualProblem {
  sdp::SdpProblem problem;
  int lambda = 0;
  std::vector<int> y, tau, t, q;
};

/// J1 subproblem: min theta + (1/N) sum y_i - lambda alpha at fixed Pbar.
FarDualProblem build_far_dual(const MatrixRef& Pbar,
                              const ambiguity::WassersteinBall& ball,
                              double alpha);

struct FdrDualProblem {
  sdp::SdpProblem problem;
  std::vector<int> v, pi, u, p;
};

/// J2 subproblem: min (1/N) sum v_i - (1-beta) eta at fixed (Pbar, eta).
FdrDualProblem build_fdr_dual(const MatrixRef& Pbar, double eta,
                              const MatrixRef& samples, const VectorRef& c,
                              double beta,
                              const std::vector<SupportEllipsoid>& support = {});

struct MasterProblem {
  sdp::SdpProblem problem;
  sdp::SymVar Pbar;
  int lambda = 0;
  std::vector<int> eta;  // per fault
};

/// Fixed-multiplier master: max rho(Pbar) + sum gamma_j eta_j over all
/// Theorem-1 families, LMIs affine once (tau, pi) are frozen.
MasterProblem build_master(const ambiguity::WassersteinBall& ball,
                           const MultiplierSet& multipliers,
                           const DesignConfig& config, const MatrixRef& V);

/// FAR-family master with objective max |c|^2_Pbar (sum over directions).
MasterProblem build_init_master(const ambiguity::WassersteinBall& ball,
                                const Vector& tau, double alpha, double theta,
                                const std::vector<Vector>& directions);

// ---- closed-form optimal solutions of the subproblems ----

struct FarDualSolution {
  double value = 0.0;
  double lambda = 0.0;
  Vector tau;        // certificate multipliers on the optimal face
  Vector distances;  // alarm-set distances per sample
};

/// Solves J1 exactly through its piecewise-linear form and returns the
/// loosest certificate multipliers consistent with the optimum (headroom
/// controls how far beyond lambda* the certificates reach).
FarDualSolution solve_far_dual(const MatrixRef& Pbar,
                               const ambiguity::WassersteinBall& ball,
                               double alpha, double headroom);

struct FdrDualSolution {
  double value = 0.0;
  Vector pi;
  Vector distances;  // faulted-set distances per sample
};

FdrDualSolution solve_fdr_dual(const MatrixRef& Pbar, double eta,
                               const MatrixRef& samples, const VectorRef& c,
                               double beta, double headroom);

// ---- design loops ----

/// Initialization problem: maximize sensitivity along the fault signatures
/// subject to the worst-case FAR families, solved by the same alternating
/// multiplier loop. Empty or zero directions fall back to maximizing rho1
/// with V = I.
DesignResult build_init(const ambiguity::WassersteinBall& ball, double alpha,
                        double theta, const std::vector<Vector>& directions,
                        const DesignConfig& config);

/// Generic DRFD baseline: max rho(Pbar) under the FAR families only.
DesignResult generic_design(const DesignConfig& config,
                            const ambiguity::WassersteinBall& ball,
                            const MatrixRef& V);

/// Algorithm 1: initialization, empirical-FDR feasibility gate, then the
/// sequential J1/J2/master alternation with certificate replay at the end.
DesignResult sequential_design(const DesignConfig& config,
                               const ambiguity::WassersteinBall& ball,
                               const MatrixRef& V);

}  // namespace drfd::design
