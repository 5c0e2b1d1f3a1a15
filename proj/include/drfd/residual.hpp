#pragma once

#include <string>

#include "drfd/sim.hpp"
#include "drfd/types.hpp"

namespace drfd::residual {

enum class GeneratorKind { Parity, Skr };

/// The window-to-primary-residual map shared by parity and SKR generators:
///   parity: xi = Gamma_perp (y_s - H_us u_s)
///   skr:    xi = K [u_s; y_s]
struct GeneratorBasis {
  GeneratorKind kind = GeneratorKind::Parity;
  Eigen::Index s = 0;
  Eigen::Index nu = 0, ny = 0;
  Matrix Gamma_perp, H_us;  // parity
  Matrix K;                 // skr

  Eigen::Index n_xi() const {
    return kind == GeneratorKind::Parity ? Gamma_perp.rows() : K.rows();
  }
  Vector primary_residual(const VectorRef& u_s, const VectorRef& y_s) const;
};

/// Model-based parity relation of order s.
struct ParityModel {
  Eigen::Index s = 0;
  Matrix Gamma_s;      // (s+1) ny x nx
  Matrix H_us, H_ds, H_fs;
  Matrix Gamma_perp;   // n_xi x (s+1) ny, orthonormal rows spanning the left null space
  Matrix W;            // Gamma_perp H_ds
  Matrix V;            // Gamma_perp H_fs
  Eigen::Index nu = 0, ny = 0;

  Eigen::Index n_xi() const { return Gamma_perp.rows(); }
  GeneratorBasis basis() const;
};

/// Data-driven stable kernel representation identified by LQ factorization.
struct SkrModel {
  Eigen::Index s = 0;
  Matrix K;            // n_xi x (s+1)(nu+ny), orthonormal rows
  Matrix W;            // identity n_xi x n_xi
  Matrix V;            // default fault coefficient matrix (sensor side, = K_y)
  Matrix xi_samples;   // n_xi x N, columns of K_y R33 Q3 scaled by 1/sqrt(N)
  std::string sample_scaling;  // documents the scaling applied to xi_samples
  Eigen::Index nu = 0, ny = 0;

  Eigen::Index n_xi() const { return K.rows(); }
  Matrix Ku() const { return K.leftCols((s + 1) * nu); }
  Matrix Ky() const { return K.rightCols((s + 1) * ny); }
  /// Stacked-window coefficient matrix for sensor bias (K_y) or actuator
  /// failure (-K_u).
  Matrix fault_matrix(bool sensor) const { return sensor ? Ky() : -Ku(); }
  GeneratorBasis basis() const;
};

/// Residual generator r = P xi with unit alarm threshold J(r) = ||r||^2 > 1.
struct ResidualGenerator {
  GeneratorBasis basis;
  Matrix P;  // n_r x n_xi
  Matrix W, V;
  static constexpr double threshold = 1.0;
};

struct Evaluation {
  Vector r;
  double J = 0.0;
  bool alarm = false;
};

/// Lower triangular block-Toeplitz operator with s+1 block rows/columns:
/// block (i,j) = Dx if i = j, C A^{i-j-1} Bx if i > j, 0 otherwise.
Matrix toeplitz_block(const MatrixRef& A, const MatrixRef& Bx,
                      const MatrixRef& C, const MatrixRef& Dx,
                      Eigen::Index s);

/// Requires s >= nx and an observable pair; Gamma_perp spans the full left
/// null space of Gamma_s, so n_xi = (s+1) ny - nx.
ParityModel build_parity(const sim::StateSpaceModel& model, Eigen::Index s);

/// LQ-factor the stacked data [Z_p; U_f; Y_f] (Hankel blocks, equal column
/// count) and extract the kernel of [R21 R22; R31 R32]. `order` fixes the
/// system order n_x; order < 0 detects the rank numerically.
SkrModel build_skr_qr(const MatrixRef& U_p, const MatrixRef& Y_p,
                      const MatrixRef& U_f, const MatrixRef& Y_f,
                      Eigen::Index order = -1);

/// Primary residual samples from a fault-free trajectory; windows end at
/// k = s, s + stride, ... Returns an n_xi x N matrix.
Matrix collect_primary_residuals(const GeneratorBasis& basis,
                                 const sim::Trajectory& traj,
                                 Eigen::Index stride = 1);

/// Vbar = V_stacked (1_{s+1} (x) I_{n_f}); Vbar fbar is the residual shift of
/// a constant fault fbar covering the whole window.
Matrix lift_constant_fault(const MatrixRef& V_stacked, Eigen::Index n_f,
                           Eigen::Index s);

/// Classical unified solution P* = Lambda_W^{-1} U_W^T; P* W has orthonormal
/// rows. Throws on rank-deficient W.
Matrix unified_solution(const MatrixRef& W);

Evaluation evaluate_residual(const ResidualGenerator& gen, const VectorRef& u_s,
                             const VectorRef& y_s);

}  // namespace drfd::residual
