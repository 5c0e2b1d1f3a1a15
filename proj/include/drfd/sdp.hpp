#pragma once

#include <string>
#include <utility>
#include <vector>

#include "drfd/types.hpp"

namespace drfd::sdp {

enum class Sense { Minimize, Maximize };
enum class Status { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(Status s);

/// Sparse linear expression over scalar decision variables.
struct LinExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;  // (variable index, coefficient)

  LinExpr& add(int var, double coeff) {
    if (coeff != 0.0) terms.emplace_back(var, coeff);
    return *this;
  }
};

/// Affine symmetric matrix expression F0 + sum_j x_j Fj, constrained PSD or
/// used as a logdet objective block.
struct AffineMatrix {
  Eigen::Index dim = 0;
  Matrix F0;
  std::vector<std::pair<int, Matrix>> terms;  // (variable index, symmetric coeff)

  explicit AffineMatrix(Eigen::Index d) : dim(d), F0(Matrix::Zero(d, d)) {}
  AffineMatrix& add(int var, Matrix coeff) {
    terms.emplace_back(var, std::move(coeff));
    return *this;
  }
  Matrix evaluate(const Vector& x) const;
};

/// Handle to a symmetric matrix variable stored as its upper triangle.
struct SymVar {
  int base = 0;
  Eigen::Index dim = 0;

  int index(Eigen::Index r, Eigen::Index c) const;
  Eigen::Index count() const { return dim * (dim + 1) / 2; }
  Matrix value(const Vector& x) const;
};

/// Linear SDP with optional logdet objective terms:
///   opt  c' x + constant + sum_b kappa_b logdet(G_b(x))
///   s.t. F_b(x) >= 0 (PSD blocks), linear inequalities/equalities, bounds.
class SdpProblem {
 public:
  int add_scalar(const std::string& name);
  int add_scalar(const std::string& name, double lower_bound);
  SymVar add_symmetric(const std::string& name, Eigen::Index dim,
                       bool require_psd = true);

  void add_lmi(AffineMatrix block);
  void add_linear_ge(LinExpr expr);   // expr >= 0
  void add_linear_eq(LinExpr expr);   // expr == 0
  void set_objective(Sense sense, LinExpr expr);
  /// logdet term with weight > 0; only meaningful for Sense::Maximize.
  void add_logdet_objective(AffineMatrix block, double weight = 1.0);

  int num_vars() const { return static_cast<int>(names_.size()); }
  const std::string& var_name(int i) const { return names_[i]; }

  const std::vector<AffineMatrix>& lmis() const { return lmis_; }
  const std::vector<LinExpr>& inequalities() const { return ineqs_; }
  const std::vector<LinExpr>& equalities() const { return eqs_; }
  const std::vector<std::pair<AffineMatrix, double>>& logdet_terms() const {
    return logdets_;
  }
  Sense sense() const { return sense_; }
  const LinExpr& objective() const { return objective_; }

  std::string dump_json() const;  // debugging reproduction format

 private:
  std::vector<std::string> names_;
  std::vector<AffineMatrix> lmis_;
  std::vector<LinExpr> ineqs_, eqs_;
  std::vector<std::pair<AffineMatrix, double>> logdets_;
  Sense sense_ = Sense::Minimize;
  LinExpr objective_;
};

struct SolveOptions {
  double feas_tol = 1e-7;
  double gap_tol = 1e-7;
  int max_iters = 120;
  bool verbose = false;
};

struct SolveStats {
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double seconds = 0.0;
  std::string logdet_mode;  // "none" or "native-barrier"
};

struct SdpSolution {
  Status status = Status::NumericalFailure;
  Vector x;
  double objective = 0.0;  // in the user's sense, constants included
  SolveStats stats;

  double value(int var) const { return x(var); }
  Matrix value(const SymVar& v) const { return v.value(x); }
};

SdpSolution solve(const SdpProblem& problem, const SolveOptions& opts = {});

/// Independent replay of all constraints at x; returns the worst violation
/// (most negative LMI eigenvalue / inequality slack, largest |equality|).
double max_constraint_violation(const SdpProblem& problem, const Vector& x);

/// Symmetric PSD square root by eigendecomposition; negative eigenvalues
/// below -tol * max(1, ||M||) are rejected, small ones are clipped to zero.
Matrix matrix_sqrt_psd(const MatrixRef& M, double tol = 1e-9);

}  // namespace drfd::sdp
