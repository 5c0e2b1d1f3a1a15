#include "drfd/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace drfd::sdp {

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

Matrix AffineMatrix::evaluate(const Vector& x) const {
  Matrix M = F0;
  for (const auto& [var, coeff] : terms) M += x(var) * coeff;
  return M;
}

int SymVar::index(Eigen::Index r, Eigen::Index c) const {
  if (r > c) std::swap(r, c);
  // upper-triangle, row-major: (r, c) with r <= c
  return base + static_cast<int>(r * dim - r * (r - 1) / 2 + (c - r));
}

Matrix SymVar::value(const Vector& x) const {
  Matrix M(dim, dim);
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index c = r; c < dim; ++c)
      M(r, c) = M(c, r) = x(index(r, c));
  return M;
}

int SdpProblem::add_scalar(const std::string& name) {
  names_.push_back(name);
  return num_vars() - 1;
}

int SdpProblem::add_scalar(const std::string& name, double lower_bound) {
  const int v = add_scalar(name);
  LinExpr bound;
  bound.constant = -lower_bound;
  bound.add(v, 1.0);
  add_linear_ge(bound);
  return v;
}

SymVar SdpProblem::add_symmetric(const std::string& name, Eigen::Index dim,
                                 bool require_psd) {
  SymVar v{num_vars(), dim};
  for (Eigen::Index r = 0; r < dim; ++r)
    for (Eigen::Index c = r; c < dim; ++c)
      names_.push_back(name + "(" + std::to_string(r) + "," + std::to_string(c) + ")");
  if (require_psd) {
    AffineMatrix cone(dim);
    for (Eigen::Index r = 0; r < dim; ++r)
      for (Eigen::Index c = r; c < dim; ++c) {
        Matrix E = Matrix::Zero(dim, dim);
        E(r, c) = E(c, r) = 1.0;
        cone.add(v.index(r, c), std::move(E));
      }
    add_lmi(std::move(cone));
  }
  return v;
}

void SdpProblem::add_lmi(AffineMatrix block) {
  for (const auto& [var, coeff] : block.terms) {
    if (var < 0 || var >= num_vars())
      throw std::invalid_argument("LMI references an undeclared variable");
    if (coeff.rows() != block.dim || coeff.cols() != block.dim)
      throw std::invalid_argument("LMI coefficient dimension mismatch");
    if (!coeff.isApprox(coeff.transpose(), 1e-10))
      throw std::invalid_argument("LMI coefficient must be symmetric");
  }
  if (!block.F0.isApprox(block.F0.transpose(), 1e-10))
    throw std::invalid_argument("LMI constant must be symmetric");
  lmis_.push_back(std::move(block));
}

void SdpProblem::add_linear_ge(LinExpr expr) { ineqs_.push_back(std::move(expr)); }
void SdpProblem::add_linear_eq(LinExpr expr) { eqs_.push_back(std::move(expr)); }

void SdpProblem::set_objective(Sense sense, LinExpr expr) {
  sense_ = sense;
  objective_ = std::move(expr);
}

void SdpProblem::add_logdet_objective(AffineMatrix block, double weight) {
  if (weight <= 0.0) throw std::invalid_argument("logdet weight must be positive");
  logdets_.emplace_back(std::move(block), weight);
}

std::string SdpProblem::dump_json() const {
  std::ostringstream os;
  os << "{\"variables\":[";
  for (int i = 0; i < num_vars(); ++i)
    os << (i ? "," : "") << '"' << names_[i] << '"';
  os << "],\"sense\":\"" << (sense_ == Sense::Minimize ? "min" : "max") << '"';
  auto expr_json = [&](const LinExpr& e) {
    std::ostringstream s;
    s << "{\"constant\":" << e.constant << ",\"terms\":[";
    for (std::size_t t = 0; t < e.terms.size(); ++t)
      s << (t ? "," : "") << '[' << e.terms[t].first << ',' << e.terms[t].second << ']';
    s << "]}";
    return s.str();
  };
  auto mat_json = [&](const Matrix& M) {
    std::ostringstream s;
    s << '[';
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      s << (r ? ",[" : "[");
      for (Eigen::Index c = 0; c < M.cols(); ++c) s << (c ? "," : "") << M(r, c);
      s << ']';
    }
    s << ']';
    return s.str();
  };
  os << ",\"objective\":" << expr_json(objective_);
  os << ",\"lmis\":[";
  for (std::size_t b = 0; b < lmis_.size(); ++b) {
    os << (b ? "," : "") << "{\"dim\":" << lmis_[b].dim
       << ",\"F0\":" << mat_json(lmis_[b].F0) << ",\"terms\":[";
    for (std::size_t t = 0; t < lmis_[b].terms.size(); ++t)
      os << (t ? "," : "") << "{\"var\":" << lmis_[b].terms[t].first
         << ",\"coeff\":" << mat_json(lmis_[b].terms[t].second) << '}';
    os << "]}";
  }
  os << "],\"inequalities\":[";
  for (std::size_t i = 0; i < ineqs_.size(); ++i)
    os << (i ? "," : "") << expr_json(ineqs_[i]);
  os << "],\"equalities\":[";
  for (std::size_t i = 0; i < eqs_.size(); ++i)
    os << (i ? "," : "") << expr_json(eqs_[i]);
  os << "],\"logdet\":[";
  for (std::size_t b = 0; b < logdets_.size(); ++b)
    os << (b ? "," : "") << "{\"weight\":" << logdets_[b].second << ",\"dim\":"
       << logdets_[b].first.dim << '}';
  os << "]}";
  return os.str();
}

Matrix matrix_sqrt_psd(const MatrixRef& M, double tol) {
  if (M.rows() != M.cols()) throw std::invalid_argument("matrix must be square");
  const Matrix sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const double scale = std::max(1.0, sym.norm());
  if (es.eigenvalues().minCoeff() < -tol * scale)
    throw std::invalid_argument("matrix has an eigenvalue below -tol");
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

double max_constraint_violation(const SdpProblem& problem, const Vector& x) {
  double worst = 0.0;
  for (const auto& lmi : problem.lmis()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(lmi.evaluate(x), Eigen::EigenvaluesOnly);
    worst = std::max(worst, -es.eigenvalues().minCoeff());
  }
  auto eval = [&](const LinExpr& e) {
    double v = e.constant;
    for (const auto& [var, coeff] : e.terms) v += coeff * x(var);
    return v;
  };
  for (const auto& row : problem.inequalities())
    worst = std::max(worst, -eval(row));
  for (const auto& row : problem.equalities())
    worst = std::max(worst, std::abs(eval(row)));
  return worst;
}

// ---------------------------------------------------------------------------
// Interior-point solver: NT-scaled Mehrotra predictor-corrector over PSD
// blocks plus one diagonal (linear inequality) block, with fixed-weight
// barrier blocks implementing logdet objectives natively.
// ---------------------------------------------------------------------------

namespace {

struct PsdBlockData {
  Eigen::Index k = 0;
  Matrix F0;
  std::vector<int> vars;            // deduplicated
  std::vector<Matrix> coeffs;       // aligned with vars
  double kappa = 0.0;               // > 0 for logdet objective blocks

  // runtime
  Matrix S, Z;
  Matrix R, Rinv;
  Vector lam;
  Matrix Rp, Rp_scaled;
  std::vector<Matrix> G;            // scaled coefficients
  Matrix Q, dS_aff_s, dZ_aff_s;     // scaled-space work matrices
  Matrix dS, dZ, dS_aff, dZ_aff;
};

struct DiagRow {
  double b = 0.0;
  std::vector<std::pair<int, double>> a;
};

double eval_row(const DiagRow& row, const Vector& x) {
  double v = row.b;
  for (const auto& [j, c] : row.a) v += c * x(j);
  return v;
}

struct Canonical {
  int m = 0;
  Vector g;
  double constant = 0.0;
  bool maximize = false;
  std::vector<PsdBlockData> blocks;
  std::vector<DiagRow> rows;
  // equality elimination x = x_part + B w
  bool eliminated = false;
  Vector x_part;
  Matrix basis;
};

double spectral_step(const Matrix& L, const Matrix& dM) {
  // largest alpha with M + alpha dM > 0 given M = L L', via min eig of
  // L^{-1} dM L^{-T}
  Matrix T = L.triangularView<Eigen::Lower>().solve(dM);
  T = L.triangularView<Eigen::Lower>().solve(T.transpose()).transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (T + T.transpose()),
                                           Eigen::EigenvaluesOnly);
  const double mineig = es.eigenvalues().minCoeff();
  if (mineig >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / mineig;
}

bool chol(const Matrix& M, Matrix& L) {
  Eigen::LLT<Matrix> llt(M);
  if (llt.info() != Eigen::Success) return false;
  L = llt.matrixL();
  return true;
}

}  // namespace

SdpSolution solve(const SdpProblem& problem, const SolveOptions& opts) {
  const auto t_start = std::chrono::steady_clock::now();
  SdpSolution sol;
  sol.stats.logdet_mode = problem.logdet_terms().empty() ? "none" : "native-barrier";

  // ---- canonicalize ----
  Canonical cn;
  cn.maximize = problem.sense() == Sense::Maximize;
  const int n_user = problem.num_vars();
  Vector g_user = Vector::Zero(n_user);
  for (const auto& [var, coeff] : problem.objective().terms) g_user(var) += coeff;
  double const_user = problem.objective().constant;

  // equality elimination
  Matrix basis;          // n_user x m
  Vector x_part = Vector::Zero(n_user);
  if (!problem.equalities().empty()) {
    const Eigen::Index ne = static_cast<Eigen::Index>(problem.equalities().size());
    Matrix E = Matrix::Zero(ne, n_user);
    Vector rhs = Vector::Zero(ne);
    for (Eigen::Index i = 0; i < ne; ++i) {
      const auto& row = problem.equalities()[static_cast<std::size_t>(i)];
      rhs(i) = -row.constant;
      for (const auto& [var, coeff] : row.terms) E(i, var) += coeff;
    }
    x_part = E.completeOrthogonalDecomposition().solve(rhs);
    if ((E * x_part - rhs).norm() > 1e-8 * (1.0 + rhs.norm())) {
      sol.status = Status::Infeasible;
      return sol;
    }
    Eigen::FullPivLU<Matrix> lu(E);
    basis = lu.kernel();
    if (basis.cols() == 1 && basis.isZero()) basis.resize(n_user, 0);
    cn.eliminated = true;
  } else {
    basis = Matrix::Identity(n_user, n_user);
  }
  cn.x_part = x_part;
  cn.basis = basis;
  cn.m = static_cast<int>(basis.cols());

  const double sense_flip = cn.maximize ? -1.0 : 1.0;
  cn.g = sense_flip * (basis.transpose() * g_user);
  cn.constant = sense_flip * (const_user + g_user.dot(x_part));

  auto map_block = [&](const AffineMatrix& src, double kappa) {
    PsdBlockData b;
    b.k = src.dim;
    b.kappa = kappa;
    b.F0 = src.F0;
    if (!cn.eliminated) {
      std::vector<int> slot(static_cast<std::size_t>(n_user), -1);
      for (const auto& [var, coeff] : src.terms) {
        if (slot[var] < 0) {
          slot[var] = static_cast<int>(b.vars.size());
          b.vars.push_back(var);
          b.coeffs.push_back(coeff);
        } else {
          b.coeffs[slot[var]] += coeff;
        }
      }
    } else {
      for (const auto& [var, coeff] : src.terms) b.F0 += x_part(var) * coeff;
      for (int l = 0; l < cn.m; ++l) {
        Matrix M = Matrix::Zero(src.dim, src.dim);
        bool nonzero = false;
        for (const auto& [var, coeff] : src.terms) {
          const double w = basis(var, l);
          if (w != 0.0) { M += w * coeff; nonzero = true; }
        }
        if (nonzero && M.cwiseAbs().maxCoeff() > 0.0) {
          b.vars.push_back(l);
          b.coeffs.push_back(std::move(M));
        }
      }
    }
    return b;
  };

  for (const auto& lmi : problem.lmis()) cn.blocks.push_back(map_block(lmi, 0.0));
  for (const auto& [blk, weight] : problem.logdet_terms())
    cn.blocks.push_back(map_block(blk, weight));

  for (const auto& row : problem.inequalities()) {
    DiagRow r;
    r.b = row.constant;
    if (!cn.eliminated) {
      std::vector<int> slot(static_cast<std::size_t>(n_user), -1);
      for (const auto& [var, coeff] : row.terms) {
        if (slot[var] < 0) {
          slot[var] = static_cast<int>(r.a.size());
          r.a.emplace_back(var, coeff);
        } else {
          r.a[slot[var]].second += coeff;
        }
      }
      std::sort(r.a.begin(), r.a.end());
    } else {
      Vector dense = Vector::Zero(n_user);
      for (const auto& [var, coeff] : row.terms) dense(var) += coeff;
      r.b += dense.dot(x_part);
      const Vector red = basis.transpose() * dense;
      for (int j = 0; j < cn.m; ++j)
        if (red(j) != 0.0) r.a.emplace_back(j, red(j));
    }
    cn.rows.push_back(std::move(r));
  }

  const int m = cn.m;
  const Eigen::Index n_rows = static_cast<Eigen::Index>(cn.rows.size());

  if (m == 0) {
    // fully determined by equalities; just verify feasibility
    sol.x = x_part;
    const double viol = max_constraint_violation(problem, sol.x);
    sol.status = viol <= 1e-7 ? Status::Optimal : Status::Infeasible;
    sol.objective = const_user + g_user.dot(x_part);
    return sol;
  }

  // ---- initial point ----
  Vector x = Vector::Zero(m);
  for (auto& b : cn.blocks) {
    const double sc = std::max(1.0, 1.1 * b.F0.norm());
    b.S = sc * Matrix::Identity(b.k, b.k);
    b.Z = Matrix::Identity(b.k, b.k);
    b.G.resize(b.vars.size());
  }
  Vector srow(n_rows), zrow(n_rows);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    srow(i) = std::max(1.0, 1.1 * std::abs(cn.rows[i].b));
    zrow(i) = 1.0;
  }

  double nu_dim = static_cast<double>(n_rows);
  for (const auto& b : cn.blocks)
    if (b.kappa == 0.0) nu_dim += static_cast<double>(b.k);
  const double gnorm = std::max(1.0, cn.g.lpNorm<Eigen::Infinity>());

  Matrix H(m, m);
  Vector rd(m), rhs(m), dx(m), dx_aff(m);
  Vector row_g(n_rows), row_Q(n_rows), row_Rp(n_rows), row_Rp_scaled(n_rows);
  Vector ds_row(n_rows), dz_row(n_rows), ds_row_aff(n_rows), dz_row_aff(n_rows);

  int tiny_steps = 0;
  struct Best {
    double score = std::numeric_limits<double>::infinity();
    Vector x;
    double pinf = 0, dinf = 0, gap = 0;
  } best;
  auto finish = [&](Status st) {
    sol.status = st;
    sol.x = x_part + basis * x;
    double obj = const_user + g_user.dot(sol.x);
    for (const auto& [blk, weight] : problem.logdet_terms()) {
      const Matrix G = blk.evaluate(sol.x);
      Eigen::LLT<Matrix> llt(G);
      double ld;
      if (llt.info() == Eigen::Success) {
        ld = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
      } else {
        ld = -std::numeric_limits<double>::infinity();
      }
      obj += (cn.maximize ? weight : -weight) * ld;
    }
    sol.objective = obj;
    sol.stats.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return sol;
  };

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    sol.stats.iterations = iter;

    // residuals
    double pinf = 0.0;
    for (auto& b : cn.blocks) {
      Matrix F = b.F0;
      for (std::size_t t = 0; t < b.vars.size(); ++t) F += x(b.vars[t]) * b.coeffs[t];
      b.Rp = F - b.S;
      pinf = std::max(pinf, b.Rp.norm() / (1.0 + b.F0.norm()));
    }
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      row_Rp(i) = eval_row(cn.rows[i], x) - srow(i);
      pinf = std::max(pinf, std::abs(row_Rp(i)) / (1.0 + std::abs(cn.rows[i].b)));
    }

    rd = cn.g;
    for (const auto& b : cn.blocks)
      for (std::size_t t = 0; t < b.vars.size(); ++t)
        rd(b.vars[t]) -= b.coeffs[t].cwiseProduct(b.Z).sum();
    for (Eigen::Index i = 0; i < n_rows; ++i)
      for (const auto& [j, c] : cn.rows[i].a) rd(j) -= c * zrow(i);
    const double dinf = rd.lpNorm<Eigen::Infinity>() / gnorm;

    double comp = zrow.dot(srow);
    for (const auto& b : cn.blocks)
      if (b.kappa == 0.0) comp += b.S.cwiseProduct(b.Z).sum();
    const double mu = nu_dim > 0 ? comp / nu_dim : 0.0;

    // objective-block complementarity measure psi >= 0, zero at optimality
    double psi = 0.0;
    bool have_logdet = false;
    for (const auto& b : cn.blocks) {
      if (b.kappa == 0.0) continue;
      have_logdet = true;
      Eigen::LLT<Matrix> ls(b.S);
      if (ls.info() != Eigen::Success) { psi += 1.0; continue; }
      const Matrix T = Matrix(ls.matrixL()).transpose() * b.Z * Matrix(ls.matrixL());
      Eigen::SelfAdjointEigenSolver<Matrix> es(T, Eigen::EigenvaluesOnly);
      for (Eigen::Index i = 0; i < b.k; ++i) {
        const double t = std::max(es.eigenvalues()(i), 1e-300);
        psi += t - b.kappa - b.kappa * std::log(t / b.kappa);
      }
    }

    double pobj = cn.g.dot(x) + cn.constant;
    double dobj = cn.constant;
    for (const auto& b : cn.blocks) dobj -= b.F0.cwiseProduct(b.Z).sum();
    for (Eigen::Index i = 0; i < n_rows; ++i) dobj -= cn.rows[i].b * zrow(i);
    double gap;
    if (have_logdet) {
      gap = (comp + psi) / (1.0 + std::abs(pobj));
    } else {
      // complementarity equals the duality gap once feasible; take whichever
      // certifies first
      const double denom = 1.0 + std::abs(pobj) + std::abs(dobj);
      gap = std::min(comp / denom, std::abs(pobj - dobj) / denom);
    }
    sol.stats.primal_residual = pinf;
    sol.stats.dual_residual = dinf;
    sol.stats.gap = gap;
    {
      const double score = std::max({pinf / opts.feas_tol, dinf / opts.feas_tol,
                                     gap / opts.gap_tol});
      if (score < best.score) {
        best.score = score;
        best.x = x;
        best.pinf = pinf;
        best.dinf = dinf;
        best.gap = gap;
      }
    }

    if (opts.verbose)
      std::printf("it %3d  pinf %9.2e dinf %9.2e gap %9.2e mu %9.2e\n", iter,
                  pinf, dinf, gap, mu);

    if (pinf <= opts.feas_tol && dinf <= opts.feas_tol && gap <= opts.gap_tol)
      return finish(Status::Optimal);

    // Farkas-type primal infeasibility certificate from the dual iterate
    {
      double znorm = zrow.norm();
      for (const auto& b : cn.blocks) znorm = std::hypot(znorm, b.Z.norm());
      Vector az = cn.g - rd;  // A*(Z)
      double f0z = 0.0;
      for (const auto& b : cn.blocks) f0z += b.F0.cwiseProduct(b.Z).sum();
      for (Eigen::Index i = 0; i < n_rows; ++i) f0z += cn.rows[i].b * zrow(i);
      if (znorm > 1.0 &&
          az.lpNorm<Eigen::Infinity>() <= 1e-9 * znorm &&
          f0z <= -1e-9 * znorm)
        return finish(Status::Infeasible);
    }
    // unbounded-ray certificate from the primal iterate
    if (!have_logdet && x.norm() > 1e8 && pobj < -1e8 * (1.0 + std::abs(cn.constant))) {
      const Vector d = x / x.norm();
      double ray_ok = cn.g.dot(d) <= -1e-10;
      for (const auto& b : cn.blocks) {
        Matrix Fd = Matrix::Zero(b.k, b.k);
        for (std::size_t t = 0; t < b.vars.size(); ++t)
          Fd += d(b.vars[t]) * b.coeffs[t];
        Eigen::SelfAdjointEigenSolver<Matrix> es(Fd, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-8) ray_ok = false;
      }
      for (Eigen::Index i = 0; i < n_rows; ++i) {
        double ad = 0.0;
        for (const auto& [j, c] : cn.rows[i].a) ad += c * d(j);
        if (ad < -1e-8) ray_ok = false;
      }
      if (ray_ok) return finish(Status::Unbounded);
    }

    // ---- NT scaling ----
    bool scale_ok = true;
    for (auto& b : cn.blocks) {
      Matrix Ls, Lz;
      if (!chol(b.S, Ls) || !chol(b.Z, Lz)) { scale_ok = false; break; }
      Eigen::JacobiSVD<Matrix> svd(Lz.transpose() * Ls,
                                   Eigen::ComputeFullU | Eigen::ComputeFullV);
      b.lam = svd.singularValues();
      if (b.lam.minCoeff() <= 0.0) { scale_ok = false; break; }
      const Vector isq = b.lam.cwiseSqrt().cwiseInverse();
      b.R = Ls * svd.matrixV() * isq.asDiagonal();
      b.Rinv = b.lam.cwiseSqrt().asDiagonal() * svd.matrixV().transpose() *
               Ls.triangularView<Eigen::Lower>().solve(
                   Matrix::Identity(b.k, b.k));
      b.Rp_scaled = b.Rinv * b.Rp * b.Rinv.transpose();
      for (std::size_t t = 0; t < b.vars.size(); ++t)
        b.G[t] = b.Rinv * b.coeffs[t] * b.Rinv.transpose();
    }
    if (!scale_ok) return finish(Status::NumericalFailure);
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      row_g(i) = std::sqrt(zrow(i) / srow(i));
      row_Rp_scaled(i) = row_Rp(i) * row_g(i);
    }

    // ---- Schur complement ----
    H.setZero();
    for (const auto& b : cn.blocks) {
      const std::size_t nb = b.vars.size();
      for (std::size_t t1 = 0; t1 < nb; ++t1)
        for (std::size_t t2 = 0; t2 <= t1; ++t2) {
          const double v = b.G[t1].cwiseProduct(b.G[t2]).sum();
          const int j1 = b.vars[t1], j2 = b.vars[t2];
          if (j1 >= j2)
            H(j1, j2) += v;
          else
            H(j2, j1) += v;
        }
    }
    for (Eigen::Index i = 0; i < n_rows; ++i) {
      const double w2 = row_g(i) * row_g(i);
      const auto& a = cn.rows[i].a;
      for (std::size_t t1 = 0; t1 < a.size(); ++t1)
        for (std::size_t t2 = 0; t2 <= t1; ++t2) {
          const auto [j1, c1] = a[t1];
          const auto [j2, c2] = a[t2];
          if (j1 >= j2)
            H(j1, j2) += w2 * c1 * c2;
          else
            H(j2, j1) += w2 * c1 * c2;
        }
    }
    H = H.selfadjointView<Eigen::Lower>();
    const double ridge_base = std::max(1e-300, H.diagonal().maxCoeff());
    Eigen::LLT<Matrix> hfac;
    double ridge = 0.0;
    for (double r = 1e-14; ; r *= 100.0) {
      hfac.compute(H + ridge * Matrix::Identity(m, m));
      if (hfac.info() == Eigen::Success) break;
      ridge = r * ridge_base;
      if (r > 1e-4) return finish(Status::NumericalFailure);
    }
    auto solve_newton = [&](Vector& out, const Vector& r) {
      out = hfac.solve(r);
      out += hfac.solve(r - H * out);  // one refinement step
    };

    auto assemble_rhs = [&](bool corrector, double sigma_mu) {
      rhs = -rd;
      for (auto& b : cn.blocks) {
        const double nu = b.kappa > 0.0 ? b.kappa : sigma_mu;
        if (!corrector) {
          b.Q = Matrix::Zero(b.k, b.k);
          for (Eigen::Index i = 0; i < b.k; ++i)
            b.Q(i, i) = (nu - b.lam(i) * b.lam(i)) / b.lam(i);
        } else {
          const Matrix C2 = 0.5 * (b.dS_aff_s * b.dZ_aff_s +
                                   b.dZ_aff_s * b.dS_aff_s);
          for (Eigen::Index r = 0; r < b.k; ++r)
            for (Eigen::Index c = 0; c < b.k; ++c) {
              const double target = (r == c ? nu - b.lam(r) * b.lam(r) : 0.0) - C2(r, c);
              b.Q(r, c) = 2.0 * target / (b.lam(r) + b.lam(c));
            }
        }
        const Matrix M = b.Q - b.Rp_scaled;
        for (std::size_t t = 0; t < b.vars.size(); ++t)
          rhs(b.vars[t]) += b.G[t].cwiseProduct(M).sum();
      }
      for (Eigen::Index i = 0; i < n_rows; ++i) {
        const double lam = std::sqrt(srow(i) * zrow(i));
        double target = sigma_mu - lam * lam;
        if (corrector) target -= ds_row_aff(i) * dz_row_aff(i);
        row_Q(i) = target / lam;
        const double M = row_Q(i) - row_Rp_scaled(i);
        for (const auto& [j, c] : cn.rows[i].a) rhs(j) += c * row_g(i) * M;
      }
    };

    auto recover_directions = [&](const Vector& dxv, bool affine) {
      for (auto& b : cn.blocks) {
        Matrix dS = b.Rp;
        for (std::size_t t = 0; t < b.vars.size(); ++t)
          dS += dxv(b.vars[t]) * b.coeffs[t];
        const Matrix dS_s = b.Rinv * dS * b.Rinv.transpose();
        const Matrix dZ_s = b.Q - dS_s;
        const Matrix dZ = b.Rinv.transpose() * dZ_s * b.Rinv;
        if (affine) {
          b.dS_aff = dS; b.dZ_aff = 0.5 * (dZ + dZ.transpose());
          b.dS_aff_s = 0.5 * (dS_s + dS_s.transpose());
          b.dZ_aff_s = 0.5 * (dZ_s + dZ_s.transpose());
        } else {
          b.dS = dS; b.dZ = 0.5 * (dZ + dZ.transpose());
        }
      }
      for (Eigen::Index i = 0; i < n_rows; ++i) {
        double ds = row_Rp(i);
        for (const auto& [j, c] : cn.rows[i].a) ds += c * dxv(j);
        const double dz = (row_Q(i) - ds * row_g(i)) * row_g(i);
        if (affine) { ds_row_aff(i) = ds; dz_row_aff(i) = dz; }
        else { ds_row(i) = ds; dz_row(i) = dz; }
      }
    };

    auto step_lengths = [&](bool affine, double& ap, double& ad) {
      ap = ad = std::numeric_limits<double>::infinity();
      for (auto& b : cn.blocks) {
        Matrix Ls, Lz;
        chol(b.S, Ls);
        chol(b.Z, Lz);
        ap = std::min(ap, spectral_step(Ls, affine ? b.dS_aff : b.dS));
        ad = std::min(ad, spectral_step(Lz, affine ? b.dZ_aff : b.dZ));
      }
      for (Eigen::Index i = 0; i < n_rows; ++i) {
        const double ds = affine ? ds_row_aff(i) : ds_row(i);
        const double dz = affine ? dz_row_aff(i) : dz_row(i);
        if (ds < 0.0) ap = std::min(ap, -srow(i) / ds);
        if (dz < 0.0) ad = std::min(ad, -zrow(i) / dz);
      }
    };

    // predictor
    assemble_rhs(false, 0.0);
    solve_newton(dx_aff, rhs);
    recover_directions(dx_aff, true);
    double ap_aff, ad_aff;
    step_lengths(true, ap_aff, ad_aff);
    ap_aff = std::min(1.0, 0.99 * ap_aff);
    ad_aff = std::min(1.0, 0.99 * ad_aff);

    double mu_aff = 0.0;
    if (nu_dim > 0) {
      for (const auto& b : cn.blocks) {
        if (b.kappa > 0.0) continue;
        mu_aff += (b.S + ap_aff * b.dS_aff)
                      .cwiseProduct(b.Z + ad_aff * b.dZ_aff)
                      .sum();
      }
      for (Eigen::Index i = 0; i < n_rows; ++i)
        mu_aff += (srow(i) + ap_aff * ds_row_aff(i)) *
                  (zrow(i) + ad_aff * dz_row_aff(i));
      mu_aff = std::max(0.0, mu_aff / nu_dim);
    }
    double sigma = mu > 0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
    sigma = std::min(1.0, std::max(1e-8, sigma));

    // corrector
    assemble_rhs(true, sigma * mu);
    solve_newton(dx, rhs);
    recover_directions(dx, false);
    double ap, ad;
    step_lengths(false, ap, ad);
    const double frac = mu < 1e-6 ? 0.99 : 0.98;
    ap = std::min(1.0, frac * ap);
    ad = std::min(1.0, frac * ad);

    if (ap < 1e-8 && ad < 1e-8) {
      if (++tiny_steps >= 3) return finish(Status::NumericalFailure);
    } else {
      tiny_steps = 0;
    }

    x += ap * dx;
    for (auto& b : cn.blocks) {
      b.S += ap * b.dS;
      b.S = 0.5 * (b.S + b.S.transpose());
      b.Z += ad * b.dZ;
      b.Z = 0.5 * (b.Z + b.Z.transpose());
    }
    srow += ap * ds_row;
    zrow += ad * dz_row;
  }

  return finish(Status::NumericalFailure);
}

}  // namespace drfd::sdp
