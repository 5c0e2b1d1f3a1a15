#include "drfd/design.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace drfd::design {

namespace {
constexpr double kThetaFloor = 1e-9;  // keeps the budget row meaningful at theta = 0
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

const char* to_string(DesignStatus s) {
  switch (s) {
    case DesignStatus::Converged: return "converged";
    case DesignStatus::MaxIters: return "max-iters";
    case DesignStatus::Infeasible: return "infeasible";
    case DesignStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

void DesignConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("alpha must lie in (0,1)");
  if (theta < 0.0) throw std::invalid_argument("theta must be >= 0");
  for (const auto& f : faults) {
    if (!(f.beta > 0.0 && f.beta < 1.0))
      throw std::invalid_argument("beta must lie in (0,1)");
    if (f.gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
  }
  for (const auto& e : support) {
    Eigen::LLT<Matrix> llt(e.omega);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("support ellipsoid shape must be positive definite");
  }
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
}

double detectability_metric(Metric metric, const MatrixRef& Pbar,
                            const MatrixRef& V) {
  if (metric == Metric::Rho1) return (V.transpose() * Pbar * V).trace();
  Eigen::JacobiSVD<Matrix> svd(V, Eigen::ComputeThinU);
  const Vector sv = svd.singularValues();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > 1e-10 * sv(0)) ++r;
  const Matrix B = svd.matrixU().leftCols(r) * sv.head(r).asDiagonal();
  const Matrix G = B.transpose() * Pbar * B;
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) return -kInf;
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

namespace {

// [I, -xi; -xi', xi'xi] homogenization of ||z - xi||^2
Matrix point_block(const VectorRef& xi) {
  const Eigen::Index n = xi.size();
  Matrix M(n + 1, n + 1);
  M.topLeftCorner(n, n) = Matrix::Identity(n, n);
  M.topRightCorner(n, 1) = -xi;
  M.bottomLeftCorner(1, n) = -xi.transpose();
  M(n, n) = xi.squaredNorm();
  return M;
}

// [Pbar, Pbar c; c'Pbar, c'Pbar c - 1] homogenization of (z+c)'Pbar(z+c) - 1
Matrix set_block(const MatrixRef& Pbar, const VectorRef& c) {
  const Eigen::Index n = Pbar.rows();
  Matrix M(n + 1, n + 1);
  M.topLeftCorner(n, n) = Pbar;
  const Vector Pc = Pbar * c;
  M.topRightCorner(n, 1) = Pc;
  M.bottomLeftCorner(1, n) = Pc.transpose();
  M(n, n) = c.dot(Pc) - 1.0;
  return M;
}

// derivative of set_block w.r.t. symmetric entry Pbar(r,c)
Matrix pbar_entry_block(Eigen::Index r, Eigen::Index c, Eigen::Index n,
                        const VectorRef& shift) {
  Matrix M = Matrix::Zero(n + 1, n + 1);
  M(r, c) = M(c, r) = 1.0;
  if (shift.size()) {
    if (r == c) {
      M(r, n) = shift(r);
    } else {
      M(r, n) = shift(c);
      M(c, n) = shift(r);
    }
    M(n, r) = M(r, n);
    M(n, c) = M(c, n);
    M(n, n) = (r == c ? shift(r) * shift(r) : 2.0 * shift(r) * shift(c));
  }
  return M;
}

Matrix corner_unit(Eigen::Index n) {
  Matrix M = Matrix::Zero(n + 1, n + 1);
  M(n, n) = 1.0;
  return M;
}

Matrix support_block(const SupportEllipsoid& e) {
  const Eigen::Index n = e.center.size();
  Matrix M(n + 1, n + 1);
  M.topLeftCorner(n, n) = e.omega;
  const Vector oc = e.omega * e.center;
  M.topRightCorner(n, 1) = -oc;
  M.bottomLeftCorner(1, n) = -oc.transpose();
  M(n, n) = e.center.dot(oc) - 1.0;
  return M;
}

void check_inside_support(const VectorRef& xi,
                          const std::vector<SupportEllipsoid>& support) {
  for (const auto& e : support) {
    const Vector d = xi - e.center;
    if (d.dot(e.omega * d) > 1.0 + 1e-9)
      throw std::invalid_argument("sample lies outside the declared support");
  }
}

// 2x2 slack block [p, u; u, 1] tying u^2 <= p
void add_soc_pair(sdp::SdpProblem& prob, int p, int u) {
  sdp::AffineMatrix blk(2);
  blk.F0 << 0, 0, 0, 1;
  Matrix Ep(2, 2), Eu(2, 2);
  Ep << 1, 0, 0, 0;
  Eu << 0, 1, 1, 0;
  blk.add(p, Ep);
  blk.add(u, Eu);
  prob.add_lmi(std::move(blk));
}

}  // namespace

DistanceProblem distance_sdp(const VectorRef& xi, const MatrixRef& Pbar,
                             const VectorRef& c) {
  DistanceProblem out;
  auto& prob = out.problem;
  out.pi = prob.add_scalar("pi", 0.0);
  out.p = prob.add_scalar("p");
  out.u = prob.add_scalar("u");

  const Eigen::Index n = Pbar.rows();
  sdp::AffineMatrix blk(n + 1);
  blk.F0 = point_block(xi);
  blk.add(out.pi, set_block(Pbar, c));
  blk.add(out.p, -corner_unit(n));
  prob.add_lmi(std::move(blk));
  add_soc_pair(prob, out.p, out.u);

  sdp::LinExpr obj;
  obj.add(out.u, 1.0);
  prob.set_objective(sdp::Sense::Maximize, obj);
  return out;
}

DistanceProblem bounded_support_distance_sdp(
    const VectorRef& xi, const MatrixRef& Pbar, const VectorRef& c,
    const std::vector<SupportEllipsoid>& support) {
  check_inside_support(xi, support);
  for (const auto& e : support) {
    Eigen::LLT<Matrix> llt(e.omega);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("support ellipsoid shape must be positive definite");
  }

  DistanceProblem out;
  auto& prob = out.problem;
  out.pi = prob.add_scalar("pi", 0.0);
  out.p = prob.add_scalar("p");
  out.u = prob.add_scalar("u");
  for (std::size_t j = 0; j < support.size(); ++j)
    out.omega.push_back(prob.add_scalar("omega" + std::to_string(j), 0.0));

  const Eigen::Index n = Pbar.rows();
  sdp::AffineMatrix blk(n + 1);
  blk.F0 = point_block(xi);
  blk.add(out.pi, set_block(Pbar, c));
  for (std::size_t j = 0; j < support.size(); ++j)
    blk.add(out.omega[j], support_block(support[j]));
  blk.add(out.p, -corner_unit(n));
  prob.add_lmi(std::move(blk));
  add_soc_pair(prob, out.p, out.u);

  sdp::LinExpr obj;
  obj.add(out.u, 1.0);
  prob.set_objective(sdp::Sense::Maximize, obj);
  return out;
}

FarDualProblem build_far_dual(const MatrixRef& Pbar,
                              const ambiguity::WassersteinBall& ball,
                              double alpha) {
  ball.validate();
  FarDualProblem out;
  auto& prob = out.problem;
  const Eigen::Index N = ball.count();
  const Eigen::Index n = ball.dim();

  out.lambda = prob.add_scalar("lambda", 0.0);
  sdp::LinExpr obj;
  obj.constant = ball.theta;
  obj.add(out.lambda, -alpha);

  Matrix tau_coeff = Matrix::Zero(n + 1, n + 1);
  tau_coeff.topLeftCorner(n, n) = -Pbar;
  tau_coeff(n, n) = 1.0;

  for (Eigen::Index i = 0; i < N; ++i) {
    const std::string si = std::to_string(i);
    const int y = prob.add_scalar("y" + si, 0.0);
    const int tau = prob.add_scalar("tau" + si, 0.0);
    const int t = prob.add_scalar("t" + si);
    const int q = prob.add_scalar("q" + si);
    out.y.push_back(y);
    out.tau.push_back(tau);
    out.t.push_back(t);
    out.q.push_back(q);

    obj.add(y, 1.0 / static_cast<double>(N));

    sdp::LinExpr row;  // y_i - lambda + t_i >= 0
    row.add(y, 1.0).add(out.lambda, -1.0).add(t, 1.0);
    prob.add_linear_ge(row);

    sdp::AffineMatrix blk(n + 1);
    blk.F0 = point_block(ball.samples.col(i));
    blk.add(tau, tau_coeff);
    blk.add(q, -corner_unit(n));
    prob.add_lmi(std::move(blk));
    add_soc_pair(prob, q, t);
  }
  prob.set_objective(sdp::Sense::Minimize, obj);
  return out;
}

FdrDualProblem build_fdr_dual(const MatrixRef& Pbar, double eta,
                              const MatrixRef& samples, const VectorRef& c,
                              double beta,
                              const std::vector<SupportEllipsoid>& support) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  FdrDualProblem out;
  auto& prob = out.problem;
  const Eigen::Index N = samples.cols();
  const Eigen::Index n = samples.rows();

  sdp::LinExpr obj;
  obj.constant = -(1.0 - beta) * eta;
  const Matrix pi_coeff = set_block(Pbar, c);

  for (Eigen::Index i = 0; i < N; ++i) {
    if (!support.empty()) check_inside_support(samples.col(i), support);
    const std::string si = std::to_string(i);
    const int v = prob.add_scalar("v" + si, 0.0);
    const int pi = prob.add_scalar("pi" + si, 0.0);
    const int u = prob.add_scalar("u" + si);
    const int p = prob.add_scalar("p" + si);
    out.v.push_back(v);
    out.pi.push_back(pi);
    out.u.push_back(u);
    out.p.push_back(p);

    obj.add(v, 1.0 / static_cast<double>(N));

    sdp::LinExpr row;  // v_i - eta + u_i >= 0
    row.constant = -eta;
    row.add(v, 1.0).add(u, 1.0);
    prob.add_linear_ge(row);

    sdp::AffineMatrix blk(n + 1);
    blk.F0 = point_block(samples.col(i));
    blk.add(pi, pi_coeff);
    for (std::size_t j = 0; j < support.size(); ++j) {
      const int om = prob.add_scalar("omega" + si + "_" + std::to_string(j), 0.0);
      blk.add(om, support_block(support[j]));
    }
    blk.add(p, -corner_unit(n));
    prob.add_lmi(std::move(blk));
    add_soc_pair(prob, p, u);
  }
  prob.set_objective(sdp::Sense::Minimize, obj);
  return out;
}

MasterProblem build_master(const ambiguity::WassersteinBall& ball,
                           const MultiplierSet& multipliers,
                           const DesignConfig& config, const MatrixRef& V) {
  ball.validate();
  config.validate();
  const Eigen::Index N = ball.count();
  const Eigen::Index n = ball.dim();
  const auto K = static_cast<Eigen::Index>(config.faults.size());
  if (multipliers.tau.size() != N)
    throw std::invalid_argument("tau size != sample count");
  if (K > 0 && (multipliers.pi.rows() != N || multipliers.pi.cols() != K))
    throw std::invalid_argument("pi must be N x K");
  if ((multipliers.tau.array() < 0).any() ||
      (K > 0 && (multipliers.pi.array() < 0).any()))
    throw std::invalid_argument("multipliers must be nonnegative");

  MasterProblem out;
  auto& prob = out.problem;
  out.Pbar = prob.add_symmetric("Pbar", n, /*require_psd=*/true);
  out.lambda = prob.add_scalar("lambda", 0.0);

  sdp::LinExpr obj;
  if (config.metric == Metric::Rho1) {
    const Matrix M = V * V.transpose();
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = r; c < n; ++c)
        obj.add(out.Pbar.index(r, c), (r == c ? 1.0 : 2.0) * M(r, c));
  } else {
    Eigen::JacobiSVD<Matrix> svd(V, Eigen::ComputeThinU);
    const Vector sv = svd.singularValues();
    Eigen::Index rk = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > 1e-10 * sv(0)) ++rk;
    const Matrix B = svd.matrixU().leftCols(rk) * sv.head(rk).asDiagonal();
    sdp::AffineMatrix G(rk);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = r; c < n; ++c) {
        Matrix E = Matrix::Zero(n, n);
        E(r, c) = E(c, r) = 1.0;
        G.add(out.Pbar.index(r, c), B.transpose() * E * B);
      }
    prob.add_logdet_objective(std::move(G), 1.0);
  }

  // FAR family
  const double theta_eff = std::max(config.theta, kThetaFloor);
  sdp::LinExpr budget;  // lambda alpha - theta - (1/N) sum y_i >= 0
  budget.constant = -theta_eff;
  budget.add(out.lambda, config.alpha);
  const Vector zero_shift;
  for (Eigen::Index i = 0; i < N; ++i) {
    const std::string si = std::to_string(i);
    const int y = prob.add_scalar("y" + si, 0.0);
    const int t = prob.add_scalar("t" + si);
    const int q = prob.add_scalar("q" + si);
    budget.add(y, -1.0 / static_cast<double>(N));

    sdp::LinExpr row;
    row.add(y, 1.0).add(out.lambda, -1.0).add(t, 1.0);
    prob.add_linear_ge(row);

    sdp::AffineMatrix blk(n + 1);
    blk.F0 = point_block(ball.samples.col(i));
    blk.F0(n, n) += multipliers.tau(i);
    const double ti = multipliers.tau(i);
    if (ti > 0.0)
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = r; c < n; ++c)
          blk.add(out.Pbar.index(r, c), -ti * pbar_entry_block(r, c, n, zero_shift));
    blk.add(q, -corner_unit(n));
    prob.add_lmi(std::move(blk));
    add_soc_pair(prob, q, t);
  }
  prob.add_linear_ge(budget);

  // relaxed FDR families, one per fault
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto& fault = config.faults[static_cast<std::size_t>(j)];
    const std::string sj = std::to_string(j);
    const int eta = prob.add_scalar("eta" + sj, 0.0);
    out.eta.push_back(eta);
    obj.add(eta, fault.gamma);

    sdp::LinExpr fdr_budget;  // (1-beta) eta - (1/N) sum v_ij >= 0
    fdr_budget.add(eta, 1.0 - fault.beta);
    for (Eigen::Index i = 0; i < N; ++i) {
      const std::string sij = sj + "_" + std::to_string(i);
      const int v = prob.add_scalar("v" + sij, 0.0);
      const int u = prob.add_scalar("u" + sij);
      const int p = prob.add_scalar("p" + sij);
      fdr_budget.add(v, -1.0 / static_cast<double>(N));

      sdp::LinExpr row;  // v - eta + u >= 0
      row.add(v, 1.0).add(eta, -1.0).add(u, 1.0);
      prob.add_linear_ge(row);

      const double pij = multipliers.pi(i, j);
      sdp::AffineMatrix blk(n + 1);
      blk.F0 = point_block(ball.samples.col(i));
      blk.F0(n, n) -= pij;
      if (pij > 0.0)
        for (Eigen::Index r = 0; r < n; ++r)
          for (Eigen::Index c = r; c < n; ++c)
            blk.add(out.Pbar.index(r, c),
                    pij * pbar_entry_block(r, c, n, fault.signature));
      for (std::size_t sj2 = 0; sj2 < config.support.size(); ++sj2) {
        const int om = prob.add_scalar("omega" + sij + "_" + std::to_string(sj2), 0.0);
        blk.add(om, support_block(config.support[sj2]));
      }
      blk.add(p, -corner_unit(n));
      prob.add_lmi(std::move(blk));
      add_soc_pair(prob, p, u);
    }
    prob.add_linear_ge(fdr_budget);
  }

  prob.set_objective(sdp::Sense::Maximize, obj);
  return out;
}

MasterProblem build_init_master(const ambiguity::WassersteinBall& ball,
                                const Vector& tau, double alpha, double theta,
                                const std::vector<Vector>& directions) {
  DesignConfig cfg;
  cfg.alpha = alpha;
  cfg.theta = theta;
  cfg.metric = Metric::Rho1;
  MultiplierSet mult;
  mult.tau = tau;
  // objective sum_k c_k' Pbar c_k = tr(V' Pbar V) with V = [c_1 ... c_K]
  Matrix V(ball.dim(), static_cast<Eigen::Index>(directions.size()));
  for (std::size_t k = 0; k < directions.size(); ++k)
    V.col(static_cast<Eigen::Index>(k)) = directions[k];
  return build_master(ball, mult, cfg, V);
}

// ---------------------------------------------------------------------------
// closed-form subproblem solutions and certificate multipliers
// ---------------------------------------------------------------------------

namespace {

// largest q certified by the alarm-side S-procedure block at multiplier tau,
// in the eigenbasis of Pbar: q_max(tau) = tau - sum_i tau w_i a_i^2/(1 - tau w_i)
double qmax_alarm(double tau, const Vector& w, const Vector& a) {
  double acc = tau;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double den = 1.0 - tau * w(i);
    if (den <= 1e-300) return -kInf;
    acc -= tau * w(i) * a(i) * a(i) / den;
  }
  return acc;
}

// largest p certified by the faulted-side block at multiplier pi:
// p_max(pi) = pi (c'Pc - 1) + |xi|^2 - sum_i (pi w_i b_i - a_i)^2/(1 + pi w_i)
double pmax_fault(double pi, const Vector& w, const Vector& a, const Vector& b) {
  double acc = -pi + pi * (w.array() * b.array().square()).sum() +
               a.squaredNorm();
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double num = pi * w(i) * b(i) - a(i);
    acc -= num * num / (1.0 + pi * w(i));
  }
  return acc;
}

// smallest multiplier in [0, hi] whose certificate reaches `needed`
// (the certificate value is increasing on [0, hi])
template <class F>
double smallest_certifying(F&& cert, double needed, double hi) {
  if (needed <= 0.0) return 0.0;
  if (cert(hi) <= needed) return hi;
  double lo = 0.0, up = hi;
  for (int it = 0; it < 120; ++it) {
    const double mid = 0.5 * (lo + up);
    (cert(mid) >= needed ? up : lo) = mid;
  }
  return up;
}

}  // namespace

FarDualSolution solve_far_dual(const MatrixRef& Pbar,
                               const ambiguity::WassersteinBall& ball,
                               double alpha, double headroom) {
  ball.validate();
  FarDualSolution out;
  ambiguity::EllipsoidEig eig(Pbar);
  const Eigen::Index N = ball.count();
  out.distances.resize(N);
  Vector exact_mult(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto [d, mu] = eig.project_to_alarm(ball.samples.col(i));
    out.distances(i) = d;
    exact_mult(i) = mu;
  }
  // piecewise-linear minimum over the kinks
  const double Nd = static_cast<double>(N);
  auto value = [&](double lam) {
    return ball.theta + (lam - out.distances.array()).max(0.0).sum() / Nd -
           lam * alpha;
  };
  out.value = value(0.0);
  out.lambda = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double v = value(out.distances(i));
    const double tie = 1e-12 * (1.0 + std::abs(out.value));
    // prefer the largest lambda among ties so the certificates stay useful
    if (v < out.value - tie ||
        (std::abs(v - out.value) <= tie && out.distances(i) > out.lambda)) {
      out.value = std::min(v, out.value);
      out.lambda = out.distances(i);
    }
  }

  // loosest certificates reaching min(d_i, headroom * lambda*)
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Pbar + Pbar.transpose()));
  const Vector w = es.eigenvalues().cwiseMax(0.0);
  out.tau = Vector::Zero(N);
  const double reach = headroom * out.lambda;
  for (Eigen::Index i = 0; i < N; ++i) {
    const double d = out.distances(i);
    if (d <= 0.0) continue;
    const Vector a = es.eigenvectors().transpose() * ball.samples.col(i);
    const double needed = std::min(d * d, reach * reach);
    out.tau(i) = smallest_certifying(
        [&](double tau) { return qmax_alarm(tau, w, a); }, needed,
        exact_mult(i));
  }
  return out;
}

FdrDualSolution solve_fdr_dual(const MatrixRef& Pbar, double eta,
                               const MatrixRef& samples, const VectorRef& c,
                               double beta, double headroom) {
  FdrDualSolution out;
  ambiguity::EllipsoidEig eig(Pbar);
  const Eigen::Index N = samples.cols();
  out.distances.resize(N);
  Vector exact_mult(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto [d, nu] = eig.project_to_safe(samples.col(i), c);
    out.distances(i) = d;
    exact_mult(i) = nu;
  }
  out.value = ambiguity::fdr_deficit_value(out.distances, eta, beta);

  // certificates anticipate the eta the master can lift to: a generous
  // quantile of the distances, never below the current eta
  Vector sorted = out.distances;
  std::sort(sorted.data(), sorted.data() + N);
  const auto qidx = std::min<Eigen::Index>(
      N - 1, static_cast<Eigen::Index>(
                 std::ceil(2.0 * (1.0 - beta) * static_cast<double>(N))));
  const double eta_plus = std::max(eta, sorted(qidx));
  const double reach = headroom * eta_plus;

  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Pbar + Pbar.transpose()));
  const Vector w = es.eigenvalues().cwiseMax(0.0);
  const Vector b = es.eigenvectors().transpose() * c;
  out.pi = Vector::Zero(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double d = out.distances(i);
    if (d <= 0.0) continue;
    const Vector a = es.eigenvectors().transpose() * samples.col(i);
    const double needed = std::min(d * d, reach * reach);
    out.pi(i) = smallest_certifying(
        [&](double pi) { return pmax_fault(pi, w, a, b); }, needed,
        exact_mult(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// design loops
// ---------------------------------------------------------------------------

namespace {

struct LoopTracker {
  double conv_tol;
  double prev = -kInf;
  std::vector<double> trace;
  bool converged = false;

  explicit LoopTracker(double tol) : conv_tol(tol) {}

  // returns true when the candidate is accepted (improvement)
  bool offer(double obj) {
    if (trace.empty()) {
      trace.push_back(obj);
      prev = obj;
      return true;
    }
    if (obj - prev < conv_tol * (1.0 + std::abs(prev))) {
      converged = true;
      if (obj >= prev) {
        trace.push_back(obj);
        prev = obj;
        return true;
      }
      return false;
    }
    trace.push_back(obj);
    prev = obj;
    return true;
  }
};

double identity_far_scale(const ambiguity::WassersteinBall& ball, double alpha) {
  const Eigen::Index n = ball.dim();
  double lo = 1e-12, hi = 1e12;
  const Matrix I = Matrix::Identity(n, n);
  for (int it = 0; it < 90; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (ambiguity::worst_case_far_oracle(ball, mid * I) <= alpha)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double median_pairwise_distance(const MatrixRef& samples) {
  const Eigen::Index N = std::min<Eigen::Index>(samples.cols(), 200);
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(N * (N - 1) / 2));
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = i + 1; j < N; ++j)
      dists.push_back((samples.col(i) - samples.col(j)).norm());
  if (dists.empty()) return 1.0;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return dists[dists.size() / 2];
}

Vector support_aware_distances(const MatrixRef& samples, const Matrix& Pbar,
                               const Vector& c,
                               const std::vector<SupportEllipsoid>& support,
                               const sdp::SolveOptions& opts) {
  Vector d(samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    auto dp = bounded_support_distance_sdp(samples.col(i), Pbar, c, support);
    const auto sol = sdp::solve(dp.problem, opts);
    if (sol.status != sdp::Status::Optimal)
      throw std::runtime_error("support distance SDP failed");
    d(i) = std::max(0.0, sol.value(dp.u));
  }
  return d;
}

}  // namespace

DesignResult build_init(const ambiguity::WassersteinBall& ball, double alpha,
                        double theta, const std::vector<Vector>& directions,
                        const DesignConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  DesignResult res;
  const Eigen::Index n = ball.dim();

  bool degenerate = directions.empty();
  for (const auto& c : directions)
    if (c.norm() <= 1e-12) degenerate = true;

  ambiguity::WassersteinBall b = ball;
  b.theta = theta;
  Matrix Pbar = 0.95 * identity_far_scale(b, alpha) * Matrix::Identity(n, n);

  LoopTracker tracker(config.conv_tol);
  auto objective_of = [&](const Matrix& P) {
    if (degenerate) return P.trace();  // rho1 with V = I fallback
    double acc = 0.0;
    for (const auto& c : directions) acc += c.dot(P * c);
    return acc;
  };
  tracker.offer(objective_of(Pbar));

  res.status = DesignStatus::MaxIters;
  for (int it = 0; it < config.init_iters; ++it) {
    const auto j1 = solve_far_dual(Pbar, b, alpha, config.mult_headroom);
    MasterProblem master =
        degenerate
            ? [&] {
                DesignConfig cfg;
                cfg.alpha = alpha;
                cfg.theta = theta;
                cfg.metric = Metric::Rho1;
                MultiplierSet mult;
                mult.tau = j1.tau;
                return build_master(b, mult, cfg, Matrix::Identity(n, n));
              }()
            : build_init_master(b, j1.tau, alpha, theta, directions);
    const auto sol = sdp::solve(master.problem, config.sdp_opts);
    if (sol.status != sdp::Status::Optimal) {
      res.status = DesignStatus::NumericalFailure;
      break;
    }
    const Matrix cand = sol.value(master.Pbar);
    if (tracker.offer(objective_of(cand)))
      Pbar = cand;
    if (tracker.converged) {
      res.status = DesignStatus::Converged;
      break;
    }
  }

  res.Pbar = 0.5 * (Pbar + Pbar.transpose());
  res.P = sdp::matrix_sqrt_psd(res.Pbar, 1e-7);
  res.objective_trace = tracker.trace;
  res.objective = tracker.prev;
  res.iterations = static_cast<int>(tracker.trace.size()) - 1;
  res.oracle_far = ambiguity::worst_case_far_oracle(b, res.Pbar);
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

DesignResult generic_design(const DesignConfig& config,
                            const ambiguity::WassersteinBall& ball,
                            const MatrixRef& V) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  ball.validate();
  DesignResult res;
  const Eigen::Index n = ball.dim();

  ambiguity::WassersteinBall b = ball;
  b.theta = config.theta;
  Matrix Pbar = 0.95 * identity_far_scale(b, config.alpha) * Matrix::Identity(n, n);

  DesignConfig cfg = config;
  cfg.faults.clear();

  LoopTracker tracker(config.conv_tol);
  tracker.offer(detectability_metric(config.metric, Pbar, V));

  res.status = DesignStatus::MaxIters;
  for (int it = 0; it < config.max_iters; ++it) {
    const auto j1 = solve_far_dual(Pbar, b, config.alpha, config.mult_headroom);
    MultiplierSet mult;
    mult.tau = j1.tau;
    auto master = build_master(b, mult, cfg, V);
    const auto sol = sdp::solve(master.problem, config.sdp_opts);
    if (sol.status != sdp::Status::Optimal) {
      res.status = DesignStatus::NumericalFailure;
      break;
    }
    const Matrix cand = sol.value(master.Pbar);
    if (tracker.offer(detectability_metric(config.metric, cand, V)))
      Pbar = cand;
    if (tracker.converged) {
      res.status = DesignStatus::Converged;
      break;
    }
  }

  res.Pbar = 0.5 * (Pbar + Pbar.transpose());
  res.P = sdp::matrix_sqrt_psd(res.Pbar, 1e-7);
  res.objective_trace = tracker.trace;
  res.objective = tracker.prev;
  res.iterations = static_cast<int>(tracker.trace.size()) - 1;
  res.oracle_far = ambiguity::worst_case_far_oracle(b, res.Pbar);
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

DesignResult sequential_design(const DesignConfig& config,
                               const ambiguity::WassersteinBall& ball,
                               const MatrixRef& V) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  ball.validate();
  if (config.faults.empty()) return generic_design(config, ball, V);

  const auto K = static_cast<Eigen::Index>(config.faults.size());
  const Eigen::Index N = ball.count();
  ambiguity::WassersteinBall b = ball;
  b.theta = config.theta;

  std::vector<Vector> directions;
  for (const auto& f : config.faults) directions.push_back(f.signature);

  DesignResult res = build_init(b, config.alpha, config.theta, directions, config);
  if (res.status == DesignStatus::NumericalFailure) return res;
  Matrix Pbar = res.Pbar;

  // empirical-FDR feasibility gate at the initial design (Definition 1,
  // strict inequality)
  {
    std::vector<Vector> shifts;
    for (const auto& f : config.faults) shifts.push_back(f.signature);
    const auto rates = ambiguity::empirical_rates(b.samples, Pbar, shifts);
    for (Eigen::Index j = 0; j < K; ++j) {
      if (rates.fdr[static_cast<std::size_t>(j)] <
          config.faults[static_cast<std::size_t>(j)].beta) {
        res.status = DesignStatus::Infeasible;
        res.objective_trace.clear();
        res.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
        return res;
      }
    }
  }

  Vector eta = Vector::Constant(K, 1e-8 * median_pairwise_distance(b.samples));

  LoopTracker tracker(config.conv_tol);
  auto objective_of = [&](const Matrix& P, const Vector& e) {
    double acc = detectability_metric(config.metric, P, V);
    for (Eigen::Index j = 0; j < K; ++j)
      acc += config.faults[static_cast<std::size_t>(j)].gamma * e(j);
    return acc;
  };
  tracker.offer(objective_of(Pbar, eta));

  DesignStatus status = DesignStatus::MaxIters;
  MultiplierSet mult;
  int iters = 0;
  for (int it = 0; it < config.max_iters; ++it) {
    ++iters;
    const auto j1 = solve_far_dual(Pbar, b, config.alpha, config.mult_headroom);
    mult.tau = j1.tau;
    mult.pi.resize(N, K);
    for (Eigen::Index j = 0; j < K; ++j) {
      const auto& f = config.faults[static_cast<std::size_t>(j)];
      const auto j2 = solve_fdr_dual(Pbar, eta(j), b.samples, f.signature,
                                     f.beta, config.mult_headroom);
      mult.pi.col(j) = j2.pi;
    }
    auto master = build_master(b, mult, config, V);
    const auto sol = sdp::solve(master.problem, config.sdp_opts);
    if (sol.status != sdp::Status::Optimal) {
      status = DesignStatus::NumericalFailure;
      break;
    }
    const Matrix candP = sol.value(master.Pbar);
    Vector candEta(K);
    for (Eigen::Index j = 0; j < K; ++j)
      candEta(j) = std::max(0.0, sol.value(master.eta[static_cast<std::size_t>(j)]));
    if (tracker.offer(objective_of(candP, candEta))) {
      Pbar = candP;
      eta = candEta;
    }
    if (tracker.converged) {
      status = DesignStatus::Converged;
      break;
    }
  }

  res.status = status;
  res.Pbar = 0.5 * (Pbar + Pbar.transpose());
  res.P = sdp::matrix_sqrt_psd(res.Pbar, 1e-7);
  res.eta = eta;
  res.multipliers = mult;
  res.objective_trace = tracker.trace;
  res.objective = tracker.prev;
  res.iterations = iters;
  res.oracle_far = ambiguity::worst_case_far_oracle(b, res.Pbar);
  res.oracle_fdr_deficit.clear();
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto& f = config.faults[static_cast<std::size_t>(j)];
    Vector d;
    if (config.support.empty())
      d = ambiguity::faulted_distances(b.samples, res.Pbar, f.signature);
    else
      d = support_aware_distances(b.samples, res.Pbar, f.signature,
                                  config.support, config.sdp_opts);
    res.oracle_fdr_deficit.push_back(
        ambiguity::fdr_deficit_value(d, eta(j), f.beta));
  }
  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace drfd::design
