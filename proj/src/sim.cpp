#include "drfd/sim.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <stdexcept>

#include "drfd/rng.hpp"

namespace drfd::sim {

void StateSpaceModel::validate() const {
  const auto n = nx();
  if (A.rows() != n || A.cols() != n) throw std::invalid_argument("A must be square");
  if (B.rows() != n) throw std::invalid_argument("B row count != nx");
  if (Bd.rows() != n) throw std::invalid_argument("Bd row count != nx");
  if (Bf.rows() != n) throw std::invalid_argument("Bf row count != nx");
  if (C.cols() != n) throw std::invalid_argument("C column count != nx");
  if (D.rows() != ny() || D.cols() != nu()) throw std::invalid_argument("D must be ny x nu");
  if (Dd.rows() != ny() || Dd.cols() != nd()) throw std::invalid_argument("Dd must be ny x nd");
  if (Df.rows() != ny() || Df.cols() != nf()) throw std::invalid_argument("Df must be ny x nf");
  if (!observable()) throw std::invalid_argument("(A, C) is not observable");
}

bool StateSpaceModel::observable() const {
  const auto n = nx();
  Matrix obs(n * ny(), n);
  Matrix Ak = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    obs.middleRows(i * ny(), ny()) = C * Ak;
    Ak = Ak * A;
  }
  Eigen::JacobiSVD<Matrix> svd(obs);
  return svd.rank() == n;
}

void DisturbanceSpec::validate() const {
  const auto n = mean.size();
  if (covariance.rows() != n || covariance.cols() != n)
    throw std::invalid_argument("disturbance covariance must be n_d x n_d");
  if (!covariance.isApprox(covariance.transpose(), 1e-12))
    throw std::invalid_argument("disturbance covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(covariance);
  if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, covariance.norm()))
    throw std::invalid_argument("disturbance covariance must be PSD");
  if (kind == DisturbanceKind::Laplace) {
    Matrix off = covariance;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("Laplace disturbance requires a diagonal covariance");
  }
  if (kind == DisturbanceKind::EmpiricalFile && empirical.size() == 0)
    throw std::invalid_argument("empirical disturbance pool is empty");
}

FaultScenario FaultScenario::none(Eigen::Index nf) {
  FaultScenario f;
  f.profile = Vector::Zero(nf);
  f.onset = 0;
  f.duration = 0;
  return f;
}

bool FaultScenario::active_at(Eigen::Index k) const {
  if (k < onset) return false;
  if (duration.has_value() && k >= onset + *duration) return false;
  return true;
}

StateSpaceModel three_tank_model() {
  StateSpaceModel m;
  m.A.resize(3, 3);
  m.A << 0.8945, 0.0048, 0.1005,
         0.0048, 0.8500, 0.0801,
         0.1005, 0.0801, 0.8164;
  m.B.resize(3, 2);
  m.B << 0.0317, 0.0001,
         0.0001, 0.0309,
         0.0018, 0.0014;
  m.Bd = Matrix::Identity(3, 3);
  m.Bf = Matrix::Zero(3, 5);
  m.Bf.leftCols(3) = Matrix::Identity(3, 3);
  m.C.resize(2, 3);
  m.C << 1, 0, 0,
         0, 0, 1;
  m.D = Matrix::Zero(2, 2);
  m.Dd = Matrix::Zero(2, 3);
  m.Df = Matrix::Zero(2, 5);
  m.Df.rightCols(2) = Matrix::Identity(2, 2);
  m.validate();
  return m;
}

namespace {

Matrix psd_sqrt_of(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

Matrix sample_disturbance(const DisturbanceSpec& spec, Eigen::Index count,
                          std::uint64_t seed) {
  spec.validate();
  const auto n = spec.mean.size();
  Matrix out(count, n);
  Rng rng(seed);
  switch (spec.kind) {
    case DisturbanceKind::Laplace: {
      Vector scale(n);
      for (Eigen::Index j = 0; j < n; ++j)
        scale(j) = std::sqrt(spec.covariance(j, j) / 2.0);
      for (Eigen::Index i = 0; i < count; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          out(i, j) = spec.mean(j) + rng.laplace(scale(j));
      break;
    }
    case DisturbanceKind::Gaussian: {
      const Matrix root = psd_sqrt_of(spec.covariance);
      for (Eigen::Index i = 0; i < count; ++i)
        out.row(i) = (spec.mean + root * rng.gaussian_vector(n)).transpose();
      break;
    }
    case DisturbanceKind::EmpiricalFile: {
      const auto pool = spec.empirical.rows();
      for (Eigen::Index i = 0; i < count; ++i) {
        const auto idx = static_cast<Eigen::Index>(rng.next_u64() % static_cast<std::uint64_t>(pool));
        out.row(i) = spec.empirical.row(idx);
      }
      break;
    }
  }
  return out;
}

Trajectory simulate(const StateSpaceModel& model, const MatrixRef& U,
                    const DisturbanceSpec& dist, const FaultScenario& fault,
                    const VectorRef& x0, std::uint64_t seed) {
  model.validate();
  const Eigen::Index T = U.rows();
  if (U.cols() != model.nu()) throw std::invalid_argument("U column count != nu");
  if (x0.size() != model.nx()) throw std::invalid_argument("x0 size != nx");
  if (fault.profile.size() != model.nf())
    throw std::invalid_argument("fault profile size != nf");
  if (T > 0 && fault.profile.squaredNorm() > 0 && fault.onset >= T &&
      !(fault.duration.has_value() && *fault.duration == 0))
    throw std::invalid_argument("fault onset beyond trajectory length");

  Trajectory traj;
  traj.U = U;
  traj.Y.resize(T, model.ny());
  traj.D = sample_disturbance(dist, T, seed);
  traj.F = Matrix::Zero(T, model.nf());
  traj.x0 = x0;
  traj.seed = seed;

  Vector x = x0;
  for (Eigen::Index k = 0; k < T; ++k) {
    if (fault.active_at(k)) traj.F.row(k) = fault.profile.transpose();
    const Vector u = U.row(k).transpose();
    const Vector d = traj.D.row(k).transpose();
    const Vector f = traj.F.row(k).transpose();
    traj.Y.row(k) = (model.C * x + model.D * u + model.Dd * d + model.Df * f).transpose();
    x = model.A * x + model.B * u + model.Bd * d + model.Bf * f;
  }
  return traj;
}

Matrix prbs_input(Eigen::Index T, Eigen::Index nu, double amplitude,
                  Eigen::Index hold, std::uint64_t seed) {
  if (hold < 1) throw std::invalid_argument("PRBS hold must be >= 1");
  Matrix U(T, nu);
  Rng rng(seed);
  Vector level = Vector::Zero(nu);
  for (Eigen::Index k = 0; k < T; ++k) {
    if (k % hold == 0)
      for (Eigen::Index j = 0; j < nu; ++j)
        level(j) = (rng.uniform() < 0.5 ? -amplitude : amplitude);
    U.row(k) = level.transpose();
  }
  return U;
}

Matrix hankel(const MatrixRef& signal, Eigen::Index s, Eigen::Index N) {
  const Eigen::Index T = signal.rows();
  const Eigen::Index n = signal.cols();
  if (T < s + N)
    throw std::invalid_argument("signal too short for requested Hankel size");
  Matrix H((s + 1) * n, N);
  // column j (0-based) ends at sample T - N + j
  for (Eigen::Index j = 0; j < N; ++j) {
    const Eigen::Index last = T - N + j;
    for (Eigen::Index b = 0; b <= s; ++b)
      H.block(b * n, j, n, 1) = signal.row(last - s + b).transpose();
  }
  return H;
}

}  // namespace drfd::sim
