#include "drfd/residual.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <stdexcept>

namespace drfd::residual {

Vector GeneratorBasis::primary_residual(const VectorRef& u_s,
                                        const VectorRef& y_s) const {
  if (u_s.size() != (s + 1) * nu || y_s.size() != (s + 1) * ny)
    throw std::invalid_argument("window length does not match generator order");
  if (kind == GeneratorKind::Parity)
    return Gamma_perp * (y_s - H_us * u_s);
  Vector z((s + 1) * (nu + ny));
  z << u_s, y_s;
  return K * z;
}

GeneratorBasis ParityModel::basis() const {
  GeneratorBasis b;
  b.kind = GeneratorKind::Parity;
  b.s = s;
  b.nu = nu;
  b.ny = ny;
  b.Gamma_perp = Gamma_perp;
  b.H_us = H_us;
  return b;
}

GeneratorBasis SkrModel::basis() const {
  GeneratorBasis b;
  b.kind = GeneratorKind::Skr;
  b.s = s;
  b.nu = nu;
  b.ny = ny;
  b.K = K;
  return b;
}

Matrix toeplitz_block(const MatrixRef& A, const MatrixRef& Bx,
                      const MatrixRef& C, const MatrixRef& Dx,
                      Eigen::Index s) {
  const Eigen::Index rows = C.rows();
  const Eigen::Index cols = Bx.cols();
  if (A.rows() != A.cols() || Bx.rows() != A.rows() || C.cols() != A.rows() ||
      Dx.rows() != rows || Dx.cols() != cols)
    throw std::invalid_argument("toeplitz_block: inconsistent dimensions");

  Matrix H = Matrix::Zero((s + 1) * rows, (s + 1) * cols);
  // CA^p Bx for p = 0..s-1, computed once per diagonal
  Matrix CApB = C * Bx;
  for (Eigen::Index i = 0; i <= s; ++i)
    H.block(i * rows, i * cols, rows, cols) = Dx;
  Matrix Ap = Matrix::Identity(A.rows(), A.cols());
  for (Eigen::Index diag = 1; diag <= s; ++diag) {
    const Matrix blk = C * Ap * Bx;
    for (Eigen::Index i = diag; i <= s; ++i)
      H.block(i * rows, (i - diag) * cols, rows, cols) = blk;
    Ap = Ap * A;
  }
  return H;
}

ParityModel build_parity(const sim::StateSpaceModel& model, Eigen::Index s) {
  model.validate();
  if (s < model.nx())
    throw std::invalid_argument("parity order must satisfy s >= nx");

  ParityModel pm;
  pm.s = s;
  pm.nu = model.nu();
  pm.ny = model.ny();
  pm.Gamma_s.resize((s + 1) * model.ny(), model.nx());
  Matrix Ak = Matrix::Identity(model.nx(), model.nx());
  for (Eigen::Index i = 0; i <= s; ++i) {
    pm.Gamma_s.middleRows(i * model.ny(), model.ny()) = model.C * Ak;
    Ak = Ak * model.A;
  }
  pm.H_us = toeplitz_block(model.A, model.B, model.C, model.D, s);
  pm.H_ds = toeplitz_block(model.A, model.Bd, model.C, model.Dd, s);
  pm.H_fs = toeplitz_block(model.A, model.Bf, model.C, model.Df, s);

  Eigen::JacobiSVD<Matrix> svd(pm.Gamma_s, Eigen::ComputeFullU);
  const Eigen::Index rank = svd.rank();
  const Eigen::Index n_xi = pm.Gamma_s.rows() - rank;
  if (n_xi <= 0)
    throw std::invalid_argument("parity construction yields an empty null space");
  pm.Gamma_perp = svd.matrixU().rightCols(n_xi).transpose();
  pm.W = pm.Gamma_perp * pm.H_ds;
  pm.V = pm.Gamma_perp * pm.H_fs;
  return pm;
}

SkrModel build_skr_qr(const MatrixRef& U_p, const MatrixRef& Y_p,
                      const MatrixRef& U_f, const MatrixRef& Y_f,
                      Eigen::Index order) {
  const Eigen::Index N = U_p.cols();
  if (Y_p.cols() != N || U_f.cols() != N || Y_f.cols() != N)
    throw std::invalid_argument("Hankel blocks must share the column count");
  const Eigen::Index m1 = U_p.rows() + Y_p.rows();
  const Eigen::Index m2 = U_f.rows();
  const Eigen::Index m3 = Y_f.rows();
  const Eigen::Index m = m1 + m2 + m3;
  if (N < m)
    throw std::invalid_argument("not enough data columns for the LQ factorization");

  Matrix stacked(m, N);
  stacked << U_p, Y_p, U_f, Y_f;

  // LQ via QR of the transpose: stacked^T = Qhat Rhat  =>  stacked = L Q
  Eigen::HouseholderQR<Matrix> qr(stacked.transpose());
  Matrix Qhat = Matrix::Identity(N, m);
  Qhat = qr.householderQ() * Qhat;
  Matrix L = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  L.transposeInPlace();
  const Matrix Q = Qhat.transpose();  // m x N, orthonormal rows

  const Matrix G = L.block(m1, 0, m2 + m3, m1 + m2);
  Eigen::JacobiSVD<Matrix> svd(G, Eigen::ComputeFullU);
  Eigen::Index rank;
  if (order >= 0) {
    rank = std::min<Eigen::Index>(m2 + order, m2 + m3);
  } else {
    const double tol = 1e-8 * svd.singularValues()(0);
    rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()(i) > tol) ++rank;
  }
  const Eigen::Index n_xi = (m2 + m3) - rank;
  if (n_xi <= 0)
    throw std::invalid_argument("SKR identification found no nontrivial kernel");

  SkrModel skr;
  skr.K = svd.matrixU().rightCols(n_xi).transpose();
  skr.W = Matrix::Identity(n_xi, n_xi);

  const Matrix R33 = L.block(m1 + m2, m1 + m2, m3, m3);
  const Matrix Q3 = Q.middleRows(m1 + m2, m3);
  const Matrix Ky = skr.K.rightCols(m3);
  skr.xi_samples = (Ky * R33 * Q3) / std::sqrt(static_cast<double>(N));
  skr.sample_scaling = "Ky*R33*Q3/sqrt(N)";
  skr.V = Ky;

  // U_f has (s+1) nu rows and Y_f has (s+1) ny rows for a common window
  // order s; take the largest consistent block count.
  for (Eigen::Index blocks = std::max<Eigen::Index>(m2, m3); blocks >= 1; --blocks) {
    if (m3 % blocks == 0 && (m2 == 0 || m2 % blocks == 0)) {
      skr.s = blocks - 1;
      skr.nu = m2 / blocks;
      skr.ny = m3 / blocks;
      break;
    }
  }
  return skr;
}

Matrix collect_primary_residuals(const GeneratorBasis& basis,
                                 const sim::Trajectory& traj,
                                 Eigen::Index stride) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  const Eigen::Index T = traj.length();
  const Eigen::Index s = basis.s;
  if (T < s + 1)
    throw std::invalid_argument("trajectory shorter than one window");
  const Eigen::Index count = (T - 1 - s) / stride + 1;
  Matrix out(basis.n_xi(), count);
  Vector u_s((s + 1) * basis.nu), y_s((s + 1) * basis.ny);
  Eigen::Index col = 0;
  for (Eigen::Index k = s; k < T; k += stride) {
    for (Eigen::Index b = 0; b <= s; ++b) {
      u_s.segment(b * basis.nu, basis.nu) = traj.U.row(k - s + b).transpose();
      y_s.segment(b * basis.ny, basis.ny) = traj.Y.row(k - s + b).transpose();
    }
    out.col(col++) = basis.primary_residual(u_s, y_s);
  }
  return out;
}

Matrix lift_constant_fault(const MatrixRef& V_stacked, Eigen::Index n_f,
                           Eigen::Index s) {
  if (V_stacked.cols() != (s + 1) * n_f)
    throw std::invalid_argument("stacked fault matrix has wrong column count");
  Matrix Vbar = Matrix::Zero(V_stacked.rows(), n_f);
  for (Eigen::Index b = 0; b <= s; ++b)
    Vbar += V_stacked.middleCols(b * n_f, n_f);
  return Vbar;
}

Matrix unified_solution(const MatrixRef& W) {
  Eigen::JacobiSVD<Matrix> svd(W, Eigen::ComputeFullU);
  const Vector sv = svd.singularValues();
  if (sv.size() < W.rows() || sv(W.rows() - 1) <= 1e-12 * sv(0))
    throw std::invalid_argument("unified solution requires full row rank W");
  return sv.head(W.rows()).cwiseInverse().asDiagonal() *
         svd.matrixU().transpose();
}

Evaluation evaluate_residual(const ResidualGenerator& gen, const VectorRef& u_s,
                             const VectorRef& y_s) {
  Evaluation ev;
  ev.r = gen.P * gen.basis.primary_residual(u_s, y_s);
  ev.J = ev.r.squaredNorm();
  ev.alarm = ev.J > ResidualGenerator::threshold;
  return ev;
}

}  // namespace drfd::residual
