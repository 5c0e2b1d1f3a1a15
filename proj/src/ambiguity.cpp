#include "drfd/ambiguity.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace drfd::ambiguity {

namespace {
constexpr double kPsdTol = 1e-9;
constexpr double kRootTol = 1e-12;  // on the constraint residual
}  // namespace

void WassersteinBall::validate() const {
  if (count() < 1) throw std::invalid_argument("ambiguity set needs N >= 1 samples");
  if (theta < 0.0) throw std::invalid_argument("Wasserstein radius must be >= 0");
}

void AlarmGeometry::validate() const {
  if (Pbar.rows() != Pbar.cols())
    throw std::invalid_argument("Pbar must be square");
  if (!Pbar.isApprox(Pbar.transpose(), 1e-9))
    throw std::invalid_argument("Pbar must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(Pbar, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kPsdTol * std::max(1.0, Pbar.norm()))
    throw std::invalid_argument("Pbar must be PSD");
  if (shift.size() != Pbar.rows())
    throw std::invalid_argument("shift dimension mismatch");
}

EllipsoidEig::EllipsoidEig(const MatrixRef& Pbar) {
  if (Pbar.rows() != Pbar.cols())
    throw std::invalid_argument("Pbar must be square");
  const Matrix sym = 0.5 * (Pbar + Pbar.transpose());
  if ((sym - Pbar).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, Pbar.norm()))
    throw std::invalid_argument("Pbar must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.eigenvalues().minCoeff() < -kPsdTol * std::max(1.0, sym.norm()))
    throw std::invalid_argument("Pbar is indefinite");
  Q_ = es.eigenvectors();
  w_ = es.eigenvalues().cwiseMax(0.0);
}

std::pair<double, double> EllipsoidEig::project_to_safe(
    const VectorRef& xi, const VectorRef& c) const {
  const Vector z = xi + c;
  const Vector wv = Q_.transpose() * z;
  const double val = (w_.array() * wv.array().square()).sum();
  if (val <= 1.0) return {0.0, 0.0};

  // phi(lam) = sum w_i wv_i^2 / (1 + lam w_i)^2, decreasing from val > 1
  auto phi = [&](double lam) {
    return (w_.array() * wv.array().square() /
            (1.0 + lam * w_.array()).square())
        .sum();
  };
  double lo = 0.0, hi = 1.0;
  while (phi(hi) > 1.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = phi(mid);
    (r > 1.0 ? lo : hi) = mid;
    if (std::abs(r - 1.0) < kRootTol || (hi - lo) < 1e-16 * (1.0 + hi)) break;
  }
  const double lam = 0.5 * (lo + hi);
  const double dist2 = (wv.array().square() * (lam * w_.array()).square() /
                        (1.0 + lam * w_.array()).square())
                           .sum();
  return {std::sqrt(std::max(0.0, dist2)), lam};
}

std::pair<double, double> EllipsoidEig::project_to_alarm(
    const VectorRef& xi) const {
  const double d1 = max_eigenvalue();
  if (d1 <= 0.0) throw std::domain_error("alarm set empty (Pbar = 0)");
  const Vector wv = Q_.transpose() * xi;
  const double val = (w_.array() * wv.array().square()).sum();
  if (val >= 1.0) return {0.0, 0.0};

  const double scale = std::max(1.0, wv.squaredNorm());
  // split off the top eigenspace for the hard case
  double top_energy = 0.0;
  for (Eigen::Index i = 0; i < w_.size(); ++i)
    if (w_(i) > d1 * (1.0 - 1e-12)) top_energy += wv(i) * wv(i);

  auto psi_rest = [&](double lam) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (w_(i) > d1 * (1.0 - 1e-12) || w_(i) == 0.0) continue;
      const double den = 1.0 - lam * w_(i);
      acc += w_(i) * wv(i) * wv(i) / (den * den);
    }
    return acc;
  };

  if (top_energy < 1e-28 * scale) {
    const double lam = 1.0 / d1;
    const double rest = psi_rest(lam);
    if (rest < 1.0) {
      // hard case: put the remaining energy on the top eigenspace
      double dist2 = (1.0 - rest) / d1;
      for (Eigen::Index i = 0; i < w_.size(); ++i) {
        if (w_(i) > d1 * (1.0 - 1e-12) || w_(i) == 0.0) continue;
        const double diff = wv(i) * lam * w_(i) / (1.0 - lam * w_(i));
        dist2 += diff * diff;
      }
      return {std::sqrt(std::max(0.0, dist2)), lam};
    }
  }

  auto psi = [&](double lam) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w_.size(); ++i) {
      if (w_(i) == 0.0) continue;
      const double den = 1.0 - lam * w_(i);
      if (den <= 0.0) return std::numeric_limits<double>::infinity();
      acc += w_(i) * wv(i) * wv(i) / (den * den);
    }
    return acc;
  };
  double lo = 0.0, hi = 1.0 / d1;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (psi(mid) < 1.0 ? lo : hi) = mid;
    if (hi - lo < 1e-16 / d1) break;
  }
  const double lam = 0.5 * (lo + hi);
  double dist2 = 0.0;
  for (Eigen::Index i = 0; i < w_.size(); ++i) {
    if (w_(i) == 0.0) continue;
    const double diff = wv(i) * lam * w_(i) / (1.0 - lam * w_(i));
    dist2 += diff * diff;
  }
  return {std::sqrt(dist2), lam};
}

double dist_to_faulted_set(const VectorRef& xi, const MatrixRef& Pbar,
                           const VectorRef& c) {
  return EllipsoidEig(Pbar).project_to_safe(xi, c).first;
}

double dist_to_alarm_set(const VectorRef& xi, const MatrixRef& Pbar) {
  return EllipsoidEig(Pbar).project_to_alarm(xi).first;
}

Vector faulted_distances(const MatrixRef& samples, const MatrixRef& Pbar,
                         const VectorRef& c) {
  EllipsoidEig eig(Pbar);
  Vector d(samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i)
    d(i) = eig.project_to_safe(samples.col(i), c).first;
  return d;
}

Vector alarm_distances(const MatrixRef& samples, const MatrixRef& Pbar) {
  EllipsoidEig eig(Pbar);
  Vector d(samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i)
    d(i) = eig.project_to_alarm(samples.col(i)).first;
  return d;
}

double worst_case_far_oracle(const WassersteinBall& ball, const MatrixRef& Pbar) {
  ball.validate();
  EllipsoidEig eig(Pbar);
  if (eig.max_eigenvalue() <= 0.0) return 0.0;  // empty alarm set never alarms
  const Vector d = alarm_distances(ball.samples, Pbar);
  const double N = static_cast<double>(d.size());
  const double frac_zero =
      static_cast<double>((d.array() == 0.0).count()) / N;
  if (ball.theta == 0.0) return frac_zero;

  auto value = [&](double lt) {
    return lt * ball.theta + (1.0 - lt * d.array()).max(0.0).sum() / N;
  };
  double best = 1.0;  // lt = 0
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d(i) > 0.0) best = std::min(best, value(1.0 / d(i)));
  return std::max(0.0, std::min(1.0, best));
}

double fdr_deficit_value(const Vector& d, double eta, double beta) {
  const double N = static_cast<double>(d.size());
  return (eta - d.array()).max(0.0).sum() / N - (1.0 - beta) * eta;
}

double relaxed_fdr_deficit_oracle(const MatrixRef& samples, const MatrixRef& Pbar,
                                  const VectorRef& c, double eta, double beta) {
  if (eta <= 0.0) throw std::invalid_argument("eta must be positive");
  return fdr_deficit_value(faulted_distances(samples, Pbar, c), eta, beta);
}

double far_dual_value_from_distances(const Vector& d, double theta, double alpha) {
  const double N = static_cast<double>(d.size());
  auto value = [&](double lam) {
    return theta + (lam - d.array()).max(0.0).sum() / N - lam * alpha;
  };
  double best = value(0.0);
  for (Eigen::Index i = 0; i < d.size(); ++i) best = std::min(best, value(d(i)));
  return best;
}

double far_dual_value_oracle(const WassersteinBall& ball, const MatrixRef& Pbar,
                             double alpha) {
  ball.validate();
  return far_dual_value_from_distances(alarm_distances(ball.samples, Pbar),
                                       ball.theta, alpha);
}

Rates empirical_rates(const MatrixRef& samples, const MatrixRef& Pbar,
                      const std::vector<Vector>& shifts) {
  Rates rates;
  const double N = static_cast<double>(samples.cols());
  Eigen::Index far_count = 0;
  for (Eigen::Index i = 0; i < samples.cols(); ++i)
    if (samples.col(i).dot(Pbar * samples.col(i)) > 1.0) ++far_count;
  rates.far = far_count / N;
  for (const auto& c : shifts) {
    Eigen::Index hit = 0;
    for (Eigen::Index i = 0; i < samples.cols(); ++i) {
      const Vector z = samples.col(i) + c;
      if (z.dot(Pbar * z) > 1.0) ++hit;
    }
    rates.fdr.push_back(hit / N);
  }
  return rates;
}

}  // namespace drfd::ambiguity
