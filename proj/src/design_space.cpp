#include "curv/design_space.hpp"

#include <cmath>

namespace curv {

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::Matrix2d quad_matrix(const DesignParams& p) {
  Eigen::Matrix2d q;
  q << p.a20, 0.5 * p.a11, 0.5 * p.a11, p.a02;
  return q;
}

}  // namespace

DesignParams to_standard(const GeometricParams& geo) {
  if (!(geo.g > 0.0)) throw InvalidParamError("to_standard: scale g must be > 0");
  const double g = geo.g, a = geo.alpha, c2 = std::cos(2.0 * geo.theta),
               s2 = std::sin(2.0 * geo.theta), k1c = geo.kappa1_c,
               k2c = geo.kappa2_c;
  DesignParams p;
  p.a20 = 0.5 * g * (1.0 + a - a * c2 + c2);
  p.a11 = g * (1.0 - a) * s2;
  p.a02 = 0.5 * g * (1.0 + a + a * c2 - c2);
  p.a10 = -g * ((1.0 + a) * k1c + (1.0 - a) * k1c * c2 + (1.0 - a) * k2c * s2);
  p.a01 = -g * ((1.0 + a) * k2c + (a - 1.0) * k2c * c2 + (1.0 - a) * k1c * s2);
  p.a00 = 0.5 * g *
          ((1.0 + a) * (k1c * k1c + k2c * k2c) +
           (1.0 - a) * (k1c * k1c - k2c * k2c) * c2 +
           2.0 * k1c * k2c * (1.0 - a) * s2 - 2.0 * geo.c);
  p.m0 = geo.m0;
  return p;
}

GeometricParams to_geometric(const DesignParams& theta) {
  const Eigen::Matrix2d q = quad_matrix(theta);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(q);
  const double lam_small = eig.eigenvalues()[0];
  const double lam_big = eig.eigenvalues()[1];
  const double scale = std::abs(lam_small) + std::abs(lam_big);
  if (scale == 0.0)
    throw DegenerateFormError("to_geometric: quadratic part is zero");
  if (!(lam_big > 0.0))
    throw DegenerateFormError(
        "to_geometric: largest eigenvalue is not positive; gauge g>0 "
        "unavailable");

  GeometricParams geo;
  geo.g = lam_big;
  geo.alpha = lam_small / lam_big;
  geo.m0 = theta.m0;

  // Angle of the eigenvector carrying the g-eigenvalue, mapped to
  // [-pi/2, pi/2); isotropic forms get the canonical theta = 0.
  if (std::abs(geo.alpha - 1.0) < 1e-12) {
    geo.theta = 0.0;
    geo.alpha = 1.0;
  } else {
    Eigen::Vector2d e = eig.eigenvectors().col(1);
    double ang = std::atan2(e.y(), e.x());
    if (ang >= 0.5 * kPi) ang -= kPi;
    if (ang < -0.5 * kPi) ang += kPi;
    if (ang >= 0.5 * kPi) ang = -0.5 * kPi;
    geo.theta = ang;
  }

  // Center: solve 2 Q kc = -(a10, a01) in the eigenbasis, minimal-norm along
  // null directions; inconsistent linear parts have no center.
  const Eigen::Vector2d lin(theta.a10, theta.a01);
  const Eigen::Vector2d rhs = -0.5 * lin;
  Eigen::Vector2d kc_eig;  // coordinates in the eigenvector basis
  const Eigen::Vector2d rhs_eig = eig.eigenvectors().transpose() * rhs;
  const double tol = 1e-12 * (scale + lin.norm());
  for (int i = 0; i < 2; ++i) {
    const double lam = eig.eigenvalues()[i];
    if (std::abs(lam) <= 1e-14 * scale) {
      if (std::abs(rhs_eig[i]) > tol)
        throw NoCenterError("to_geometric: linear part has no finite center");
      kc_eig[i] = 0.0;
    } else {
      kc_eig[i] = rhs_eig[i] / lam;
    }
  }
  const Eigen::Vector2d kc = eig.eigenvectors() * kc_eig;
  geo.kappa1_c = kc.x();
  geo.kappa2_c = kc.y();
  geo.c = (kc.dot(q * kc) - theta.a00) / geo.g;
  return geo;
}

QuadricClass classify(const DesignParams& theta) {
  const Eigen::Matrix2d q = quad_matrix(theta);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(q, Eigen::EigenvaluesOnly);
  const double trace_norm =
      std::abs(eig.eigenvalues()[0]) + std::abs(eig.eigenvalues()[1]);
  if (trace_norm == 0.0)
    throw DegenerateFormError("classify: quadratic part is zero");
  const double det = eig.eigenvalues()[0] * eig.eigenvalues()[1];
  const double tol = 1e-12 * trace_norm;
  if (det > tol) return QuadricClass::Elliptic;
  if (det < -tol) return QuadricClass::Hyperbolic;
  return QuadricClass::Parabolic;
}

DesignParams sample_design(Rng& rng, const SampleBounds& bounds) {
  for (int i = 0; i < 7; ++i)
    if (!(bounds.lo[i] <= bounds.hi[i]))
      throw InvalidParamError("sample_design: bounds not well-ordered");
  Eigen::Matrix<double, 7, 1> v;
  for (int i = 0; i < 7; ++i) v[i] = rng.uniform(bounds.lo[i], bounds.hi[i]);
  return DesignParams::from_vec(v);
}

}  // namespace curv
