#pragma once
#include <Eigen/Dense>

#include "curv/errors.hpp"
#include "curv/rng.hpp"

namespace curv {

// The seven coefficients that parameterize one topology-generation run:
// surface energy density f(k1,k2) = a20 k1^2 + a11 k1 k2 + a02 k2^2
//                                 + a10 k1 + a01 k2 + a00,
// plus the conserved mean phase value m0.
struct DesignParams {
  double a20 = 0.0;
  double a11 = 0.0;
  double a02 = 0.0;
  double a10 = 0.0;
  double a01 = 0.0;
  double a00 = 0.0;
  double m0 = 0.0;

  Eigen::Matrix<double, 7, 1> vec() const {
    Eigen::Matrix<double, 7, 1> v;
    v << a20, a11, a02, a10, a01, a00, m0;
    return v;
  }
  static DesignParams from_vec(const Eigen::Matrix<double, 7, 1>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }
};

// Equivalent geometric parameterization of the same energy density:
// f = g * (kt^T M kt - c), kt = R(theta) (k - kc), M = diag(1, alpha).
struct GeometricParams {
  double kappa1_c = 0.0;
  double kappa2_c = 0.0;
  double theta = 0.0;  // radians, in [-pi/2, pi/2)
  double alpha = 1.0;
  double c = 0.0;
  double g = 1.0;  // > 0
  double m0 = 0.0;
};

enum class QuadricClass { Elliptic, Parabolic, Hyperbolic };

// Per-component sampling box for DesignParams (defaults: the feasible domain
// found by trial-and-error sampling).
struct SampleBounds {
  Eigen::Matrix<double, 7, 1> lo;
  Eigen::Matrix<double, 7, 1> hi;

  static SampleBounds defaults() {
    SampleBounds b;
    b.lo << 0.0, -2.0, 0.0, -200.0, -200.0, -5000.0, -0.8;
    b.hi << 1.0, 2.0, 1.0, 200.0, 200.0, 5000.0, -0.15;
    return b;
  }
};

// Surface energy density; templated so dual-number scalars can flow through.
template <class T>
inline T energy_density(const DesignParams& p, const T& k1, const T& k2) {
  return p.a20 * k1 * k1 + p.a11 * k1 * k2 + p.a02 * k2 * k2 + p.a10 * k1 +
         p.a01 * k2 + p.a00;
}

DesignParams to_standard(const GeometricParams& geo);
GeometricParams to_geometric(const DesignParams& theta);
QuadricClass classify(const DesignParams& theta);
DesignParams sample_design(Rng& rng, const SampleBounds& bounds);

}  // namespace curv
