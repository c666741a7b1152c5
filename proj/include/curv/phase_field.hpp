#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "curv/design_space.hpp"
#include "curv/errors.hpp"
#include "curv/rng.hpp"
#include "curv/stats.hpp"

namespace curv {

// Periodic scalar field on a cubic n^3 grid over [0, length]^3, x-fastest
// storage: values[x + n*(y + n*z)], node (x,y,z) at coordinates (x,y,z)*spacing.
struct PhaseField {
  int n = 0;
  double length = 100.0;
  Eigen::ArrayXd values;

  double spacing() const { return length / n; }
  std::size_t size() const {
    return static_cast<std::size_t>(n) * n * n;
  }
  double mean() const { return kahan_mean(values); }

  static PhaseField constant(int n, double v, double length = 100.0) {
    PhaseField u;
    u.n = n;
    u.length = length;
    u.values = Eigen::ArrayXd::Constant(static_cast<Eigen::Index>(n) * n * n, v);
    return u;
  }
};

struct SolverConfig {
  double epsilon = 0.0;    // interface thickness; 0 = auto (2 * spacing)
  double dt = 0.05;
  double sigma = 0.0;      // biharmonic stabilization; 0 = auto from theta
  long max_steps = 500;
  double energy_tol = 1e-5;  // relative energy change over `window` steps
  int window = 25;
  double noise_amp = 0.05;
  double grad_clamp = 1e-8;  // minimum |grad u| for curvature evaluation
  double band = 0.9;         // |u| < band defines the interface band
  double flow_reg = 0.0;     // gradient regularization in the flow; 0 = auto
  double stab = 0.0;         // linear (Laplacian) stabilization; 0 = auto

  double resolve_epsilon(double spacing) const {
    return epsilon > 0.0 ? epsilon : 2.0 * spacing;
  }
};

// Stabilization coefficients sized to the energy coefficients so the
// semi-implicit update stays bounded over the sampled Theta ranges while the
// flow speed stays roughly invariant under f -> lambda*f. `default_sigma` is
// the biharmonic (|k|^4) coefficient covering the curvature terms;
// `default_stab` is the Laplacian (|k|^2) coefficient covering the explicit
// double-well and wall forces.
double default_sigma(const DesignParams& theta, double epsilon);
double default_stab(const DesignParams& theta, double epsilon);

// Principal curvatures of the level sets of u, valid only inside the
// interface band and where the gradient is resolvable.
struct CurvatureFields {
  int n = 0;
  Eigen::ArrayXd k1, k2;        // k1 >= k2 wherever valid
  std::vector<std::uint8_t> valid;
};

struct Diagnostics {
  std::vector<double> energy;  // energy[t] = discrete energy at step t
  std::vector<double> mean_u;
  long steps = 0;
  bool converged = false;
  bool phase_separated = false;
  bool feasible = false;
};

PhaseField init_field(int n, double m0, double noise_amp, Rng& rng,
                      double length = 100.0);

CurvatureFields level_set_curvatures(const PhaseField& u,
                                     const SolverConfig& cfg);

double discrete_energy(const PhaseField& u, const DesignParams& theta,
                       const SolverConfig& cfg);

// Exact gradient of discrete_energy with respect to every nodal value
// (discretize-then-differentiate through the stencils and the curvature
// and surface-density expressions).
Eigen::ArrayXd energy_gradient(const PhaseField& u, const DesignParams& theta,
                               const SolverConfig& cfg);

// The functional the solver actually descends. Same integrand as
// discrete_energy but defined on every node: the curvature denominators are
// regularized by flow_reg^2 instead of hard-masked, and a quadratic wall
// outside [-1, 1] implements the phase-field range constraint. The masked
// energy has zero gradient wherever |u| >= band, so driving the flow with it
// leaves those nodes unconstrained and the field diverges.
double flow_energy(const PhaseField& u, const DesignParams& theta,
                   const SolverConfig& cfg);
Eigen::ArrayXd flow_gradient(const PhaseField& u, const DesignParams& theta,
                             const SolverConfig& cfg);

// One semi-implicit spectral update of the mass-preserving H^-1 flow:
//   u_hat+ = (u_hat - dt |k|^2 grad_hat) / (1 + dt sigma |k|^4),
// with grad_hat the transform of flow_gradient; zero mode untouched. Throws
// DivergenceError (with step_index) on non-finite values.
PhaseField step(const PhaseField& u, const DesignParams& theta,
                const SolverConfig& cfg, long step_index = 0);

std::pair<PhaseField, Diagnostics> evolve(const PhaseField& u0,
                                          const DesignParams& theta,
                                          const SolverConfig& cfg);

}  // namespace curv
