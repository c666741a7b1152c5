#include "curv/phase_field.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "dual.hpp"
#include "fft3.hpp"

namespace curv {

namespace {

constexpr double kMmNorm = 3.0 / (2.0 * M_SQRT2);  // tanh-profile normalization

using D4 = detail::Dual<4>;
// Outer dual slots: 0:u  1:q=|grad|^2  2:S  3:K

// Curvature invariants of the level set through a point, from gradient and
// Hessian: curvature sum S = -div(g/|g|) written out in terms of (g, H), and
// Gaussian curvature K = g^T adj(H) g / |g|^4. Orientation: outward normal of
// the solid phase (u > 0), so a solid sphere has k1 = k2 = +1/R. `qr` is the
// (possibly regularized) squared gradient used in the denominators.
struct CurvInvariants {
  double S, K;
  // pieces reused by the analytic derivatives
  double inv_qr, inv_q32, trH;
  double Hg[3], Ag[3];
  double adj[6];  // a11 a22 a33 a12 a13 a23
};

inline CurvInvariants curv_invariants(const double g[3], const double H[6],
                                      double qr) {
  CurvInvariants c;
  const double hxx = H[0], hyy = H[1], hzz = H[2], hxy = H[3], hxz = H[4],
               hyz = H[5];
  c.inv_qr = 1.0 / qr;
  c.inv_q32 = c.inv_qr / std::sqrt(qr);
  c.trH = hxx + hyy + hzz;
  c.Hg[0] = hxx * g[0] + hxy * g[1] + hxz * g[2];
  c.Hg[1] = hxy * g[0] + hyy * g[1] + hyz * g[2];
  c.Hg[2] = hxz * g[0] + hyz * g[1] + hzz * g[2];
  const double gHg = g[0] * c.Hg[0] + g[1] * c.Hg[1] + g[2] * c.Hg[2];
  c.S = (gHg - qr * c.trH) * c.inv_q32;

  c.adj[0] = hyy * hzz - hyz * hyz;
  c.adj[1] = hxx * hzz - hxz * hxz;
  c.adj[2] = hxx * hyy - hxy * hxy;
  c.adj[3] = hxz * hyz - hxy * hzz;
  c.adj[4] = hxy * hyz - hxz * hyy;
  c.adj[5] = hxy * hxz - hyz * hxx;
  c.Ag[0] = c.adj[0] * g[0] + c.adj[3] * g[1] + c.adj[4] * g[2];
  c.Ag[1] = c.adj[3] * g[0] + c.adj[1] * g[1] + c.adj[5] * g[2];
  c.Ag[2] = c.adj[4] * g[0] + c.adj[5] * g[1] + c.adj[2] * g[2];
  const double gAg = g[0] * c.Ag[0] + g[1] * c.Ag[1] + g[2] * c.Ag[2];
  c.K = gAg * c.inv_qr * c.inv_qr;
  return c;
}

inline void split_curvatures(double S, double K, double& k1, double& k2) {
  const double disc = S * S - 4.0 * K;
  const double root = disc > 0.0 ? std::sqrt(disc) : 0.0;
  k1 = 0.5 * (S + root);
  k2 = 0.5 * (S - root);
}

struct NodeDeriv {
  double du = 0.0;
  double dg[3] = {0, 0, 0};
  double dH[6] = {0, 0, 0, 0, 0, 0};
};

// Energy density of one node, cell volume included:
//   phi = [ f_eff(k1,k2,q) * gamma_eps(u, q) + wall(u) ] * h^3
// with gamma_eps the Modica-Mortola surface density. In the spec-exact masked
// form (delta2 = qc4 = wall_coef = 0) f_eff is just f(k1,k2). The flow form
// regularizes the curvature denominators by delta2, suppresses the curvature
// part of f in the bulk,
//   f_eff = a00 + (f - a00) * q^2/(q^2 + qc4),
// and adds a quadratic wall outside [-1, 1]. The suppression weight is ~1 at
// interface gradients and bounds the otherwise 1/q stiffness of the
// curvature terms where the field is flat. When `deriv` is given it is
// filled with the exact partials w.r.t. (u, g, H).
inline double node_energy(const DesignParams& theta, double eps,
                          double cell_vol, double delta2, double qc4,
                          double wall_coef, double uc, const double g[3],
                          const double H[6], double q, NodeDeriv* deriv) {
  const double qr = q + delta2;
  const CurvInvariants c = curv_invariants(g, H, qr);

  D4 u = D4::seed(uc, 0);
  D4 dq = D4::seed(q, 1);
  D4 S = D4::seed(c.S, 2);
  D4 K = D4::seed(c.K, 3);

  D4 disc = S * S - 4.0 * K;
  D4 root = disc.v > 0.0 ? detail::sqrt(disc) : D4(0.0);
  D4 k1 = 0.5 * (S + root);
  D4 k2 = 0.5 * (S - root);
  D4 om = 1.0 - u * u;
  D4 w = 0.25 * om * om;
  D4 gamma = kMmNorm * (0.5 * eps * dq + w * (1.0 / eps));
  D4 fcurv = theta.a20 * k1 * k1 + theta.a11 * k1 * k2 +
             theta.a02 * k2 * k2 + theta.a10 * k1 + theta.a01 * k2;
  D4 phi;
  if (qc4 > 0.0) {
    D4 supp = dq * dq / (dq * dq + qc4);
    phi = (theta.a00 + fcurv * supp) * gamma;
  } else {
    phi = (theta.a00 + fcurv) * gamma;
  }
  if (wall_coef > 0.0 && std::abs(uc) > 1.0) {
    D4 s = uc > 0.0 ? u - 1.0 : (0.0 - u) - 1.0;
    phi = phi + (wall_coef * kMmNorm / eps) * s * s;
  }
  phi = phi * cell_vol;

  if (!deriv) return phi.v;

  const double dphi_dq = phi.d[1], dphi_dS = phi.d[2], dphi_dK = phi.d[3];
  deriv->du = phi.d[0];

  const double hxx = H[0], hyy = H[1], hzz = H[2], hxy = H[3], hxz = H[4],
               hyz = H[5];
  for (int i = 0; i < 3; ++i) {
    const double dS_dg =
        (2.0 * c.Hg[i] - 2.0 * g[i] * c.trH) * c.inv_q32 -
        3.0 * g[i] * c.S * c.inv_qr;
    const double dK_dg =
        2.0 * c.Ag[i] * c.inv_qr * c.inv_qr - 4.0 * g[i] * c.K * c.inv_qr;
    deriv->dg[i] = dphi_dq * 2.0 * g[i] + dphi_dS * dS_dg + dphi_dK * dK_dg;
  }

  double dS_dH[6], dNK_dH[6];
  dS_dH[0] = (g[0] * g[0] - qr) * c.inv_q32;
  dS_dH[1] = (g[1] * g[1] - qr) * c.inv_q32;
  dS_dH[2] = (g[2] * g[2] - qr) * c.inv_q32;
  dS_dH[3] = 2.0 * g[0] * g[1] * c.inv_q32;
  dS_dH[4] = 2.0 * g[0] * g[2] * c.inv_q32;
  dS_dH[5] = 2.0 * g[1] * g[2] * c.inv_q32;
  dNK_dH[0] = g[1] * g[1] * hzz + g[2] * g[2] * hyy - 2.0 * g[1] * g[2] * hyz;
  dNK_dH[1] = g[0] * g[0] * hzz + g[2] * g[2] * hxx - 2.0 * g[0] * g[2] * hxz;
  dNK_dH[2] = g[0] * g[0] * hyy + g[1] * g[1] * hxx - 2.0 * g[0] * g[1] * hxy;
  dNK_dH[3] = -2.0 * g[2] * g[2] * hxy - 2.0 * g[0] * g[1] * hzz +
              2.0 * g[0] * g[2] * hyz + 2.0 * g[1] * g[2] * hxz;
  dNK_dH[4] = -2.0 * g[1] * g[1] * hxz + 2.0 * g[0] * g[1] * hyz -
              2.0 * g[0] * g[2] * hyy + 2.0 * g[1] * g[2] * hxy;
  dNK_dH[5] = -2.0 * g[0] * g[0] * hyz + 2.0 * g[0] * g[1] * hxz +
              2.0 * g[0] * g[2] * hxy - 2.0 * g[1] * g[2] * hxx;
  for (int i = 0; i < 6; ++i)
    deriv->dH[i] =
        dphi_dS * dS_dH[i] + dphi_dK * dNK_dH[i] * c.inv_qr * c.inv_qr;
  return phi.v;
}

// Periodic neighbor tables.
struct Wrap {
  std::vector<int> p, m;
  explicit Wrap(int n) : p(n), m(n) {
    for (int i = 0; i < n; ++i) {
      p[i] = (i + 1) % n;
      m[i] = (i + n - 1) % n;
    }
  }
};

// Calls fn(idx, uc, g[3], H[6], q, gnorm, in_band) for every node; all
// derivatives from central differences on the periodic grid.
template <class Fn>
void for_each_node(const PhaseField& u, const SolverConfig& cfg, Fn&& fn) {
  const int n = u.n;
  const double h = u.spacing();
  const double inv2h = 1.0 / (2.0 * h);
  const double invh2 = 1.0 / (h * h);
  const double inv4h2 = 1.0 / (4.0 * h * h);
  const Wrap w(n);
  const double* v = u.values.data();
  const std::size_t nn = static_cast<std::size_t>(n) * n;

  for (int z = 0; z < n; ++z) {
    const std::size_t zc = nn * z, zp = nn * w.p[z], zm = nn * w.m[z];
    for (int y = 0; y < n; ++y) {
      const std::size_t yc = static_cast<std::size_t>(n) * y;
      const std::size_t yp = static_cast<std::size_t>(n) * w.p[y];
      const std::size_t ym = static_cast<std::size_t>(n) * w.m[y];
      const std::size_t c0 = yc + zc, byp = yp + zc, bym = ym + zc,
                        bzp = yc + zp, bzm = yc + zm, bypzp = yp + zp,
                        bypzm = yp + zm, bymzp = ym + zp, bymzm = ym + zm;
      for (int x = 0; x < n; ++x) {
        const int xp = w.p[x], xm = w.m[x];
        const double uc = v[c0 + x];
        const double uxp = v[c0 + xp], uxm = v[c0 + xm];
        const double uyp = v[byp + x], uym = v[bym + x];
        const double uzp = v[bzp + x], uzm = v[bzm + x];

        double g[3], H[6];
        g[0] = (uxp - uxm) * inv2h;
        g[1] = (uyp - uym) * inv2h;
        g[2] = (uzp - uzm) * inv2h;
        H[0] = (uxp - 2.0 * uc + uxm) * invh2;
        H[1] = (uyp - 2.0 * uc + uym) * invh2;
        H[2] = (uzp - 2.0 * uc + uzm) * invh2;
        H[3] = (v[byp + xp] - v[bym + xp] - v[byp + xm] + v[bym + xm]) * inv4h2;
        H[4] = (v[bzp + xp] - v[bzm + xp] - v[bzp + xm] + v[bzm + xm]) * inv4h2;
        H[5] = (v[bypzp + x] - v[bypzm + x] - v[bymzp + x] + v[bymzm + x]) * inv4h2;

        const double q = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        const double gn = std::sqrt(q);
        const bool in_band = std::abs(uc) < cfg.band && gn >= cfg.grad_clamp;
        fn(c0 + x, uc, g, H, q, gn, in_band);
      }
    }
  }
}

enum class EnergyMode { kReport, kFlow };

// Fused energy + exact gradient. kReport is the spec-exact masked sum; kFlow
// is the globally defined functional the solver descends (regularized
// curvature denominators plus the [-1,1] wall; without either, nodes outside
// the band feel no force and the field escapes through the mask plateau).
// When `report_out` is set in flow mode it also accumulates the masked sum.
double energy_impl(const PhaseField& u, const DesignParams& theta,
                   const SolverConfig& cfg, EnergyMode mode,
                   Eigen::ArrayXd* grad, double* report_out = nullptr) {
  const int n = u.n;
  const double h = u.spacing();
  const double eps = cfg.resolve_epsilon(h);
  const double cell_vol = h * h * h;
  const std::size_t count = u.size();
  const bool flow = mode == EnergyMode::kFlow;

  const double delta = cfg.flow_reg > 0.0 ? cfg.flow_reg : 1e-6 / eps;
  const double delta2 = flow ? delta * delta : 0.0;
  // bulk suppression kicks in below ~5% of the squared tanh peak gradient
  const double q_peak = 1.0 / (2.0 * eps * eps);
  const double qc4 = flow ? 0.0025 * q_peak * q_peak : 0.0;
  const double wall_coef =
      flow ? 2.0 * (1.0 + theta.a20 + std::abs(theta.a11) + theta.a02 +
                    std::abs(theta.a10) + std::abs(theta.a01) +
                    std::abs(theta.a00))
           : 0.0;

  double sum = 0.0, comp = 0.0;
  auto accumulate = [&](double phi) {
    const double y = phi - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  };
  double rsum = 0.0, rcomp = 0.0;
  auto accumulate_report = [&](double phi) {
    const double y = phi - rcomp;
    const double t = rsum + y;
    rcomp = (t - rsum) - y;
    rsum = t;
  };

  if (!grad) {
    for_each_node(u, cfg,
                  [&](std::size_t, double uc, const double g[3],
                      const double H[6], double q, double, bool in_band) {
                    if (flow) {
                      accumulate(node_energy(theta, eps, cell_vol, delta2, qc4,
                                             wall_coef, uc, g, H, q, nullptr));
                      if (report_out && in_band)
                        accumulate_report(node_energy(theta, eps, cell_vol, 0.0,
                                                      0.0, 0.0, uc, g, H, q,
                                                      nullptr));
                    } else if (in_band) {
                      accumulate(node_energy(theta, eps, cell_vol, 0.0, 0.0, 0.0,
                                             uc, g, H, q, nullptr));
                    }
                  });
    if (report_out) *report_out = flow ? rsum : sum;
    return sum;
  }

  // Adjoint fields for the local inputs; transposed stencils below push them
  // back onto the nodes.
  const Eigen::Index sz = static_cast<Eigen::Index>(count);
  grad->setZero(sz);
  Eigen::ArrayXd ag[3], aH[6];
  for (auto& a : ag) a.setZero(sz);
  for (auto& a : aH) a.setZero(sz);

  NodeDeriv nd;
  for_each_node(
      u, cfg,
      [&](std::size_t idx, double uc, const double g[3], const double H[6],
          double q, double, bool in_band) {
        if (flow) {
          accumulate(node_energy(theta, eps, cell_vol, delta2, qc4, wall_coef, uc,
                                 g, H, q, &nd));
          if (report_out && in_band)
            accumulate_report(
                node_energy(theta, eps, cell_vol, 0.0, 0.0, 0.0, uc, g, H, q, nullptr));
        } else {
          if (!in_band) return;
          accumulate(node_energy(theta, eps, cell_vol, 0.0, 0.0, 0.0, uc, g, H, q, &nd));
        }
        (*grad)[idx] += nd.du;
        for (int i = 0; i < 3; ++i) ag[i][idx] = nd.dg[i];
        for (int i = 0; i < 6; ++i) aH[i][idx] = nd.dH[i];
      });

  const double inv2h = 1.0 / (2.0 * h);
  const double invh2 = 1.0 / (h * h);
  const double inv4h2 = 1.0 / (4.0 * h * h);
  const Wrap w(n);
  const std::size_t nn = static_cast<std::size_t>(n) * n;
  double* gr = grad->data();

  for (int z = 0; z < n; ++z) {
    const std::size_t zc = nn * z, zp = nn * w.p[z], zm = nn * w.m[z];
    for (int y = 0; y < n; ++y) {
      const std::size_t yc = static_cast<std::size_t>(n) * y;
      const std::size_t yp = static_cast<std::size_t>(n) * w.p[y];
      const std::size_t ym = static_cast<std::size_t>(n) * w.m[y];
      const std::size_t c0 = yc + zc, byp = yp + zc, bym = ym + zc,
                        bzp = yc + zp, bzm = yc + zm, bypzp = yp + zp,
                        bypzm = yp + zm, bymzp = ym + zp, bymzm = ym + zm;
      for (int x = 0; x < n; ++x) {
        const int xp = w.p[x], xm = w.m[x];
        const std::size_t j = c0 + x;
        double acc = 0.0;
        // transposed central differences (antisymmetric)
        acc += (ag[0][c0 + xm] - ag[0][c0 + xp]) * inv2h;
        acc += (ag[1][bym + x] - ag[1][byp + x]) * inv2h;
        acc += (ag[2][bzm + x] - ag[2][bzp + x]) * inv2h;
        // second differences (symmetric)
        acc += (aH[0][c0 + xp] - 2.0 * aH[0][j] + aH[0][c0 + xm]) * invh2;
        acc += (aH[1][byp + x] - 2.0 * aH[1][j] + aH[1][bym + x]) * invh2;
        acc += (aH[2][bzp + x] - 2.0 * aH[2][j] + aH[2][bzm + x]) * invh2;
        acc += (aH[3][byp + xp] - aH[3][bym + xp] - aH[3][byp + xm] +
                aH[3][bym + xm]) * inv4h2;
        acc += (aH[4][bzp + xp] - aH[4][bzm + xp] - aH[4][bzp + xm] +
                aH[4][bzm + xm]) * inv4h2;
        acc += (aH[5][bypzp + x] - aH[5][bypzm + x] - aH[5][bymzp + x] +
                aH[5][bymzm + x]) * inv4h2;
        gr[j] += acc;
      }
    }
  }
  if (report_out) *report_out = flow ? rsum : sum;
  return sum;
}

// Spectral workspace reused across steps of one evolution.
struct StepContext {
  explicit StepContext(int n, double length) : fft(n) {
    const double two_pi = 2.0 * M_PI;
    const Eigen::Index sz = static_cast<Eigen::Index>(n) * n * n;
    ksq.resize(sz);
    auto freq = [&](int m) {
      const int f = (m <= n / 2) ? m : m - n;
      return two_pi * f / length;
    };
    Eigen::Index i = 0;
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x, ++i) {
          const double kx = freq(x), ky = freq(y), kz = freq(z);
          ksq[i] = kx * kx + ky * ky + kz * kz;
        }
  }

  detail::Fft3 fft;
  Eigen::ArrayXd ksq;
  std::vector<std::complex<double>> uhat, ghat, cand;
  Eigen::ArrayXd grad, next;
};

// Transforms are taken of the zero-mean part; the mean rides along outside
// the spectral state, which keeps constant fields exact fixed points and the
// discrete mean pinned to full precision.
void load_state(const PhaseField& u, StepContext& ctx, double& mean_io) {
  mean_io = kahan_mean(u.values);
  ctx.next = u.values - mean_io;
  ctx.fft.forward(ctx.next, ctx.uhat);
  ctx.uhat[0] = 0.0;
}

// Spectral update of ctx.uhat with the already-transformed gradient ctx.ghat,
// written into `spec_out`; then back to real space into `out`.
void apply_update(const SolverConfig& cfg, double dt, double sigma, double stab,
                  double mean_in, StepContext& ctx,
                  std::vector<std::complex<double>>& spec_out, PhaseField& out,
                  int n, double length, long step_index) {
  spec_out.resize(ctx.uhat.size());
  for (Eigen::Index i = 0; i < ctx.ksq.size(); ++i) {
    const double k2 = ctx.ksq[i];
    spec_out[i] = (ctx.uhat[i] - dt * k2 * ctx.ghat[i]) /
                  (1.0 + dt * k2 * (stab + sigma * k2));
  }
  spec_out[0] = 0.0;
  ctx.fft.inverse(spec_out, ctx.next);

  if (!ctx.next.allFinite())
    throw DivergenceError("phase-field step produced non-finite values",
                          step_index);

  ctx.next += mean_in - kahan_mean(ctx.next);
  out.n = n;
  out.length = length;
  out.values.swap(ctx.next);
}

// One plain update at the configured dt; `u` must match ctx.uhat.
void step_loaded(const PhaseField& u, const DesignParams& theta,
                 const SolverConfig& cfg, long step_index, StepContext& ctx,
                 double mean_in, PhaseField& out, double* report_energy_out) {
  const double eps = cfg.resolve_epsilon(u.spacing());
  const double sigma = cfg.sigma > 0.0 ? cfg.sigma : default_sigma(theta, eps);
  const double stab = cfg.stab > 0.0 ? cfg.stab : default_stab(theta, eps);
  energy_impl(u, theta, cfg, EnergyMode::kFlow, &ctx.grad, report_energy_out);
  ctx.fft.forward(ctx.grad, ctx.ghat);
  apply_update(cfg, cfg.dt, sigma, stab, mean_in, ctx, ctx.uhat, out, u.n,
               u.length, step_index);
}

}  // namespace

double default_sigma(const DesignParams& theta, double epsilon) {
  const double quad = theta.a20 + std::abs(theta.a11) + theta.a02;
  return 2.0 * std::max({theta.a20, theta.a02, 1.0}) +
         kMmNorm * (epsilon * std::abs(theta.a00) + std::abs(theta.a10) +
                    std::abs(theta.a01)) +
         10.0 * quad;
}

double default_stab(const DesignParams& theta, double epsilon) {
  const double coeff_sum = 1.0 + theta.a20 + std::abs(theta.a11) + theta.a02 +
                           (std::abs(theta.a10) + std::abs(theta.a01)) / epsilon +
                           std::abs(theta.a00);
  return 8.0 * kMmNorm / epsilon * coeff_sum;
}

PhaseField init_field(int n, double m0, double noise_amp, Rng& rng,
                      double length) {
  if (n < 4) throw InvalidParamError("init_field: grid too small");
  if (noise_amp < 0.0 || std::abs(m0) + noise_amp >= 1.0)
    throw InvalidParamError("init_field: require |m0| + noise_amp < 1");
  PhaseField u;
  u.n = n;
  u.length = length;
  u.values.resize(static_cast<Eigen::Index>(n) * n * n);
  for (Eigen::Index i = 0; i < u.values.size(); ++i)
    u.values[i] = m0 + noise_amp * (2.0 * rng.uniform01() - 1.0);
  u.values += m0 - kahan_mean(u.values);
  return u;
}

CurvatureFields level_set_curvatures(const PhaseField& u,
                                     const SolverConfig& cfg) {
  CurvatureFields f;
  f.n = u.n;
  const Eigen::Index sz = static_cast<Eigen::Index>(u.size());
  f.k1.setZero(sz);
  f.k2.setZero(sz);
  f.valid.assign(u.size(), 0);
  for_each_node(u, cfg,
                [&](std::size_t idx, double, const double g[3],
                    const double H[6], double q, double, bool in_band) {
                  if (!in_band) return;
                  const CurvInvariants c = curv_invariants(g, H, q);
                  split_curvatures(c.S, c.K, f.k1[idx], f.k2[idx]);
                  f.valid[idx] = 1;
                });
  return f;
}

double discrete_energy(const PhaseField& u, const DesignParams& theta,
                       const SolverConfig& cfg) {
  return energy_impl(u, theta, cfg, EnergyMode::kReport, nullptr);
}

Eigen::ArrayXd energy_gradient(const PhaseField& u, const DesignParams& theta,
                               const SolverConfig& cfg) {
  Eigen::ArrayXd grad;
  energy_impl(u, theta, cfg, EnergyMode::kReport, &grad);
  return grad;
}

double flow_energy(const PhaseField& u, const DesignParams& theta,
                   const SolverConfig& cfg) {
  return energy_impl(u, theta, cfg, EnergyMode::kFlow, nullptr);
}

Eigen::ArrayXd flow_gradient(const PhaseField& u, const DesignParams& theta,
                             const SolverConfig& cfg) {
  Eigen::ArrayXd grad;
  energy_impl(u, theta, cfg, EnergyMode::kFlow, &grad);
  return grad;
}

PhaseField step(const PhaseField& u, const DesignParams& theta,
                const SolverConfig& cfg, long step_index) {
  StepContext ctx(u.n, u.length);
  PhaseField out;
  double mean_in = 0.0;
  load_state(u, ctx, mean_in);
  step_loaded(u, theta, cfg, step_index, ctx, mean_in, out, nullptr);
  return out;
}

std::pair<PhaseField, Diagnostics> evolve(const PhaseField& u0,
                                          const DesignParams& theta,
                                          const SolverConfig& cfg) {
  PhaseField u = u0;
  Diagnostics diag;
  const std::size_t cap = static_cast<std::size_t>(
      std::min<long>(cfg.max_steps, 100000) + 1);
  diag.energy.reserve(cap);
  diag.mean_u.reserve(cap);

  if (cfg.max_steps <= 0) {
    diag.energy.push_back(discrete_energy(u, theta, cfg));
    diag.mean_u.push_back(kahan_mean(u.values));
    return {std::move(u), std::move(diag)};
  }

  const double eps = cfg.resolve_epsilon(u.spacing());
  const double sigma = cfg.sigma > 0.0 ? cfg.sigma : default_sigma(theta, eps);
  const double stab = cfg.stab > 0.0 ? cfg.stab : default_stab(theta, eps);

  StepContext ctx(u.n, u.length);
  PhaseField next;
  double mean0 = 0.0;
  load_state(u, ctx, mean0);

  // Energy-controlled time stepping: cfg.dt is the ceiling; a step whose flow
  // energy rises beyond the transient allowance is redone at half the dt
  // (same gradient transform, so retries cost only the spectral update).
  double dt_cur = cfg.dt;
  for (long t = 0; t < cfg.max_steps; ++t) {
    double report = 0.0;
    const double e_flow =
        energy_impl(u, theta, cfg, EnergyMode::kFlow, &ctx.grad, &report);
    ctx.fft.forward(ctx.grad, ctx.ghat);

    bool accepted = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      try {
        apply_update(cfg, dt_cur, sigma, stab, mean0, ctx, ctx.cand, next, u.n,
                     u.length, t);
      } catch (const DivergenceError&) {
        dt_cur *= 0.5;
        continue;
      }
      const double e_new = energy_impl(next, theta, cfg, EnergyMode::kFlow,
                                       nullptr);
      if (e_new <= e_flow + 1e-3 * (std::abs(e_flow) + 1e-12)) {
        accepted = true;
        break;
      }
      dt_cur *= 0.5;
    }
    if (!accepted)
      throw DivergenceError("flow energy not reducible at minimal time step",
                            t);

    ctx.uhat.swap(ctx.cand);
    diag.energy.push_back(report);  // masked energy of the pre-step state u_t
    diag.mean_u.push_back(kahan_mean(u.values));
    u.values.swap(next.values);
    diag.steps = t + 1;
    dt_cur = std::min(cfg.dt, dt_cur * 1.5);

    const long w = cfg.window;
    const std::size_t have = diag.energy.size();
    if (w > 0 && have > static_cast<std::size_t>(w)) {
      const double e_now = diag.energy[have - 1];
      const double e_then = diag.energy[have - 1 - w];
      const double scale = std::max({std::abs(e_now), std::abs(e_then), 1e-12});
      if (std::abs(e_now - e_then) <= cfg.energy_tol * scale) {
        diag.converged = true;
        break;
      }
    }
  }
  diag.energy.push_back(discrete_energy(u, theta, cfg));
  diag.mean_u.push_back(kahan_mean(u.values));

  const double sd = stddev(u.values);
  diag.phase_separated =
      sd > 0.4 && u.values.minCoeff() < 0.0 && u.values.maxCoeff() > 0.0;
  diag.feasible = diag.converged && diag.phase_separated;
  return {std::move(u), std::move(diag)};
}

}  // namespace curv
