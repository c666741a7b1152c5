#pragma once
#include <array>
#include <cmath>

namespace curv::detail {

// Forward-mode scalar carrying N partial derivatives. Used to differentiate
// the per-node energy density with respect to its local inputs
// (u, grad u, Hessian entries); the stencil transposes handle the rest.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit constants are handy
  static Dual seed(double value, int slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual operator-() const {
    Dual r(-v);
    for (int i = 0; i < N; ++i) r.d[i] = -d[i];
    return r;
  }
};

template <int N>
inline Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
template <int N>
inline Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
template <int N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  Dual<N> r(a.v * inv);
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
  return r;
}

template <int N>
inline Dual<N> operator*(double s, const Dual<N>& a) {
  Dual<N> r(s * a.v);
  for (int i = 0; i < N; ++i) r.d[i] = s * a.d[i];
  return r;
}
template <int N>
inline Dual<N> operator*(const Dual<N>& a, double s) {
  return s * a;
}
template <int N>
inline Dual<N> operator+(const Dual<N>& a, double s) {
  Dual<N> r = a;
  r.v += s;
  return r;
}
template <int N>
inline Dual<N> operator+(double s, const Dual<N>& a) {
  return a + s;
}
template <int N>
inline Dual<N> operator-(const Dual<N>& a, double s) {
  Dual<N> r = a;
  r.v -= s;
  return r;
}
template <int N>
inline Dual<N> operator-(double s, const Dual<N>& a) {
  return (-a) + s;
}
template <int N>
inline Dual<N> operator/(const Dual<N>& a, double s) {
  return a * (1.0 / s);
}

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  Dual<N> r(std::sqrt(a.v));
  const double f = 0.5 / r.v;
  for (int i = 0; i < N; ++i) r.d[i] = f * a.d[i];
  return r;
}

}  // namespace curv::detail
