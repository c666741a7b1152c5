#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <cstddef>

namespace curv {

// Compensated (Kahan) summation in a fixed left-to-right order; keeps large
// reductions both accurate and bit-reproducible.
inline double kahan_sum(const double* x, std::size_t count) {
  double s = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double y = x[i] - comp;
    const double t = s + y;
    comp = (t - s) - y;
    s = t;
  }
  return s;
}

inline double kahan_sum(const Eigen::ArrayXd& x) {
  return kahan_sum(x.data(), static_cast<std::size_t>(x.size()));
}

inline double kahan_mean(const Eigen::ArrayXd& x) {
  return x.size() == 0 ? 0.0 : kahan_sum(x) / static_cast<double>(x.size());
}

inline double stddev(const Eigen::ArrayXd& x) {
  if (x.size() == 0) return 0.0;
  const double m = kahan_mean(x);
  Eigen::ArrayXd d = (x - m).square();
  return std::sqrt(kahan_sum(d) / static_cast<double>(x.size()));
}

}  // namespace curv
