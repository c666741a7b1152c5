#pragma once
#include <Eigen/Dense>
#include <complex>
#include <unsupported/Eigen/FFT>
#include <vector>

namespace curv::detail {

// 3D complex FFT on an n^3 grid (x-fastest layout) via 1D line transforms.
// Not thread-safe; each evolution owns one instance.
class Fft3 {
public:
  using cd = std::complex<double>;

  explicit Fft3(int n) : n_(n), line_(n), out_(n) {}

  void forward(const Eigen::ArrayXd& real, std::vector<cd>& spec) {
    spec.resize(real.size());
    for (Eigen::Index i = 0; i < real.size(); ++i) spec[i] = cd(real[i], 0.0);
    transform(spec, false);
  }

  void inverse(std::vector<cd> spec, Eigen::ArrayXd& real) {
    transform(spec, true);
    real.resize(static_cast<Eigen::Index>(spec.size()));
    for (std::size_t i = 0; i < spec.size(); ++i) real[i] = spec[i].real();
  }

  void transform(std::vector<cd>& a, bool inv) {
    const int n = n_;
    const std::size_t nn = static_cast<std::size_t>(n) * n;
    // x lines are contiguous
    for (int z = 0; z < n; ++z)
      for (int y = 0; y < n; ++y) {
        cd* p = a.data() + n * (y + static_cast<std::size_t>(n) * z);
        std::copy(p, p + n, line_.begin());
        run(inv);
        std::copy(out_.begin(), out_.end(), p);
      }
    for (int z = 0; z < n; ++z)
      for (int x = 0; x < n; ++x) {
        cd* base = a.data() + x + nn * z;
        for (int y = 0; y < n; ++y) line_[y] = base[static_cast<std::size_t>(n) * y];
        run(inv);
        for (int y = 0; y < n; ++y) base[static_cast<std::size_t>(n) * y] = out_[y];
      }
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        cd* base = a.data() + x + static_cast<std::size_t>(n) * y;
        for (int z = 0; z < n; ++z) line_[z] = base[nn * z];
        run(inv);
        for (int z = 0; z < n; ++z) base[nn * z] = out_[z];
      }
  }

private:
  void run(bool inv) {
    if (inv)
      fft_.inv(out_, line_);
    else
      fft_.fwd(out_, line_);
  }

  int n_;
  Eigen::FFT<double> fft_;
  std::vector<cd> line_, out_;
};

}  // namespace curv::detail
