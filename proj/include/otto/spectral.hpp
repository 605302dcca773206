#pragma once

// Fourier helpers on the periodic grids x_j = 2*pi*j/n (1-D) and the tensor grid on
// [0, 2*pi)^2 with flat index i*n + j (i along the first axis). Odd derivatives drop
// the Nyquist mode so that discrete derivative operators stay skew-symmetric.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace otto::spectral {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * kPi;

inline Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> fft;
  return fft;
}

inline int wavenumber(int j, int n) { return 2 * j <= n ? j : j - n; }
inline bool is_nyquist(int j, int n) { return n % 2 == 0 && 2 * j == n; }

inline Eigen::VectorXd nodes(int n) {
  Eigen::VectorXd x(n);
  for (int j = 0; j < n; ++j) x(j) = kTwoPi * j / n;
  return x;
}

inline CVec fft(const Eigen::VectorXd& v) {
  CVec out(static_cast<std::size_t>(v.size()));
  engine().fwd(out.data(), v.data(), v.size());
  return out;
}

inline CVec fft(const CVec& v) {
  CVec out(v.size());
  engine().fwd(out.data(), v.data(), static_cast<Eigen::Index>(v.size()));
  return out;
}

inline Eigen::VectorXd ifft_real(const CVec& c) {
  CVec tmp(c.size());
  engine().inv(tmp.data(), c.data(), static_cast<Eigen::Index>(c.size()));
  Eigen::VectorXd out(static_cast<Eigen::Index>(c.size()));
  for (std::size_t j = 0; j < c.size(); ++j) out(static_cast<Eigen::Index>(j)) = tmp[j].real();
  return out;
}

// d^order/dx^order of a periodic sample vector.
inline Eigen::VectorXd derivative(const Eigen::VectorXd& v, int order = 1) {
  const int n = static_cast<int>(v.size());
  CVec c = fft(v);
  for (int j = 0; j < n; ++j) {
    if (order % 2 == 1 && is_nyquist(j, n)) {
      c[j] = 0.0;
      continue;
    }
    c[j] *= std::pow(Complex(0.0, wavenumber(j, n)), order);
  }
  return ifft_real(c);
}

// Periodic antiderivative with zero mean; the mean of v is discarded.
inline Eigen::VectorXd antiderivative(const Eigen::VectorXd& v) {
  const int n = static_cast<int>(v.size());
  CVec c = fft(v);
  for (int j = 0; j < n; ++j) {
    const int k = wavenumber(j, n);
    c[j] = (k == 0 || is_nyquist(j, n)) ? Complex(0.0) : c[j] / Complex(0.0, k);
  }
  return ifft_real(c);
}

// v(x + a) for the trigonometric interpolant of v.
inline Eigen::VectorXd shift(const Eigen::VectorXd& v, double a) {
  const int n = static_cast<int>(v.size());
  CVec c = fft(v);
  for (int j = 0; j < n; ++j) {
    const int k = wavenumber(j, n);
    c[j] *= is_nyquist(j, n) ? Complex(std::cos(k * a), 0.0) : std::polar(1.0, k * a);
  }
  return ifft_real(c);
}

// Convolution with the periodic Gaussian of standard deviation sigma.
inline Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& v, double sigma) {
  const int n = static_cast<int>(v.size());
  CVec c = fft(v);
  for (int j = 0; j < n; ++j) {
    const double k = wavenumber(j, n);
    c[j] *= std::exp(-0.5 * sigma * sigma * k * k);
  }
  return ifft_real(c);
}

// Exponential low-pass filter exp(-alpha (|k|/kmax)^order).
inline Eigen::VectorXd lowpass(const Eigen::VectorXd& v, double alpha = 36.0, int order = 36) {
  const int n = static_cast<int>(v.size());
  CVec c = fft(v);
  const double kmax = n / 2.0;
  for (int j = 0; j < n; ++j) {
    const double r = std::abs(wavenumber(j, n)) / kmax;
    c[j] *= std::exp(-alpha * std::pow(r, order));
  }
  return ifft_real(c);
}

// Evaluates the trigonometric interpolant (and its derivative) of a sample vector at
// arbitrary points; O(n) per point.
class Interpolant1D {
 public:
  Interpolant1D() = default;
  explicit Interpolant1D(const Eigen::VectorXd& v) : n_(static_cast<int>(v.size())), c_(fft(v)) {
    for (auto& z : c_) z /= static_cast<double>(n_);
  }

  int size() const { return n_; }

  double value(double x) const { return eval(x, 0); }
  double derivative(double x) const { return eval(x, 1); }
  double second_derivative(double x) const { return eval(x, 2); }

 private:
  double eval(double x, int order) const {
    double acc = c_[0].real() * (order == 0 ? 1.0 : 0.0);
    const Complex step = std::polar(1.0, x);
    Complex e = step;
    const int half = (n_ - 1) / 2;
    for (int k = 1; k <= half; ++k) {
      const Complex term = c_[k] * e;
      // Conjugate pair k, -k contributes 2 Re((ik)^order c_k e^{ikx}).
      Complex factor = std::pow(Complex(0.0, k), order);
      acc += 2.0 * (factor * term).real();
      e *= step;
    }
    if (n_ % 2 == 0) {
      const int k = n_ / 2;
      const double re = c_[k].real();
      const double kx = k * x;
      if (order == 0) acc += re * std::cos(kx);
      else if (order == 2) acc -= re * k * k * std::cos(kx);
    }
    return acc;
  }

  int n_ = 0;
  CVec c_;
};

// ---- two-dimensional helpers (n x n grid, flat index i*n + j) ----

inline CVec fft2(const CVec& in, int n, bool inverse) {
  CVec work(in), line(n), out(n);
  auto& f = engine();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) line[j] = work[i * n + j];
    if (inverse) f.inv(out.data(), line.data(), n);
    else f.fwd(out.data(), line.data(), n);
    for (int j = 0; j < n; ++j) work[i * n + j] = out[j];
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) line[i] = work[i * n + j];
    if (inverse) f.inv(out.data(), line.data(), n);
    else f.fwd(out.data(), line.data(), n);
    for (int i = 0; i < n; ++i) work[i * n + j] = out[i];
  }
  return work;
}

inline CVec fft2(const Eigen::VectorXd& v, int n) {
  CVec in(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) in[i] = v(i);
  return fft2(in, n, false);
}

inline Eigen::VectorXd ifft2_real(const CVec& c, int n) {
  CVec out = fft2(c, n, true);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n) * n);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = out[i].real();
  return v;
}

inline int grid_side(const Eigen::VectorXd& v) {
  return static_cast<int>(std::lround(std::sqrt(static_cast<double>(v.size()))));
}

// Partial derivative along axis 0 or 1.
inline Eigen::VectorXd partial(const Eigen::VectorXd& v, int axis, int order = 1) {
  const int n = grid_side(v);
  CVec c = fft2(v, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int idx = axis == 0 ? i : j;
      auto& z = c[i * n + j];
      if (order % 2 == 1 && is_nyquist(idx, n)) z = 0.0;
      else z *= std::pow(Complex(0.0, wavenumber(idx, n)), order);
    }
  return ifft2_real(c, n);
}

// Inverse of the periodic Laplacian on mean-zero data (Nyquist rows dropped).
inline Eigen::VectorXd inverse_laplacian(const Eigen::VectorXd& v, double scale = 1.0) {
  const int n = grid_side(v);
  CVec c = fft2(v, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int k1 = wavenumber(i, n), k2 = wavenumber(j, n);
      auto& z = c[i * n + j];
      if ((k1 == 0 && k2 == 0) || is_nyquist(i, n) || is_nyquist(j, n)) z = 0.0;
      else z /= -scale * static_cast<double>(k1 * k1 + k2 * k2);
    }
  return ifft2_real(c, n);
}

// v(x + a0, y + a1) for the trigonometric interpolant of a 2-D grid sample.
inline Eigen::VectorXd shift2(const Eigen::VectorXd& v, double a0, double a1) {
  const int n = grid_side(v);
  CVec c = fft2(v, n);
  auto factor = [n](int j, double a) {
    const int k = wavenumber(j, n);
    return is_nyquist(j, n) ? Complex(std::cos(k * a), 0.0) : std::polar(1.0, k * a);
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) c[i * n + j] *= factor(i, a0) * factor(j, a1);
  return ifft2_real(c, n);
}

inline Eigen::VectorXd gaussian_smooth_2d(const Eigen::VectorXd& v, double sigma) {
  const int n = grid_side(v);
  CVec c = fft2(v, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double k1 = wavenumber(i, n), k2 = wavenumber(j, n);
      c[i * n + j] *= std::exp(-0.5 * sigma * sigma * (k1 * k1 + k2 * k2));
    }
  return ifft2_real(c, n);
}

inline Eigen::VectorXd lowpass_2d(const Eigen::VectorXd& v, double alpha = 36.0, int order = 36) {
  const int n = grid_side(v);
  CVec c = fft2(v, n);
  const double kmax = n / 2.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double r1 = std::abs(wavenumber(i, n)) / kmax, r2 = std::abs(wavenumber(j, n)) / kmax;
      c[i * n + j] *= std::exp(-alpha * (std::pow(r1, order) + std::pow(r2, order)));
    }
  return ifft2_real(c, n);
}

// Trigonometric interpolant on the 2-D grid; O(n^2) per point.
class Interpolant2D {
 public:
  Interpolant2D() = default;
  explicit Interpolant2D(const Eigen::VectorXd& v) : n_(grid_side(v)), c_(fft2(v, n_)) {
    const double s = 1.0 / (static_cast<double>(n_) * n_);
    for (auto& z : c_) z *= s;
  }

  double value(double x, double y) const { return eval(x, y, 0, 0); }
  double d0(double x, double y) const { return eval(x, y, 1, 0); }
  double d1(double x, double y) const { return eval(x, y, 0, 1); }

 private:
  double eval(double x, double y, int ox, int oy) const {
    // Symmetrized Nyquist handling: treat bin n/2 with the cosine convention.
    std::vector<Complex> ex(n_), ey(n_);
    for (int j = 0; j < n_; ++j) {
      const int k = wavenumber(j, n_);
      const bool ny = is_nyquist(j, n_);
      ex[j] = ny ? (ox % 2 ? Complex(0.0) : Complex(std::cos(k * x) * std::pow(-1.0 * k * k, ox / 2), 0.0))
                 : std::pow(Complex(0.0, k), ox) * std::polar(1.0, k * x);
      ey[j] = ny ? (oy % 2 ? Complex(0.0) : Complex(std::cos(k * y) * std::pow(-1.0 * k * k, oy / 2), 0.0))
                 : std::pow(Complex(0.0, k), oy) * std::polar(1.0, k * y);
    }
    Complex acc = 0.0;
    for (int i = 0; i < n_; ++i) {
      Complex row = 0.0;
      for (int j = 0; j < n_; ++j) row += c_[i * n_ + j] * ey[j];
      acc += row * ex[i];
    }
    return acc.real();
  }

  int n_ = 0;
  CVec c_;
};

}  // namespace otto::spectral
