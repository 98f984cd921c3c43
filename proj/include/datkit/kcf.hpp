#pragma once

// Kernelized correlation filter on raw intensities.
//
// The template x is a cosine-windowed, zero-mean intensity patch covering
// the target padded by `padding`. Ridge regression over every cyclic shift
// of x against a Gaussian label peaked at lag (0, 0) has the closed-form
// dual solution alpha_hat = y_hat / (k_hat^xx + lambda), where k^xx is the
// Gaussian-kernel autocorrelation. Detection on a new patch z evaluates
// idft(k_hat^xz * alpha_hat); its argmax, read with wrap-around, is the
// integer displacement of the target.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>

#include "datkit/error.hpp"
#include "datkit/fft.hpp"
#include "datkit/tracker.hpp"

namespace datkit {

struct KcfParams {
  double padding = 2.5;
  double kernel_sigma = 0.5;
  double lambda = 1e-4;
  double interp_factor = 0.075;
  double response_fail_threshold = 0.15;
  double output_sigma_factor = 0.1;  // label sigma relative to sqrt(target area)

  bool valid() const noexcept {
    return padding > 1.0 && kernel_sigma > 0.0 && lambda > 0.0 && interp_factor >= 0.0 && interp_factor <= 1.0 &&
           output_sigma_factor > 0.0;
  }
};

namespace kcf {

/// Signed lag of index i in a cyclic axis of length n.
inline int wrap_lag(int i, int n) noexcept { return i > n / 2 ? i - n : i; }

/// Gaussian regression target with its peak at index (0, 0), wrapping
/// around the borders.
inline RealMatrix gaussian_label(int rows, int cols, double sigma) {
  RealMatrix y(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double dr = wrap_lag(r, rows), dc = wrap_lag(c, cols);
      y(r, c) = std::exp(-0.5 * (dr * dr + dc * dc) / (sigma * sigma));
    }
  return y;
}

/// Separable Hann window.
inline RealMatrix cosine_window(int rows, int cols) {
  auto hann = [](int i, int n) {
    return n <= 1 ? 1.0 : 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (n - 1)));
  };
  RealMatrix w(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) w(r, c) = hann(r, rows) * hann(c, cols);
  return w;
}

inline double squared_norm(const RealMatrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

/// Gaussian kernel between z shifted by every lag and x:
///   k[j] = exp(-max(0, |x|^2 + |z|^2 - 2 sum_n x[n] z[n + j]) / (sigma^2 N)).
inline RealMatrix gaussian_correlation(const RealMatrix& x, const ComplexMatrix& xf, const RealMatrix& z,
                                       const ComplexMatrix& zf, double sigma) {
  ComplexMatrix prod(xf.rows(), xf.cols());
  for (std::size_t i = 0; i < prod.size(); ++i) prod.data()[i] = zf.data()[i] * std::conj(xf.data()[i]);
  const RealMatrix cross = real_part(idft2d(prod));
  const double xx = squared_norm(x), zz = squared_norm(z);
  const double n = static_cast<double>(x.size());
  RealMatrix k(x.rows(), x.cols());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = std::max(0.0, xx + zz - 2.0 * cross.data()[i]);
    k.data()[i] = std::exp(-d / (sigma * sigma * n));
  }
  return k;
}

/// Dual coefficients in the Fourier domain, from precomputed spectra.
inline ComplexMatrix train(const RealMatrix& x, const ComplexMatrix& xf, const ComplexMatrix& yf, double sigma,
                           double lambda) {
  const ComplexMatrix kf = dft2d(gaussian_correlation(x, xf, x, xf, sigma));
  ComplexMatrix alphaf(x.rows(), x.cols());
  for (std::size_t i = 0; i < alphaf.size(); ++i) alphaf.data()[i] = yf.data()[i] / (kf.data()[i] + lambda);
  return alphaf;
}

inline ComplexMatrix train(const RealMatrix& x, const RealMatrix& y, double sigma, double lambda) {
  return train(x, dft2d(x), dft2d(y), sigma, lambda);
}

/// Full complex response map; the imaginary part is rounding residue.
inline ComplexMatrix detect_complex(const ComplexMatrix& alphaf, const RealMatrix& x, const ComplexMatrix& xf,
                                    const RealMatrix& z, const ComplexMatrix& zf, double sigma) {
  ComplexMatrix prod = dft2d(gaussian_correlation(x, xf, z, zf, sigma));
  for (std::size_t i = 0; i < prod.size(); ++i) prod.data()[i] *= alphaf.data()[i];
  return idft2d(prod);
}

inline ComplexMatrix detect_complex(const ComplexMatrix& alphaf, const RealMatrix& x, const RealMatrix& z,
                                    double sigma) {
  return detect_complex(alphaf, x, dft2d(x), z, dft2d(z), sigma);
}

inline RealMatrix detect(const ComplexMatrix& alphaf, const RealMatrix& x, const RealMatrix& z, double sigma) {
  return real_part(detect_complex(alphaf, x, z, sigma));
}

struct Peak {
  int dx = 0;
  int dy = 0;
  double value = 0.0;
};

/// Argmax with wrap-around lags (first maximum in row-major order).
inline Peak find_peak(const RealMatrix& response) {
  int br = 0, bc = 0;
  double best = response(0, 0);
  for (int r = 0; r < response.rows(); ++r)
    for (int c = 0; c < response.cols(); ++c)
      if (response(r, c) > best) {
        best = response(r, c);
        br = r;
        bc = c;
      }
  return {wrap_lag(bc, response.cols()), wrap_lag(br, response.rows()), best};
}

}  // namespace kcf

class KcfTracker final : public Tracker {
 public:
  explicit KcfTracker(KcfParams params = {}) : params_(params) {
    if (!params_.valid()) throw ContractViolation("invalid KCF parameters");
  }

  void init(const Frame& frame, const BoundingBox& box) override {
    if (!box.valid() || !clip_to_canvas(box, frame.width, frame.height))
      throw TrackerInitError("KCF init box has no area inside the frame");
    size_w_ = box.w;
    size_h_ = box.h;
    cx_ = box.center_x();
    cy_ = box.center_y();
    // Even window dimensions keep the label peak and window center aligned;
    // 5-smooth ones keep the transforms on the fast mixed-radix path.
    auto even_up = [](double v) {
      std::size_t n = static_cast<std::size_t>(std::max(4.0, std::ceil(v)));
      while (true) {
        n = next_smooth_size(n + (n % 2));
        if (n % 2 == 0) return static_cast<int>(n);
        ++n;
      }
    };
    win_w_ = even_up(box.w * params_.padding);
    win_h_ = even_up(box.h * params_.padding);
    window_ = kcf::cosine_window(win_h_, win_w_);
    label_ = kcf::gaussian_label(win_h_, win_w_, std::sqrt(box.w * box.h) * params_.output_sigma_factor);
    yf_ = dft2d(label_);
    x_ = features(frame);
    xf_ = dft2d(x_);
    alphaf_ = kcf::train(x_, xf_, yf_, params_.kernel_sigma, params_.lambda);
    initialized_ = true;
  }

  TrackerUpdate update(const Frame& frame) override {
    if (!initialized_) throw ContractViolation("KCF update before init");
    const RealMatrix z = features(frame);
    last_response_ = real_part(kcf::detect_complex(alphaf_, x_, xf_, z, dft2d(z), params_.kernel_sigma));
    const kcf::Peak peak = kcf::find_peak(last_response_);
    if (peak.value < params_.response_fail_threshold) return TrackerUpdate::failure(std::max(0.0, peak.value));

    const BoundingBox moved = BoundingBox::from_center(cx_ + peak.dx, cy_ + peak.dy, size_w_, size_h_);
    if (!clip_to_canvas(moved, frame.width, frame.height)) return TrackerUpdate::failure(peak.value);
    cx_ += peak.dx;
    cy_ += peak.dy;

    if (params_.interp_factor > 0.0) {
      const RealMatrix fresh = features(frame);
      const ComplexMatrix fresh_f = dft2d(fresh);
      const ComplexMatrix fresh_alphaf = kcf::train(fresh, fresh_f, yf_, params_.kernel_sigma, params_.lambda);
      const double eta = params_.interp_factor;
      // The transform is linear, so blending spectra matches blending patches.
      for (std::size_t i = 0; i < x_.size(); ++i) {
        x_.data()[i] = (1.0 - eta) * x_.data()[i] + eta * fresh.data()[i];
        xf_.data()[i] = (1.0 - eta) * xf_.data()[i] + eta * fresh_f.data()[i];
        alphaf_.data()[i] = (1.0 - eta) * alphaf_.data()[i] + eta * fresh_alphaf.data()[i];
      }
    }
    return TrackerUpdate::success(moved, peak.value);
  }

  bool initialized() const noexcept override { return initialized_; }
  std::string_view name() const noexcept override { return "kcf"; }

  int window_width() const noexcept { return win_w_; }
  int window_height() const noexcept { return win_h_; }
  const RealMatrix& last_response() const noexcept { return last_response_; }

 private:
  // Zero-mean, cosine-windowed intensities in [0, 1] around the current center.
  RealMatrix features(const Frame& frame) const {
    RealMatrix f(win_h_, win_w_);
    const int x0 = static_cast<int>(std::floor(cx_ + 0.5)) - win_w_ / 2;
    const int y0 = static_cast<int>(std::floor(cy_ + 0.5)) - win_h_ / 2;
    double mean = 0.0;
    for (int r = 0; r < win_h_; ++r)
      for (int c = 0; c < win_w_; ++c) {
        const int x = std::clamp(x0 + c, 0, frame.width - 1);
        const int y = std::clamp(y0 + r, 0, frame.height - 1);
        f(r, c) = frame.at(x, y) / 255.0;
        mean += f(r, c);
      }
    mean /= static_cast<double>(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = (f.data()[i] - mean) * window_.data()[i];
    return f;
  }

  KcfParams params_;
  bool initialized_ = false;
  double cx_ = 0.0, cy_ = 0.0;
  double size_w_ = 0.0, size_h_ = 0.0;
  int win_w_ = 0, win_h_ = 0;
  RealMatrix window_;
  RealMatrix label_;
  ComplexMatrix yf_;
  RealMatrix x_;
  ComplexMatrix xf_;
  ComplexMatrix alphaf_;
  RealMatrix last_response_;
};

inline TrackerFactory kcf_factory(KcfParams params = {}) {
  return [params] { return std::make_unique<KcfTracker>(params); };
}

}  // namespace datkit
