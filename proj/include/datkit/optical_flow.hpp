#pragma once

// Pyramidal Lucas-Kanade sparse optical flow.
//
// Intensities stay in 0..255 units. Spatial gradients are central
// differences on the previous image, precomputed per pyramid level and
// sampled bilinearly (equal to differencing the interpolated image away
// from borders). The 2x2 structure matrix is normalized by the window
// pixel count before its smaller eigenvalue is compared against
// `min_eigenvalue`. Coarse levels that are
// ill-conditioned are skipped; at the finest level the point is flagged.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "datkit/dataio.hpp"

namespace datkit {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double distance(Point2 a, Point2 b) noexcept { return std::hypot(a.x - b.x, a.y - b.y); }

enum class FlowStatus { Converged, IllConditioned, Diverged, OutOfBounds };

struct FlowResult {
  Point2 point;
  FlowStatus status = FlowStatus::Converged;
};

struct LkParams {
  int pyramid_levels = 3;
  int window = 7;  // half-width
  int iterations = 20;
  double epsilon = 0.03;
  double min_eigenvalue = 1e-4;
};

/// Row-major float image with replicated-border bilinear sampling.
class Image {
 public:
  Image() = default;
  Image(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h, 0.0f) {}

  explicit Image(const Frame& f) : Image(f.width, f.height) {
    for (std::size_t i = 0; i < px_.size(); ++i) px_[i] = f.pixels[i];
  }

  int width() const noexcept { return w_; }
  int height() const noexcept { return h_; }

  float& at(int x, int y) noexcept { return px_[static_cast<std::size_t>(y) * w_ + x]; }
  float at(int x, int y) const noexcept { return px_[static_cast<std::size_t>(y) * w_ + x]; }

  const float* row(int y) const noexcept { return px_.data() + static_cast<std::size_t>(y) * w_; }
  float* row(int y) noexcept { return px_.data() + static_cast<std::size_t>(y) * w_; }

  float clamped(int x, int y) const noexcept {
    return at(std::clamp(x, 0, w_ - 1), std::clamp(y, 0, h_ - 1));
  }

  double sample(double x, double y) const noexcept {
    const double fx = std::floor(x), fy = std::floor(y);
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
    const double ax = x - fx, ay = y - fy;
    return (1 - ax) * (1 - ay) * clamped(x0, y0) + ax * (1 - ay) * clamped(x0 + 1, y0) +
           (1 - ax) * ay * clamped(x0, y0 + 1) + ax * ay * clamped(x0 + 1, y0 + 1);
  }

 private:
  int w_ = 0;
  int h_ = 0;
  std::vector<float> px_;
};

namespace detail {

// 5-tap binomial blur then 2x decimation, replicated borders.
inline Image pyr_down(const Image& src) {
  static constexpr float k[5] = {1.f / 16, 4.f / 16, 6.f / 16, 4.f / 16, 1.f / 16};
  const int w = src.width(), h = src.height();
  const int dw = (w + 1) / 2, dh = (h + 1) / 2;
  // Horizontal pass, only on the even columns that survive decimation.
  Image tmp(dw, h);
  for (int y = 0; y < h; ++y) {
    const float* row = src.row(y);
    for (int x = 0; x < dw; ++x) {
      const int cx = 2 * x;
      float s = 0;
      if (cx >= 2 && cx + 2 < w) {
        for (int t = -2; t <= 2; ++t) s += k[t + 2] * row[cx + t];
      } else {
        for (int t = -2; t <= 2; ++t) s += k[t + 2] * row[std::clamp(cx + t, 0, w - 1)];
      }
      tmp.at(x, y) = s;
    }
  }
  Image out(dw, dh);
  for (int y = 0; y < dh; ++y) {
    const int cy = 2 * y;
    for (int t = -2; t <= 2; ++t) {
      const float* row = tmp.row(std::clamp(cy + t, 0, h - 1));
      float* dst = out.row(y);
      for (int x = 0; x < dw; ++x) dst[x] += k[t + 2] * row[x];
    }
  }
  return out;
}

// Central differences with replicated borders.
inline void gradients(const Image& img, Image& gx, Image& gy) {
  const int w = img.width(), h = img.height();
  gx = Image(w, h);
  gy = Image(w, h);
  for (int y = 0; y < h; ++y) {
    const float* up = img.row(std::max(y - 1, 0));
    const float* mid = img.row(y);
    const float* down = img.row(std::min(y + 1, h - 1));
    float* ox = gx.row(y);
    float* oy = gy.row(y);
    for (int x = 0; x < w; ++x) oy[x] = 0.5f * (down[x] - up[x]);
    if (w == 1) continue;
    ox[0] = 0.5f * (mid[1] - mid[0]);
    for (int x = 1; x + 1 < w; ++x) ox[x] = 0.5f * (mid[x + 1] - mid[x - 1]);
    ox[w - 1] = 0.5f * (mid[w - 1] - mid[w - 2]);
  }
}

// Bilinear samples of a (2*win+1)^2 window centered at (cx, cy). All taps
// share the same fractional offset, so the weights are computed once.
inline void sample_window(const Image& img, double cx, double cy, int win, double* out) {
  const int side = 2 * win + 1;
  const double left = cx - win, top = cy - win;
  const double fx = std::floor(left), fy = std::floor(top);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  if (x0 >= 0 && y0 >= 0 && x0 + side < img.width() && y0 + side < img.height()) {
    const double ax = left - fx, ay = top - fy;
    const double w00 = (1 - ax) * (1 - ay), w10 = ax * (1 - ay), w01 = (1 - ax) * ay, w11 = ax * ay;
    for (int r = 0; r < side; ++r) {
      const float* a = img.row(y0 + r) + x0;
      const float* b = img.row(y0 + r + 1) + x0;
      for (int c = 0; c < side; ++c) *out++ = w00 * a[c] + w10 * a[c + 1] + w01 * b[c] + w11 * b[c + 1];
    }
    return;
  }
  for (int dy = -win; dy <= win; ++dy)
    for (int dx = -win; dx <= win; ++dx) *out++ = img.sample(cx + dx, cy + dy);
}

}  // namespace detail

class ImagePyramid {
 public:
  ImagePyramid(const Frame& frame, int levels) {
    levels_.reserve(static_cast<std::size_t>(std::max(levels, 1)));
    levels_.emplace_back(frame);
    for (int l = 1; l < levels; ++l) {
      if (levels_.back().width() < 8 || levels_.back().height() < 8) break;
      levels_.push_back(detail::pyr_down(levels_.back()));
    }
    gx_.resize(levels_.size());
    gy_.resize(levels_.size());
    for (std::size_t l = 0; l < levels_.size(); ++l) detail::gradients(levels_[l], gx_[l], gy_[l]);
  }

  int levels() const noexcept { return static_cast<int>(levels_.size()); }
  const Image& level(int l) const noexcept { return levels_[static_cast<std::size_t>(l)]; }
  const Image& grad_x(int l) const noexcept { return gx_[static_cast<std::size_t>(l)]; }
  const Image& grad_y(int l) const noexcept { return gy_[static_cast<std::size_t>(l)]; }

 private:
  std::vector<Image> levels_;
  std::vector<Image> gx_, gy_;
};

/// Tracks each point from `prev` into `next`.
inline std::vector<FlowResult> lk_flow(const ImagePyramid& prev, const ImagePyramid& next,
                                       std::span<const Point2> points, const LkParams& p) {
  const int levels = std::min(prev.levels(), next.levels());
  const int win = p.window;
  const int side = 2 * win + 1;
  const double npix = static_cast<double>(side) * side;
  const std::size_t taps = static_cast<std::size_t>(side * side);
  std::vector<double> ix(taps), iy(taps), ival(taps), jval(taps);

  std::vector<FlowResult> out;
  out.reserve(points.size());
  for (const Point2& pt : points) {
    Point2 guess{0.0, 0.0};
    FlowStatus status = FlowStatus::Converged;
    for (int l = levels - 1; l >= 0; --l) {
      const double scale = std::ldexp(1.0, -l);
      const Point2 pl{pt.x * scale, pt.y * scale};
      const Image& J = next.level(l);

      detail::sample_window(prev.level(l), pl.x, pl.y, win, ival.data());
      detail::sample_window(prev.grad_x(l), pl.x, pl.y, win, ix.data());
      detail::sample_window(prev.grad_y(l), pl.x, pl.y, win, iy.data());
      double a11 = 0, a12 = 0, a22 = 0;
      for (std::size_t k = 0; k < taps; ++k) {
        a11 += ix[k] * ix[k];
        a12 += ix[k] * iy[k];
        a22 += iy[k] * iy[k];
      }
      a11 /= npix;
      a12 /= npix;
      a22 /= npix;
      const double min_eig = 0.5 * (a11 + a22 - std::sqrt((a11 - a22) * (a11 - a22) + 4.0 * a12 * a12));
      const double det = a11 * a22 - a12 * a12;
      if (min_eig < p.min_eigenvalue || det <= 0.0) {
        if (l == 0) {
          status = FlowStatus::IllConditioned;
          break;
        }
        guess = {guess.x * 2.0, guess.y * 2.0};
        continue;
      }

      Point2 d = guess;
      bool converged = false;
      for (int it = 0; it < p.iterations; ++it) {
        double b1 = 0, b2 = 0;
        detail::sample_window(J, pl.x + d.x, pl.y + d.y, win, jval.data());
        for (std::size_t k = 0; k < taps; ++k) {
          const double diff = ival[k] - jval[k];
          b1 += diff * ix[k];
          b2 += diff * iy[k];
        }
        b1 /= npix;
        b2 /= npix;
        const double sx = (a22 * b1 - a12 * b2) / det;
        const double sy = (a11 * b2 - a12 * b1) / det;
        d.x += sx;
        d.y += sy;
        if (!std::isfinite(d.x) || !std::isfinite(d.y)) break;
        if (std::hypot(sx, sy) < p.epsilon) {
          converged = true;
          break;
        }
      }
      if (l == 0) {
        guess = d;
        if (!converged) status = FlowStatus::Diverged;
      } else {
        guess = {d.x * 2.0, d.y * 2.0};
      }
    }

    Point2 moved = pt + guess;
    if (status == FlowStatus::Converged &&
        (moved.x < 0 || moved.y < 0 || moved.x > next.level(0).width() - 1 || moved.y > next.level(0).height() - 1))
      status = FlowStatus::OutOfBounds;
    if (!std::isfinite(moved.x) || !std::isfinite(moved.y)) {
      moved = pt;
      if (status == FlowStatus::Converged) status = FlowStatus::Diverged;
    }
    out.push_back({moved, status});
  }
  return out;
}

inline std::vector<FlowResult> lk_flow(const Frame& prev, const Frame& next, std::span<const Point2> points,
                                       const LkParams& p) {
  return lk_flow(ImagePyramid(prev, p.pyramid_levels), ImagePyramid(next, p.pyramid_levels), points, p);
}

}  // namespace datkit
