#pragma once

// Slow, obviously-correct reference computations.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "datkit/core.hpp"
#include "datkit/dataio.hpp"
#include "datkit/fft.hpp"

namespace datkit::testing {

/// IOU of integer-coordinate boxes by counting covered unit cells.
inline double lattice_iou(int ax, int ay, int aw, int ah, int bx, int by, int bw, int bh) {
  const int x0 = std::min(ax, bx), y0 = std::min(ay, by);
  const int x1 = std::max(ax + aw, bx + bw), y1 = std::max(ay + ah, by + bh);
  long in_a = 0, in_b = 0, both = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const bool a = x >= ax && x < ax + aw && y >= ay && y < ay + ah;
      const bool b = x >= bx && x < bx + bw && y >= by && y < by + bh;
      in_a += a;
      in_b += b;
      both += a && b;
    }
  const long uni = in_a + in_b - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

/// Direct O(N^2 M^2) 2-D DFT; sign -1 forward, +1 inverse (unnormalized).
inline ComplexMatrix naive_dft2d(const ComplexMatrix& x, int sign) {
  const int R = x.rows(), C = x.cols();
  ComplexMatrix out(R, C);
  for (int u = 0; u < R; ++u)
    for (int v = 0; v < C; ++v) {
      cplx s = 0;
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
          const double angle = sign * 2.0 * std::numbers::pi *
                               (static_cast<double>(u * r % R) / R + static_cast<double>(v * c % C) / C);
          s += x(r, c) * std::polar(1.0, angle);
        }
      out(u, v) = s;
    }
  return out;
}

/// Dense solve with partial pivoting; A is n x n row-major.
inline std::vector<double> solve_dense(std::vector<double> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(A[col * n + c], A[piv * n + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double m = A[r * n + col] / A[col * n + col];
      for (std::size_t c = col; c < n; ++c) A[r * n + c] -= m * A[col * n + c];
      b[r] -= m * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= A[i * n + c] * x[c];
    x[i] = s / A[i * n + i];
  }
  return x;
}

/// Kernel ridge regression over all cyclic shifts, done in the spatial
/// domain with an explicit kernel matrix:
///   K[m][i] = k(S_i x, S_m x),  (K + lambda I) alpha = y,
///   response[m] = sum_i alpha_i k(S_i x, S_m z),
/// where (S_j v)[n] = v[n + j] (2-D, cyclic) and
/// k(a, b) = exp(-|a - b|^2 / (sigma^2 N)).
inline RealMatrix kcf_spatial_oracle(const RealMatrix& x, const RealMatrix& y, const RealMatrix& z, double sigma,
                                     double lambda) {
  const int R = x.rows(), C = x.cols();
  const int N = R * C;
  auto shifted = [&](const RealMatrix& v, int j) {
    const int dr = j / C, dc = j % C;
    RealMatrix s(R, C);
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) s(r, c) = v((r + dr) % R, (c + dc) % C);
    return s;
  };
  auto kernel = [&](const RealMatrix& a, const RealMatrix& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    return std::exp(-d / (sigma * sigma * N));
  };
  std::vector<RealMatrix> xs, zs;
  for (int j = 0; j < N; ++j) {
    xs.push_back(shifted(x, j));
    zs.push_back(shifted(z, j));
  }
  std::vector<double> A(static_cast<std::size_t>(N) * N), rhs(static_cast<std::size_t>(N));
  for (int m = 0; m < N; ++m) {
    rhs[static_cast<std::size_t>(m)] = y.data()[static_cast<std::size_t>(m)];
    for (int i = 0; i < N; ++i)
      A[static_cast<std::size_t>(m) * N + i] = kernel(xs[static_cast<std::size_t>(i)], xs[static_cast<std::size_t>(m)]) + (m == i ? lambda : 0.0);
  }
  const auto alpha = solve_dense(A, rhs);
  RealMatrix resp(R, C);
  for (int m = 0; m < N; ++m) {
    double s = 0;
    for (int i = 0; i < N; ++i) s += alpha[static_cast<std::size_t>(i)] * kernel(xs[static_cast<std::size_t>(i)], zs[static_cast<std::size_t>(m)]);
    resp.data()[static_cast<std::size_t>(m)] = s;
  }
  return resp;
}

/// Survival function of F(2, d2), closed form.
inline double f2_survival(double f, double d2) { return std::pow(1.0 + 2.0 * f / d2, -d2 / 2.0); }

/// KCF input patch: zero-mean intensities in [0, 1] times a Hann window,
/// centered on the rounded box center with replicated borders.
inline RealMatrix kcf_window_features(const Frame& f, double cx, double cy, int wh, int ww) {
  auto hann = [](int i, int n) { return n <= 1 ? 1.0 : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1)); };
  RealMatrix out(wh, ww);
  const int x0 = static_cast<int>(std::floor(cx + 0.5)) - ww / 2, y0 = static_cast<int>(std::floor(cy + 0.5)) - wh / 2;
  double mean = 0;
  for (int r = 0; r < wh; ++r)
    for (int c = 0; c < ww; ++c) {
      out(r, c) = f.at(std::clamp(x0 + c, 0, f.width - 1), std::clamp(y0 + r, 0, f.height - 1)) / 255.0;
      mean += out(r, c);
    }
  mean /= wh * ww;
  for (int r = 0; r < wh; ++r)
    for (int c = 0; c < ww; ++c) out(r, c) = (out(r, c) - mean) * hann(r, wh) * hann(c, ww);
  return out;
}

/// Gaussian target peaking at (0, 0) with cyclic distances.
inline RealMatrix wrapped_gaussian(int rows, int cols, double sigma) {
  RealMatrix y(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double dr = std::min(r, rows - r), dc = std::min(c, cols - c);
      y(r, c) = std::exp(-(dr * dr + dc * dc) / (2 * sigma * sigma));
    }
  return y;
}

}  // namespace datkit::testing
