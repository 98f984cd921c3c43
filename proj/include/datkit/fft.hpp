#pragma once

// Dense matrices and the 2-D discrete Fourier transform.
//
// Forward transform is unnormalized, the inverse divides by N*M. Any size
// >= 1 is supported. Lengths whose prime factors are all <= 7 use a
// recursive mixed-radix Cooley-Tukey transform; anything else goes through
// Bluestein's chirp-z reduction to a power of two. Plans (twiddles,
// factorizations, chirps) are cached per length and thread.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace datkit {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<std::complex<double>>;
using cplx = std::complex<double>;

/// Smallest n' >= n whose prime factors are all 2, 3 or 5.
inline std::size_t next_smooth_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (std::size_t p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

namespace detail {

// Plain product; std::complex's operator* takes a slow NaN-recovery path.
inline cplx cmul(cplx a, cplx b) noexcept {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline std::vector<std::size_t> small_factors(std::size_t n) {
  std::vector<std::size_t> f;
  for (std::size_t p : {4, 2, 3, 5, 7})
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  if (n != 1) f.clear();
  return f;
}

// Mixed-radix plan for one length, both directions.
class MixedRadixPlan {
 public:
  explicit MixedRadixPlan(std::size_t n, std::vector<std::size_t> factors) : n_(n), factors_(std::move(factors)) {
    for (int dir = 0; dir < 2; ++dir) {
      twiddle_[dir].resize(n);
      const double sign = dir == 0 ? -1.0 : 1.0;
      for (std::size_t k = 0; k < n; ++k)
        twiddle_[dir][k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
    scratch_.resize(n);
  }

  void run(cplx* data, bool inverse) {
    std::copy(data, data + n_, scratch_.begin());
    recurse(scratch_.data(), 1, data, n_, 0, twiddle_[inverse ? 1 : 0].data());
  }

 private:
  // Out-of-place decimation in time: reads n values of `in` at `stride`,
  // writes the transform contiguously to `out`.
  void recurse(const cplx* in, std::size_t stride, cplx* out, std::size_t n, std::size_t level, const cplx* tw) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t p = factors_[level];
    const std::size_t m = n / p;
    if (m == 1) {
      for (std::size_t r = 0; r < p; ++r) out[r] = in[r * stride];
    } else {
      for (std::size_t r = 0; r < p; ++r) recurse(in + r * stride, stride * p, out + r * m, m, level + 1, tw);
    }
    const std::size_t step = n_ / n;
    const std::size_t pstep = n_ / p;
    const bool inverse = tw == twiddle_[1].data();
    // Multiplies by the first p-th root of unity rotated a quarter turn: -i forward, +i inverse.
    auto rot = [inverse](cplx v) { return inverse ? cplx{-v.imag(), v.real()} : cplx{v.imag(), -v.real()}; };
    cplx roots[7];
    for (std::size_t j = 0; j < p; ++j) roots[j] = tw[j * pstep];
    cplx a[7];
    for (std::size_t k = 0; k < m; ++k) {
      a[0] = out[k];
      if (k == 0)
        for (std::size_t r = 1; r < p; ++r) a[r] = out[r * m];
      else
        for (std::size_t r = 1; r < p; ++r) a[r] = cmul(out[r * m + k], tw[r * k * step]);
      switch (p) {
        case 2:
          out[k] = a[0] + a[1];
          out[k + m] = a[0] - a[1];
          break;
        case 3: {
          const cplx t1 = a[1] + a[2], t2 = a[0] - 0.5 * t1, t3 = rot(a[1] - a[2]) * (std::sqrt(3.0) / 2.0);
          out[k] = a[0] + t1;
          out[k + m] = t2 + t3;
          out[k + 2 * m] = t2 - t3;
          break;
        }
        case 4: {
          const cplx s02 = a[0] + a[2], d02 = a[0] - a[2], s13 = a[1] + a[3], d13 = rot(a[1] - a[3]);
          out[k] = s02 + s13;
          out[k + m] = d02 + d13;
          out[k + 2 * m] = s02 - s13;
          out[k + 3 * m] = d02 - d13;
          break;
        }
        default:
          for (std::size_t q = 0; q < p; ++q) {
            cplx acc = a[0];
            std::size_t j = 0;
            for (std::size_t r = 1; r < p; ++r) {
              j += q;
              if (j >= p) j -= p;
              acc += cmul(a[r], roots[j]);
            }
            out[k + q * m] = acc;
          }
      }
    }
  }

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<cplx> twiddle_[2];
  std::vector<cplx> scratch_;
};

class BluesteinPlan {
 public:
  explicit BluesteinPlan(std::size_t n) : n_(n) {
    m_ = 1;
    while (m_ < 2 * n - 1) m_ <<= 1;
    std::vector<std::size_t> f;
    for (std::size_t r = m_; r > 1; r >>= 1) f.push_back(2);
    inner_ = std::make_unique<MixedRadixPlan>(m_, std::move(f));
    for (int dir = 0; dir < 2; ++dir) {
      const double sign = dir == 0 ? -1.0 : 1.0;
      chirp_[dir].resize(n);
      for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle small.
        const std::size_t k2 = (k * k) % (2 * n);
        chirp_[dir][k] = std::polar(1.0, sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
      }
      kernel_[dir].assign(m_, cplx{});
      kernel_[dir][0] = std::conj(chirp_[dir][0]);
      for (std::size_t k = 1; k < n; ++k) kernel_[dir][k] = kernel_[dir][m_ - k] = std::conj(chirp_[dir][k]);
      inner_->run(kernel_[dir].data(), false);
    }
    work_.resize(m_);
  }

  void run(cplx* a, bool inverse) {
    const int dir = inverse ? 1 : 0;
    std::fill(work_.begin(), work_.end(), cplx{});
    for (std::size_t k = 0; k < n_; ++k) work_[k] = cmul(a[k], chirp_[dir][k]);
    inner_->run(work_.data(), false);
    for (std::size_t i = 0; i < m_; ++i) work_[i] = cmul(work_[i], kernel_[dir][i]);
    inner_->run(work_.data(), true);
    const double scale = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < n_; ++k) a[k] = cmul(work_[k] * scale, chirp_[dir][k]);
  }

 private:
  std::size_t n_;
  std::size_t m_ = 1;
  std::unique_ptr<MixedRadixPlan> inner_;
  std::vector<cplx> chirp_[2];
  std::vector<cplx> kernel_[2];
  std::vector<cplx> work_;
};

class Plan {
 public:
  explicit Plan(std::size_t n) {
    if (n <= 1) return;
    auto factors = small_factors(n);
    if (!factors.empty()) mixed_ = std::make_unique<MixedRadixPlan>(n, std::move(factors));
    else bluestein_ = std::make_unique<BluesteinPlan>(n);
  }

  void run(cplx* a, bool inverse) {
    if (mixed_) mixed_->run(a, inverse);
    else if (bluestein_) bluestein_->run(a, inverse);
  }

 private:
  std::unique_ptr<MixedRadixPlan> mixed_;
  std::unique_ptr<BluesteinPlan> bluestein_;
};

inline Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<Plan>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Plan>(n);
  return *slot;
}

/// In-place unnormalized 1-D DFT (sign -1 forward, +1 inverse).
inline void dft1d(std::vector<cplx>& a, bool inverse) {
  if (a.size() <= 1) return;
  plan_for(a.size()).run(a.data(), inverse);
}

inline void transform2d(ComplexMatrix& m, bool inverse) {
  const int rows = m.rows(), cols = m.cols();
  if (cols > 1) {
    Plan& row_plan = plan_for(static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) row_plan.run(&m(r, 0), inverse);
  }
  if (rows > 1) {
    Plan& col_plan = plan_for(static_cast<std::size_t>(rows));
    std::vector<cplx> buf(static_cast<std::size_t>(rows));
    for (int c = 0; c < cols; ++c) {
      for (int r = 0; r < rows; ++r) buf[static_cast<std::size_t>(r)] = m(r, c);
      col_plan.run(buf.data(), inverse);
      for (int r = 0; r < rows; ++r) m(r, c) = buf[static_cast<std::size_t>(r)];
    }
  }
}

}  // namespace detail

inline ComplexMatrix dft2d(const ComplexMatrix& x) {
  ComplexMatrix out = x;
  detail::transform2d(out, false);
  return out;
}

inline ComplexMatrix dft2d(const RealMatrix& x) {
  ComplexMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i];
  detail::transform2d(out, false);
  return out;
}

/// Inverse transform including the 1/(N*M) normalization.
inline ComplexMatrix idft2d(const ComplexMatrix& x) {
  ComplexMatrix out = x;
  detail::transform2d(out, true);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out.data()) v *= scale;
  return out;
}

inline RealMatrix real_part(const ComplexMatrix& x) {
  RealMatrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i].real();
  return out;
}

}  // namespace datkit
