#pragma once

// Cubic B-splines on clamped knot vectors: evaluation, interpolation and
// penalized smoothing fits. Knot vectors may be shared between several
// coefficient sets (one per color channel of a camera ray).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lookup3d/core.hpp"

namespace lookup3d {

inline constexpr int kSplineDegree = 3;

/// Index s with knots[s] <= x < knots[s+1], restricted to the valid range
/// [3, n_coeffs - 1]. Values outside the domain map to the end spans.
template <typename T>
std::size_t find_span(std::span<const T> knots, T x) {
  const std::size_t n_coeffs = knots.size() - kSplineDegree - 1;
  const std::size_t lo = kSplineDegree;
  const std::size_t hi = n_coeffs - 1;
  if (x >= knots[hi + 1]) return hi;
  if (x <= knots[lo]) return lo;
  // upper_bound over [lo+1, hi+1) gives the first knot strictly greater than x.
  const auto first = knots.begin() + static_cast<std::ptrdiff_t>(lo + 1);
  const auto last = knots.begin() + static_cast<std::ptrdiff_t>(hi + 1);
  const auto it = std::upper_bound(first, last, x);
  return static_cast<std::size_t>(it - knots.begin()) - 1;
}

/// The four nonzero cubic basis functions at x on the given span
/// (Cox-de Boor triangle). out[r] multiplies coefficient span-3+r.
template <typename T>
void cubic_basis(std::span<const T> knots, std::size_t span, T x, std::array<T, 4>& out) {
  std::array<T, 4> left{};
  std::array<T, 4> right{};
  out[0] = T(1);
  for (int j = 1; j <= kSplineDegree; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    T saved = T(0);
    for (int r = 0; r < j; ++r) {
      const T temp = out[r] / (right[r + 1] + left[j - r]);
      out[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    out[j] = saved;
  }
}

/// Basis functions and their first two derivatives at x.
/// ders[k][r] is the k-th derivative of basis function span-3+r.
template <typename T>
std::array<std::array<T, 4>, 3> cubic_basis_derivatives(std::span<const T> knots,
                                                        std::size_t span, T x) {
  constexpr int p = kSplineDegree;
  constexpr int n = 2;
  T ndu[p + 1][p + 1]{};
  std::array<T, p + 1> left{};
  std::array<T, p + 1> right{};
  ndu[0][0] = T(1);
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots[span + 1 - j];
    right[j] = knots[span + j] - x;
    T saved = T(0);
    for (int r = 0; r < j; ++r) {
      ndu[j][r] = right[r + 1] + left[j - r];
      const T temp = ndu[r][j - 1] / ndu[j][r];
      ndu[r][j] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    ndu[j][j] = saved;
  }

  std::array<std::array<T, 4>, 3> ders{};
  for (int j = 0; j <= p; ++j) ders[0][j] = ndu[j][p];

  T a[2][p + 1]{};
  for (int r = 0; r <= p; ++r) {
    int s1 = 0;
    int s2 = 1;
    a[0][0] = T(1);
    for (int k = 1; k <= n; ++k) {
      T d = T(0);
      const int rk = r - k;
      const int pk = p - k;
      if (r >= k) {
        a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
        d = a[s2][0] * ndu[rk][pk];
      }
      const int j1 = rk >= -1 ? 1 : -rk;
      const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
      for (int j = j1; j <= j2; ++j) {
        a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][rk + j];
        d += a[s2][j] * ndu[rk + j][pk];
      }
      if (r <= pk) {
        a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
        d += a[s2][k] * ndu[r][pk];
      }
      ders[k][r] = d;
      std::swap(s1, s2);
    }
  }
  T factor = T(p);
  for (int k = 1; k <= n; ++k) {
    for (int j = 0; j <= p; ++j) ders[k][j] *= factor;
    factor *= T(p - k);
  }
  return ders;
}

/// Evaluates sum_j coeffs[j] B_j(x) for a clamped cubic knot vector.
template <typename T>
T evaluate_spline(std::span<const T> knots, std::span<const T> coeffs, T x) {
  const std::size_t span = find_span(knots, x);
  std::array<T, 4> basis;
  cubic_basis(knots, span, x, basis);
  T value = T(0);
  for (int r = 0; r < 4; ++r) value += coeffs[span - kSplineDegree + r] * basis[r];
  return value;
}

/// A single cubic B-spline with its own knot vector.
template <typename T>
struct BSpline {
  std::vector<T> knots;
  std::vector<T> coefficients;

  T domain_begin() const { return knots[kSplineDegree]; }
  T domain_end() const { return knots[coefficients.size()]; }
  T operator()(T x) const {
    return evaluate_spline<T>(knots, coefficients, x);
  }
  friend bool operator==(const BSpline&, const BSpline&) = default;
};

/// Clamped not-a-knot knot vector for interpolating n >= 4 sites:
/// four copies of each end site, interior knots at sites 2 .. n-3.
inline std::vector<double> interpolation_knots(std::span<const double> sites) {
  const std::size_t n = sites.size();
  if (n < 4) throw InvalidArgument("interpolation_knots: need at least 4 sites");
  std::vector<double> knots;
  knots.reserve(n + 4);
  for (int i = 0; i < 4; ++i) knots.push_back(sites.front());
  for (std::size_t i = 2; i + 2 < n; ++i) knots.push_back(sites[i]);
  for (int i = 0; i < 4; ++i) knots.push_back(sites.back());
  return knots;
}

namespace detail {

// Square banded matrix with equal lower/upper bandwidth, stored by diagonals.
class BandMatrix {
 public:
  BandMatrix(std::size_t n, int bandwidth)
      : n_(n), bw_(bandwidth), data_(n * (2 * static_cast<std::size_t>(bandwidth) + 1), 0.0) {}

  std::size_t size() const { return n_; }
  double& at(std::size_t i, std::size_t j) {
    return data_[i * (2 * bw_ + 1) + static_cast<std::size_t>(static_cast<long>(j) - static_cast<long>(i) + bw_)];
  }
  double at(std::size_t i, std::size_t j) const {
    return data_[i * (2 * bw_ + 1) + static_cast<std::size_t>(static_cast<long>(j) - static_cast<long>(i) + bw_)];
  }
  bool in_band(std::size_t i, std::size_t j) const {
    const long d = static_cast<long>(j) - static_cast<long>(i);
    return d >= -bw_ && d <= bw_;
  }
  int bandwidth() const { return bw_; }

  /// this = a + lambda * b, for matrices of identical shape.
  void assign_sum(const BandMatrix& a, double lambda, const BandMatrix& b) {
    n_ = a.n_;
    bw_ = a.bw_;
    data_.resize(a.data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = a.data_[i] + lambda * b.data_[i];
  }

  // LU without pivoting; valid for totally positive collocation matrices and
  // for symmetric positive definite systems.
  void factorize() {
    const std::size_t bw = static_cast<std::size_t>(bw_);
    const std::size_t w = 2 * bw + 1;
    double* d = data_.data();
    // Element (i, j) lives at i * w + (j - i + bw).
    for (std::size_t k = 0; k < n_; ++k) {
      double* rk = d + k * w + bw;  // rk[j - k] = A(k, j)
      const double pivot = rk[0];
      if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot)) {
        throw DegenerateInput("spline system is singular at row " + std::to_string(k));
      }
      const std::size_t iend = std::min(n_, k + bw + 1);
      for (std::size_t i = k + 1; i < iend; ++i) {
        double* ri = d + i * w + bw - (i - k);  // ri[j - k] = A(i, j)
        const double f = ri[0] / pivot;
        ri[0] = f;
        if (f == 0.0) continue;
        for (std::size_t j = 1; j < iend - k; ++j) ri[j] -= f * rk[j];
      }
    }
  }

  void solve_in_place(std::span<double> rhs) const {
    const std::size_t bw = static_cast<std::size_t>(bw_);
    const std::size_t w = 2 * bw + 1;
    const double* d = data_.data();
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t jbeg = i > bw ? i - bw : 0;
      const double* ri = d + i * w + bw - i;  // ri[j] = A(i, j)
      double s = rhs[i];
      for (std::size_t j = jbeg; j < i; ++j) s -= ri[j] * rhs[j];
      rhs[i] = s;
    }
    for (std::size_t ii = n_; ii-- > 0;) {
      const std::size_t jend = std::min(n_, ii + bw + 1);
      const double* ri = d + ii * w + bw - ii;
      double s = rhs[ii];
      for (std::size_t j = ii + 1; j < jend; ++j) s -= ri[j] * rhs[j];
      rhs[ii] = s / ri[ii];
    }
  }

 private:
  std::size_t n_;
  int bw_;
  std::vector<double> data_;
};

}  // namespace detail

/// Penalized least-squares fitter for cubic splines on a fixed set of sites.
/// With smoothing target s the fitted curve f minimizes int f''^2 subject to
/// sum_i (y_i - f(x_i))^2 <= s; s = 0 interpolates.
class SplineFitter {
 public:
  explicit SplineFitter(std::span<const double> sites)
      : sites_(sites.begin(), sites.end()), knots_(interpolation_knots(sites)) {
    for (std::size_t i = 1; i < sites_.size(); ++i) {
      if (!(sites_[i] > sites_[i - 1])) {
        throw InvalidArgument("SplineFitter: sites must be strictly increasing");
      }
    }
    const std::size_t n = sites_.size();
    spans_.resize(n);
    basis_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      spans_[i] = find_span<double>(knots_, sites_[i]);
      cubic_basis<double>(knots_, spans_[i], sites_[i], basis_[i]);
    }
  }

  const std::vector<double>& knots() const { return knots_; }
  std::size_t size() const { return sites_.size(); }

  /// Interpolating coefficients for every channel.
  std::vector<std::vector<double>> interpolate(const std::vector<std::span<const double>>& values) {
    ensure_collocation();
    std::vector<std::vector<double>> out;
    out.reserve(values.size());
    for (const auto& y : values) {
      check_length(y);
      std::vector<double> c(y.begin(), y.end());
      collocation_->solve_in_place(c);
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Smoothing fit of one channel to residual target `target_ss`.
  std::vector<double> smooth(std::span<const double> y, double target_ss, double* achieved_ss = nullptr) {
    check_length(y);
    if (!(target_ss >= 0.0) || !std::isfinite(target_ss)) {
      throw InvalidArgument("SplineFitter: smoothing target must be finite and >= 0");
    }
    if (target_ss == 0.0) {
      auto c = interpolate({y}).front();
      if (achieved_ss) *achieved_ss = residual(y, c);
      return c;
    }
    ensure_normal_terms();

    // Straight-line least squares is the limit of infinite smoothing.
    auto line = linear_fit(y);
    const double line_ss = residual(y, line);
    if (line_ss <= target_ss) {
      if (achieved_ss) *achieved_ss = line_ss;
      return line;
    }

    std::vector<double> aty(sites_.size(), 0.0);
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      for (int r = 0; r < 4; ++r) aty[spans_[i] - 3 + r] += basis_[i][r] * y[i];
    }

    // Residual grows monotonically with the penalty weight. Bracket the target
    // in log(lambda), then solve log(ss) = log(target) by Illinois regula falsi.
    auto eval = [&](double mu, std::vector<double>& c) {
      c = solve_penalized(aty, std::exp(mu));
      const double ss = residual(y, c);
      return std::log(std::max(ss, 1e-300)) - std::log(target_ss);
    };
    std::vector<double> c_lo;
    std::vector<double> c_hi;
    double lo = std::log(lambda_scale_);
    double f_lo = eval(lo, c_lo);
    double hi = lo;
    double f_hi = f_lo;
    c_hi = c_lo;
    for (int i = 0; i < 20 && f_lo > 0.0; ++i) {
      hi = lo;
      f_hi = f_lo;
      c_hi = c_lo;
      lo -= 4.0;
      f_lo = eval(lo, c_lo);
    }
    for (int i = 0; i < 20 && f_hi < 0.0; ++i) {
      lo = hi;
      f_lo = f_hi;
      c_lo = c_hi;
      hi += 4.0;
      f_hi = eval(hi, c_hi);
    }
    std::vector<double> best = c_lo;
    double best_ss = residual(y, best);
    if (f_lo <= 0.0 && f_hi >= 0.0 && hi > lo) {
      constexpr double kTolerance = 1e-3;  // relative, on the residual
      int side = 0;
      for (int iter = 0; iter < 60; ++iter) {
        const double mu = (f_hi == f_lo) ? 0.5 * (lo + hi) : hi - f_hi * (hi - lo) / (f_hi - f_lo);
        std::vector<double> c;
        const double f = eval(mu, c);
        if (f <= 0.0) {
          best = c;
          best_ss = residual(y, best);
          if (f > -kTolerance) break;
          lo = mu;
          f_lo = f;
          if (side == -1) f_hi *= 0.5;
          side = -1;
        } else {
          hi = mu;
          f_hi = f;
          if (side == 1) f_lo *= 0.5;
          side = 1;
        }
        if (hi - lo < 1e-9) break;
      }
    }
    if (achieved_ss) *achieved_ss = best_ss;
    return best;
  }

  double residual(std::span<const double> y, std::span<const double> coeffs) const {
    double ss = 0.0;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      double f = 0.0;
      for (int r = 0; r < 4; ++r) f += coeffs[spans_[i] - 3 + r] * basis_[i][r];
      const double d = y[i] - f;
      ss += d * d;
    }
    return ss;
  }

 private:
  void check_length(std::span<const double> y) const {
    if (y.size() != sites_.size()) {
      throw DimensionMismatch("SplineFitter: expected " + std::to_string(sites_.size()) +
                              " values, got " + std::to_string(y.size()));
    }
  }

  void ensure_collocation() {
    if (collocation_) return;
    const std::size_t n = sites_.size();
    detail::BandMatrix a(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (int r = 0; r < 4; ++r) {
        const std::size_t j = spans_[i] - 3 + r;
        if (a.in_band(i, j)) {
          a.at(i, j) = basis_[i][r];
        } else if (basis_[i][r] != 0.0) {
          throw DegenerateInput("SplineFitter: collocation entry outside band");
        }
      }
    }
    a.factorize();
    collocation_ = std::move(a);
  }

  void ensure_normal_terms() {
    if (gram_) return;
    const std::size_t n = sites_.size();
    detail::BandMatrix gram(n, 3);
    detail::BandMatrix penalty(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (int r = 0; r < 4; ++r) {
        for (int q = 0; q < 4; ++q) {
          gram.at(spans_[i] - 3 + r, spans_[i] - 3 + q) += basis_[i][r] * basis_[i][q];
        }
      }
    }
    // f'' is linear on each knot interval, so two Gauss points integrate
    // products of second derivatives exactly.
    const double g = 0.5 / std::sqrt(3.0);
    for (std::size_t s = 3; s + 4 < knots_.size(); ++s) {
      const double a = knots_[s];
      const double b = knots_[s + 1];
      if (!(b > a)) continue;
      const double mid = 0.5 * (a + b);
      const double h = b - a;
      for (double offset : {-g * h, g * h}) {
        const auto ders = cubic_basis_derivatives<double>(knots_, s, mid + offset);
        for (int r = 0; r < 4; ++r) {
          for (int q = 0; q < 4; ++q) {
            penalty.at(s - 3 + r, s - 3 + q) += 0.5 * h * ders[2][r] * ders[2][q];
          }
        }
      }
    }
    double tg = 0.0;
    double tp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      tg += gram.at(i, i);
      tp += penalty.at(i, i);
    }
    lambda_scale_ = tp > 0.0 ? tg / tp : 1.0;
    gram_ = std::move(gram);
    penalty_ = std::move(penalty);
  }

  std::vector<double> solve_penalized(const std::vector<double>& aty, double lambda) const {
    thread_local detail::BandMatrix m(0, 3);
    m.assign_sum(*gram_, lambda, *penalty_);
    m.factorize();
    std::vector<double> c = aty;
    m.solve_in_place(c);
    return c;
  }

  std::vector<double> linear_fit(std::span<const double> y) const {
    const std::size_t n = sites_.size();
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += sites_[i];
      my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += (sites_[i] - mx) * (sites_[i] - mx);
      sxy += (sites_[i] - mx) * (y[i] - my);
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    // Coefficients of a linear function are its values at the Greville abscissae.
    std::vector<double> c(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double greville = (knots_[j + 1] + knots_[j + 2] + knots_[j + 3]) / 3.0;
      c[j] = my + slope * (greville - mx);
    }
    return c;
  }

  std::vector<double> sites_;
  std::vector<double> knots_;
  std::vector<std::size_t> spans_;
  std::vector<std::array<double, 4>> basis_;
  std::optional<detail::BandMatrix> collocation_;
  std::optional<detail::BandMatrix> gram_;
  std::optional<detail::BandMatrix> penalty_;
  double lambda_scale_ = 1.0;
};

/// Robust noise variance estimate from second differences of a densely
/// sampled smooth signal: var(y[i-1] - 2y[i] + y[i+1]) = 6 sigma^2.
inline double estimate_noise_variance(std::span<const double> y) {
  if (y.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i + 1 < y.size(); ++i) {
    const double d = y[i - 1] - 2.0 * y[i] + y[i + 1];
    acc += d * d;
  }
  return acc / (6.0 * static_cast<double>(y.size() - 2));
}

/// Convenience single-channel fit.
inline BSpline<double> fit_cubic_spline(std::span<const double> x, std::span<const double> y,
                                        double smoothing = 0.0) {
  SplineFitter fitter(x);
  BSpline<double> out;
  out.knots = fitter.knots();
  out.coefficients = fitter.smooth(y, smoothing);
  return out;
}

}  // namespace lookup3d
