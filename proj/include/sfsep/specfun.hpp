#pragma once

// Spherical Bessel/Hankel functions and orthonormal complex spherical harmonics.
//
// Harmonic convention: Y_{nu,mu}(theta, phi) = N_{nu,mu} P_nu^mu(cos theta) e^{i mu phi}, orthonormal
// on the unit sphere, Condon-Shortley phase included in P_nu^mu, and
// Y_{nu,-mu} = (-1)^mu conj(Y_{nu,mu}).

#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "sfsep/errors.hpp"

namespace sfsep {

using cplx = std::complex<double>;

inline constexpr double kPoleGuard = 1e-9;

struct ModeIndex {
  int nu = 0;
  int mu = 0;

  [[nodiscard]] constexpr bool valid() const noexcept { return nu >= 0 && mu >= -nu && mu <= nu; }
  [[nodiscard]] constexpr int flat() const noexcept { return nu * nu + nu + mu; }

  [[nodiscard]] static ModeIndex from_flat(int n) {
    if (n < 0) throw std::invalid_argument("negative flat mode index");
    int nu = static_cast<int>(std::sqrt(static_cast<double>(n)));
    while (nu * nu > n) --nu;
    while ((nu + 1) * (nu + 1) <= n) ++nu;
    return {nu, n - nu * nu - nu};
  }

  friend constexpr bool operator==(ModeIndex, ModeIndex) = default;
};

// Number of modes with nu <= max_order.
[[nodiscard]] constexpr int mode_count(int max_order) noexcept { return (max_order + 1) * (max_order + 1); }

namespace detail {

inline void require_mode(ModeIndex m) {
  if (!m.valid()) throw std::invalid_argument("invalid spherical-harmonic mode index");
}

inline double j0_real(double x) {
  if (std::abs(x) < 1e-4) return 1.0 - x * x / 6.0 + x * x * x * x / 120.0;
  return std::sin(x) / x;
}

inline double j1_real(double x) {
  if (std::abs(x) < 1e-2) {
    const double x2 = x * x;
    return x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0 * (1.0 - x2 / 54.0)));
  }
  return (std::sin(x) / x - std::cos(x)) / x;
}

// Miller downward recurrence, normalised with sum_n (2n+1) j_n(x)^2 = 1; accurate for x < order.
inline void bessel_j_downward(int order, double x, std::vector<double>& out) {
  const int start = order + 20 + static_cast<int>(std::sqrt(40.0 * (order + x))) + static_cast<int>(x);
  double next = 0.0;
  double cur = 1e-30;
  double sum = 0.0;
  for (int n = start; n >= 0; --n) {
    if (n <= order) out[n] = cur;
    sum += (2.0 * n + 1.0) * cur * cur;
    if (n == 0) break;
    const double prev = (2.0 * n + 1.0) / x * cur - next;
    next = cur;
    cur = prev;
    if (std::abs(cur) > 1e100) {
      cur *= 1e-100;
      next *= 1e-100;
      sum *= 1e-200;
      for (int i = n; i <= order; ++i) out[i] *= 1e-100;
    }
  }
  double scale = 1.0 / std::sqrt(sum);
  // Fix the sign from whichever low-order closed form is better conditioned.
  const double j0 = j0_real(x);
  if (std::abs(j0) > 0.1 || order == 0) {
    if ((j0 < 0) != (out[0] < 0)) scale = -scale;
  } else {
    const double f1 = order >= 1 ? out[1] : 0.0;
    if ((j1_real(x) < 0) != (f1 < 0)) scale = -scale;
  }
  for (int n = 0; n <= order; ++n) out[n] *= scale;
}

}  // namespace detail

// j_0(x) .. j_order(x).
[[nodiscard]] inline std::vector<double> sph_bessel_j_all(int order, double x) {
  if (order < 0) throw std::invalid_argument("negative Bessel order");
  if (!(x >= 0.0)) throw DomainError("spherical Bessel j requires x >= 0");
  std::vector<double> out(static_cast<std::size_t>(order) + 1, 0.0);
  if (x == 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (x < 1e-6) {
    // Two-term power series; the recurrences lose everything this close to the origin.
    double lead = 1.0;
    for (int n = 0; n <= order; ++n) {
      if (n > 0) lead *= x / (2.0 * n + 1.0);
      out[n] = lead * (1.0 - x * x / (2.0 * (2.0 * n + 3.0)));
    }
    return out;
  }
  if (x < order) {
    detail::bessel_j_downward(order, x, out);
    return out;
  }
  out[0] = detail::j0_real(x);
  if (order >= 1) out[1] = detail::j1_real(x);
  for (int n = 1; n < order; ++n) out[n + 1] = (2.0 * n + 1.0) / x * out[n] - out[n - 1];
  return out;
}

[[nodiscard]] inline double sph_bessel_j(int nu, double x) { return sph_bessel_j_all(nu, x)[nu]; }

// y_0(x) .. y_order(x) by upward recurrence (stable for the second kind).
[[nodiscard]] inline std::vector<double> sph_bessel_y_all(int order, double x) {
  if (order < 0) throw std::invalid_argument("negative Bessel order");
  if (!(x > 0.0)) throw DomainError("spherical Bessel y requires x > 0");
  std::vector<double> out(static_cast<std::size_t>(order) + 1);
  const double s = std::sin(x);
  const double c = std::cos(x);
  out[0] = -c / x;
  if (order >= 1) out[1] = -c / (x * x) - s / x;
  for (int n = 1; n < order; ++n) out[n + 1] = (2.0 * n + 1.0) / x * out[n] - out[n - 1];
  return out;
}

[[nodiscard]] inline double sph_bessel_y(int nu, double x) { return sph_bessel_y_all(nu, x)[nu]; }

// h^(2)_0(x) .. h^(2)_order(x) = j - i y.
[[nodiscard]] inline std::vector<cplx> sph_hankel2_all(int order, double x) {
  if (!(x > 0.0)) throw DomainError("spherical Hankel function diverges at x = 0");
  const auto j = sph_bessel_j_all(order, x);
  const auto y = sph_bessel_y_all(order, x);
  std::vector<cplx> out(j.size());
  for (std::size_t n = 0; n < j.size(); ++n) out[n] = {j[n], -y[n]};
  return out;
}

[[nodiscard]] inline cplx sph_hankel2(int nu, double x) { return sph_hankel2_all(nu, x)[nu]; }

// Derivatives f'_n = f_{n-1} - (n+1)/x f_n (f'_0 = -f_1) from values f_0..f_{order+1}.
template <class T>
[[nodiscard]] std::vector<T> sph_derivatives_from(const std::vector<T>& f, double x) {
  std::vector<T> d(f.size() - 1);
  d[0] = -f[1];
  for (std::size_t n = 1; n < d.size(); ++n) d[n] = f[n - 1] - (static_cast<double>(n) + 1.0) / x * f[n];
  return d;
}

[[nodiscard]] inline std::vector<double> sph_bessel_j_derivative_all(int order, double x) {
  if (x == 0.0) {
    std::vector<double> d(static_cast<std::size_t>(order) + 1, 0.0);
    if (order >= 1) d[1] = 1.0 / 3.0;
    return d;
  }
  return sph_derivatives_from(sph_bessel_j_all(order + 1, x), x);
}

[[nodiscard]] inline std::vector<double> sph_bessel_y_derivative_all(int order, double x) {
  return sph_derivatives_from(sph_bessel_y_all(order + 1, x), x);
}

[[nodiscard]] inline std::vector<cplx> sph_hankel2_derivative_all(int order, double x) {
  return sph_derivatives_from(sph_hankel2_all(order + 1, x), x);
}

// Complex j_0(z) = sin(z)/z, continued analytically; series near the origin.
[[nodiscard]] inline cplx sph_bessel_j0(cplx z) {
  if (std::abs(z) < 1e-4) {
    const cplx z2 = z * z;
    return 1.0 - z2 / 6.0 + z2 * z2 / 120.0;
  }
  return std::sin(z) / z;
}

// Orthonormalised associated Legendre values Pbar_{nu}^{mu}(cos theta) for 0 <= mu <= nu <= max_order,
// such that Y_{nu,mu} = Pbar e^{i mu phi}. Stored at flat index of (nu, mu).
[[nodiscard]] inline std::vector<double> normalized_legendre_all(int max_order, double theta) {
  const double x = std::cos(theta);
  const double s = std::sin(theta);
  std::vector<double> p(static_cast<std::size_t>(mode_count(max_order)), 0.0);
  auto at = [&](int l, int m) -> double& { return p[static_cast<std::size_t>(ModeIndex{l, m}.flat())]; };
  double pmm = 0.5 / std::sqrt(std::numbers::pi);
  for (int m = 0; m <= max_order; ++m) {
    if (m > 0) pmm *= -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s;
    at(m, m) = pmm;
    if (m + 1 <= max_order) at(m + 1, m) = x * std::sqrt(2.0 * m + 3.0) * pmm;
    for (int l = m + 2; l <= max_order; ++l) {
      const double l2 = static_cast<double>(l) * l;
      const double m2 = static_cast<double>(m) * m;
      const double a = std::sqrt((4.0 * l2 - 1.0) / (l2 - m2));
      const double b = std::sqrt(((l - 1.0) * (l - 1.0) - m2) / (4.0 * (l - 1.0) * (l - 1.0) - 1.0));
      at(l, m) = a * (x * at(l - 1, m) - b * at(l - 2, m));
    }
  }
  return p;
}

// All Y_{nu,mu}(theta, phi) with nu <= max_order, in flat-index order.
[[nodiscard]] inline std::vector<cplx> sph_harmonics_all(int max_order, double theta, double phi) {
  const auto p = normalized_legendre_all(max_order, theta);
  std::vector<cplx> y(p.size());
  for (int l = 0; l <= max_order; ++l) {
    for (int m = 0; m <= l; ++m) {
      const cplx pos = p[ModeIndex{l, m}.flat()] * std::polar(1.0, m * phi);
      y[ModeIndex{l, m}.flat()] = pos;
      if (m > 0) y[ModeIndex{l, -m}.flat()] = (m % 2 == 0 ? 1.0 : -1.0) * std::conj(pos);
    }
  }
  return y;
}

[[nodiscard]] inline cplx sph_harmonic(ModeIndex m, double theta, double phi) {
  detail::require_mode(m);
  return sph_harmonics_all(m.nu, theta, phi)[m.flat()];
}

// dY/dtheta = mu cot(theta) Y_{nu,mu} + sqrt((nu-mu)(nu+mu+1)) e^{-i phi} Y_{nu,mu+1}; the second
// term is absent when mu = nu. Throws PoleProximityError when sin(theta) < kPoleGuard.
[[nodiscard]] inline std::vector<cplx> sph_harmonics_dtheta_all(int max_order, double theta, double phi) {
  const double s = std::sin(theta);
  if (std::abs(s) < kPoleGuard) throw PoleProximityError("theta derivative requested within the pole guard band");
  const double cot = std::cos(theta) / s;
  const auto y = sph_harmonics_all(max_order, theta, phi);
  const cplx phase = std::polar(1.0, -phi);
  std::vector<cplx> d(y.size());
  for (int l = 0; l <= max_order; ++l) {
    for (int m = -l; m <= l; ++m) {
      cplx v = static_cast<double>(m) * cot * y[ModeIndex{l, m}.flat()];
      if (m < l) v += std::sqrt(static_cast<double>((l - m) * (l + m + 1))) * phase * y[ModeIndex{l, m + 1}.flat()];
      d[ModeIndex{l, m}.flat()] = v;
    }
  }
  return d;
}

[[nodiscard]] inline cplx sph_harmonic_dtheta(ModeIndex m, double theta, double phi) {
  detail::require_mode(m);
  return sph_harmonics_dtheta_all(m.nu, theta, phi)[m.flat()];
}

[[nodiscard]] inline cplx sph_harmonic_dphi(ModeIndex m, double theta, double phi) {
  detail::require_mode(m);
  return cplx{0.0, static_cast<double>(m.mu)} * sph_harmonic(m, theta, phi);
}

// Legendre polynomials P_0(x) .. P_order(x).
[[nodiscard]] inline std::vector<double> legendre_all(int order, double x) {
  std::vector<double> p(static_cast<std::size_t>(order) + 1);
  p[0] = 1.0;
  if (order >= 1) p[1] = x;
  for (int n = 1; n < order; ++n) p[n + 1] = ((2.0 * n + 1.0) * x * p[n] - n * p[n - 1]) / (n + 1.0);
  return p;
}

}  // namespace sfsep
