#pragma once

// Interior/exterior spherical wave functions, the exterior expansion matrix and its angular
// derivatives, and closed-form ground-truth fields (free-field point source, rigid sphere).
//
// Time convention e^{+i omega t}: outgoing waves are e^{-ikr}/r and use h^(2). Every expansion is
// centred at the origin, which is also the centre of the scatterer.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "sfsep/errors.hpp"
#include "sfsep/specfun.hpp"

namespace sfsep {

using Position = Eigen::Vector3d;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kDefaultSoundSpeed = 343.0;

struct SphericalCoord {
  double r = 0.0;
  double theta = 0.0;  // zenith, [0, pi]
  double phi = 0.0;    // azimuth, [0, 2 pi)
};

[[nodiscard]] inline SphericalCoord to_spherical(const Position& p) {
  const double r = p.norm();
  if (r == 0.0) return {};
  double phi = std::atan2(p.y(), p.x());
  if (phi < 0.0) phi += 2.0 * std::numbers::pi;
  if (phi >= 2.0 * std::numbers::pi) phi = 0.0;
  return {r, std::acos(std::clamp(p.z() / r, -1.0, 1.0)), phi};
}

[[nodiscard]] inline Position to_cartesian(const SphericalCoord& s) {
  const double st = std::sin(s.theta);
  return {s.r * st * std::cos(s.phi), s.r * st * std::sin(s.phi), s.r * std::cos(s.theta)};
}

class Wavenumber {
 public:
  explicit Wavenumber(double k) : k_(k) {
    if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("wavenumber must be positive and finite");
  }
  [[nodiscard]] static Wavenumber from_frequency(double frequency_hz, double sound_speed = kDefaultSoundSpeed) {
    return Wavenumber(2.0 * std::numbers::pi * frequency_hz / sound_speed);
  }
  [[nodiscard]] double value() const noexcept { return k_; }

 private:
  double k_;
};

// Expansion coefficients ordered by flat index nu^2 + nu + mu.
struct CoefficientVector {
  int max_order = 0;
  CVector values = CVector::Zero(1);

  CoefficientVector() = default;
  CoefficientVector(int order, CVector v) : max_order(order), values(std::move(v)) {
    if (order < 0 || values.size() != mode_count(order))
      throw std::invalid_argument("coefficient vector length must equal (N+1)^2");
  }
  [[nodiscard]] static CoefficientVector zeros(int order) { return {order, CVector::Zero(mode_count(order))}; }
  [[nodiscard]] cplx operator[](ModeIndex m) const { return values(m.flat()); }
};

inline const double kSqrt4Pi = std::sqrt(4.0 * std::numbers::pi);

[[nodiscard]] inline cplx interior_wavefunction(ModeIndex m, Wavenumber k, const Position& r) {
  detail::require_mode(m);
  const auto s = to_spherical(r);
  if (s.r == 0.0) return m.nu == 0 ? cplx{1.0} : cplx{0.0};
  return kSqrt4Pi * sph_bessel_j(m.nu, k.value() * s.r) * sph_harmonic(m, s.theta, s.phi);
}

namespace detail {

inline SphericalCoord require_off_origin(const Position& r) {
  const auto s = to_spherical(r);
  if (!(s.r > 0.0)) throw DomainError("exterior wave function is singular at the expansion centre");
  return s;
}

}  // namespace detail

[[nodiscard]] inline cplx exterior_wavefunction(ModeIndex m, Wavenumber k, const Position& r) {
  detail::require_mode(m);
  const auto s = detail::require_off_origin(r);
  return kSqrt4Pi * sph_hankel2(m.nu, k.value() * s.r) * sph_harmonic(m, s.theta, s.phi);
}

[[nodiscard]] inline cplx exterior_wavefunction_dtheta(ModeIndex m, Wavenumber k, const Position& r) {
  detail::require_mode(m);
  const auto s = detail::require_off_origin(r);
  return kSqrt4Pi * sph_hankel2(m.nu, k.value() * s.r) * sph_harmonic_dtheta(m, s.theta, s.phi);
}

[[nodiscard]] inline cplx exterior_wavefunction_dphi(ModeIndex m, Wavenumber k, const Position& r) {
  detail::require_mode(m);
  const auto s = detail::require_off_origin(r);
  return kSqrt4Pi * sph_hankel2(m.nu, k.value() * s.r) * sph_harmonic_dphi(m, s.theta, s.phi);
}

enum class AngularPart { value, dtheta, dphi };

// M x (N+1)^2 matrix of exterior wave functions (or one of their angular derivatives) at the mics.
[[nodiscard]] inline CMatrix expansion_matrix(std::span<const Position> mics, int max_order, Wavenumber k,
                                              AngularPart part = AngularPart::value) {
  if (max_order < 0) throw std::invalid_argument("negative truncation order");
  const int cols = mode_count(max_order);
  CMatrix phi(static_cast<Eigen::Index>(mics.size()), cols);
  for (std::size_t row = 0; row < mics.size(); ++row) {
    const auto s = detail::require_off_origin(mics[row]);
    const auto h = sph_hankel2_all(max_order, k.value() * s.r);
    std::vector<cplx> y;
    switch (part) {
      case AngularPart::value: y = sph_harmonics_all(max_order, s.theta, s.phi); break;
      case AngularPart::dtheta: y = sph_harmonics_dtheta_all(max_order, s.theta, s.phi); break;
      case AngularPart::dphi:
        y = sph_harmonics_all(max_order, s.theta, s.phi);
        for (int n = 0; n < cols; ++n) y[n] *= cplx{0.0, static_cast<double>(ModeIndex::from_flat(n).mu)};
        break;
    }
    for (int n = 0; n < cols; ++n)
      phi(static_cast<Eigen::Index>(row), n) = kSqrt4Pi * h[ModeIndex::from_flat(n).nu] * y[n];
  }
  return phi;
}

// Free-field Green's function e^{-ik|r-src|} / (4 pi |r-src|).
[[nodiscard]] inline cplx point_source_field(const Position& src, Wavenumber k, const Position& r) {
  const double d = (r - src).norm();
  if (!(d > 0.0)) throw DomainError("point source field is singular at the source");
  return std::polar(1.0, -k.value() * d) / (4.0 * std::numbers::pi * d);
}

// Gradient dotted with a unit direction; used for Neumann checks.
[[nodiscard]] inline cplx point_source_directional_derivative(const Position& src, Wavenumber k, const Position& r,
                                                              const Position& direction) {
  const Position diff = r - src;
  const double d = diff.norm();
  if (!(d > 0.0)) throw DomainError("point source field is singular at the source");
  const cplx g = std::polar(1.0, -k.value() * d) / (4.0 * std::numbers::pi * d);
  return g * cplx{-1.0 / d, -k.value()} * diff.dot(direction) / d;
}

// Scattered field of a point source by a sound-hard sphere of radius a centred at the origin.
// For |r| < |src| the incident field is sum_nu A_nu j_nu(kr) P_nu(cos gamma) with
// A_nu = -ik (2nu+1)/(4 pi) h_nu(k|src|); the scattered field replaces j_nu(kr) by
// -j'_nu(ka)/h'_nu(ka) h_nu(kr), which zeroes the total radial derivative on |r| = a.
class RigidSphereScattering {
 public:
  RigidSphereScattering(const Position& src, double radius, Wavenumber k) : src_(src), a_(radius), k_(k) {
    if (!(radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
    src_dist_ = src.norm();
    if (!(src_dist_ > radius)) throw DomainError("source inside the rigid sphere");
    src_dir_ = src / src_dist_;

    const double kv = k.value();
    const int min_order = static_cast<int>(std::ceil(kv * src_dist_)) + 20;
    // Grow the series until the on-surface term (the slowest-decaying case r = a) is negligible.
    for (int order = min_order; order <= kMaxOrder; order += 10) {
      const auto hs = sph_hankel2_all(order, kv * src_dist_);
      const auto ha = sph_hankel2_all(order, kv * a_);
      const auto dj = sph_bessel_j_derivative_all(order, kv * a_);
      const auto dh = sph_hankel2_derivative_all(order, kv * a_);
      coeff_.assign(static_cast<std::size_t>(order) + 1, cplx{});
      cplx partial{};
      double last = 0.0;
      for (int n = 0; n <= order; ++n) {
        const cplx ratio = std::isfinite(std::abs(dh[n])) ? -dj[n] / dh[n] : cplx{};
        coeff_[n] = cplx{0.0, -kv} * (2.0 * n + 1.0) / (4.0 * std::numbers::pi) * hs[n] * ratio;
        const cplx term = coeff_[n] * ha[n];
        last = std::isfinite(std::abs(term)) ? std::abs(term) : 0.0;
        if (std::isfinite(std::abs(term))) partial += term;
      }
      if (last <= 1e-12 * std::abs(partial) || last == 0.0) return;
    }
    throw DomainError("rigid-sphere series failed to converge");
  }

  [[nodiscard]] int order() const noexcept { return static_cast<int>(coeff_.size()) - 1; }
  [[nodiscard]] double radius() const noexcept { return a_; }

  [[nodiscard]] cplx field(const Position& r) const {
    const auto [rn, cg] = geometry(r);
    const auto h = sph_hankel2_all(order(), k_.value() * rn);
    const auto p = legendre_all(order(), cg);
    cplx sum{};
    for (int n = order(); n >= 0; --n) {
      const cplx t = coeff_[n] * h[n] * p[n];
      if (std::isfinite(std::abs(t))) sum += t;
    }
    return sum;
  }

  [[nodiscard]] cplx radial_derivative(const Position& r) const {
    const auto [rn, cg] = geometry(r);
    const auto dh = sph_hankel2_derivative_all(order(), k_.value() * rn);
    const auto p = legendre_all(order(), cg);
    cplx sum{};
    for (int n = order(); n >= 0; --n) {
      const cplx t = coeff_[n] * k_.value() * dh[n] * p[n];
      if (std::isfinite(std::abs(t))) sum += t;
    }
    return sum;
  }

 private:
  static constexpr int kMaxOrder = 400;

  [[nodiscard]] std::pair<double, double> geometry(const Position& r) const {
    const double rn = r.norm();
    if (rn < a_ * (1.0 - 1e-12)) throw DomainError("scattered field evaluated inside the rigid sphere");
    return {rn, std::clamp(r.dot(src_dir_) / rn, -1.0, 1.0)};
  }

  Position src_;
  Position src_dir_;
  double src_dist_ = 0.0;
  double a_;
  Wavenumber k_;
  std::vector<cplx> coeff_;
};

[[nodiscard]] inline cplx rigid_sphere_scattered_field(const Position& src, double radius, Wavenumber k,
                                                       const Position& r) {
  return RigidSphereScattering(src, radius, k).field(r);
}

// Noise-free pressure at each mic: point source plus (when scatterer_radius > 0) the rigid-sphere field.
[[nodiscard]] inline CVector total_pressure(std::span<const Position> mics, const Position& src,
                                            double scatterer_radius, Wavenumber k) {
  CVector p(static_cast<Eigen::Index>(mics.size()));
  std::optional<RigidSphereScattering> sphere;
  if (scatterer_radius > 0.0) sphere.emplace(src, scatterer_radius, k);
  for (std::size_t m = 0; m < mics.size(); ++m) {
    if (sphere && mics[m].norm() <= scatterer_radius) throw DomainError("microphone inside the scatterer");
    p(static_cast<Eigen::Index>(m)) = point_source_field(src, k, mics[m]) + (sphere ? sphere->field(mics[m]) : cplx{});
  }
  return p;
}

// Adds i.i.d. circular complex Gaussian noise whose power is mean|p|^2 / 10^(snr/10).
// An infinite SNR returns the input unchanged.
[[nodiscard]] inline CVector add_sensor_noise(const CVector& clean, double snr_db, std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0) return clean;
  if (std::isnan(snr_db)) throw std::invalid_argument("SNR must not be NaN");
  const double signal_power = clean.squaredNorm() / static_cast<double>(clean.size());
  const double sigma = std::sqrt(signal_power / std::pow(10.0, snr_db / 10.0) / 2.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CVector noisy = clean;
  for (Eigen::Index m = 0; m < noisy.size(); ++m) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    noisy(m) += sigma * cplx{re, im};
  }
  return noisy;
}

[[nodiscard]] inline CVector synthesize_measurements(std::span<const Position> mics, const Position& src,
                                                     double scatterer_radius, Wavenumber k, double snr_db,
                                                     std::uint64_t noise_seed) {
  return add_sensor_noise(total_pressure(mics, src, scatterer_radius, k), snr_db, noise_seed);
}

}  // namespace sfsep
