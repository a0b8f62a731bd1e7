#pragma once

// Reproducing kernels whose sections solve the homogeneous Helmholtz equation:
//   kappa(r1, r2) = j_0( sqrt( (i rho eta - k (r1 - r2))^T (i rho eta - k (r1 - r2)) ) )
// which reduces to j_0(k |r1 - r2|) for rho = 0 (diffuse field). j_0 is even, so the branch of the
// square root does not matter.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "sfsep/field.hpp"
#include "sfsep/specfun.hpp"

namespace sfsep {

struct KernelSpec {
  Wavenumber k;
  double rho = 0.0;
  Eigen::Vector3d eta_pr = Eigen::Vector3d::UnitX();

  [[nodiscard]] static KernelSpec diffuse(Wavenumber k) { return {k, 0.0, Eigen::Vector3d::UnitX()}; }

  [[nodiscard]] static KernelSpec directional(Wavenumber k, double rho, const Eigen::Vector3d& eta) {
    KernelSpec spec{k, rho, eta};
    spec.validate();
    return spec;
  }

  void validate() const {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("kernel prior weight must be >= 0");
    if (rho > 0.0 && std::abs(eta_pr.norm() - 1.0) > 1e-12)
      throw std::invalid_argument("prior source direction must be a unit vector");
  }
};

[[nodiscard]] inline cplx kernel_eval(const KernelSpec& spec, const Position& r1, const Position& r2) {
  const Eigen::Vector3d d = r1 - r2;
  const double k = spec.k.value();
  if (spec.rho == 0.0) return {sph_bessel_j(0, k * d.norm()), 0.0};
  // (i rho eta - k d)^T (i rho eta - k d) = k^2 |d|^2 - rho^2 - 2 i rho k eta.d
  const cplx z2{k * k * d.squaredNorm() - spec.rho * spec.rho, -2.0 * spec.rho * k * spec.eta_pr.dot(d)};
  return sph_bessel_j0(std::sqrt(z2));
}

struct GramMatrix {
  CMatrix entries;
  std::vector<Position> mics;
  KernelSpec spec;

  [[nodiscard]] Eigen::Index size() const noexcept { return entries.rows(); }
};

[[nodiscard]] inline GramMatrix gram_matrix(const KernelSpec& spec, std::span<const Position> mics) {
  if (mics.empty()) throw std::invalid_argument("Gram matrix needs at least one microphone");
  spec.validate();
  const auto m = static_cast<Eigen::Index>(mics.size());
  GramMatrix g{CMatrix(m, m), {mics.begin(), mics.end()}, spec};
  for (Eigen::Index i = 0; i < m; ++i) {
    g.entries(i, i) = kernel_eval(spec, mics[i], mics[i]);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      g.entries(i, j) = kernel_eval(spec, mics[i], mics[j]);
      g.entries(j, i) = std::conj(g.entries(i, j));
    }
  }
  return g;
}

[[nodiscard]] inline CVector kernel_cross_vector(const KernelSpec& spec, const Position& r,
                                                 std::span<const Position> mics) {
  CVector v(static_cast<Eigen::Index>(mics.size()));
  for (std::size_t m = 0; m < mics.size(); ++m) v(static_cast<Eigen::Index>(m)) = kernel_eval(spec, r, mics[m]);
  return v;
}

// Rows are kernel_cross_vector at each evaluation point; reconstruction on a grid is one mat-vec.
[[nodiscard]] inline CMatrix kernel_cross_matrix(const KernelSpec& spec, std::span<const Position> points,
                                                 std::span<const Position> mics) {
  CMatrix e(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(mics.size()));
  for (std::size_t p = 0; p < points.size(); ++p)
    for (std::size_t m = 0; m < mics.size(); ++m)
      e(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(m)) = kernel_eval(spec, points[p], mics[m]);
  return e;
}

}  // namespace sfsep
