#pragma once

// Incident-field estimators.
//
//  * Kernel ridge regression: alpha = (K + lambda I)^{-1} s, u_inc(r) = sum_m alpha_m kappa(r, r_m).
//  * Joint estimator: minimises
//      J(alpha, u) = ||s - K alpha - Phi u||^2 + lambda1 alpha^H K alpha + lambda2 u^H W u
//    over kernel weights alpha and exterior expansion coefficients u, so that the scattered part of
//    the measurements is absorbed by Phi u and only the incident part enters alpha.
//
// The stationarity conditions
//      (K + lambda1 I) alpha + Phi u = s                       (d/d alpha*)
//      Phi^H K alpha + (Phi^H Phi + lambda2 W) u = Phi^H s     (d/d u*)
// are equivalent to the Hermitian saddle-point system
//      [ K + lambda1 I     Phi         ] [alpha]   [s]
//      [ Phi^H         -(lambda2/lambda1) W ] [  u  ] = [0]
// which is solved by block LDL^H elimination: A = K + lambda1 I is factored once per lambda1, and
// the Schur complement S = Phi^H A^{-1} Phi + (lambda2/lambda1) W once per pair. This never forms
// W^{-1}, so the smoothness weighting (whose (0,0) row and column vanish) is handled directly.

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfsep/errors.hpp"
#include "sfsep/field.hpp"
#include "sfsep/kernel.hpp"

namespace sfsep {

enum class Weighting { identity, smoothness };

[[nodiscard]] inline std::string to_string(Weighting w) { return w == Weighting::identity ? "I" : "W"; }

// Smallest order capturing a region of radius R: ceil(k R).
[[nodiscard]] inline int truncation_order(double frequency_hz, double region_radius,
                                          double sound_speed = kDefaultSoundSpeed) {
  return static_cast<int>(std::ceil(Wavenumber::from_frequency(frequency_hz, sound_speed).value() * region_radius));
}

namespace detail {

inline void require_regularization(double lambda, const char* name) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
}

inline void require_finite(const CMatrix& m, const char* what) {
  if (!m.allFinite()) throw SingularSystemError(std::string("non-finite values in ") + what);
}

}  // namespace detail

struct KrrFit {
  CVector alpha;
  double lambda = 0.0;
  KernelSpec kernel;
  std::vector<Position> mics;
};

[[nodiscard]] inline KrrFit krr_fit(const CVector& s, const GramMatrix& gram, double lambda) {
  detail::require_regularization(lambda, "lambda");
  if (s.size() != gram.size()) throw std::invalid_argument("measurement count does not match Gram matrix");
  if (!s.allFinite() || !gram.entries.allFinite()) throw SingularSystemError("non-finite KRR inputs");
  CMatrix a = gram.entries;
  a.diagonal().array() += lambda;
  Eigen::LDLT<CMatrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SingularSystemError("KRR factorization failed");
  CVector alpha = ldlt.solve(s);
  detail::require_finite(alpha, "KRR solution");
  return {std::move(alpha), lambda, gram.spec, gram.mics};
}

struct WeightingMatrix {
  CMatrix entries;
  Weighting mode = Weighting::smoothness;
  // Stacked derivative matrix D with W = D^H D, when known. Lets the solver diagonalise W through
  // the SVD of D, which resolves the null space of W far more accurately than W itself.
  CMatrix root;
  double shift = 0.0;  // entries = root^H root + shift I when root is present

  [[nodiscard]] int max_order() const {
    return static_cast<int>(std::lround(std::sqrt(static_cast<double>(entries.rows())))) - 1;
  }

  [[nodiscard]] WeightingMatrix plus_identity(double eps) const {
    WeightingMatrix out = *this;
    out.entries.diagonal().array() += eps;
    out.shift += eps;
    return out;
  }
};

// W = (dPhi/dtheta)^H (dPhi/dtheta) + (dPhi/dphi)^H (dPhi/dphi), so that
// u^H W u = sum_m |du_sct/dtheta(r_m)|^2 + |du_sct/dphi(r_m)|^2.
[[nodiscard]] inline WeightingMatrix weighting_matrix(std::span<const Position> mics, int max_order, Wavenumber k) {
  const CMatrix dtheta = expansion_matrix(mics, max_order, k, AngularPart::dtheta);
  const CMatrix dphi = expansion_matrix(mics, max_order, k, AngularPart::dphi);
  CMatrix root(dtheta.rows() + dphi.rows(), dtheta.cols());
  root << dtheta, dphi;
  CMatrix w = root.adjoint() * root;
  // Exact Hermitian symmetry; the product is Hermitian only up to rounding.
  w = (0.5 * (w + w.adjoint())).eval();
  return {std::move(w), Weighting::smoothness, std::move(root), 0.0};
}

[[nodiscard]] inline WeightingMatrix identity_weighting(int max_order) {
  return {CMatrix::Identity(mode_count(max_order), mode_count(max_order)), Weighting::identity, {}, 0.0};
}

struct JointDiagnostics {
  bool loaded = false;         // diagonal loading added because the block system was singular
  double loading = 0.0;        // epsilon added to the diagonal of W
  double residual_alpha = 0.0; // relative residual of the d/d alpha* condition
  double residual_u = 0.0;     // relative residual of the d/d u* condition
};

struct JointFit {
  CVector alpha_hat;
  CoefficientVector u_sct_hat;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  Weighting weighting = Weighting::smoothness;
  KernelSpec kernel;
  std::vector<Position> mics;
  JointDiagnostics diagnostics;
};

struct StationarityResiduals {
  double alpha = 0.0;
  double u = 0.0;
};

// Normwise backward errors of the two stationarity conditions: the residual norm divided by
// sum ||M|| ||x|| + ||b|| over the matrix-vector terms and right-hand side of that equation
// (Frobenius norms).
[[nodiscard]] inline StationarityResiduals stationarity_residuals(const CVector& s, const CMatrix& gram,
                                                                  const CMatrix& phi, const CMatrix& w,
                                                                  double lambda1, double lambda2,
                                                                  const CVector& alpha, const CVector& u) {
  const CVector k_alpha = gram * alpha;
  const CVector phi_u = phi * u;
  const CVector r1 = k_alpha + lambda1 * alpha + phi_u - s;
  const double d1 = (gram.norm() + lambda1) * alpha.norm() + phi.norm() * u.norm() + s.norm();

  const CMatrix phih = phi.adjoint();
  const CVector r2 = phih * phi_u + lambda2 * (w * u) - phih * s + phih * k_alpha;
  const double d2 = ((phih * phi).norm() + lambda2 * w.norm()) * u.norm() + (phih * gram).norm() * alpha.norm() +
                    (phih * s).norm();
  return {d1 > 0 ? r1.norm() / d1 : r1.norm(), d2 > 0 ? r2.norm() / d2 : r2.norm()};
}

[[nodiscard]] inline double joint_objective(const CVector& s, const CMatrix& gram, const CMatrix& phi,
                                            const CMatrix& w, double lambda1, double lambda2, const CVector& alpha,
                                            const CVector& u) {
  const CVector r = s - gram * alpha - phi * u;
  return r.squaredNorm() + lambda1 * alpha.dot(gram * alpha).real() + lambda2 * u.dot(w * u).real();
}

// Solves the joint problem for many (lambda1, lambda2) pairs over fixed measurements and geometry.
// W is diagonalised once, W = V diag(d) V^H, and the system is solved for z = V^H u, where the
// weighting term is an exact diagonal. Per-lambda1 work is captured in a Stage so that the lambda2
// sweep reuses it; the solver itself is immutable after construction and can be shared between
// threads.
class JointSolver {
 public:
  struct Stage {
    double lambda1 = 0.0;
    Eigen::LDLT<CMatrix> a_factor;
    CMatrix a_inv_phi;  // A^{-1} Phi V
    CMatrix schur_base; // (Phi V)^H A^{-1} Phi V
    CVector a_inv_s;    // A^{-1} s
    CVector phih_a_inv_s;
  };

  JointSolver(CVector s, GramMatrix gram, CMatrix phi, WeightingMatrix w)
      : s_(std::move(s)), gram_(std::move(gram)), phi_(std::move(phi)), w_(std::move(w)) {
    if (s_.size() != gram_.size() || phi_.rows() != s_.size())
      throw std::invalid_argument("measurement, Gram and expansion matrix sizes disagree");
    if (w_.entries.rows() != phi_.cols() || w_.entries.cols() != phi_.cols())
      throw std::invalid_argument("weighting matrix does not match the expansion order");
    if (w_.root.size() > 0 && w_.root.cols() != phi_.cols())
      throw std::invalid_argument("weighting root does not match the expansion order");
    if (!s_.allFinite() || !gram_.entries.allFinite() || !phi_.allFinite() || !w_.entries.allFinite() ||
        !w_.root.allFinite())
      throw SingularSystemError("non-finite joint-estimator inputs");
    max_order_ = static_cast<int>(std::lround(std::sqrt(static_cast<double>(phi_.cols())))) - 1;
    if (mode_count(max_order_) != phi_.cols()) throw std::invalid_argument("expansion matrix width is not (N+1)^2");
    diagonalise_weighting();
    load_if_singular();
    phi_v_ = basis_ ? CMatrix(phi_ * *basis_) : phi_;
  }

  [[nodiscard]] Stage prepare(double lambda1) const {
    detail::require_regularization(lambda1, "lambda1");
    Stage st;
    st.lambda1 = lambda1;
    CMatrix a = gram_.entries;
    a.diagonal().array() += lambda1;
    st.a_factor.compute(a);
    if (st.a_factor.info() != Eigen::Success) throw SingularSystemError("factorization of K + lambda1 I failed");
    st.a_inv_phi = st.a_factor.solve(phi_v_);
    st.a_inv_s = st.a_factor.solve(s_);
    st.schur_base = phi_v_.adjoint() * st.a_inv_phi;
    st.phih_a_inv_s = phi_v_.adjoint() * st.a_inv_s;
    detail::require_finite(st.schur_base, "Schur complement");
    return st;
  }

  [[nodiscard]] JointFit solve(const Stage& st, double lambda2) const {
    detail::require_regularization(lambda2, "lambda2");
    const double ratio = lambda2 / st.lambda1;
    CMatrix schur = st.schur_base;
    schur = (0.5 * (schur + schur.adjoint())).eval();
    schur.diagonal() += (ratio * diag_).cast<cplx>();
    // S is Hermitian positive definite whenever the block system is nonsingular. When rounding
    // makes it numerically singular (tiny lambda2/lambda1 with more coefficients than mics), the
    // components of z it cannot resolve lie along the null space of Phi and do not affect alpha,
    // so a rank-revealing minimum-norm solve is used.
    Eigen::LLT<CMatrix> llt(schur);
    std::optional<Eigen::CompleteOrthogonalDecomposition<CMatrix>> cod;
    if (llt.info() != Eigen::Success) cod.emplace(schur);
    const auto s_factor_solve = [&](const CVector& b) -> CVector {
      return cod ? CVector(cod->solve(b)) : CVector(llt.solve(b));
    };

    CVector z = s_factor_solve(st.phih_a_inv_s);
    CVector alpha = st.a_inv_s - st.a_inv_phi * z;

    // One step of iterative refinement on the rotated block system.
    const CVector r1 = s_ - (gram_.entries * alpha + st.lambda1 * alpha + phi_v_ * z);
    const CVector r2 = -(phi_v_.adjoint() * alpha - ratio * diag_.cast<cplx>().cwiseProduct(z));
    const CVector a_inv_r1 = st.a_factor.solve(r1);
    const CVector dz = s_factor_solve(phi_v_.adjoint() * a_inv_r1 - r2);
    const CVector dalpha = a_inv_r1 - st.a_inv_phi * dz;
    if (dalpha.allFinite() && dz.allFinite()) {
      alpha += dalpha;
      z += dz;
    }
    CVector u = basis_ ? CVector(*basis_ * z) : z;
    if (!alpha.allFinite() || !u.allFinite()) throw SingularSystemError("joint solution is not finite");

    const auto res = stationarity_residuals(s_, gram_.entries, phi_, w_.entries, st.lambda1, lambda2, alpha, u);
    JointFit fit{std::move(alpha),
                 CoefficientVector(max_order_, std::move(u)),
                 st.lambda1,
                 lambda2,
                 w_.mode,
                 gram_.spec,
                 gram_.mics,
                 {loaded_, loading_, res.alpha, res.u}};
    return fit;
  }

  [[nodiscard]] JointFit solve(double lambda1, double lambda2) const { return solve(prepare(lambda1), lambda2); }

  // W actually used by the solver (with diagonal loading if it was applied).
  [[nodiscard]] const CMatrix& weighting() const noexcept { return w_.entries; }
  [[nodiscard]] const CMatrix& expansion() const noexcept { return phi_; }
  [[nodiscard]] const GramMatrix& gram() const noexcept { return gram_; }
  [[nodiscard]] const CVector& measurements() const noexcept { return s_; }
  [[nodiscard]] bool loaded() const noexcept { return loaded_; }
  [[nodiscard]] double loading() const noexcept { return loading_; }

 private:
  void diagonalise_weighting() {
    const Eigen::Index n = w_.entries.rows();
    if (w_.entries == CMatrix::Identity(n, n)) {
      diag_ = Eigen::VectorXd::Ones(n);
      return;
    }
    if (w_.root.size() > 0) {
      Eigen::JacobiSVD<CMatrix> svd(w_.root, Eigen::ComputeFullV);
      diag_ = Eigen::VectorXd::Zero(n);
      const auto& sv = svd.singularValues();
      for (Eigen::Index i = 0; i < sv.size(); ++i) diag_(i) = sv(i) * sv(i);
      diag_.array() += w_.shift;
      basis_ = svd.matrixV();
      return;
    }
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(w_.entries);
    if (eig.info() != Eigen::Success) throw SingularSystemError("weighting matrix eigendecomposition failed");
    diag_ = eig.eigenvalues().cwiseMax(0.0);
    basis_ = eig.eigenvectors();
  }

  // The block system is singular iff some u != 0 has Phi u = 0 and W u = 0, i.e. iff
  // Phi^H Phi + W is singular (after balancing the two terms).
  void load_if_singular() {
    const CMatrix phi_v = basis_ ? CMatrix(phi_ * *basis_) : phi_;
    const CMatrix gram_phi = phi_v.adjoint() * phi_v;
    const double pn = gram_phi.norm();
    const double wn = diag_.norm();
    if (wn == 0.0) {
      apply_loading();
      return;
    }
    CMatrix g = gram_phi / (pn > 0 ? pn : 1.0);
    g.diagonal() += (diag_ / wn).cast<cplx>();
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(g, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    if (ev.minCoeff() <= 1e-12 * ev.maxCoeff()) apply_loading();
  }

  void apply_loading() {
    const double trace = w_.entries.trace().real();
    loading_ = 1e-10 * (trace > 0 ? trace : 1.0) / static_cast<double>(w_.entries.rows());
    w_.entries.diagonal().array() += loading_;
    w_.shift += loading_;
    diag_.array() += loading_;
    loaded_ = true;
  }

  CVector s_;
  GramMatrix gram_;
  CMatrix phi_;
  WeightingMatrix w_;
  std::optional<CMatrix> basis_;  // V; absent for the identity weighting
  Eigen::VectorXd diag_;          // d
  CMatrix phi_v_;                 // Phi V
  int max_order_ = 0;
  bool loaded_ = false;
  double loading_ = 0.0;
};

[[nodiscard]] inline JointFit joint_fit(const CVector& s, const GramMatrix& gram, const CMatrix& phi,
                                        const WeightingMatrix& w, double lambda1, double lambda2) {
  detail::require_regularization(lambda1, "lambda1");
  detail::require_regularization(lambda2, "lambda2");
  return JointSolver(s, gram, phi, w).solve(lambda1, lambda2);
}

// alpha = (K + lambda1 I + (lambda1/lambda2) Phi W^{-1} Phi^H)^{-1} s. Requires an invertible W;
// kept as an independent route for cross-checking the block solver. With a nearly singular W the
// W^{-1} step loses digits in double precision, so the complex scalar type is selectable.
template <class C = cplx>
[[nodiscard]] CVector joint_alpha_closed_form(const CVector& s, const CMatrix& gram, const CMatrix& phi,
                                              const CMatrix& w, double lambda1, double lambda2) {
  detail::require_regularization(lambda1, "lambda1");
  detail::require_regularization(lambda2, "lambda2");
  using M = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
  using V = Eigen::Matrix<C, Eigen::Dynamic, 1>;
  const auto up = [](const auto& m) { return m.unaryExpr([](const cplx& z) { return C(z.real(), z.imag()); }).eval(); };
  const M phi_r = up(phi);
  Eigen::LDLT<M> w_factor(up(w));
  if (w_factor.info() != Eigen::Success) throw SingularSystemError("weighting matrix is not invertible");
  M a = up(gram) + C(lambda1 / lambda2) * (phi_r * w_factor.solve(M(phi_r.adjoint())));
  for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, i) += C(lambda1);
  a = (C(0.5) * (a + a.adjoint())).eval();
  Eigen::LDLT<M> a_factor(a);
  if (a_factor.info() != Eigen::Success) throw SingularSystemError("closed-form system factorization failed");
  const V alpha_r = a_factor.solve(V(up(s)));
  CVector alpha(alpha_r.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i)
    alpha(i) = {static_cast<double>(real(alpha_r(i))), static_cast<double>(imag(alpha_r(i)))};
  detail::require_finite(alpha, "closed-form solution");
  return alpha;
}

namespace detail {

inline cplx weighted_kernel_sum(const KernelSpec& spec, std::span<const Position> mics, const CVector& alpha,
                                const Position& r) {
  cplx sum{};
  for (std::size_t m = 0; m < mics.size(); ++m) sum += alpha(static_cast<Eigen::Index>(m)) * kernel_eval(spec, r, mics[m]);
  return sum;
}

}  // namespace detail

[[nodiscard]] inline cplx reconstruct_incident(const KrrFit& fit, const Position& r) {
  return detail::weighted_kernel_sum(fit.kernel, fit.mics, fit.alpha, r);
}

[[nodiscard]] inline cplx reconstruct_incident(const JointFit& fit, const Position& r) {
  return detail::weighted_kernel_sum(fit.kernel, fit.mics, fit.alpha_hat, r);
}

[[nodiscard]] inline cplx reconstruct_scattering(const JointFit& fit, const Position& r) {
  const auto s = detail::require_off_origin(r);
  const int order = fit.u_sct_hat.max_order;
  const auto h = sph_hankel2_all(order, fit.kernel.k.value() * s.r);
  const auto y = sph_harmonics_all(order, s.theta, s.phi);
  cplx sum{};
  for (int n = 0; n < mode_count(order); ++n)
    sum += fit.u_sct_hat.values(n) * kSqrt4Pi * h[ModeIndex::from_flat(n).nu] * y[n];
  return sum;
}

}  // namespace sfsep
