#pragma once

// Folded-Gaussian distribution family: a Gaussian time marginal whose
// space-given-time conditional is Gaussian with a polynomially shifted mean
// and a likelihood-rescaled covariance. The joint is not Gaussian; its
// defining identities (unit mass, conditional recovery) are verifiable
// numerically and the verification routines live here alongside the
// densities.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "vgs/common.hpp"

namespace vgs {

/// 1D Gaussian with variance parameterization.
struct Gaussian1D {
  double mean = 0.0;
  double var = 1.0;
};

inline double gauss1d_pdf(double x, const Gaussian1D& g) {
  if (!(g.var > 0.0)) throw std::domain_error("gauss1d_pdf: var must be positive");
  if (!std::isfinite(x)) throw std::domain_error("gauss1d_pdf: non-finite x");
  const double d = x - g.mean;
  return std::exp(-0.5 * d * d / g.var) / std::sqrt(kTwoPi * g.var);
}

inline double gauss1d_log_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * d * d / var - 0.5 * std::log(kTwoPi * var);
}

/// Anisotropic 2D covariance parameterized by a rotation angle and the
/// standard deviations along the principal axes.
struct SpatialCov2 {
  double theta = 0.0; // radians in [0, 2*pi)
  double s1 = 1.0;    // stddev along first principal axis, > 0
  double s2 = 1.0;    // stddev along second principal axis, > 0

  /// Materialized covariance R(theta) * diag(s1^2, s2^2) * R(theta)^T.
  Sym2 matrix() const {
    const double c = std::cos(theta), s = std::sin(theta);
    const double v1 = s1 * s1, v2 = s2 * s2;
    return {c * c * v1 + s * s * v2, c * s * (v1 - v2), s * s * v1 + c * c * v2};
  }
};

/// Time-dependent shift f: R -> R^2 as a pair of polynomials with no constant
/// term, so f(0) = (0, 0). Coefficient p multiplies u^p for p = 1..degree.
struct PolyShift {
  std::vector<double> cx; // cx[p-1] multiplies u^p
  std::vector<double> cy;

  int degree() const { return static_cast<int>(cx.size()); }

  Vec2 eval(double u) const {
    // Horner on f(u)/u, then one multiply; exact polynomial evaluation.
    double ax = 0.0, ay = 0.0;
    for (int p = degree() - 1; p >= 0; --p) {
      ax = ax * u + cx[static_cast<size_t>(p)];
      ay = ay * u + cy[static_cast<size_t>(p)];
    }
    return {u * ax, u * ay};
  }

  /// Derivative f'(u).
  Vec2 deriv(double u) const {
    double ax = 0.0, ay = 0.0;
    for (int p = degree(); p >= 1; --p) {
      ax = ax * u + p * cx[static_cast<size_t>(p - 1)];
      ay = ay * u + p * cy[static_cast<size_t>(p - 1)];
    }
    return {ax, ay};
  }
};

/// Likelihood of the time variable scaled to (0, 1]: the Gaussian time
/// density normalized by its own mode. Equals 1 iff t == m_t.
inline double a_of_t(double t, double m_t, double sigma_t) {
  if (!(sigma_t > 0.0)) throw std::domain_error("a_of_t: sigma_t must be positive");
  const double z = (t - m_t) / sigma_t;
  return std::exp(-0.5 * z * z);
}

/// One video primitive: spatial base Gaussian, temporal Gaussian, polynomial
/// drift, and the render attributes shared across all of its slices.
struct FoldedGaussian3D {
  Vec2 m_s;
  SpatialCov2 cov_s;
  double m_t = 0.5;
  double sigma_t = 0.1;
  PolyShift poly;
  double opacity = 0.5; // in (0,1)
  Color3 color;

  void validate() const {
    if (!(cov_s.s1 > 0.0) || !(cov_s.s2 > 0.0))
      throw std::domain_error("FoldedGaussian3D: spatial scales must be positive");
    if (!(sigma_t > 0.0)) throw std::domain_error("FoldedGaussian3D: sigma_t must be positive");
    if (!(opacity > 0.0) || !(opacity < 1.0))
      throw std::domain_error("FoldedGaussian3D: opacity must lie in (0,1)");
  }
};

/// The flat Gaussian obtained by conditioning a FoldedGaussian3D at a fixed
/// time: covariance is scale * (base covariance), so `scale` is kept separate
/// to give optimizers a handle on the temporal factor.
struct ConditionedGaussian2D {
  Vec2 mean;
  double theta = 0.0;
  double s1 = 1.0;
  double s2 = 1.0;
  double scale = 1.0; // the a(t) factor; covariance = scale * R S S R^T
  double opacity = 0.5;
  Color3 color;

  Sym2 cov() const {
    Sym2 base = SpatialCov2{theta, s1, s2}.matrix();
    return {scale * base.xx, scale * base.xy, scale * base.yy};
  }

  double log_pdf(Vec2 s) const {
    const Sym2 c = cov();
    const double q = c.inverse().quad(s - mean);
    return -0.5 * q - std::log(kTwoPi) - 0.5 * std::log(c.det());
  }

  double pdf(Vec2 s) const { return std::exp(log_pdf(s)); }
};

/// Slice the folded Gaussian at time t: mean shifts by f(m_t - t), covariance
/// shrinks by a(t), opacity and color carry over unchanged.
inline ConditionedGaussian2D condition_at(const FoldedGaussian3D& fg, double t) {
  const Vec2 shift = fg.poly.eval(fg.m_t - t);
  return {fg.m_s + shift, fg.cov_s.theta, fg.cov_s.s1, fg.cov_s.s2,
          a_of_t(t, fg.m_t, fg.sigma_t), fg.opacity, fg.color};
}

inline double fg_log_density(const FoldedGaussian3D& fg, Vec2 s, double t) {
  const ConditionedGaussian2D g = condition_at(fg, t);
  return g.log_pdf(s) + gauss1d_log_pdf(t, fg.m_t, fg.sigma_t * fg.sigma_t);
}

/// Joint density: conditional spatial Gaussian at t times the time marginal.
inline double fg_density(const FoldedGaussian3D& fg, Vec2 s, double t) {
  return std::exp(fg_log_density(fg, s, t));
}

/// Draw (s, t) by the chain rule: t from the time marginal, then s from the
/// conditional at that t.
inline std::pair<Vec2, double> fg_sample(const FoldedGaussian3D& fg, Rng& rng) {
  const double t = rng.normal(fg.m_t, fg.sigma_t);
  const ConditionedGaussian2D g = condition_at(fg, t);
  const double c = std::cos(g.theta), sn = std::sin(g.theta);
  const double r = std::sqrt(g.scale);
  const double z1 = rng.normal() * g.s1 * r;
  const double z2 = rng.normal() * g.s2 * r;
  return {{g.mean.x + c * z1 - sn * z2, g.mean.y + sn * z1 + c * z2}, t};
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature (weight exp(-x^2)), used by the verification
// routines below.

struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Nodes/weights by Newton iteration on the orthonormal Hermite recurrence.
inline GaussHermite gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  GaussHermite gh;
  gh.nodes.assign(static_cast<size_t>(n), 0.0);
  gh.weights.assign(static_cast<size_t>(n), 0.0);
  const int m = (n + 1) / 2;
  const double pim4 = 0.7511255444649425; // pi^{-1/4}
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * gh.nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * gh.nodes[1];
    } else {
      z = 2.0 * z - gh.nodes[static_cast<size_t>(i - 2)];
    }
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = pim4, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
    }
    gh.nodes[static_cast<size_t>(i)] = z;
    gh.nodes[static_cast<size_t>(n - 1 - i)] = -z;
    gh.weights[static_cast<size_t>(i)] = 2.0 / (pp * pp);
    gh.weights[static_cast<size_t>(n - 1 - i)] = gh.weights[static_cast<size_t>(i)];
  }
  return gh;
}

namespace detail {

/// log N(mean, cov)(x) for cov = scale * R diag(s1^2,s2^2) R^T, composed from
/// primitives (kept separate from ConditionedGaussian2D so verification code
/// can spell out the proposal it integrates against).
inline double log_normal2(Vec2 x, Vec2 mean, double theta, double s1, double s2, double scale) {
  const double c = std::cos(theta), sn = std::sin(theta);
  const Vec2 d = x - mean;
  const double u1 = c * d.x + sn * d.y;
  const double u2 = -sn * d.x + c * d.y;
  const double q = (u1 * u1 / (s1 * s1) + u2 * u2 / (s2 * s2)) / scale;
  return -0.5 * q - std::log(kTwoPi) - 0.5 * std::log(scale * scale * s1 * s1 * s2 * s2);
}

} // namespace detail

struct NormalizationEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Importance-sampled estimate of the total integral of fg_density. The
/// proposal draws t from the exact time marginal and s from a conditional
/// widened by a factor 2 in covariance, which keeps the weight variance
/// finite (equal to 1/3 when the density is correctly normalized).
inline NormalizationEstimate normalization_estimate(const FoldedGaussian3D& fg,
                                                    std::size_t n_samples, Rng& rng) {
  if (n_samples < 10000)
    throw std::invalid_argument("normalization_estimate: need at least 1e4 samples");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = rng.normal(fg.m_t, fg.sigma_t);
    const ConditionedGaussian2D g = condition_at(fg, t);
    const double widen = std::sqrt(2.0 * g.scale);
    const double c = std::cos(g.theta), sn = std::sin(g.theta);
    const double z1 = rng.normal() * g.s1 * widen;
    const double z2 = rng.normal() * g.s2 * widen;
    const Vec2 s{g.mean.x + c * z1 - sn * z2, g.mean.y + sn * z1 + c * z2};
    const double log_q = detail::log_normal2(s, g.mean, g.theta, g.s1, g.s2, 2.0 * g.scale) +
                         gauss1d_log_pdf(t, fg.m_t, fg.sigma_t * fg.sigma_t);
    const double w = std::exp(fg_log_density(fg, s, t) - log_q);
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

/// Tensor-product Gauss-Hermite estimate of the total integral for the
/// separable case (no polynomial shift, axis-aligned covariance). Nodes come
/// from the unconditioned per-axis proposals; the integrand is the actual
/// density, so a mis-normalized density would not integrate to 1.
inline double normalization_quadrature_separable(const FoldedGaussian3D& fg, int n_points = 64) {
  for (int p = 0; p < fg.poly.degree(); ++p) {
    if (fg.poly.cx[static_cast<size_t>(p)] != 0.0 || fg.poly.cy[static_cast<size_t>(p)] != 0.0)
      throw std::invalid_argument("normalization_quadrature_separable: requires zero poly");
  }
  if (fg.cov_s.theta != 0.0)
    throw std::invalid_argument("normalization_quadrature_separable: requires theta = 0");
  const GaussHermite gh = gauss_hermite(n_points);
  const double sqrt_pi = std::sqrt(kPi);
  double total = 0.0;
  for (int i = 0; i < n_points; ++i) {
    const double t = fg.m_t + std::sqrt(2.0) * fg.sigma_t * gh.nodes[static_cast<size_t>(i)];
    const double a = a_of_t(t, fg.m_t, fg.sigma_t);
    // Inner 2D integral of the conditional slice against per-axis proposals
    // with the *conditioned* scales sqrt(a)*s.
    double inner = 0.0;
    const double l1 = std::sqrt(a) * fg.cov_s.s1;
    const double l2 = std::sqrt(a) * fg.cov_s.s2;
    for (int j = 0; j < n_points; ++j) {
      const double sx = fg.m_s.x + std::sqrt(2.0) * l1 * gh.nodes[static_cast<size_t>(j)];
      for (int k = 0; k < n_points; ++k) {
        const double sy = fg.m_s.y + std::sqrt(2.0) * l2 * gh.nodes[static_cast<size_t>(k)];
        const double xi2 = gh.nodes[static_cast<size_t>(j)] * gh.nodes[static_cast<size_t>(j)] +
                           gh.nodes[static_cast<size_t>(k)] * gh.nodes[static_cast<size_t>(k)];
        // slice density = joint / time marginal
        const double log_slice =
            fg_log_density(fg, {sx, sy}, t) - gauss1d_log_pdf(t, fg.m_t, fg.sigma_t * fg.sigma_t);
        inner += gh.weights[static_cast<size_t>(j)] * gh.weights[static_cast<size_t>(k)] *
                 std::exp(log_slice + xi2 + std::log(2.0 * l1 * l2));
      }
    }
    total += gh.weights[static_cast<size_t>(i)] / sqrt_pi * inner;
  }
  return total;
}

/// Residual of the conditional-recovery identity: the joint density divided
/// by its spatial integral at fixed t (computed by 2D quadrature) must equal
/// the conditional pdf. Returns |lhs - rhs|.
inline double conditional_consistency(const FoldedGaussian3D& fg, Vec2 s, double t,
                                      int n_points = 64) {
  const ConditionedGaussian2D g = condition_at(fg, t);
  const GaussHermite gh = gauss_hermite(n_points);
  const double c = std::cos(g.theta), sn = std::sin(g.theta);
  const double r = std::sqrt(g.scale);
  const double l1 = r * g.s1, l2 = r * g.s2;
  const double log_norm = std::log(2.0 * l1 * l2);
  double denom = 0.0;
  for (int j = 0; j < n_points; ++j) {
    const double z1 = std::sqrt(2.0) * l1 * gh.nodes[static_cast<size_t>(j)];
    for (int k = 0; k < n_points; ++k) {
      const double z2 = std::sqrt(2.0) * l2 * gh.nodes[static_cast<size_t>(k)];
      const Vec2 x{g.mean.x + c * z1 - sn * z2, g.mean.y + sn * z1 + c * z2};
      const double xi2 = gh.nodes[static_cast<size_t>(j)] * gh.nodes[static_cast<size_t>(j)] +
                         gh.nodes[static_cast<size_t>(k)] * gh.nodes[static_cast<size_t>(k)];
      denom += gh.weights[static_cast<size_t>(j)] * gh.weights[static_cast<size_t>(k)] *
               std::exp(fg_log_density(fg, x, t) + xi2 + log_norm);
    }
  }
  return std::abs(fg_density(fg, s, t) / denom - g.pdf(s));
}

} // namespace vgs
