#pragma once

// Shared helpers for the test suites: random component generators and
// independent reference math kept deliberately separate from the library
// implementation paths they check.

#include <cmath>
#include <vector>

#include "vgs/foldgauss.hpp"
#include "vgs/model.hpp"

namespace testsup {

/// Reference 1D normal pdf, written out independently of the library.
inline double ref_normal1(double x, double mean, double var) {
  return std::exp(-(x - mean) * (x - mean) / (2.0 * var)) /
         std::sqrt(2.0 * 3.14159265358979323846 * var);
}

/// Reference 2D normal pdf from explicit covariance entries.
inline double ref_normal2(double x, double y, double mx, double my, double cxx, double cxy,
                          double cyy) {
  const double det = cxx * cyy - cxy * cxy;
  const double dx = x - mx, dy = y - my;
  const double q = (cyy * dx * dx - 2.0 * cxy * dx * dy + cxx * dy * dy) / det;
  return std::exp(-0.5 * q) / (2.0 * 3.14159265358979323846 * std::sqrt(det));
}

/// Random folded Gaussian with a degree-`deg` polynomial shift.
inline vgs::FoldedGaussian3D random_fg(vgs::Rng& rng, int deg = 7) {
  vgs::FoldedGaussian3D fg;
  fg.m_s = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
  fg.cov_s.theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  fg.cov_s.s1 = rng.uniform(0.2, 1.5);
  fg.cov_s.s2 = rng.uniform(0.2, 1.5);
  fg.m_t = rng.uniform(0.2, 0.8);
  fg.sigma_t = rng.uniform(0.05, 0.5);
  fg.poly.cx.resize(static_cast<size_t>(deg));
  fg.poly.cy.resize(static_cast<size_t>(deg));
  for (int p = 0; p < deg; ++p) {
    fg.poly.cx[static_cast<size_t>(p)] = rng.uniform(-1.0, 1.0);
    fg.poly.cy[static_cast<size_t>(p)] = rng.uniform(-1.0, 1.0);
  }
  fg.opacity = rng.uniform(0.1, 0.9);
  fg.color = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
  return fg;
}

/// Models whose activated values keep every pixel away from the alpha clamp
/// and cutoff, so finite differences across the full chain stay smooth:
/// broad footprints (s in [0.7,1]), mid opacity, wide temporal support and
/// mild polynomial drift.
inline vgs::GaussianModel fd_safe_model(vgs::Rng& rng, int n, int deg, int n_frames) {
  using vgs::logit;
  vgs::GaussianModel m;
  m.poly_degree = deg;
  m.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    m.m_s[2 * static_cast<size_t>(i)] = static_cast<float>(rng.uniform(-0.3, 0.3));
    m.m_s[2 * static_cast<size_t>(i) + 1] = static_cast<float>(rng.uniform(-0.3, 0.3));
    m.m_t_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.35, 0.65)));
    m.log_s1[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(0.7, 1.0)));
    m.log_s2[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(0.7, 1.0)));
    m.theta_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.2, 0.8)));
    m.log_sigma_t[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(1.5, 3.0)));
    for (int p = 0; p < 2 * deg; ++p)
      m.poly[static_cast<size_t>(2 * deg * i + p)] = static_cast<float>(rng.uniform(-0.05, 0.05));
    m.opacity_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.55, 0.75)));
    for (int c = 0; c < 3; ++c)
      m.color[static_cast<size_t>(3 * i + c)] = static_cast<float>(rng.uniform(0.2, 0.8));
  }
  m.timeline.n_frames = n_frames;
  m.timeline.w.resize(static_cast<size_t>(n_frames - 1));
  for (auto& v : m.timeline.w) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  return m;
}

/// Two spatially disjoint clusters: ids 0..n/2-1 around (-0.55, 0), the rest
/// around (0.55, 0), with footprints small enough that they never overlap.
inline vgs::GaussianModel two_cluster_model(vgs::Rng& rng, int n = 12, int deg = 2) {
  using vgs::logit;
  vgs::GaussianModel m;
  m.poly_degree = deg;
  m.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const bool left = i < n / 2;
    const double cx = left ? -0.55 : 0.55;
    m.m_s[2 * static_cast<size_t>(i)] = static_cast<float>(cx + rng.uniform(-0.12, 0.12));
    m.m_s[2 * static_cast<size_t>(i) + 1] = static_cast<float>(rng.uniform(-0.12, 0.12));
    m.m_t_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.3, 0.7)));
    m.log_s1[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(0.03, 0.06)));
    m.log_s2[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(0.03, 0.06)));
    m.theta_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.1, 0.9)));
    m.log_sigma_t[static_cast<size_t>(i)] = static_cast<float>(std::log(rng.uniform(0.8, 2.0)));
    for (int p = 0; p < 2 * deg; ++p)
      m.poly[static_cast<size_t>(2 * deg * i + p)] = 0.0f;
    m.opacity_raw[static_cast<size_t>(i)] = static_cast<float>(logit(rng.uniform(0.4, 0.8)));
    for (int c = 0; c < 3; ++c)
      m.color[static_cast<size_t>(3 * i + c)] = static_cast<float>(rng.uniform(0.1, 0.9));
  }
  m.timeline.n_frames = 5;
  m.timeline.w.assign(4, 0.0f);
  return m;
}

} // namespace testsup
