#pragma once

// Differentiable 2D Gaussian rasterizer. Pixel centers (i+0.5, j+0.5) map to
// normalized coordinates x in [-A, A] (A = width/height) and y in [-1, 1],
// so pixels are square and Gaussian parameters are resolution independent.
// Compositing is front-to-back in order_key order with the 3DGS-style alpha
// clamp (0.99), alpha cutoff (1/255) and transmittance early exit (1e-4).
// The brute-force path shares the per-pixel compositing semantics exactly
// and differs only in evaluating every Gaussian at every pixel, which is
// what makes it usable as an oracle for the tiled path.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vgs/foldgauss.hpp"

namespace vgs {

constexpr double kAlphaClamp = 0.99;
constexpr double kAlphaCutoff = 1.0 / 255.0;
constexpr double kTransmittanceMin = 1e-4;
constexpr int kTileSize = 16;

/// RGB frame, row-major, channels interleaved.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<double> rgb; // size 3*width*height

  Frame() = default;
  Frame(int w, int h) : width(w), height(h), rgb(static_cast<size_t>(3) * w * h, 0.0) {}

  double& at(int x, int y, int c) { return rgb[3 * (static_cast<size_t>(y) * width + x) + c]; }
  double at(int x, int y, int c) const {
    return rgb[3 * (static_cast<size_t>(y) * width + x) + c];
  }
  bool same_shape(const Frame& o) const { return width == o.width && height == o.height; }
};

/// Ordered list of conditioned Gaussians; order_key fixes compositing order.
struct SplatScene {
  std::vector<ConditionedGaussian2D> gaussians;
  std::vector<int> order_key;

  std::size_t size() const { return gaussians.size(); }

  void push_back(const ConditionedGaussian2D& g, int key) {
    gaussians.push_back(g);
    order_key.push_back(key);
  }

  /// Indices sorted by order_key (the compositing order).
  std::vector<int> composite_order() const {
    std::vector<int> idx(gaussians.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return order_key[static_cast<size_t>(a)] < order_key[static_cast<size_t>(b)]; });
    return idx;
  }
};

/// Per-Gaussian gradient accumulators, mirroring the conditioned parameters.
struct GradBuffer {
  std::vector<double> d_mean;    // 2 per Gaussian
  std::vector<double> d_theta;   // 1
  std::vector<double> d_s1;      // 1
  std::vector<double> d_s2;      // 1
  std::vector<double> d_scale;   // 1 (the a(t) factor)
  std::vector<double> d_opacity; // 1
  std::vector<double> d_color;   // 3

  explicit GradBuffer(std::size_t n = 0) { resize(n); }

  void resize(std::size_t n) {
    d_mean.assign(2 * n, 0.0);
    d_theta.assign(n, 0.0);
    d_s1.assign(n, 0.0);
    d_s2.assign(n, 0.0);
    d_scale.assign(n, 0.0);
    d_opacity.assign(n, 0.0);
    d_color.assign(3 * n, 0.0);
  }
  std::size_t size() const { return d_theta.size(); }
};

namespace detail {

/// Pixel-center coordinates for column i / row j at a given resolution.
inline double pixel_x(int i, int w, int h) {
  return (2.0 * (i + 0.5) / w - 1.0) * (static_cast<double>(w) / h);
}
inline double pixel_y(int j, int /*w*/, int h) { return 2.0 * (j + 0.5) / h - 1.0; }

/// Everything the per-pixel loop needs, computed once per Gaussian. The same
/// values feed forward and backward so alpha comes out bit-identical.
struct PreparedGaussian {
  Vec2 mean;
  double ixx = 0, ixy = 0, iyy = 0; // inverse covariance
  double opacity = 0;
  Color3 color;
  double qcut = 0;    // alpha-cutoff level set: q <= qcut can contribute
  int scene_index = 0;
  bool visible = false;
  // extra factors for backward
  double theta = 0, s1 = 0, s2 = 0, scale = 0;
};

inline PreparedGaussian prepare(const ConditionedGaussian2D& g, int scene_index) {
  PreparedGaussian p;
  p.scene_index = scene_index;
  p.mean = g.mean;
  p.opacity = g.opacity;
  p.color = g.color;
  p.theta = g.theta;
  p.s1 = g.s1;
  p.s2 = g.s2;
  p.scale = g.scale;
  if (!(g.scale > 0.0) || !(g.s1 > 0.0) || !(g.s2 > 0.0) || !std::isfinite(g.mean.x) ||
      !std::isfinite(g.mean.y))
    return p; // singular or degenerate: contributes nothing
  if (!(g.opacity * 255.0 >= 1.0)) return p; // never reaches the cutoff
  const Sym2 cov = g.cov();
  const double det = cov.det();
  if (!(det > 0.0) || !std::isfinite(det)) return p;
  const Sym2 inv = cov.inverse();
  p.ixx = inv.xx;
  p.ixy = inv.xy;
  p.iyy = inv.yy;
  p.qcut = 2.0 * std::log(255.0 * g.opacity);
  p.visible = true;
  return p;
}

/// alpha at a pixel given prepared quantities; 0 below the 1/255 cutoff.
inline double alpha_of(const PreparedGaussian& p, double px, double py) {
  const double dx = px - p.mean.x, dy = py - p.mean.y;
  const double q = p.ixx * dx * dx + 2.0 * p.ixy * dx * dy + p.iyy * dy * dy;
  if (q > p.qcut) return 0.0;
  const double a = p.opacity * std::exp(-0.5 * q);
  if (a < kAlphaCutoff) return 0.0;
  return std::min(kAlphaClamp, a);
}

} // namespace detail

/// Opacity-weighted Gaussian falloff at a point, with the 3DGS clamp and
/// cutoff applied. Singular covariance contributes zero rather than erroring.
inline double alpha_at(const ConditionedGaussian2D& g, Vec2 pixel_center) {
  const auto p = detail::prepare(g, 0);
  if (!p.visible) return 0.0;
  return detail::alpha_of(p, pixel_center.x, pixel_center.y);
}

/// Reference renderer: every Gaussian evaluated at every pixel, no tiling or
/// bounding-box culling. Compositing rules are identical to render().
inline Frame render_bruteforce(const SplatScene& scene, int w, int h,
                               Color3 background = {0, 0, 0}) {
  if (w < 1 || h < 1) throw std::invalid_argument("render: dimensions must be positive");
  Frame out(w, h);
  const auto order = scene.composite_order();
  std::vector<detail::PreparedGaussian> prep;
  prep.reserve(order.size());
  for (int idx : order) prep.push_back(detail::prepare(scene.gaussians[static_cast<size_t>(idx)], idx));

  for (int j = 0; j < h; ++j) {
    const double py = detail::pixel_y(j, w, h);
    for (int i = 0; i < w; ++i) {
      const double px = detail::pixel_x(i, w, h);
      double T = 1.0, r = 0.0, g = 0.0, b = 0.0;
      for (const auto& p : prep) {
        if (!p.visible) continue;
        const double a = detail::alpha_of(p, px, py);
        if (a == 0.0) continue;
        const double wgt = a * T;
        r += p.color.r * wgt;
        g += p.color.g * wgt;
        b += p.color.b * wgt;
        T *= (1.0 - a);
        if (T < kTransmittanceMin) break;
      }
      out.at(i, j, 0) = clamp01(r + background.r * T);
      out.at(i, j, 1) = clamp01(g + background.g * T);
      out.at(i, j, 2) = clamp01(b + background.b * T);
    }
  }
  return out;
}

namespace detail {

struct TileBins {
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> bins; // prep indices per tile, composite order
};

/// Bin Gaussians into 16x16 pixel tiles by the axis-aligned bounding box of
/// their alpha-cutoff level set (so binning never discards a pixel whose
/// alpha would be nonzero).
inline TileBins bin_tiles(const std::vector<PreparedGaussian>& prep, int w, int h) {
  TileBins tb;
  tb.tiles_x = (w + kTileSize - 1) / kTileSize;
  tb.tiles_y = (h + kTileSize - 1) / kTileSize;
  tb.bins.assign(static_cast<size_t>(tb.tiles_x) * tb.tiles_y, {});
  const double aspect = static_cast<double>(w) / h;
  for (std::size_t pi = 0; pi < prep.size(); ++pi) {
    const auto& p = prep[pi];
    if (!p.visible) continue;
    // Covariance from the inverse (avoids caching both): Sigma = inv(I).
    const double idet = p.ixx * p.iyy - p.ixy * p.ixy;
    const double cxx = p.iyy / idet, cyy = p.ixx / idet;
    const double rx = std::sqrt(std::max(0.0, p.qcut * cxx));
    const double ry = std::sqrt(std::max(0.0, p.qcut * cyy));
    // Normalized bbox -> pixel indices, rounded outward one pixel.
    const auto col_of = [&](double x) { return ((x / aspect + 1.0) * 0.5) * w - 0.5; };
    const auto row_of = [&](double y) { return ((y + 1.0) * 0.5) * h - 0.5; };
    int i0 = static_cast<int>(std::floor(col_of(p.mean.x - rx))) - 1;
    int i1 = static_cast<int>(std::ceil(col_of(p.mean.x + rx))) + 1;
    int j0 = static_cast<int>(std::floor(row_of(p.mean.y - ry))) - 1;
    int j1 = static_cast<int>(std::ceil(row_of(p.mean.y + ry))) + 1;
    i0 = std::max(0, i0);
    j0 = std::max(0, j0);
    i1 = std::min(w - 1, i1);
    j1 = std::min(h - 1, j1);
    if (i0 > i1 || j0 > j1) continue;
    for (int ty = j0 / kTileSize; ty <= j1 / kTileSize; ++ty)
      for (int tx = i0 / kTileSize; tx <= i1 / kTileSize; ++tx)
        tb.bins[static_cast<size_t>(ty) * tb.tiles_x + tx].push_back(static_cast<int>(pi));
  }
  return tb;
}

} // namespace detail

/// Tiled front-to-back renderer. Deterministic: identical scenes give
/// bit-identical frames regardless of thread count (pixels are independent).
inline Frame render(const SplatScene& scene, int w, int h, Color3 background = {0, 0, 0}) {
  if (w < 1 || h < 1) throw std::invalid_argument("render: dimensions must be positive");
  Frame out(w, h);
  const auto order = scene.composite_order();
  std::vector<detail::PreparedGaussian> prep;
  prep.reserve(order.size());
  for (int idx : order) prep.push_back(detail::prepare(scene.gaussians[static_cast<size_t>(idx)], idx));
  const auto tb = detail::bin_tiles(prep, w, h);

  const int n_tiles = tb.tiles_x * tb.tiles_y;
#pragma omp parallel for schedule(static)
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = tb.bins[static_cast<size_t>(tile)];
    const int tx = tile % tb.tiles_x, ty = tile / tb.tiles_x;
    const int i_end = std::min(w, (tx + 1) * kTileSize);
    const int j_end = std::min(h, (ty + 1) * kTileSize);
    for (int j = ty * kTileSize; j < j_end; ++j) {
      const double py = detail::pixel_y(j, w, h);
      for (int i = tx * kTileSize; i < i_end; ++i) {
        const double px = detail::pixel_x(i, w, h);
        double T = 1.0, r = 0.0, g = 0.0, b = 0.0;
        for (int pi : bin) {
          const auto& p = prep[static_cast<size_t>(pi)];
          const double a = detail::alpha_of(p, px, py);
          if (a == 0.0) continue;
          const double wgt = a * T;
          r += p.color.r * wgt;
          g += p.color.g * wgt;
          b += p.color.b * wgt;
          T *= (1.0 - a);
          if (T < kTransmittanceMin) break;
        }
        out.at(i, j, 0) = clamp01(r + background.r * T);
        out.at(i, j, 1) = clamp01(g + background.g * T);
        out.at(i, j, 2) = clamp01(b + background.b * T);
      }
    }
  }
  return out;
}

/// Exact gradients of render() contracted with grad_frame, with respect to
/// every conditioned-Gaussian parameter. Regions zeroed by the alpha clamp
/// or cutoff get zero gradient (subgradient convention). Accumulation order
/// is fixed (tile order), so results do not depend on thread count.
inline GradBuffer render_backward(const SplatScene& scene, int w, int h, Color3 background,
                                  const Frame& grad_frame) {
  if (grad_frame.width != w || grad_frame.height != h)
    throw std::invalid_argument("render_backward: grad_frame shape mismatch");
  GradBuffer grads(scene.size());
  const auto order = scene.composite_order();
  std::vector<detail::PreparedGaussian> prep;
  prep.reserve(order.size());
  for (int idx : order) prep.push_back(detail::prepare(scene.gaussians[static_cast<size_t>(idx)], idx));
  const auto tb = detail::bin_tiles(prep, w, h);

  const int n_tiles = tb.tiles_x * tb.tiles_y;
  // 10 partials per binned Gaussian per tile, reduced in tile order below.
  std::vector<std::vector<double>> tile_partials(static_cast<size_t>(n_tiles));

#pragma omp parallel for schedule(static)
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = tb.bins[static_cast<size_t>(tile)];
    if (bin.empty()) continue;
    auto& part = tile_partials[static_cast<size_t>(tile)];
    part.assign(bin.size() * 10, 0.0);
    const int tx = tile % tb.tiles_x, ty = tile / tb.tiles_x;
    const int i_end = std::min(w, (tx + 1) * kTileSize);
    const int j_end = std::min(h, (ty + 1) * kTileSize);
    std::vector<double> alphas(bin.size());
    for (int j = ty * kTileSize; j < j_end; ++j) {
      const double py = detail::pixel_y(j, w, h);
      for (int i = tx * kTileSize; i < i_end; ++i) {
        const double px = detail::pixel_x(i, w, h);
        // Forward prepass: record alphas and the stop position.
        double T = 1.0;
        int last = -1;
        for (std::size_t bpos = 0; bpos < bin.size(); ++bpos) {
          const auto& p = prep[static_cast<size_t>(bin[bpos])];
          const double a = detail::alpha_of(p, px, py);
          alphas[bpos] = a;
          if (a == 0.0) continue;
          T *= (1.0 - a);
          last = static_cast<int>(bpos);
          if (T < kTransmittanceMin) break;
        }
        const double gr = grad_frame.at(i, j, 0);
        const double gg = grad_frame.at(i, j, 1);
        const double gb = grad_frame.at(i, j, 2);
        if (last < 0 || (gr == 0.0 && gg == 0.0 && gb == 0.0)) continue;
        // Reverse sweep: reconstruct transmittances and suffix colors.
        double sr = background.r * T, sg = background.g * T, sb = background.b * T;
        double Trun = T;
        for (int bpos = last; bpos >= 0; --bpos) {
          const double a = alphas[static_cast<size_t>(bpos)];
          if (a == 0.0) continue;
          const auto& p = prep[static_cast<size_t>(bin[static_cast<size_t>(bpos)])];
          const double Ti = Trun / (1.0 - a);
          const double wgt = a * Ti;
          double* acc = &part[static_cast<size_t>(bpos) * 10];
          // color gradient: compositing is linear in color
          acc[7] += gr * wgt;
          acc[8] += gg * wgt;
          acc[9] += gb * wgt;
          // d(pixel)/d(alpha) = c*Ti - suffix/(1-a)
          const double dLda = gr * (p.color.r * Ti - sr / (1.0 - a)) +
                              gg * (p.color.g * Ti - sg / (1.0 - a)) +
                              gb * (p.color.b * Ti - sb / (1.0 - a));
          sr += p.color.r * wgt;
          sg += p.color.g * wgt;
          sb += p.color.b * wgt;
          Trun = Ti;
          // alpha = min(clamp, op*exp(-q/2)); clamped region has zero grad
          const double dx = px - p.mean.x, dy = py - p.mean.y;
          const double q = p.ixx * dx * dx + 2.0 * p.ixy * dx * dy + p.iyy * dy * dy;
          const double G = std::exp(-0.5 * q);
          if (p.opacity * G >= kAlphaClamp) continue;
          acc[6] += dLda * G; // opacity
          const double dLdq = dLda * p.opacity * G * (-0.5);
          // q partials
          const double mdx = p.ixx * dx + p.ixy * dy;
          const double mdy = p.ixy * dx + p.iyy * dy;
          acc[0] += dLdq * (-2.0 * mdx); // mean.x
          acc[1] += dLdq * (-2.0 * mdy); // mean.y
          const double c = std::cos(p.theta), sn = std::sin(p.theta);
          const double u1 = c * dx + sn * dy;
          const double u2 = -sn * dx + c * dy;
          const double inv_s1sq = 1.0 / (p.s1 * p.s1), inv_s2sq = 1.0 / (p.s2 * p.s2);
          acc[2] += dLdq * (2.0 * u1 * u2 * (inv_s1sq - inv_s2sq) / p.scale);   // theta
          acc[3] += dLdq * (-2.0 * u1 * u1 * inv_s1sq / (p.s1 * p.scale));      // s1
          acc[4] += dLdq * (-2.0 * u2 * u2 * inv_s2sq / (p.s2 * p.scale));      // s2
          acc[5] += dLdq * (-q / p.scale);                                      // scale
        }
      }
    }
  }

  // Deterministic reduction in tile order.
  for (int tile = 0; tile < n_tiles; ++tile) {
    const auto& bin = tb.bins[static_cast<size_t>(tile)];
    const auto& part = tile_partials[static_cast<size_t>(tile)];
    if (part.empty()) continue;
    for (std::size_t bpos = 0; bpos < bin.size(); ++bpos) {
      const auto gi = static_cast<size_t>(prep[static_cast<size_t>(bin[bpos])].scene_index);
      const double* acc = &part[bpos * 10];
      grads.d_mean[2 * gi] += acc[0];
      grads.d_mean[2 * gi + 1] += acc[1];
      grads.d_theta[gi] += acc[2];
      grads.d_s1[gi] += acc[3];
      grads.d_s2[gi] += acc[4];
      grads.d_scale[gi] += acc[5];
      grads.d_opacity[gi] += acc[6];
      grads.d_color[3 * gi] += acc[7];
      grads.d_color[3 * gi + 1] += acc[8];
      grads.d_color[3 * gi + 2] += acc[9];
    }
  }
  return grads;
}

/// Horizontal flip; an involution.
inline Frame mirror(const Frame& f) {
  Frame out(f.width, f.height);
  for (int j = 0; j < f.height; ++j)
    for (int i = 0; i < f.width; ++i)
      for (int c = 0; c < 3; ++c) out.at(i, j, c) = f.at(f.width - 1 - i, j, c);
  return out;
}

} // namespace vgs
