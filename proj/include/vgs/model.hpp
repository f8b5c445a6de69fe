#pragma once

// The trainable video representation: per-component raw parameters stored
// unconstrained (structure-of-arrays, 32-bit) and mapped to a valid
// FoldedGaussian3D through fixed activations, plus the trainable frame
// timeline and the triangle-face parameterization used by the editor.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vgs/foldgauss.hpp"
#include "vgs/splat2d.hpp"

namespace vgs {

/// One component's unconstrained parameters. m_t, theta and opacity are
/// sigmoid-activated, scales and sigma_t exp-activated, the rest pass
/// through (color is clamped to [0,1]).
struct RawGaussianParams {
  float m_s[2] = {0, 0};
  float m_t_raw = 0;
  float log_s1 = 0;
  float log_s2 = 0;
  float theta_raw = 0;
  float log_sigma_t = 0;
  std::vector<float> poly; // cx[0..P-1], cy[0..P-1]
  float opacity_raw = 0;
  float color[3] = {0.5f, 0.5f, 0.5f};
};

inline FoldedGaussian3D activate(const RawGaussianParams& raw) {
  FoldedGaussian3D fg;
  fg.m_s = {raw.m_s[0], raw.m_s[1]};
  fg.cov_s.theta = kTwoPi * sigmoid(raw.theta_raw);
  fg.cov_s.s1 = std::exp(static_cast<double>(raw.log_s1));
  fg.cov_s.s2 = std::exp(static_cast<double>(raw.log_s2));
  fg.m_t = sigmoid(raw.m_t_raw);
  fg.sigma_t = std::exp(static_cast<double>(raw.log_sigma_t));
  const std::size_t deg = raw.poly.size() / 2;
  fg.poly.cx.resize(deg);
  fg.poly.cy.resize(deg);
  for (std::size_t p = 0; p < deg; ++p) {
    fg.poly.cx[p] = raw.poly[p];
    fg.poly.cy[p] = raw.poly[deg + p];
  }
  fg.opacity = sigmoid(raw.opacity_raw);
  fg.color = {clamp01(raw.color[0]), clamp01(raw.color[1]), clamp01(raw.color[2])};
  return fg;
}

/// Trainable map from frame index to occurrence time: softmax over n-1
/// weights, cumulatively summed, so t_0 = 0 and t_{n-1} = 1 exactly.
struct FrameTimeline {
  int n_frames = 0;
  std::vector<float> w; // n_frames - 1 trainable weights
};

inline std::vector<double> frame_times(const FrameTimeline& tl) {
  if (tl.n_frames < 2) throw std::invalid_argument("frame_times: need at least 2 frames");
  if (tl.w.size() != static_cast<size_t>(tl.n_frames - 1))
    throw std::invalid_argument("frame_times: weight count must be n_frames - 1");
  const int m = tl.n_frames - 1;
  double wmax = -std::numeric_limits<double>::infinity();
  for (float v : tl.w) wmax = std::max(wmax, static_cast<double>(v));
  std::vector<double> e(static_cast<size_t>(m));
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    e[static_cast<size_t>(i)] = std::exp(static_cast<double>(tl.w[static_cast<size_t>(i)]) - wmax);
    total += e[static_cast<size_t>(i)];
  }
  std::vector<double> t(static_cast<size_t>(tl.n_frames));
  t[0] = 0.0;
  double prefix = 0.0;
  for (int k = 1; k < tl.n_frames; ++k) {
    prefix += e[static_cast<size_t>(k - 1)];
    t[static_cast<size_t>(k)] = prefix / total;
  }
  t[static_cast<size_t>(tl.n_frames - 1)] = 1.0;
  return t;
}

/// Uniformly spaced times between consecutive key times t_k and t_{k+1},
/// endpoints included (r subdivisions give r+1 values).
inline std::vector<double> interp_times(const FrameTimeline& tl, int k, int r) {
  if (r < 1) throw std::invalid_argument("interp_times: r must be >= 1");
  const auto t = frame_times(tl);
  if (k < 0 || k >= tl.n_frames - 1) throw std::out_of_range("interp_times: frame index");
  const double t0 = t[static_cast<size_t>(k)], t1 = t[static_cast<size_t>(k + 1)];
  std::vector<double> out(static_cast<size_t>(r + 1));
  for (int j = 0; j <= r; ++j) out[static_cast<size_t>(j)] = t0 + j * (t1 - t0) / r;
  out[static_cast<size_t>(r)] = t1;
  return out;
}

/// dL/dw from per-frame time gradients dT (softmax-cumsum Jacobian:
/// dt_k/dw_j = p_j * ([j <= k] - t_k), which couples every entry).
inline std::vector<double> timeline_backward(const FrameTimeline& tl,
                                             const std::vector<double>& dT) {
  const auto t = frame_times(tl);
  if (dT.size() != t.size()) throw std::invalid_argument("timeline_backward: shape mismatch");
  const int m = tl.n_frames - 1;
  double wmax = -std::numeric_limits<double>::infinity();
  for (float v : tl.w) wmax = std::max(wmax, static_cast<double>(v));
  std::vector<double> p(static_cast<size_t>(m));
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(tl.w[static_cast<size_t>(i)]) - wmax);
    total += p[static_cast<size_t>(i)];
  }
  for (auto& v : p) v /= total;
  // suffix_j = sum_{k >= j} dT_k, dot = sum_k dT_k * t_k (k over 1..n-1)
  double dot = 0.0;
  for (int k = 1; k < tl.n_frames; ++k) dot += dT[static_cast<size_t>(k)] * t[static_cast<size_t>(k)];
  std::vector<double> dw(static_cast<size_t>(m));
  double suffix = 0.0;
  for (int j = m; j >= 1; --j) {
    suffix += dT[static_cast<size_t>(j)];
    dw[static_cast<size_t>(j - 1)] = p[static_cast<size_t>(j - 1)] * (suffix - dot);
  }
  return dw;
}

// ---------------------------------------------------------------------------
// GaMeS-style triangle-face parameterization of a flat Gaussian.

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

/// Three points [m, v1, v2] on the z = 0 plane.
struct TriangleFace {
  Vec3 m, v1, v2;
};

/// Base (unconditioned) flat Gaussian as the editor sees it.
struct FlatGaussian {
  Vec2 m;
  double theta = 0, s1 = 1, s2 = 1;
};

inline TriangleFace to_triangle(const FlatGaussian& g) {
  if (!(g.s1 > 0.0) || !(g.s2 > 0.0))
    throw edit_error("to_triangle: scales must be positive");
  const double c = std::cos(g.theta), sn = std::sin(g.theta);
  TriangleFace V;
  V.m = {g.m.x, g.m.y, 0.0};
  V.v1 = {g.m.x + g.s1 * c, g.m.y + g.s1 * sn, 0.0};
  V.v2 = {g.m.x - g.s2 * sn, g.m.y + g.s2 * c, 0.0};
  return V;
}

/// Reconstruct (m, theta, s1, s2) from a face: r1 normalized, r2 by one
/// Gram-Schmidt step, s2 as the projection onto r2.
inline FlatGaussian from_triangle(const TriangleFace& V) {
  const Vec2 d1{V.v1.x - V.m.x, V.v1.y - V.m.y};
  const double s1 = d1.norm();
  if (!(s1 > 0.0)) throw edit_error("from_triangle: degenerate face (v1 == m)");
  const Vec2 r1{d1.x / s1, d1.y / s1};
  const Vec2 d2{V.v2.x - V.m.x, V.v2.y - V.m.y};
  const double proj = d2.dot(r1);
  const Vec2 orth{d2.x - proj * r1.x, d2.y - proj * r1.y};
  const double on = orth.norm();
  if (!(on > 0.0)) throw edit_error("from_triangle: degenerate face (collinear points)");
  const Vec2 r2{orth.x / on, orth.y / on};
  FlatGaussian g;
  g.m = {V.m.x, V.m.y};
  g.s1 = s1;
  g.s2 = d2.dot(r2);
  double th = std::atan2(r1.y, r1.x);
  if (th < 0.0) th += kTwoPi;
  g.theta = th;
  return g;
}

// ---------------------------------------------------------------------------
// Model state.

struct GaussianModel {
  int poly_degree = 0;

  // structure-of-arrays raw parameters, 32-bit (checkpoints are bit-exact)
  std::vector<float> m_s;         // 2 per component
  std::vector<float> m_t_raw;     // 1
  std::vector<float> log_s1;      // 1
  std::vector<float> log_s2;      // 1
  std::vector<float> theta_raw;   // 1
  std::vector<float> log_sigma_t; // 1
  std::vector<float> poly;        // 2 * poly_degree per component
  std::vector<float> opacity_raw; // 1
  std::vector<float> color;       // 3

  FrameTimeline timeline;
  float eps_thickness = 1e-6f; // flat-Gaussian thickness recorded for 3D viewers

  std::uint32_t steps_trained = 0;
  std::uint64_t seed = 0;
  std::string config_echo;

  /// Per-key-frame baked overlay scenes installed by the editor; renders at
  /// exactly that key time use the overlay instead of conditioning.
  std::map<int, SplatScene> frame_overrides;

  std::size_t size() const { return m_t_raw.size(); }

  RawGaussianParams get_raw(std::size_t i) const {
    RawGaussianParams r;
    r.m_s[0] = m_s[2 * i];
    r.m_s[1] = m_s[2 * i + 1];
    r.m_t_raw = m_t_raw[i];
    r.log_s1 = log_s1[i];
    r.log_s2 = log_s2[i];
    r.theta_raw = theta_raw[i];
    r.log_sigma_t = log_sigma_t[i];
    const std::size_t stride = 2 * static_cast<size_t>(poly_degree);
    r.poly.assign(poly.begin() + static_cast<long>(stride * i),
                  poly.begin() + static_cast<long>(stride * (i + 1)));
    r.opacity_raw = opacity_raw[i];
    r.color[0] = color[3 * i];
    r.color[1] = color[3 * i + 1];
    r.color[2] = color[3 * i + 2];
    return r;
  }

  FoldedGaussian3D activate_component(std::size_t i) const { return vgs::activate(get_raw(i)); }

  /// Base flat Gaussian (unconditioned spatial part) of component i.
  FlatGaussian base_flat(std::size_t i) const {
    return {{static_cast<double>(m_s[2 * i]), static_cast<double>(m_s[2 * i + 1])},
            kTwoPi * sigmoid(theta_raw[i]), std::exp(static_cast<double>(log_s1[i])),
            std::exp(static_cast<double>(log_s2[i]))};
  }

  void resize(std::size_t n) {
    m_s.resize(2 * n);
    m_t_raw.resize(n);
    log_s1.resize(n);
    log_s2.resize(n);
    theta_raw.resize(n);
    log_sigma_t.resize(n);
    poly.resize(2 * static_cast<size_t>(poly_degree) * n);
    opacity_raw.resize(n);
    color.resize(3 * n);
  }
};

/// Axis-aligned init region in normalized coordinates.
struct Bbox2 {
  double xmin = -1, xmax = 1, ymin = -1, ymax = 1;
  double extent() const { return std::max(xmax - xmin, ymax - ymin); }
};

struct InitConfig {
  int poly_degree = 7;
  double init_opacity = 0.1;     // post-activation
  double sigma_t_min = 0.01;     // post-activation uniform range
  double sigma_t_max = 1.0;
};

namespace detail {

/// Distance to the 3rd nearest neighbor for every point, via a uniform grid.
inline std::vector<double> knn3_distance(const std::vector<float>& pts_xy, Bbox2 box) {
  const std::size_t n = pts_xy.size() / 2;
  std::vector<double> out(n, 0.1 * box.extent());
  if (n < 4) return out;
  const int cells = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n) / 2.0)));
  const double cw = (box.xmax - box.xmin) / cells, ch = (box.ymax - box.ymin) / cells;
  std::vector<std::vector<int>> grid(static_cast<size_t>(cells) * cells);
  auto cell_of = [&](double x, double y) {
    int cx = std::clamp(static_cast<int>((x - box.xmin) / cw), 0, cells - 1);
    int cy = std::clamp(static_cast<int>((y - box.ymin) / ch), 0, cells - 1);
    return std::pair<int, int>{cx, cy};
  };
  for (std::size_t i = 0; i < n; ++i) {
    auto [cx, cy] = cell_of(pts_xy[2 * i], pts_xy[2 * i + 1]);
    grid[static_cast<size_t>(cy) * cells + cx].push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double x = pts_xy[2 * i], y = pts_xy[2 * i + 1];
    auto [cx, cy] = cell_of(x, y);
    double best[3] = {1e30, 1e30, 1e30};
    for (int ring = 0; ring < cells; ++ring) {
      // Once the 3rd best is closer than the inner edge of this ring, stop.
      if (ring > 0) {
        const double ring_dist = (ring - 1) * std::min(cw, ch);
        if (best[2] < ring_dist * ring_dist) break;
      }
      bool any = false;
      for (int dy = -ring; dy <= ring; ++dy) {
        for (int dx = -ring; dx <= ring; ++dx) {
          if (std::max(std::abs(dx), std::abs(dy)) != ring) continue;
          const int gx = cx + dx, gy = cy + dy;
          if (gx < 0 || gy < 0 || gx >= cells || gy >= cells) continue;
          any = true;
          for (int j : grid[static_cast<size_t>(gy) * cells + gx]) {
            if (static_cast<size_t>(j) == i) continue;
            const double ddx = pts_xy[2 * static_cast<size_t>(j)] - x;
            const double ddy = pts_xy[2 * static_cast<size_t>(j) + 1] - y;
            const double d2 = ddx * ddx + ddy * ddy;
            if (d2 < best[2]) {
              if (d2 < best[0]) {
                best[2] = best[1];
                best[1] = best[0];
                best[0] = d2;
              } else if (d2 < best[1]) {
                best[2] = best[1];
                best[1] = d2;
              } else {
                best[2] = d2;
              }
            }
          }
        }
      }
      if (!any && ring > 0 && best[2] < 1e30) break;
    }
    if (best[2] < 1e30) out[i] = std::sqrt(best[2]);
  }
  return out;
}

} // namespace detail

/// Fresh model: means uniform in the bbox, activated m_t uniform in [0,1],
/// activated sigma_t uniform in [sigma_t_min, sigma_t_max], polynomial
/// coefficients uniform in [-1,1], activated theta uniform in [0, 2pi),
/// opacity at init_opacity, spatial scales from the 3rd-nearest-neighbor
/// distance. Colors start gray; callers seed them from data if available.
inline GaussianModel init_model(const InitConfig& cfg, Bbox2 bbox, std::size_t n_init, Rng& rng) {
  if (n_init == 0) throw std::invalid_argument("init_model: n_init must be >= 1");
  GaussianModel m;
  m.poly_degree = cfg.poly_degree;
  m.resize(n_init);
  auto logit_u = [&](double u) { return logit(std::clamp(u, 1e-12, 1.0 - 1e-12)); };
  for (std::size_t i = 0; i < n_init; ++i) {
    m.m_s[2 * i] = static_cast<float>(rng.uniform(bbox.xmin, bbox.xmax));
    m.m_s[2 * i + 1] = static_cast<float>(rng.uniform(bbox.ymin, bbox.ymax));
    m.m_t_raw[i] = static_cast<float>(logit_u(rng.uniform()));
    m.log_sigma_t[i] =
        static_cast<float>(std::log(rng.uniform(cfg.sigma_t_min, cfg.sigma_t_max)));
    m.theta_raw[i] = static_cast<float>(logit_u(rng.uniform()));
    for (int p = 0; p < 2 * cfg.poly_degree; ++p)
      m.poly[2 * static_cast<size_t>(cfg.poly_degree) * i + static_cast<size_t>(p)] =
          static_cast<float>(rng.uniform(-1.0, 1.0));
    m.opacity_raw[i] = static_cast<float>(logit(cfg.init_opacity));
    m.color[3 * i] = m.color[3 * i + 1] = m.color[3 * i + 2] = 0.5f;
  }
  const auto d3 = detail::knn3_distance(m.m_s, bbox);
  for (std::size_t i = 0; i < n_init; ++i) {
    const float ls = static_cast<float>(std::log(std::max(d3[i], 1e-6)));
    m.log_s1[i] = ls;
    m.log_s2[i] = ls;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Conditioning a whole model at a time.

struct ConditionResult {
  SplatScene scene;
  std::vector<int> component_of; // scene slot -> component index
};

/// Condition every component at time t, preserving creation order as the
/// compositing order. Components are dropped only when their contribution is
/// provably zero at any resolution: the temporal factor underflowed to 0 or
/// the activated opacity sits below the alpha cutoff.
inline ConditionResult condition_all(const GaussianModel& model, double t) {
  ConditionResult res;
  const std::size_t n = model.size();
  res.scene.gaussians.reserve(n);
  res.scene.order_key.reserve(n);
  res.component_of.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const FoldedGaussian3D fg = model.activate_component(i);
    const ConditionedGaussian2D g = condition_at(fg, t);
    if (g.scale == 0.0) continue;             // a(t) underflow: zero footprint
    if (g.opacity * 255.0 < 1.0) continue;    // below the alpha cutoff everywhere
    res.scene.push_back(g, static_cast<int>(i));
    res.component_of.push_back(static_cast<int>(i));
  }
  return res;
}

/// Scene for rendering at time t, honoring a frame override when t is
/// exactly that key frame's occurrence time.
inline SplatScene scene_at(const GaussianModel& model, double t) {
  if (!model.frame_overrides.empty() && model.timeline.n_frames >= 2) {
    const auto times = frame_times(model.timeline);
    for (const auto& [k, scene] : model.frame_overrides) {
      if (k >= 0 && k < model.timeline.n_frames && times[static_cast<size_t>(k)] == t)
        return scene;
    }
  }
  return condition_all(model, t).scene;
}

// ---------------------------------------------------------------------------
// Densification / pruning (3DGS-style heuristics).

/// Positional-gradient statistics accumulated between densify calls.
struct GradStats {
  std::vector<double> grad_norm_sum; // sum over views of ||d mean||
  std::vector<int> visible_count;    // views in which the component rendered

  void resize(std::size_t n) {
    grad_norm_sum.assign(n, 0.0);
    visible_count.assign(n, 0);
  }
};

struct DensifyParams {
  double grad_threshold = 2e-4;
  double prune_opacity = 0.005;     // post-activation
  double split_scale_limit = 0.02;  // clone below, split above (absolute)
  double split_factor = 1.6;
};

/// Row bookkeeping so optimizer state can follow the component set.
struct DensifyResult {
  std::vector<char> keep;   // per pre-existing row
  std::size_t n_appended = 0;
  std::size_t n_cloned = 0, n_split = 0, n_pruned = 0;
};

namespace detail {

inline void append_component(GaussianModel& m, const RawGaussianParams& r) {
  m.m_s.push_back(r.m_s[0]);
  m.m_s.push_back(r.m_s[1]);
  m.m_t_raw.push_back(r.m_t_raw);
  m.log_s1.push_back(r.log_s1);
  m.log_s2.push_back(r.log_s2);
  m.theta_raw.push_back(r.theta_raw);
  m.log_sigma_t.push_back(r.log_sigma_t);
  m.poly.insert(m.poly.end(), r.poly.begin(), r.poly.end());
  m.opacity_raw.push_back(r.opacity_raw);
  m.color.push_back(r.color[0]);
  m.color.push_back(r.color[1]);
  m.color.push_back(r.color[2]);
}

} // namespace detail

/// Clone small high-gradient components, split large ones (scales divided by
/// split_factor, position jittered by sampling the slice at t = m_t,
/// temporal and polynomial parameters copied), prune low-opacity ones.
/// Deterministic given stats and rng state.
inline DensifyResult densify_and_prune(GaussianModel& model, const GradStats& stats,
                                       const DensifyParams& p, Rng& rng) {
  const std::size_t n = model.size();
  if (stats.grad_norm_sum.size() != n || stats.visible_count.size() != n)
    throw std::invalid_argument("densify_and_prune: stats shape mismatch");

  DensifyResult res;
  res.keep.assign(n, 1);

  std::vector<RawGaussianParams> appended;
  for (std::size_t i = 0; i < n; ++i) {
    const double avg = stats.visible_count[i] > 0
                           ? stats.grad_norm_sum[i] / stats.visible_count[i]
                           : 0.0;
    const double s1 = std::exp(static_cast<double>(model.log_s1[i]));
    const double s2 = std::exp(static_cast<double>(model.log_s2[i]));
    if (avg > p.grad_threshold) {
      if (std::max(s1, s2) <= p.split_scale_limit) {
        appended.push_back(model.get_raw(i)); // clone verbatim
        ++res.n_cloned;
      } else {
        // Split: two children sampled from the slice at the temporal mode
        // (a(m_t) = 1), scales shrunk; the parent is removed.
        const double theta = kTwoPi * sigmoid(model.theta_raw[i]);
        const double c = std::cos(theta), sn = std::sin(theta);
        RawGaussianParams base = model.get_raw(i);
        base.log_s1 = static_cast<float>(model.log_s1[i] - std::log(p.split_factor));
        base.log_s2 = static_cast<float>(model.log_s2[i] - std::log(p.split_factor));
        for (int child = 0; child < 2; ++child) {
          RawGaussianParams r = base;
          const double z1 = rng.normal() * s1;
          const double z2 = rng.normal() * s2;
          r.m_s[0] = static_cast<float>(model.m_s[2 * i] + c * z1 - sn * z2);
          r.m_s[1] = static_cast<float>(model.m_s[2 * i + 1] + sn * z1 + c * z2);
          appended.push_back(r);
        }
        res.keep[i] = 0;
        ++res.n_split;
      }
    }
  }

  // Prune on the surviving originals.
  for (std::size_t i = 0; i < n; ++i) {
    if (!res.keep[i]) continue;
    if (sigmoid(model.opacity_raw[i]) < p.prune_opacity) {
      res.keep[i] = 0;
      ++res.n_pruned;
    }
  }

  // Compact rows.
  auto compact = [&](auto& vec, std::size_t stride) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!res.keep[i]) continue;
      for (std::size_t ccc = 0; ccc < stride; ++ccc) vec[out * stride + ccc] = vec[i * stride + ccc];
      ++out;
    }
    vec.resize(out * stride);
  };
  compact(model.m_s, 2);
  compact(model.m_t_raw, 1);
  compact(model.log_s1, 1);
  compact(model.log_s2, 1);
  compact(model.theta_raw, 1);
  compact(model.log_sigma_t, 1);
  compact(model.poly, 2 * static_cast<size_t>(model.poly_degree));
  compact(model.opacity_raw, 1);
  compact(model.color, 3);

  for (const auto& r : appended) detail::append_component(model, r);
  res.n_appended = appended.size();
  return res;
}

/// 3DGS-style opacity reset: clamp activated opacity down to `value`.
inline void reset_opacity(GaussianModel& model, double value = 0.01) {
  const float raw_cap = static_cast<float>(logit(value));
  for (auto& v : model.opacity_raw) v = std::min(v, raw_cap);
}

// ---------------------------------------------------------------------------
// Backward through conditioning and activations.

/// Gradients in raw-parameter space, shapes tracking the model arrays.
struct RawGrads {
  std::vector<double> m_s, m_t_raw, log_s1, log_s2, theta_raw, log_sigma_t, poly, opacity_raw,
      color, w;

  void resize_like(const GaussianModel& m) {
    const std::size_t n = m.size();
    m_s.assign(2 * n, 0.0);
    m_t_raw.assign(n, 0.0);
    log_s1.assign(n, 0.0);
    log_s2.assign(n, 0.0);
    theta_raw.assign(n, 0.0);
    log_sigma_t.assign(n, 0.0);
    poly.assign(2 * static_cast<size_t>(m.poly_degree) * n, 0.0);
    opacity_raw.assign(n, 0.0);
    color.assign(3 * n, 0.0);
    w.assign(m.timeline.w.size(), 0.0);
  }

  void scale_all(double k) {
    for (auto* v : {&m_s, &m_t_raw, &log_s1, &log_s2, &theta_raw, &log_sigma_t, &poly,
                    &opacity_raw, &color, &w})
      for (auto& x : *v) x *= k;
  }
};

/// Chain conditioned-space gradients back to raw parameters. Accumulates
/// into `out` and returns dL/dt (for the timeline). Culled components
/// contributed nothing to the render and receive zero gradient.
inline double backprop_conditioning(const GaussianModel& model, double t,
                                    const ConditionResult& cond, const GradBuffer& gb,
                                    RawGrads& out) {
  double dL_dt = 0.0;
  const std::size_t deg = static_cast<size_t>(model.poly_degree);
  for (std::size_t slot = 0; slot < cond.component_of.size(); ++slot) {
    const auto i = static_cast<size_t>(cond.component_of[slot]);
    const FoldedGaussian3D fg = model.activate_component(i);
    const double a = cond.scene.gaussians[slot].scale;
    const double u = fg.m_t - t;
    const Vec2 g_mean{gb.d_mean[2 * slot], gb.d_mean[2 * slot + 1]};
    const double g_scale = gb.d_scale[slot];

    out.m_s[2 * i] += g_mean.x;
    out.m_s[2 * i + 1] += g_mean.y;

    // polynomial coefficients: d mean / d c_p = u^p
    double upow = u;
    for (std::size_t p = 0; p < deg; ++p) {
      out.poly[2 * deg * i + p] += g_mean.x * upow;
      out.poly[2 * deg * i + deg + p] += g_mean.y * upow;
      upow *= u;
    }

    const Vec2 fp = fg.poly.deriv(u);
    const double sig_sq = fg.sigma_t * fg.sigma_t;
    const double da_dmt = a * (t - fg.m_t) / sig_sq;
    const double dmt_act = g_mean.dot(fp) + g_scale * da_dmt;
    out.m_t_raw[i] += dmt_act * fg.m_t * (1.0 - fg.m_t);

    const double da_dsig = a * (t - fg.m_t) * (t - fg.m_t) / (sig_sq * fg.sigma_t);
    out.log_sigma_t[i] += g_scale * da_dsig * fg.sigma_t;

    const double sg = fg.cov_s.theta / kTwoPi; // sigmoid(theta_raw)
    out.theta_raw[i] += gb.d_theta[slot] * kTwoPi * sg * (1.0 - sg);
    out.log_s1[i] += gb.d_s1[slot] * fg.cov_s.s1;
    out.log_s2[i] += gb.d_s2[slot] * fg.cov_s.s2;
    out.opacity_raw[i] += gb.d_opacity[slot] * fg.opacity * (1.0 - fg.opacity);

    for (int ch = 0; ch < 3; ++ch) {
      const float raw = model.color[3 * i + static_cast<size_t>(ch)];
      if (raw > 0.0f && raw < 1.0f)
        out.color[3 * i + static_cast<size_t>(ch)] += gb.d_color[3 * slot + static_cast<size_t>(ch)];
    }

    // time dependence: mean through f(m_t - t), covariance through a(t)
    dL_dt += -g_mean.dot(fp) - g_scale * da_dmt;
  }
  return dL_dt;
}

} // namespace vgs
