#pragma once

// Gradient-based fitting: MSE loss (optional SSIM term), two-camera
// supervision (direct + mirrored), Adam with per-group learning rates, and
// the 3DGS-style densify/prune/opacity-reset schedule.

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vgs/model.hpp"
#include "vgs/splat2d.hpp"
#include "vgs/video_io.hpp"

namespace vgs {

struct TrainConfig {
  int steps = 30000;
  int batch_size = 3;
  int poly_degree = 7;
  int n_init = 500000;
  std::uint64_t seed = 0;
  int threads = 0; // 0: leave the OpenMP default alone

  // learning rates (3DGS-style groups; the temporal ones are ours)
  double lr_means = 1.6e-4;
  double lr_means_final = 1.6e-6; // exponential decay target across `steps`
  double lr_opacity = 0.05;
  double lr_scales = 5e-3;
  double lr_rotation = 1e-3;
  double lr_color = 2.5e-3;
  double lr_poly = 1.6e-3;
  double lr_m_t = 1.6e-3;
  double lr_sigma_t = 5e-3;
  double lr_timeline = 1e-3;

  // densification / pruning / opacity reset schedule
  int densify_from = 500;
  int densify_until = 15000;
  int densify_interval = 100;
  double densify_grad_threshold = 2e-4;
  double prune_opacity = 0.005;
  double split_scale_percent = 0.01; // of scene extent
  double split_factor = 1.6;
  int opacity_reset_interval = 3000;
  int opacity_reset_until = 15000;
  double opacity_reset_value = 0.01;

  // loss
  bool mirror_loss = true;
  double ssim_weight = 0.0; // optional SSIM term, default off
  double init_opacity = 0.1;
  double sigma_t_min = 0.01;
  double sigma_t_max = 1.0;
  Color3 background{0, 0, 0};
  int log_interval = 100;
};

// ---------------------------------------------------------------------------
// Config file: flat `key = value` lines, optional [section] headers for
// organization, '#' comments. CLI flags override file values.

inline void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value,
                            const std::string& context) {
  const auto d = [&] { return std::stod(value); };
  const auto i = [&] { return std::stoi(value); };
  if (key == "steps") cfg.steps = i();
  else if (key == "batch_size") cfg.batch_size = i();
  else if (key == "poly_degree") cfg.poly_degree = i();
  else if (key == "n_init") cfg.n_init = i();
  else if (key == "seed") cfg.seed = std::stoull(value);
  else if (key == "threads") cfg.threads = i();
  else if (key == "lr_means") cfg.lr_means = d();
  else if (key == "lr_means_final") cfg.lr_means_final = d();
  else if (key == "lr_opacity") cfg.lr_opacity = d();
  else if (key == "lr_scales") cfg.lr_scales = d();
  else if (key == "lr_rotation") cfg.lr_rotation = d();
  else if (key == "lr_color") cfg.lr_color = d();
  else if (key == "lr_poly") cfg.lr_poly = d();
  else if (key == "lr_m_t") cfg.lr_m_t = d();
  else if (key == "lr_sigma_t") cfg.lr_sigma_t = d();
  else if (key == "lr_timeline") cfg.lr_timeline = d();
  else if (key == "densify_from") cfg.densify_from = i();
  else if (key == "densify_until") cfg.densify_until = i();
  else if (key == "densify_interval") cfg.densify_interval = i();
  else if (key == "densify_grad_threshold") cfg.densify_grad_threshold = d();
  else if (key == "prune_opacity") cfg.prune_opacity = d();
  else if (key == "split_scale_percent") cfg.split_scale_percent = d();
  else if (key == "split_factor") cfg.split_factor = d();
  else if (key == "opacity_reset_interval") cfg.opacity_reset_interval = i();
  else if (key == "opacity_reset_until") cfg.opacity_reset_until = i();
  else if (key == "opacity_reset_value") cfg.opacity_reset_value = d();
  else if (key == "mirror_loss") cfg.mirror_loss = (value == "1" || value == "true" || value == "on");
  else if (key == "ssim_weight") cfg.ssim_weight = d();
  else if (key == "init_opacity") cfg.init_opacity = d();
  else if (key == "sigma_t_min") cfg.sigma_t_min = d();
  else if (key == "sigma_t_max") cfg.sigma_t_max = d();
  else if (key == "background_r") cfg.background.r = d();
  else if (key == "background_g") cfg.background.g = d();
  else if (key == "background_b") cfg.background.b = d();
  else if (key == "log_interval") cfg.log_interval = i();
  else throw std::invalid_argument("unknown config key '" + key + "' (" + context + ")");
}

inline TrainConfig parse_config_file(const std::string& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw io_error(path, "cannot open config file");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '[' && t.back() == ']') continue; // section header
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_kv(base, trim(t.substr(0, eq)), trim(t.substr(eq + 1)),
                    path + ":" + std::to_string(lineno));
  }
  return base;
}

inline std::string config_defaults_text() {
  const TrainConfig c;
  std::ostringstream os;
  os << "[run]\n"
     << "steps = " << c.steps << "\nbatch_size = " << c.batch_size
     << "\npoly_degree = " << c.poly_degree << "\nn_init = " << c.n_init
     << "\nseed = " << c.seed << "\nthreads = " << c.threads << "\n[optimizer]\n"
     << "lr_means = " << c.lr_means << "\nlr_means_final = " << c.lr_means_final
     << "\nlr_opacity = " << c.lr_opacity << "\nlr_scales = " << c.lr_scales
     << "\nlr_rotation = " << c.lr_rotation << "\nlr_color = " << c.lr_color
     << "\nlr_poly = " << c.lr_poly << "\nlr_m_t = " << c.lr_m_t
     << "\nlr_sigma_t = " << c.lr_sigma_t << "\nlr_timeline = " << c.lr_timeline
     << "\n[densify]\n"
     << "densify_from = " << c.densify_from << "\ndensify_until = " << c.densify_until
     << "\ndensify_interval = " << c.densify_interval
     << "\ndensify_grad_threshold = " << c.densify_grad_threshold
     << "\nprune_opacity = " << c.prune_opacity
     << "\nsplit_scale_percent = " << c.split_scale_percent
     << "\nsplit_factor = " << c.split_factor
     << "\nopacity_reset_interval = " << c.opacity_reset_interval
     << "\nopacity_reset_until = " << c.opacity_reset_until
     << "\nopacity_reset_value = " << c.opacity_reset_value << "\n[loss]\n"
     << "mirror_loss = " << (c.mirror_loss ? 1 : 0) << "\nssim_weight = " << c.ssim_weight
     << "\ninit_opacity = " << c.init_opacity << "\nsigma_t_min = " << c.sigma_t_min
     << "\nsigma_t_max = " << c.sigma_t_max << "\nbackground_r = " << c.background.r
     << "\nbackground_g = " << c.background.g << "\nbackground_b = " << c.background.b
     << "\nlog_interval = " << c.log_interval << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Losses.

struct LossResult {
  double value = 0.0;
  Frame grad; // dL/d(rendered pixel)
};

/// Mean squared error over pixels and channels, with its gradient.
inline LossResult loss_mse(const Frame& rendered, const Frame& target) {
  if (!rendered.same_shape(target)) throw std::invalid_argument("loss_mse: frame shapes differ");
  LossResult res;
  res.grad = Frame(rendered.width, rendered.height);
  const double n = static_cast<double>(rendered.rgb.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < rendered.rgb.size(); ++i) {
    const double d = rendered.rgb[i] - target.rgb[i];
    acc += d * d;
    res.grad.rgb[i] = 2.0 * d / n;
  }
  res.value = acc / n;
  return res;
}

/// Mean luma SSIM together with its gradient with respect to the first frame.
inline LossResult ssim_with_grad(const Frame& a, const Frame& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim_with_grad: frame shapes differ");
  if (a.width < 11 || a.height < 11)
    throw std::invalid_argument("ssim_with_grad: frame smaller than the 11x11 window");
  constexpr int W = 11, R = 5;
  static const std::vector<double> win = [] {
    std::vector<double> w(W * W);
    double sum = 0.0;
    for (int y = 0; y < W; ++y)
      for (int x = 0; x < W; ++x) {
        const double dx = x - R, dy = y - R;
        w[static_cast<size_t>(y) * W + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
        sum += w[static_cast<size_t>(y) * W + x];
      }
    for (auto& v : w) v /= sum;
    return w;
  }();
  constexpr double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

  const int lw = a.width, lh = a.height;
  std::vector<double> lx(static_cast<size_t>(lw) * lh), ly(lx.size());
  for (int y = 0; y < lh; ++y)
    for (int x = 0; x < lw; ++x) {
      lx[static_cast<size_t>(y) * lw + x] =
          0.299 * a.at(x, y, 0) + 0.587 * a.at(x, y, 1) + 0.114 * a.at(x, y, 2);
      ly[static_cast<size_t>(y) * lw + x] =
          0.299 * b.at(x, y, 0) + 0.587 * b.at(x, y, 1) + 0.114 * b.at(x, y, 2);
    }

  std::vector<double> dluma(lx.size(), 0.0);
  double total = 0.0;
  long count = 0;
  for (int cy = R; cy < lh - R; ++cy) {
    for (int cx = R; cx < lw - R; ++cx) {
      double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
      for (int wy = 0; wy < W; ++wy)
        for (int wx = 0; wx < W; ++wx) {
          const double wv = win[static_cast<size_t>(wy) * W + wx];
          const double va = lx[static_cast<size_t>(cy + wy - R) * lw + (cx + wx - R)];
          const double vb = ly[static_cast<size_t>(cy + wy - R) * lw + (cx + wx - R)];
          mx += wv * va;
          my += wv * vb;
          xx += wv * va * va;
          yy += wv * vb * vb;
          xy += wv * va * vb;
        }
      const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
      const double N1 = 2 * mx * my + C1, N2 = 2 * cov + C2;
      const double D1 = mx * mx + my * my + C1, D2 = vx + vy + C2;
      const double s = (N1 * N2) / (D1 * D2);
      total += s;
      ++count;
      for (int wy = 0; wy < W; ++wy)
        for (int wx = 0; wx < W; ++wx) {
          const double wv = win[static_cast<size_t>(wy) * W + wx];
          const std::size_t pi = static_cast<size_t>(cy + wy - R) * lw + (cx + wx - R);
          const double va = lx[pi], vb = ly[pi];
          const double dN1 = 2 * my * wv;
          const double dN2 = 2 * wv * (vb - my);
          const double dD1 = 2 * mx * wv;
          const double dD2 = 2 * wv * (va - mx);
          dluma[pi] += (dN1 * N2 + N1 * dN2) / (D1 * D2) - s * (dD1 / D1 + dD2 / D2);
        }
    }
  }
  LossResult res;
  res.value = total / static_cast<double>(count);
  res.grad = Frame(lw, lh);
  for (int y = 0; y < lh; ++y)
    for (int x = 0; x < lw; ++x) {
      const double g = dluma[static_cast<size_t>(y) * lw + x] / static_cast<double>(count);
      res.grad.at(x, y, 0) = 0.299 * g;
      res.grad.at(x, y, 1) = 0.587 * g;
      res.grad.at(x, y, 2) = 0.114 * g;
    }
  return res;
}

// ---------------------------------------------------------------------------
// Adam over the model's parameter groups.

namespace detail {

struct AdamArray {
  std::vector<double> m, v;
  void resize(std::size_t n) {
    m.assign(n, 0.0);
    v.assign(n, 0.0);
  }
  void remap(const std::vector<char>& keep, std::size_t stride, std::size_t n_appended) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (!keep[i]) continue;
      for (std::size_t c = 0; c < stride; ++c) {
        m[out * stride + c] = m[i * stride + c];
        v[out * stride + c] = v[i * stride + c];
      }
      ++out;
    }
    m.resize((out + n_appended) * stride, 0.0);
    v.resize((out + n_appended) * stride, 0.0);
    std::fill(m.begin() + static_cast<long>(out * stride), m.end(), 0.0);
    std::fill(v.begin() + static_cast<long>(out * stride), v.end(), 0.0);
  }
};

} // namespace detail

class AdamOptimizer {
public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int t = 0;

  void ensure_shapes(const GaussianModel& model) {
    const std::size_t n = model.size();
    if (m_s_.m.size() == 2 * n && w_.m.size() == model.timeline.w.size()) return;
    m_s_.resize(2 * n);
    m_t_raw_.resize(n);
    log_s1_.resize(n);
    log_s2_.resize(n);
    theta_raw_.resize(n);
    log_sigma_t_.resize(n);
    poly_.resize(2 * static_cast<size_t>(model.poly_degree) * n);
    opacity_raw_.resize(n);
    color_.resize(3 * n);
    w_.resize(model.timeline.w.size());
  }

  /// Track a densify/prune event: surviving rows keep their moments, new
  /// rows start from zero.
  void remap(const DensifyResult& res, const GaussianModel& model) {
    m_s_.remap(res.keep, 2, res.n_appended);
    m_t_raw_.remap(res.keep, 1, res.n_appended);
    log_s1_.remap(res.keep, 1, res.n_appended);
    log_s2_.remap(res.keep, 1, res.n_appended);
    theta_raw_.remap(res.keep, 1, res.n_appended);
    log_sigma_t_.remap(res.keep, 1, res.n_appended);
    poly_.remap(res.keep, 2 * static_cast<size_t>(model.poly_degree), res.n_appended);
    opacity_raw_.remap(res.keep, 1, res.n_appended);
    color_.remap(res.keep, 3, res.n_appended);
  }

  void zero_opacity_state() {
    std::fill(opacity_raw_.m.begin(), opacity_raw_.m.end(), 0.0);
    std::fill(opacity_raw_.v.begin(), opacity_raw_.v.end(), 0.0);
  }

  bool shapes_match(const GaussianModel& model) const {
    return m_s_.m.size() == model.m_s.size() && poly_.m.size() == model.poly.size() &&
           w_.m.size() == model.timeline.w.size();
  }

  /// One update. lr_means is decayed by the caller; other rates are fixed.
  void step(GaussianModel& model, const RawGrads& g, const TrainConfig& cfg, double lr_means_now) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    auto upd = [&](std::vector<float>& param, const std::vector<double>& grad,
                   detail::AdamArray& st, double lr) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double gi = grad[i];
        st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * gi;
        st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * gi * gi;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        param[i] = static_cast<float>(param[i] - lr * mhat / (std::sqrt(vhat) + eps));
      }
    };
    upd(model.m_s, g.m_s, m_s_, lr_means_now);
    upd(model.m_t_raw, g.m_t_raw, m_t_raw_, cfg.lr_m_t);
    upd(model.log_s1, g.log_s1, log_s1_, cfg.lr_scales);
    upd(model.log_s2, g.log_s2, log_s2_, cfg.lr_scales);
    upd(model.theta_raw, g.theta_raw, theta_raw_, cfg.lr_rotation);
    upd(model.log_sigma_t, g.log_sigma_t, log_sigma_t_, cfg.lr_sigma_t);
    upd(model.poly, g.poly, poly_, cfg.lr_poly);
    upd(model.opacity_raw, g.opacity_raw, opacity_raw_, cfg.lr_opacity);
    upd(model.color, g.color, color_, cfg.lr_color);
    upd(model.timeline.w, g.w, w_, cfg.lr_timeline);
  }

private:
  detail::AdamArray m_s_, m_t_raw_, log_s1_, log_s2_, theta_raw_, log_sigma_t_, poly_,
      opacity_raw_, color_, w_;
};

/// Exponentially decayed means learning rate at a given step.
inline double lr_means_at(const TrainConfig& cfg, int step) {
  if (cfg.steps <= 1 || cfg.lr_means_final <= 0.0) return cfg.lr_means;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.steps);
  return cfg.lr_means * std::pow(cfg.lr_means_final / cfg.lr_means, frac);
}

// ---------------------------------------------------------------------------
// Batch loss + gradients (pure), one optimizer step, and the fit loop.

struct BatchResult {
  double loss = 0.0;
  RawGrads grads;
};

/// Loss and raw-parameter gradients over a fixed batch of frame indices.
/// Per frame: MSE of the render against the frame plus MSE of the mirrored
/// render against the mirrored frame (0.5/0.5), averaged over the batch; an
/// optional SSIM term is added per camera when enabled.
inline BatchResult batch_loss_and_grads(const GaussianModel& model, const VideoSequence& video,
                                        const std::vector<int>& batch, const TrainConfig& cfg,
                                        GradStats* stats = nullptr) {
  BatchResult res;
  res.grads.resize_like(model);
  const auto times = frame_times(model.timeline);
  std::vector<double> dT(times.size(), 0.0);
  const int w = video.width(), h = video.height();

  for (int k : batch) {
    const double t = times[static_cast<size_t>(k)];
    const auto cond = condition_all(model, t);
    const Frame rendered = render(cond.scene, w, h, cfg.background);
    const Frame& target = video.frames[static_cast<size_t>(k)];

    auto direct = loss_mse(rendered, target);
    double frame_loss;
    Frame grad_frame(w, h);
    if (cfg.mirror_loss) {
      const Frame rm = mirror(rendered);
      const Frame tm = mirror(target);
      auto mirrored = loss_mse(rm, tm);
      frame_loss = 0.5 * direct.value + 0.5 * mirrored.value;
      const Frame back = mirror(mirrored.grad); // flip the gradient back
      for (std::size_t i = 0; i < grad_frame.rgb.size(); ++i)
        grad_frame.rgb[i] = 0.5 * direct.grad.rgb[i] + 0.5 * back.rgb[i];
      if (cfg.ssim_weight > 0.0) {
        auto sd = ssim_with_grad(rendered, target);
        auto sm = ssim_with_grad(rm, tm);
        frame_loss += cfg.ssim_weight * (0.5 * (1.0 - sd.value) + 0.5 * (1.0 - sm.value));
        const Frame smb = mirror(sm.grad);
        for (std::size_t i = 0; i < grad_frame.rgb.size(); ++i)
          grad_frame.rgb[i] -= cfg.ssim_weight * 0.5 * (sd.grad.rgb[i] + smb.rgb[i]);
      }
    } else {
      frame_loss = direct.value;
      grad_frame = direct.grad;
      if (cfg.ssim_weight > 0.0) {
        auto sd = ssim_with_grad(rendered, target);
        frame_loss += cfg.ssim_weight * (1.0 - sd.value);
        for (std::size_t i = 0; i < grad_frame.rgb.size(); ++i)
          grad_frame.rgb[i] -= cfg.ssim_weight * sd.grad.rgb[i];
      }
    }

    const GradBuffer gb = render_backward(cond.scene, w, h, cfg.background, grad_frame);
    dT[static_cast<size_t>(k)] += backprop_conditioning(model, t, cond, gb, res.grads);
    res.loss += frame_loss;

    if (stats) {
      for (std::size_t slot = 0; slot < cond.component_of.size(); ++slot) {
        const auto ci = static_cast<size_t>(cond.component_of[slot]);
        const double gx = gb.d_mean[2 * slot], gy = gb.d_mean[2 * slot + 1];
        stats->grad_norm_sum[ci] += std::sqrt(gx * gx + gy * gy);
        stats->visible_count[ci] += 1;
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  res.loss *= inv;
  res.grads.scale_all(inv);
  for (auto& v : dT) v *= inv;
  const auto dw = timeline_backward(model.timeline, dT);
  for (std::size_t i = 0; i < dw.size(); ++i) res.grads.w[i] += dw[i];
  return res;
}

/// One optimization step on a uniformly sampled batch. Throws on non-finite
/// loss with step/frame diagnostics.
inline double train_step(GaussianModel& model, const VideoSequence& video, const TrainConfig& cfg,
                         AdamOptimizer& opt, Rng& rng, int step, GradStats* stats = nullptr) {
  const int n = static_cast<int>(video.frames.size());
  std::vector<int> batch(static_cast<size_t>(cfg.batch_size));
  for (auto& b : batch) b = std::min(n - 1, static_cast<int>(rng.uniform() * n));
  auto res = batch_loss_and_grads(model, video, batch, cfg, stats);
  if (!std::isfinite(res.loss)) {
    double pn = 0.0;
    for (float v : model.m_s) pn += static_cast<double>(v) * v;
    std::ostringstream os;
    os << "non-finite loss at step " << step << " (batch frames:";
    for (int b : batch) os << " " << b;
    os << "), |m_s|^2 = " << pn;
    throw std::runtime_error(os.str());
  }
  opt.ensure_shapes(model);
  opt.step(model, res.grads, cfg, lr_means_at(cfg, step));
  return res.loss;
}

struct MetricsRow {
  int step = 0;
  double loss = 0.0;
  double psnr_probe = 0.0;
  std::size_t n_gaussians = 0;
  double wall_ms = 0.0;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error(path, "cannot open metrics log for writing");
  out << "step,loss,psnr_probe,n_gaussians,wall_ms\n";
  for (const auto& r : rows)
    out << r.step << "," << r.loss << "," << r.psnr_probe << "," << r.n_gaussians << ","
        << r.wall_ms << "\n";
}

/// Fresh model sized to the video: means uniform over the frame rectangle,
/// colors seeded by sampling the temporally nearest frame at each mean.
inline GaussianModel make_initial_model(const VideoSequence& video, const TrainConfig& cfg,
                                        Rng& rng) {
  if (video.frames.size() < 2) throw std::invalid_argument("fit: need >= 2 frames");
  const int w = video.width(), h = video.height();
  const double aspect = static_cast<double>(w) / h;
  InitConfig icfg;
  icfg.poly_degree = cfg.poly_degree;
  icfg.init_opacity = cfg.init_opacity;
  icfg.sigma_t_min = cfg.sigma_t_min;
  icfg.sigma_t_max = cfg.sigma_t_max;
  auto model = init_model(icfg, {-aspect, aspect, -1.0, 1.0}, static_cast<size_t>(cfg.n_init), rng);
  model.timeline.n_frames = static_cast<int>(video.frames.size());
  model.timeline.w.assign(video.frames.size() - 1, 0.0f);
  model.seed = cfg.seed;

  // Seed colors from the data (bilinear sample of the nearest frame).
  const auto sample = [&](const Frame& f, double x, double y, int c) {
    const double px = std::clamp((x / aspect + 1.0) * 0.5 * w - 0.5, 0.0, w - 1.0);
    const double py = std::clamp((y + 1.0) * 0.5 * h - 0.5, 0.0, h - 1.0);
    const int x0 = static_cast<int>(px), y0 = static_cast<int>(py);
    const int x1 = std::min(w - 1, x0 + 1), y1 = std::min(h - 1, y0 + 1);
    const double fx = px - x0, fy = py - y0;
    return (1 - fx) * (1 - fy) * f.at(x0, y0, c) + fx * (1 - fy) * f.at(x1, y0, c) +
           (1 - fx) * fy * f.at(x0, y1, c) + fx * fy * f.at(x1, y1, c);
  };
  const int nf = static_cast<int>(video.frames.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double mt = sigmoid(model.m_t_raw[i]);
    const int k = std::clamp(static_cast<int>(std::lround(mt * (nf - 1))), 0, nf - 1);
    const double x = model.m_s[2 * i], y = model.m_s[2 * i + 1];
    for (int c = 0; c < 3; ++c)
      model.color[3 * i + static_cast<size_t>(c)] = static_cast<float>(
          std::clamp(sample(video.frames[static_cast<size_t>(k)], x, y, c), 0.01, 0.99));
  }
  return model;
}

/// Full schedule: train steps, densification window, opacity resets, probe
/// metrics every log_interval steps. Deterministic for a fixed seed.
inline std::vector<MetricsRow> fit(GaussianModel& model, const VideoSequence& video,
                                   const TrainConfig& cfg) {
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#endif
  if (video.frames.size() < 2) throw std::invalid_argument("fit: need >= 2 frames");
  std::vector<MetricsRow> log;
  if (cfg.steps <= 0) return log;

  Rng rng(cfg.seed + 1); // distinct stream from initialization
  AdamOptimizer opt;
  opt.ensure_shapes(model);
  GradStats stats;
  stats.resize(model.size());

  const int w = video.width(), h = video.height();
  const double extent = 2.0 * std::max(static_cast<double>(w) / h, 1.0);
  DensifyParams dp;
  dp.grad_threshold = cfg.densify_grad_threshold;
  dp.prune_opacity = cfg.prune_opacity;
  dp.split_scale_limit = cfg.split_scale_percent * extent;
  dp.split_factor = cfg.split_factor;

  const int probe = static_cast<int>(video.frames.size()) / 2;
  auto t_last = std::chrono::steady_clock::now();

  for (int step = 1; step <= cfg.steps; ++step) {
    const double loss = train_step(model, video, cfg, opt, rng, step, &stats);

    if (step >= cfg.densify_from && step <= cfg.densify_until &&
        step % cfg.densify_interval == 0) {
      const auto res = densify_and_prune(model, stats, dp, rng);
      opt.remap(res, model);
      stats.resize(model.size());
    }
    if (cfg.opacity_reset_interval > 0 && step % cfg.opacity_reset_interval == 0 &&
        step <= cfg.opacity_reset_until) {
      reset_opacity(model, cfg.opacity_reset_value);
      opt.zero_opacity_state();
    }

    if (step % cfg.log_interval == 0 || step == cfg.steps) {
      const auto times = frame_times(model.timeline);
      const Frame pf = render(condition_all(model, times[static_cast<size_t>(probe)]).scene, w, h,
                              cfg.background);
      const auto now = std::chrono::steady_clock::now();
      const double ms = std::chrono::duration<double, std::milli>(now - t_last).count();
      t_last = now;
      log.push_back({step, loss, psnr(pf, video.frames[static_cast<size_t>(probe)]),
                     model.size(), ms});
    }
  }
  model.steps_trained += static_cast<std::uint32_t>(cfg.steps);
  return log;
}

} // namespace vgs
