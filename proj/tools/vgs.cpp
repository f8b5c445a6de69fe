// Command-line surface: fit / render / interp / edit / eval / inspect.
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "vgs/editor.hpp"
#include "vgs/trainer.hpp"
#include "vgs/video_io.hpp"

namespace fs = std::filesystem;
using namespace vgs;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets; // key=value overrides
  int threads = 0;
};

TrainConfig resolve_config(const CommonOpts& o) {
  TrainConfig cfg;
  if (!o.config_path.empty()) cfg = parse_config_file(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    apply_config_kv(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)), "--set");
  }
  if (o.threads > 0) cfg.threads = o.threads;
  return cfg;
}

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif
  (void)threads;
}

std::string config_echo_text(const TrainConfig& c) {
  std::ostringstream os;
  os << "steps = " << c.steps << "\nbatch_size = " << c.batch_size
     << "\npoly_degree = " << c.poly_degree << "\nn_init = " << c.n_init
     << "\nseed = " << c.seed << "\nmirror_loss = " << (c.mirror_loss ? 1 : 0)
     << "\nssim_weight = " << c.ssim_weight << "\n";
  return os.str();
}

std::string frame_name(const std::string& prefix, int k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05d.png", prefix.c_str(), k);
  return buf;
}

Frame abs_diff(const Frame& a, const Frame& b) {
  Frame d(a.width, a.height);
  for (std::size_t i = 0; i < d.rgb.size(); ++i) d.rgb[i] = std::abs(a.rgb[i] - b.rgb[i]);
  return d;
}

int cmd_fit(const std::string& frames_dir, const CommonOpts& common, const std::string& out,
            const std::string& metrics_path) {
  TrainConfig cfg = resolve_config(common);
  apply_threads(cfg.threads);
  const VideoSequence video = load_frames(frames_dir);
  if (video.frames.size() < 2) throw std::invalid_argument("fit: need >= 2 frames");
  Rng rng(cfg.seed);
  GaussianModel model = make_initial_model(video, cfg, rng);
  model.config_echo = config_echo_text(cfg);
  const auto log = fit(model, video, cfg);
  save_checkpoint(model, out);
  const std::string mpath = metrics_path.empty() ? out + ".metrics.csv" : metrics_path;
  write_metrics_csv(log, mpath);
  std::cout << "fit: " << model.size() << " components, " << video.frames.size() << " frames ("
            << video.width() << "x" << video.height() << "), checkpoint " << out
            << ", metrics " << mpath << "\n";
  if (!log.empty())
    std::cout << "final: loss " << log.back().loss << ", probe PSNR " << log.back().psnr_probe
              << " dB\n";
  return 0;
}

int cmd_render(const std::string& ckpt, const std::vector<int>& frames_req,
               const std::vector<double>& times_req, const std::string& out_dir,
               const std::string& diff_dir, int width, int height) {
  const GaussianModel model = load_checkpoint(ckpt);
  if (model.timeline.n_frames < 2)
    throw std::invalid_argument("render: checkpoint has no timeline");
  const auto times = frame_times(model.timeline);
  fs::create_directories(out_dir);

  std::optional<VideoSequence> targets;
  if (!diff_dir.empty()) targets = load_frames(diff_dir);
  int w = width, h = height;
  if (targets) {
    w = targets->width();
    h = targets->height();
  }

  struct Job {
    std::string name;
    double t;
    int target_index; // -1: none
  };
  std::vector<Job> jobs;
  if (frames_req.empty() && times_req.empty()) {
    for (int k = 0; k < model.timeline.n_frames; ++k)
      jobs.push_back({frame_name("frame", k), times[static_cast<size_t>(k)], k});
  }
  for (int k : frames_req) {
    if (k < 0 || k >= model.timeline.n_frames)
      throw std::invalid_argument("render: frame index " + std::to_string(k) + " out of range");
    jobs.push_back({frame_name("frame", k), times[static_cast<size_t>(k)], k});
  }
  for (double t : times_req) {
    if (t < 0.0 || t > 1.0)
      throw std::invalid_argument("render: time " + std::to_string(t) + " outside [0,1]");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "time_%.6f.png", t);
    jobs.push_back({buf, t, -1});
  }

  for (const auto& job : jobs) {
    const Frame f = render(scene_at(model, job.t), w, h, {});
    save_png(f, (fs::path(out_dir) / job.name).string());
    if (targets && job.target_index >= 0 &&
        job.target_index < static_cast<int>(targets->frames.size())) {
      const Frame d = abs_diff(f, targets->frames[static_cast<size_t>(job.target_index)]);
      save_png(d, (fs::path(out_dir) / ("diff_" + job.name)).string());
    }
  }
  std::cout << "render: wrote " << jobs.size() << " frame(s) at " << w << "x" << h << " to "
            << out_dir << "\n";
  return 0;
}

int cmd_interp(const std::string& ckpt, int rate, const std::string& out_dir, int width,
               int height) {
  if (rate < 1) throw std::invalid_argument("interp: rate must be >= 1");
  const GaussianModel model = load_checkpoint(ckpt);
  if (model.timeline.n_frames < 2)
    throw std::invalid_argument("interp: checkpoint has no timeline");
  fs::create_directories(out_dir);
  int idx = 0;
  for (int k = 0; k < model.timeline.n_frames - 1; ++k) {
    const auto ts = interp_times(model.timeline, k, rate);
    const int start = (k == 0) ? 0 : 1; // gaps share endpoints
    for (std::size_t j = static_cast<size_t>(start); j < ts.size(); ++j) {
      const Frame f = render(scene_at(model, ts[j]), width, height, {});
      save_png(f, (fs::path(out_dir) / frame_name("interp", idx++)).string());
    }
  }
  std::cout << "interp: wrote " << idx << " frame(s) ("
            << (model.timeline.n_frames - 1) * rate + 1 << " expected) to " << out_dir << "\n";
  return 0;
}

int cmd_edit(const std::string& ckpt, const std::string& script_path, const std::string& out) {
  const GaussianModel model = load_checkpoint(ckpt);
  std::ifstream in(script_path);
  if (!in) throw io_error(script_path, "cannot open edit script");
  std::stringstream ss;
  ss << in.rdbuf();
  const EditScript script = parse_script(ss.str());
  const GaussianModel edited = apply_script(model, script);
  save_checkpoint(edited, out);
  std::cout << "edit: applied " << script.ops.size() << " op(s), " << edited.size()
            << " components, wrote " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& frames_dir) {
  const GaussianModel model = load_checkpoint(ckpt);
  const VideoSequence video = load_frames(frames_dir);
  if (model.timeline.n_frames != static_cast<int>(video.frames.size()))
    throw std::invalid_argument("eval: checkpoint frame count (" +
                                std::to_string(model.timeline.n_frames) +
                                ") does not match directory (" +
                                std::to_string(video.frames.size()) + ")");
  const auto times = frame_times(model.timeline);
  const int w = video.width(), h = video.height();
  std::cout << "eval: " << video.frames.size() << " frames at " << w << "x" << h << "\n";
  std::cout << "frame,psnr,ssim\n";
  double psum = 0.0, ssum = 0.0;
  for (std::size_t k = 0; k < video.frames.size(); ++k) {
    // Targets are 8-bit files; quantize renders the same way so a model
    // evaluated against its own exports hits the PSNR cap.
    const Frame f = quantize8(render(scene_at(model, times[k]), w, h, {}));
    const double p = psnr(f, video.frames[k]);
    const double s = ssim(f, video.frames[k]);
    psum += p;
    ssum += s;
    std::cout << k << "," << p << "," << s << "\n";
  }
  std::cout << "average," << psum / static_cast<double>(video.frames.size()) << ","
            << ssum / static_cast<double>(video.frames.size()) << "\n";
  return 0;
}

void print_histogram(const std::string& name, std::vector<double> values) {
  if (values.empty()) return;
  double lo = values.front(), hi = values.front();
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  constexpr int kBins = 10;
  std::vector<int> bins(kBins, 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (double v : values)
    bins[std::min(kBins - 1, static_cast<int>((v - lo) / span * kBins))]++;
  std::cout << name << " [" << lo << ", " << hi << "]:";
  for (int b : bins) std::cout << " " << b;
  std::cout << "\n";
}

int cmd_inspect(const std::string& ckpt, bool defaults) {
  if (defaults) {
    std::cout << config_defaults_text();
    return 0;
  }
  const GaussianModel model = load_checkpoint(ckpt);
  std::cout << "n_gaussians: " << model.size() << "\n";
  std::cout << "n_frames: " << model.timeline.n_frames << "\n";
  std::cout << "poly_degree: " << model.poly_degree << "\n";
  std::cout << "steps_trained: " << model.steps_trained << "\n";
  std::cout << "seed: " << model.seed << "\n";
  std::cout << "eps_thickness: " << model.eps_thickness << "\n";
  std::cout << "overrides: " << model.frame_overrides.size() << "\n";
  if (model.timeline.n_frames >= 2) {
    const auto t = frame_times(model.timeline);
    std::cout << "timeline:";
    for (double v : t) std::cout << " " << v;
    std::cout << "\n";
  }
  std::vector<double> op, s1, st, mt;
  for (std::size_t i = 0; i < model.size(); ++i) {
    op.push_back(sigmoid(model.opacity_raw[i]));
    s1.push_back(std::log10(std::exp(static_cast<double>(model.log_s1[i]))));
    st.push_back(std::exp(static_cast<double>(model.log_sigma_t[i])));
    mt.push_back(sigmoid(model.m_t_raw[i]));
  }
  print_histogram("opacity", op);
  print_histogram("log10_s1", s1);
  print_histogram("sigma_t", st);
  print_histogram("m_t", mt);
  if (!model.config_echo.empty()) std::cout << "config_echo:\n" << model.config_echo;
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video-as-Gaussians toolkit: fit, render, interpolate, edit"};
  app.require_subcommand(1);

  CommonOpts common;
  if (const char* env = std::getenv("VGS_THREADS")) common.threads = std::atoi(env);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a frame directory");
  std::string frames_dir, out_ckpt, metrics_path;
  fit_cmd->add_option("--frames", frames_dir, "Directory of .ppm/.png frames")->required();
  fit_cmd->add_option("--out", out_ckpt, "Output checkpoint path")->required();
  fit_cmd->add_option("--config", common.config_path, "key = value config file");
  fit_cmd->add_option("--set", common.sets, "Override a config key (key=value, repeatable)");
  fit_cmd->add_option("--metrics", metrics_path, "Metrics CSV path (default <out>.metrics.csv)");
  fit_cmd->add_option("--threads", common.threads, "Worker thread count");
  int opt_steps = -1, opt_n_init = -1, opt_poly = -1, opt_batch = -1;
  std::int64_t opt_seed = -1;
  fit_cmd->add_option("--steps", opt_steps, "Training steps");
  fit_cmd->add_option("--n-init", opt_n_init, "Initial component count");
  fit_cmd->add_option("--poly-degree", opt_poly, "Polynomial degree");
  fit_cmd->add_option("--batch-size", opt_batch, "Frames per step");
  fit_cmd->add_option("--seed", opt_seed, "RNG seed");

  // render
  auto* render_cmd = app.add_subcommand("render", "Render key frames or arbitrary times");
  std::string r_ckpt, r_out, r_diff;
  std::vector<int> r_frames;
  std::vector<double> r_times;
  int r_w = 256, r_h = 256;
  render_cmd->add_option("--ckpt", r_ckpt, "Checkpoint")->required();
  render_cmd->add_option("--out-dir", r_out, "Output directory")->required();
  render_cmd->add_option("--frame", r_frames, "Key frame index (repeatable)");
  render_cmd->add_option("--time", r_times, "Time in [0,1] (repeatable)");
  render_cmd->add_option("--diff", r_diff, "Target frame dir; also write |render-target|");
  render_cmd->add_option("--width", r_w, "Render width (ignored with --diff)");
  render_cmd->add_option("--height", r_h, "Render height (ignored with --diff)");
  render_cmd->add_option("--threads", common.threads, "Worker thread count");

  // interp
  auto* interp_cmd = app.add_subcommand("interp", "Interpolate between consecutive key frames");
  std::string i_ckpt, i_out;
  int i_rate = 1, i_w = 256, i_h = 256;
  interp_cmd->add_option("--ckpt", i_ckpt, "Checkpoint")->required();
  interp_cmd->add_option("--out-dir", i_out, "Output directory")->required();
  interp_cmd->add_option("--rate", i_rate, "Subdivisions per gap")->required();
  interp_cmd->add_option("--width", i_w, "Render width");
  interp_cmd->add_option("--height", i_h, "Render height");
  interp_cmd->add_option("--threads", common.threads, "Worker thread count");

  // edit
  auto* edit_cmd = app.add_subcommand("edit", "Apply a JSON edit script");
  std::string e_ckpt, e_script, e_out;
  edit_cmd->add_option("--ckpt", e_ckpt, "Checkpoint")->required();
  edit_cmd->add_option("--script", e_script, "Edit script (JSON)")->required();
  edit_cmd->add_option("--out", e_out, "Output checkpoint")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM against a frame directory");
  std::string v_ckpt, v_frames;
  eval_cmd->add_option("--ckpt", v_ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--frames", v_frames, "Frame directory")->required();
  eval_cmd->add_option("--threads", common.threads, "Worker thread count");

  // inspect
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a checkpoint");
  std::string n_ckpt;
  bool n_defaults = false;
  inspect_cmd->add_option("--ckpt", n_ckpt, "Checkpoint");
  inspect_cmd->add_flag("--defaults", n_defaults, "Print all config defaults and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    apply_threads(common.threads);
    if (*fit_cmd) {
      if (opt_steps >= 0) common.sets.push_back("steps=" + std::to_string(opt_steps));
      if (opt_n_init >= 0) common.sets.push_back("n_init=" + std::to_string(opt_n_init));
      if (opt_poly >= 0) common.sets.push_back("poly_degree=" + std::to_string(opt_poly));
      if (opt_batch >= 0) common.sets.push_back("batch_size=" + std::to_string(opt_batch));
      if (opt_seed >= 0) common.sets.push_back("seed=" + std::to_string(opt_seed));
      return cmd_fit(frames_dir, common, out_ckpt, metrics_path);
    }
    if (*render_cmd) return cmd_render(r_ckpt, r_frames, r_times, r_out, r_diff, r_w, r_h);
    if (*interp_cmd) return cmd_interp(i_ckpt, i_rate, i_out, i_w, i_h);
    if (*edit_cmd) return cmd_edit(e_ckpt, e_script, e_out);
    if (*eval_cmd) return cmd_eval(v_ckpt, v_frames);
    if (*inspect_cmd) {
      if (!n_defaults && n_ckpt.empty())
        throw std::invalid_argument("inspect: need --ckpt or --defaults");
      return cmd_inspect(n_ckpt, n_defaults);
    }
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const corrupt_checkpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const edit_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
