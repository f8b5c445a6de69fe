#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "synth.hpp"
#include "vgs/trainer.hpp"

using namespace vgs;

TEST_CASE("loss_mse") {
  Rng rng(1);
  Frame a(6, 5), b(6, 5);
  for (auto& v : a.rgb) v = rng.uniform();

  SUBCASE("identical frames: zero loss, zero grad") {
    const auto r = loss_mse(a, a);
    CHECK(r.value == 0.0);
    for (double v : r.grad.rgb) CHECK(v == 0.0);
  }

  SUBCASE("constant offset 0.1 gives 0.01") {
    for (std::size_t i = 0; i < a.rgb.size(); ++i) b.rgb[i] = a.rgb[i] - 0.1;
    CHECK(loss_mse(a, b).value == doctest::Approx(0.01).epsilon(1e-12));
  }

  SUBCASE("matches a naive double-loop recomputation") {
    for (auto& v : b.rgb) v = rng.uniform();
    double acc = 0.0;
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c) {
          const double d = a.at(x, y, c) - b.at(x, y, c);
          acc += d * d;
        }
    const auto r = loss_mse(a, b);
    CHECK(r.value == doctest::Approx(acc / 90.0).epsilon(1e-12));
    CHECK(r.grad.at(2, 3, 1) ==
          doctest::Approx(2.0 * (a.at(2, 3, 1) - b.at(2, 3, 1)) / 90.0).epsilon(1e-12));
  }

  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(loss_mse(a, Frame(3, 3)), std::invalid_argument);
  }
}

TEST_CASE("ssim_with_grad value matches ssim() and grad matches finite differences") {
  Rng rng(2);
  Frame a(12, 12), b(12, 12);
  for (auto& v : a.rgb) v = rng.uniform(0.2, 0.8);
  for (auto& v : b.rgb) v = rng.uniform(0.2, 0.8);
  auto r = ssim_with_grad(a, b);
  CHECK(r.value == doctest::Approx(ssim(a, b)).epsilon(1e-12));

  const double h = 1e-5;
  Rng pick(7);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t i = static_cast<size_t>(pick.uniform() * a.rgb.size());
    Frame ap = a, am = a;
    ap.rgb[i] += h;
    am.rgb[i] -= h;
    const double fd = (ssim(ap, b) - ssim(am, b)) / (2 * h);
    CHECK(r.grad.rgb[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

namespace {

using testsup::fd_safe_model;

VideoSequence noise_video(int w, int h, int n, Rng& rng) {
  VideoSequence v;
  for (int k = 0; k < n; ++k) {
    Frame f(w, h);
    for (auto& p : f.rgb) p = rng.uniform(0.1, 0.9);
    v.frames.push_back(std::move(f));
  }
  return v;
}

} // namespace

TEST_CASE("full-chain gradients match central finite differences for every parameter class") {
  const int W = 8, H = 8;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.poly_degree = 3;
  cfg.mirror_loss = true;
  cfg.background = {0.15, 0.2, 0.1};

  int worst_class_failures = 0;
  for (int seed = 0; seed < 6; ++seed) {
    Rng rng(1000 + static_cast<std::uint64_t>(seed));
    auto model = fd_safe_model(rng, 3, 3, 4);
    auto video = noise_video(W, H, 4, rng);
    const std::vector<int> batch{0, 1, 2, 3};

    const auto base = batch_loss_and_grads(model, video, batch, cfg);

    auto loss_at = [&]() { return batch_loss_and_grads(model, video, batch, cfg).loss; };
    auto fd_check = [&](float* p, double analytic) {
      const float save = *p;
      const double h = 1e-4;
      *p = static_cast<float>(save + h);
      const double xp = static_cast<double>(*p);
      const double lp = loss_at();
      *p = static_cast<float>(save - h);
      const double xm = static_cast<double>(*p);
      const double lm = loss_at();
      *p = save;
      const double fd = (lp - lm) / (xp - xm); // measured float deltas
      const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-3});
      if (std::abs(fd - analytic) / denom > 1e-3) ++worst_class_failures;
      CHECK(std::abs(fd - analytic) / denom <= 1e-3);
    };

    for (std::size_t i = 0; i < model.size(); ++i) {
      fd_check(&model.m_s[2 * i], base.grads.m_s[2 * i]);
      fd_check(&model.m_s[2 * i + 1], base.grads.m_s[2 * i + 1]);
      fd_check(&model.m_t_raw[i], base.grads.m_t_raw[i]);
      fd_check(&model.log_s1[i], base.grads.log_s1[i]);
      fd_check(&model.log_s2[i], base.grads.log_s2[i]);
      fd_check(&model.theta_raw[i], base.grads.theta_raw[i]);
      fd_check(&model.log_sigma_t[i], base.grads.log_sigma_t[i]);
      for (std::size_t p = 0; p < 6; ++p)
        fd_check(&model.poly[6 * i + p], base.grads.poly[6 * i + p]);
      fd_check(&model.opacity_raw[i], base.grads.opacity_raw[i]);
      for (std::size_t c = 0; c < 3; ++c)
        fd_check(&model.color[3 * i + c], base.grads.color[3 * i + c]);
    }
    for (std::size_t j = 0; j < model.timeline.w.size(); ++j)
      fd_check(&model.timeline.w[j], base.grads.w[j]);
  }
  CHECK(worst_class_failures == 0);
}

TEST_CASE("mirrored loss equals the direct loss on pre-flipped data") {
  Rng rng(31);
  auto model = fd_safe_model(rng, 5, 2, 3);
  auto video = noise_video(10, 10, 3, rng);
  const auto times = frame_times(model.timeline);
  const Frame rendered = render(condition_all(model, times[1]).scene, 10, 10, {});
  const auto direct_on_flipped = loss_mse(mirror(rendered), mirror(video.frames[1]));
  const auto direct = loss_mse(rendered, video.frames[1]);
  CHECK(direct_on_flipped.value == doctest::Approx(direct.value).epsilon(1e-13));
}

TEST_CASE("zero-opacity model on black frames: zero loss, no parameter change") {
  Rng rng(32);
  auto model = fd_safe_model(rng, 4, 2, 3);
  for (auto& v : model.opacity_raw) v = -40.0f; // activated opacity ~ 4e-18
  VideoSequence video;
  for (int k = 0; k < 3; ++k) video.frames.push_back(Frame(8, 8)); // black
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.poly_degree = 2;
  const auto before_ms = model.m_s;
  const auto before_op = model.opacity_raw;
  AdamOptimizer opt;
  opt.ensure_shapes(model);
  Rng r2(5);
  const double loss = train_step(model, video, cfg, opt, r2, 1);
  CHECK(loss == 0.0);
  CHECK(model.m_s == before_ms);
  CHECK(model.opacity_raw == before_op);
}

TEST_CASE("descent: one small-step update does not increase the frozen-batch loss") {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.poly_degree = 2;
  // tiny rates so the first-order step is a descent step
  cfg.lr_means = 1e-6;
  cfg.lr_means_final = 1e-6;
  cfg.lr_opacity = 1e-5;
  cfg.lr_scales = 1e-6;
  cfg.lr_rotation = 1e-6;
  cfg.lr_color = 1e-6;
  cfg.lr_poly = 1e-6;
  cfg.lr_m_t = 1e-6;
  cfg.lr_sigma_t = 1e-6;
  cfg.lr_timeline = 1e-6;
  int improved = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(500 + static_cast<std::uint64_t>(trial));
    auto model = fd_safe_model(rng, 6, 2, 4);
    auto video = noise_video(8, 8, 4, rng);
    const std::vector<int> batch{1, 3};
    const double before = batch_loss_and_grads(model, video, batch, cfg).loss;
    AdamOptimizer opt;
    opt.ensure_shapes(model);
    const auto res = batch_loss_and_grads(model, video, batch, cfg);
    opt.step(model, res.grads, cfg, cfg.lr_means);
    const double after = batch_loss_and_grads(model, video, batch, cfg).loss;
    if (after <= before + 1e-12) ++improved;
  }
  CHECK(improved == 10);
}

TEST_CASE("fit with steps = 0 returns the model unchanged") {
  Rng rng(9);
  auto video = testsup::synth_disk_video(24, 24, 4);
  TrainConfig cfg;
  cfg.steps = 0;
  cfg.n_init = 50;
  cfg.poly_degree = 2;
  auto model = make_initial_model(video, cfg, rng);
  const auto before = model.m_s;
  const auto log = fit(model, video, cfg);
  CHECK(log.empty());
  CHECK(model.m_s == before);
}

TEST_CASE("fit is deterministic for a fixed seed") {
  auto video = testsup::synth_disk_video(24, 24, 4);
  TrainConfig cfg;
  cfg.steps = 30;
  cfg.n_init = 60;
  cfg.poly_degree = 2;
  cfg.seed = 11;
  cfg.densify_from = 10;
  cfg.densify_interval = 10;
  cfg.log_interval = 10;
  cfg.threads = 1;
  Rng ra(cfg.seed), rb(cfg.seed);
  auto m1 = make_initial_model(video, cfg, ra);
  auto m2 = make_initial_model(video, cfg, rb);
  const auto l1 = fit(m1, video, cfg);
  const auto l2 = fit(m2, video, cfg);
  CHECK(m1.m_s == m2.m_s);
  CHECK(m1.opacity_raw == m2.opacity_raw);
  CHECK(m1.timeline.w == m2.timeline.w);
  REQUIRE(l1.size() == l2.size());
  for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1[i].loss == l2[i].loss);
}

TEST_CASE("fit keeps optimizer state aligned across densify/prune and improves PSNR") {
  auto video = testsup::synth_disk_video(32, 32, 6);
  TrainConfig cfg;
  cfg.steps = 260;
  cfg.n_init = 150;
  cfg.poly_degree = 2;
  cfg.seed = 3;
  cfg.densify_from = 50;
  cfg.densify_until = 200;
  cfg.densify_interval = 50;
  cfg.opacity_reset_interval = 0; // no reset in this short run
  cfg.log_interval = 20;
  Rng rng(cfg.seed);
  auto model = make_initial_model(video, cfg, rng);
  const auto log = fit(model, video, cfg);
  REQUIRE(!log.empty());
  // PSNR at the end beats the start, and every component stays valid.
  CHECK(log.back().psnr_probe > log.front().psnr_probe);
  for (std::size_t i = 0; i < model.size(); ++i)
    CHECK_NOTHROW(model.activate_component(i).validate());
  CHECK(log.back().n_gaussians == model.size());
}

TEST_CASE("config file parsing") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto p = (dir / "vgs_cfg_test.txt").string();
  {
    std::ofstream out(p);
    out << "# comment\n[run]\nsteps = 123\nbatch_size=2\n lr_poly = 3e-3 # inline\n"
           "mirror_loss = off\n";
  }
  const auto cfg = parse_config_file(p);
  CHECK(cfg.steps == 123);
  CHECK(cfg.batch_size == 2);
  CHECK(cfg.lr_poly == doctest::Approx(3e-3));
  CHECK(cfg.mirror_loss == false);
  CHECK(cfg.poly_degree == 7); // untouched default

  {
    std::ofstream out(p);
    out << "unknown_key = 5\n";
  }
  CHECK_THROWS_AS(parse_config_file(p), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_file((dir / "missing_cfg.txt").string()), io_error);
  std::filesystem::remove(p);

  // Defaults text parses back to the defaults.
  const auto dp = (dir / "vgs_defaults.txt").string();
  {
    std::ofstream out(dp);
    out << config_defaults_text();
  }
  const auto back = parse_config_file(dp);
  CHECK(back.steps == TrainConfig{}.steps);
  CHECK(back.lr_means == TrainConfig{}.lr_means);
  std::filesystem::remove(dp);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Rng rng(77);
  auto model = fd_safe_model(rng, 3, 2, 3);
  model.m_s[0] = std::numeric_limits<float>::quiet_NaN();
  auto video = noise_video(8, 8, 3, rng);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.poly_degree = 2;
  AdamOptimizer opt;
  opt.ensure_shapes(model);
  Rng r2(1);
  // NaN mean makes the component invisible (prepare() rejects it), so the
  // render is finite; force the failure through a NaN color instead.
  model.m_s[0] = 0.0f;
  model.color[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    (void)train_step(model, video, cfg, opt, r2, 42);
    FAIL("expected runtime_error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step 42") != std::string::npos);
  }
}
