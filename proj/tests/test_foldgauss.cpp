#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "vgs/foldgauss.hpp"

using namespace vgs;

TEST_CASE("gauss1d_pdf basics") {
  // At the mode with var = 1/(2*pi) the normalization constant cancels.
  CHECK(gauss1d_pdf(0.3, {0.3, 1.0 / kTwoPi}) == doctest::Approx(1.0).epsilon(1e-14));

  // One stddev away: pdf(m)*exp(-1/2), for several sigmas.
  for (double s : {0.1, 0.5, 2.0}) {
    const Gaussian1D g{0.4, s * s};
    CHECK(gauss1d_pdf(0.4 + s, g) ==
          doctest::Approx(gauss1d_pdf(0.4, g) * 0.6065306597126334).epsilon(1e-13));
  }

  // Frozen against an independent high-precision evaluation.
  CHECK(gauss1d_pdf(0.7, {0.5, 0.04}) == doctest::Approx(1.2098536225957167).epsilon(1e-14));

  CHECK_THROWS_AS(gauss1d_pdf(0.0, {0.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(gauss1d_pdf(0.0, {0.0, -1.0}), std::domain_error);
  CHECK_THROWS_AS(gauss1d_pdf(std::numeric_limits<double>::infinity(), {0.0, 1.0}),
                  std::domain_error);

  // pdf integrates to 1 (plain midpoint quadrature over +-10 sigma).
  const Gaussian1D g{0.2, 0.09};
  double acc = 0.0;
  const int n = 20000;
  const double lo = 0.2 - 3.0, hi = 0.2 + 3.0, h = (hi - lo) / n;
  for (int i = 0; i < n; ++i) acc += gauss1d_pdf(lo + (i + 0.5) * h, g) * h;
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("a_of_t likelihood scaling") {
  CHECK(a_of_t(0.37, 0.37, 0.05) == 1.0);
  CHECK(a_of_t(0.5 + 0.2, 0.5, 0.2) == doctest::Approx(0.6065306597126334).epsilon(1e-15));
  CHECK(a_of_t(0.1 + 10.0 * 0.03, 0.1, 0.03) ==
        doctest::Approx(1.928749847963918e-22).epsilon(1e-12));

  // Strictly decreasing in |t - m_t|.
  double prev = 1.0;
  for (int k = 1; k <= 20; ++k) {
    const double v = a_of_t(0.5 + 0.07 * k, 0.5, 0.3);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(a_of_t(0.0, 0.0, 0.0), std::domain_error);
  CHECK_THROWS_AS(a_of_t(0.0, 0.0, -0.2), std::domain_error);
}

TEST_CASE("SpatialCov2 matrix is SPD and reduces to diagonal at theta=0") {
  const SpatialCov2 d{0.0, 0.7, 0.2};
  const Sym2 m = d.matrix();
  CHECK(m.xx == doctest::Approx(0.49));
  CHECK(m.yy == doctest::Approx(0.04));
  CHECK(m.xy == doctest::Approx(0.0));

  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const SpatialCov2 c{rng.uniform(0.0, kTwoPi), rng.uniform(0.05, 3.0), rng.uniform(0.05, 3.0)};
    const Sym2 s = c.matrix();
    CHECK(s.xx > 0.0);
    CHECK(s.det() > 0.0); // SPD for a 2x2 symmetric matrix
    CHECK(s.det() == doctest::Approx(c.s1 * c.s1 * c.s2 * c.s2).epsilon(1e-12));
  }
}

TEST_CASE("PolyShift evaluation") {
  PolyShift p;
  p.cx = {1.0, -2.0, 0.5}; // u - 2u^2 + 0.5u^3
  p.cy = {0.0, 1.0, 0.0};  // u^2
  CHECK(p.eval(0.0).x == 0.0);
  CHECK(p.eval(0.0).y == 0.0);
  const double u = 0.3;
  CHECK(p.eval(u).x == doctest::Approx(u - 2 * u * u + 0.5 * u * u * u).epsilon(1e-15));
  CHECK(p.eval(u).y == doctest::Approx(u * u).epsilon(1e-15));
  CHECK(p.deriv(u).x == doctest::Approx(1.0 - 4 * u + 1.5 * u * u).epsilon(1e-15));
  CHECK(p.deriv(u).y == doctest::Approx(2 * u).epsilon(1e-15));
  // Determinism: same input, same bits.
  CHECK(p.eval(0.77).x == p.eval(0.77).x);
}

TEST_CASE("condition_at identity and hand case") {
  FoldedGaussian3D fg;
  fg.m_s = {0.1, -0.2};
  fg.cov_s = {0.3, 0.8, 0.5};
  fg.m_t = 0.4;
  fg.sigma_t = 0.25;

  SUBCASE("no shift at the temporal mode") {
    const auto g = condition_at(fg, fg.m_t);
    CHECK(g.mean.x == fg.m_s.x);
    CHECK(g.mean.y == fg.m_s.y);
    CHECK(g.scale == 1.0);
    CHECK(g.theta == fg.cov_s.theta);
    CHECK(g.opacity == fg.opacity);
  }

  SUBCASE("linear drift hand case") {
    FoldedGaussian3D h;
    h.m_s = {0.5, 0.3};
    h.m_t = 0.5;
    h.sigma_t = 0.2;
    h.poly.cx = {1.0};
    h.poly.cy = {0.0};
    const auto g = condition_at(h, 0.7);
    CHECK(g.mean.x == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(g.mean.y == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(g.scale == doctest::Approx(0.6065306597126334).epsilon(1e-15));
  }

  SUBCASE("cov scale decays monotonically to zero") {
    double prev = 1.0;
    for (int k = 1; k < 30; ++k) {
      const double sc = condition_at(fg, fg.m_t + 0.2 * k).scale;
      CHECK(sc < prev);
      prev = sc;
    }
    CHECK(condition_at(fg, fg.m_t + 40.0).scale == 0.0); // underflows
  }

  SUBCASE("cov equals a(t) * base covariance to machine precision") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
      const auto f = testsup::random_fg(rng);
      const double t = rng.uniform(0.0, 1.0);
      const auto g = condition_at(f, t);
      const double a = a_of_t(t, f.m_t, f.sigma_t);
      const Sym2 base = f.cov_s.matrix();
      const Sym2 got = g.cov();
      CHECK(got.xx == doctest::Approx(a * base.xx).epsilon(1e-14));
      CHECK(got.xy == doctest::Approx(a * base.xy).epsilon(1e-12));
      CHECK(got.yy == doctest::Approx(a * base.yy).epsilon(1e-14));
      CHECK(got.det() == doctest::Approx(a * a * base.det()).epsilon(1e-12));
    }
  }
}

TEST_CASE("fg_density factorizes as conditional times marginal") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fg = testsup::random_fg(rng);
    for (int i = 0; i < 100; ++i) {
      const double t = rng.normal(fg.m_t, 2.0 * fg.sigma_t);
      const auto g = condition_at(fg, t);
      const Vec2 s{g.mean.x + rng.uniform(-1.0, 1.0), g.mean.y + rng.uniform(-1.0, 1.0)};
      // Compose the factors through independent reference pdfs.
      const Sym2 c = g.cov();
      const double want = testsup::ref_normal2(s.x, s.y, g.mean.x, g.mean.y, c.xx, c.xy, c.yy) *
                          testsup::ref_normal1(t, fg.m_t, fg.sigma_t * fg.sigma_t);
      const double got = fg_density(fg, s, t);
      CHECK(got >= 0.0);
      CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("fg_density time symmetry when poly = 0") {
  FoldedGaussian3D fg;
  fg.m_s = {0.2, 0.1};
  fg.cov_s = {1.1, 0.6, 0.3};
  fg.m_t = 0.45;
  fg.sigma_t = 0.2;
  for (double dt : {0.05, 0.13, 0.4}) {
    for (double off : {0.0, 0.2, -0.35}) {
      // Compare at the same s-offset from the conditional mean (= m_s here).
      const Vec2 s{fg.m_s.x + off, fg.m_s.y - off * 0.5};
      CHECK(fg_density(fg, s, fg.m_t + dt) ==
            doctest::Approx(fg_density(fg, s, fg.m_t - dt)).epsilon(1e-13));
    }
  }
}

TEST_CASE("fg_density peak equals product of component peaks") {
  Rng rng(123);
  const auto fg = testsup::random_fg(rng);
  const double peak2d = 1.0 / (kTwoPi * fg.cov_s.s1 * fg.cov_s.s2);
  const double peak1d = 1.0 / std::sqrt(kTwoPi * fg.sigma_t * fg.sigma_t);
  CHECK(fg_density(fg, fg.m_s, fg.m_t) == doctest::Approx(peak2d * peak1d).epsilon(1e-12));
}

TEST_CASE("fg_sample statistics") {
  Rng rng(2024);

  SUBCASE("degenerate time clusters at m_t") {
    FoldedGaussian3D fg;
    fg.m_t = 0.6;
    fg.sigma_t = 1e-9;
    fg.cov_s = {0.0, 0.5, 0.25};
    fg.m_s = {0.3, -0.4};
    double smx = 0.0, smy = 0.0;
    for (int i = 0; i < 20000; ++i) {
      auto [s, t] = fg_sample(fg, rng);
      CHECK(std::abs(t - 0.6) < 1e-7);
      smx += s.x;
      smy += s.y;
    }
    CHECK(smx / 20000 == doctest::Approx(0.3).epsilon(0.05));
    CHECK(smy / 20000 == doctest::Approx(-0.4).epsilon(0.05));
  }

  SUBCASE("time mean obeys the CLT bound over 1e6 draws") {
    const auto fg = testsup::random_fg(rng);
    const std::size_t n = 1000000;
    double sum = 0.0;
    Rng r2(31415);
    for (std::size_t i = 0; i < n; ++i) sum += fg_sample(fg, r2).second;
    CHECK(std::abs(sum / n - fg.m_t) < 3.0 * fg.sigma_t / 1000.0);
  }

  SUBCASE("odd poly with symmetric time keeps the spatial mean at m_s") {
    FoldedGaussian3D fg;
    fg.m_s = {0.25, -0.1};
    fg.cov_s = {0.4, 0.3, 0.6};
    fg.m_t = 0.5;
    fg.sigma_t = 0.15;
    fg.poly.cx = {0.8, 0.0, -0.5}; // odd in u
    fg.poly.cy = {-0.3, 0.0, 0.2};
    const std::size_t n = 1000000;
    double sx = 0.0, sy = 0.0;
    Rng r2(99);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [s, t] = fg_sample(fg, r2);
      sx += s.x;
      sy += s.y;
    }
    // E[f(m_t - t)] = 0 for odd f; spatial spread dominates the MC error.
    CHECK(std::abs(sx / n - fg.m_s.x) < 0.005);
    CHECK(std::abs(sy / n - fg.m_s.y) < 0.005);
  }
}

TEST_CASE("gauss_hermite self-consistency") {
  for (int n : {8, 32, 64}) {
    const auto gh = gauss_hermite(n);
    double w = 0.0, wx2 = 0.0;
    for (int i = 0; i < n; ++i) {
      w += gh.weights[static_cast<size_t>(i)];
      wx2 += gh.weights[static_cast<size_t>(i)] * gh.nodes[static_cast<size_t>(i)] *
             gh.nodes[static_cast<size_t>(i)];
      if (i < n / 2) CHECK(gh.nodes[static_cast<size_t>(i)] > 0.0);
    }
    CHECK(w == doctest::Approx(std::sqrt(kPi)).epsilon(1e-12));
    CHECK(wx2 == doctest::Approx(0.5 * std::sqrt(kPi)).epsilon(1e-12));
  }
}

TEST_CASE("normalization: MC estimate within 3 standard errors for 20 random components") {
  Rng rng(424242);
  for (int i = 0; i < 20; ++i) {
    const auto fg = testsup::random_fg(rng, 7);
    const auto est = normalization_estimate(fg, 100000, rng);
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.estimate - 1.0) <= 3.0 * est.std_error);
  }
  FoldedGaussian3D any;
  Rng r(1);
  CHECK_THROWS_AS(normalization_estimate(any, 100, r), std::invalid_argument);
}

TEST_CASE("normalization: separable quadrature equals 1 to 1e-6") {
  Rng rng(7);
  for (int i = 0; i < 5; ++i) {
    FoldedGaussian3D fg;
    fg.m_s = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    fg.cov_s = {0.0, rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
    fg.m_t = rng.uniform(0.3, 0.7);
    fg.sigma_t = rng.uniform(0.1, 0.4);
    CHECK(std::abs(normalization_quadrature_separable(fg) - 1.0) < 1e-6);
  }
  FoldedGaussian3D bad;
  bad.poly.cx = {0.1};
  bad.poly.cy = {0.0};
  CHECK_THROWS_AS(normalization_quadrature_separable(bad), std::invalid_argument);
}

TEST_CASE("conditional consistency residual") {
  SUBCASE("closed-form case at the joint mode") {
    FoldedGaussian3D fg;
    fg.m_s = {0.3, 0.2};
    fg.cov_s = {0.0, 0.5, 0.8};
    fg.m_t = 0.5;
    fg.sigma_t = 0.2;
    CHECK(conditional_consistency(fg, fg.m_s, fg.m_t) <= 1e-10);
  }

  SUBCASE("random components and points") {
    Rng rng(31);
    for (int i = 0; i < 20; ++i) {
      const auto fg = testsup::random_fg(rng);
      const double t = rng.normal(fg.m_t, fg.sigma_t);
      const auto g = condition_at(fg, t);
      // Probe within the conditioned footprint so the pdf is non-negligible.
      const double r = std::sqrt(g.scale);
      const Vec2 s{g.mean.x + rng.uniform(-2.0, 2.0) * r * g.s1,
                   g.mean.y + rng.uniform(-2.0, 2.0) * r * g.s2};
      CHECK(conditional_consistency(fg, s, t) <= 1e-8);
    }
  }

  SUBCASE("far tail exercises a(t) << 1") {
    // Tail times must stay inside the video's unit interval, so sigma_t is
    // drawn small here; 5 sigma away a(t) ~ 4e-6 and the conditioned pdf
    // peaks around 1e5, which is the regime the absolute tolerance targets.
    Rng rng(9);
    for (int i = 0; i < 8; ++i) {
      auto fg = testsup::random_fg(rng);
      fg.m_t = rng.uniform(0.3, 0.7);
      fg.sigma_t = rng.uniform(0.03, 0.08);
      const double t = fg.m_t + 5.0 * fg.sigma_t;
      const auto g = condition_at(fg, t);
      const double r = std::sqrt(g.scale);
      const Vec2 s{g.mean.x + 0.5 * r * g.s1, g.mean.y - 0.3 * r * g.s2};
      CHECK(conditional_consistency(fg, s, t) <= 1e-8);
    }
  }
}

TEST_CASE("affine form: transformed base samples match conditional moments") {
  // Push 1e6 draws of N(m_s, Sigma_s) through the time-dependent transform
  // and compare empirical mean/covariance to the conditional parameters.
  Rng rng(55);
  const auto fg = testsup::random_fg(rng);
  const double t = fg.m_t + 0.7 * fg.sigma_t;
  const double a = a_of_t(t, fg.m_t, fg.sigma_t);
  const Vec2 shift = fg.poly.eval(fg.m_t - t);
  const double c = std::cos(fg.cov_s.theta), sn = std::sin(fg.cov_s.theta);

  const std::size_t n = 1000000;
  double mx = 0, my = 0, cxx = 0, cxy = 0, cyy = 0;
  std::vector<Vec2> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = rng.normal() * fg.cov_s.s1;
    const double z2 = rng.normal() * fg.cov_s.s2;
    const Vec2 x{fg.m_s.x + c * z1 - sn * z2, fg.m_s.y + sn * z1 + c * z2};
    const Vec2 y{std::sqrt(a) * (x.x - fg.m_s.x) + fg.m_s.x + shift.x,
                 std::sqrt(a) * (x.y - fg.m_s.y) + fg.m_s.y + shift.y};
    pts[i] = y;
    mx += y.x;
    my += y.y;
  }
  mx /= n;
  my /= n;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pts[i].x - mx, dy = pts[i].y - my;
    cxx += dx * dx;
    cxy += dx * dy;
    cyy += dy * dy;
  }
  cxx /= n;
  cxy /= n;
  cyy /= n;

  const auto g = condition_at(fg, t);
  const Sym2 want = g.cov();
  const double mean_tol = 4.0 * std::max(fg.cov_s.s1, fg.cov_s.s2) / 1000.0;
  const double cov_tol = 6.0 * std::max(want.xx, want.yy) / 1000.0;
  CHECK(std::abs(mx - g.mean.x) < mean_tol);
  CHECK(std::abs(my - g.mean.y) < mean_tol);
  CHECK(std::abs(cxx - want.xx) < cov_tol);
  CHECK(std::abs(cxy - want.xy) < cov_tol);
  CHECK(std::abs(cyy - want.yy) < cov_tol);
}

TEST_CASE("FoldedGaussian3D validation") {
  FoldedGaussian3D fg;
  fg.validate();
  fg.sigma_t = 0.0;
  CHECK_THROWS_AS(fg.validate(), std::domain_error);
  fg.sigma_t = 0.1;
  fg.opacity = 1.0;
  CHECK_THROWS_AS(fg.validate(), std::domain_error);
  fg.opacity = 0.5;
  fg.cov_s.s2 = -0.1;
  CHECK_THROWS_AS(fg.validate(), std::domain_error);
}
