#pragma once

// Frame ingestion/export (binary PPM and PNG), quality metrics, and the
// "VGSF" checkpoint format. Pixels are [0,1] reals mapped linearly from
// bytes (value/maxval, no gamma transform). Checkpoints are little-endian
// and round-trip bit-exactly.

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <png.h>

#include "vgs/model.hpp"
#include "vgs/splat2d.hpp"

namespace vgs {

struct VideoSequence {
  std::vector<Frame> frames;
  std::optional<double> fps_hint;

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
};

// ---------------------------------------------------------------------------
// PPM (P6) and PNG codecs.

namespace detail {

inline void skip_ppm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

} // namespace detail

inline Frame load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error(path, "cannot open file");
  std::string magic;
  in >> magic;
  if (magic != "P6") throw io_error(path, "not a binary PPM (P6)");
  int w = 0, h = 0, maxval = 0;
  detail::skip_ppm_space(in);
  in >> w;
  detail::skip_ppm_space(in);
  in >> h;
  detail::skip_ppm_space(in);
  in >> maxval;
  if (!in || w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw io_error(path, "unsupported PPM header");
  in.get(); // single whitespace after maxval
  std::vector<unsigned char> buf(static_cast<size_t>(3) * w * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<size_t>(in.gcount()) != buf.size()) throw io_error(path, "truncated PPM data");
  Frame f(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) f.rgb[i] = buf[i] / static_cast<double>(maxval);
  return f;
}

inline void save_ppm(const Frame& f, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error(path, "cannot open file for writing");
  out << "P6\n" << f.width << " " << f.height << "\n255\n";
  std::vector<unsigned char> buf(f.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(clamp01(f.rgb[i]) * 255.0));
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw io_error(path, "write failed");
}

inline Frame load_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw io_error(path, std::string("PNG read failed: ") + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw io_error(path, std::string("PNG decode failed: ") + image.message);
  }
  Frame f(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < buf.size(); ++i) f.rgb[i] = buf[i] / 255.0;
  return f;
}

inline void save_png(const Frame& f, const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(f.width);
  image.height = static_cast<png_uint_32>(f.height);
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(f.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(clamp01(f.rgb[i]) * 255.0));
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw io_error(path, std::string("PNG write failed: ") + image.message);
}

/// Quantize to the 8-bit grid (what any 8-bit export would store).
inline Frame quantize8(const Frame& f) {
  Frame out(f.width, f.height);
  for (std::size_t i = 0; i < f.rgb.size(); ++i)
    out.rgb[i] = std::lround(clamp01(f.rgb[i]) * 255.0) / 255.0;
  return out;
}

/// Load every .ppm/.png in a directory, in filename order.
inline VideoSequence load_frames(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw io_error(dir, "input not found or not a directory");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".ppm" || ext == ".png") names.push_back(e.path().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw io_error(dir, "no .ppm or .png frames in directory");
  VideoSequence seq;
  for (const auto& p : names) {
    Frame f = p.size() >= 4 && (p.substr(p.size() - 4) == ".ppm" || p.substr(p.size() - 4) == ".PPM")
                  ? load_ppm(p)
                  : load_png(p);
    if (!seq.frames.empty() && !f.same_shape(seq.frames.front()))
      throw io_error(p, "frame dimensions differ from the first frame");
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Quality metrics.

inline double mse(const Frame& a, const Frame& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: frame shapes differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = a.rgb[i] - b.rgb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

/// PSNR in dB on [0,1] frames, capped at 100 so logs stay finite.
inline double psnr(const Frame& a, const Frame& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

/// Mean SSIM over the luma channel (Rec.601 weights by default, or the mean
/// of per-channel SSIM), 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
/// L=1, windows fully inside the frame.
inline double ssim(const Frame& a, const Frame& b, bool per_channel = false) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: frame shapes differ");
  if (a.width < 11 || a.height < 11)
    throw std::invalid_argument("ssim: frame smaller than the 11x11 window");
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

  auto channel_ssim = [&](auto&& px_a, auto&& px_b) {
    double total = 0.0;
    long count = 0;
    for (int cy = R; cy < a.height - R; ++cy) {
      for (int cx = R; cx < a.width - R; ++cx) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int wy = 0; wy < W; ++wy)
          for (int wx = 0; wx < W; ++wx) {
            const double wv = win[static_cast<size_t>(wy) * W + wx];
            const double va = px_a(cx + wx - R, cy + wy - R);
            const double vb = px_b(cx + wx - R, cy + wy - R);
            mx += wv * va;
            my += wv * vb;
            xx += wv * va * va;
            yy += wv * vb * vb;
            xy += wv * va * vb;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
        total += ((2 * mx * my + C1) * (2 * cov + C2)) /
                 ((mx * mx + my * my + C1) * (vx + vy + C2));
        ++count;
      }
    }
    return total / static_cast<double>(count);
  };

  if (per_channel) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
      acc += channel_ssim([&](int x, int y) { return a.at(x, y, c); },
                          [&](int x, int y) { return b.at(x, y, c); });
    return acc / 3.0;
  }
  auto luma = [](const Frame& f, int x, int y) {
    return 0.299 * f.at(x, y, 0) + 0.587 * f.at(x, y, 1) + 0.114 * f.at(x, y, 2);
  };
  return channel_ssim([&](int x, int y) { return luma(a, x, y); },
                      [&](int x, int y) { return luma(b, x, y); });
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "VGSF", version, counts, timeline, the raw parameter
// arrays in declared field order, metadata, then editor overlays.

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
public:
  explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw io_error(path, "cannot open checkpoint for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw io_error(path_, "checkpoint write failed");
  }
  template <typename T> void pod(T v) { bytes(&v, sizeof(T)); }
  template <typename T> void array(const std::vector<T>& v) {
    bytes(v.data(), v.size() * sizeof(T));
  }

private:
  std::ofstream out_;
  std::string path_;
};

class ByteReader {
public:
  explicit ByteReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw io_error(path, "cannot open checkpoint");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw corrupt_checkpoint(offset_ + static_cast<std::uint64_t>(in_.gcount()),
                               "unexpected end of file");
    offset_ += n;
  }
  template <typename T> T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  template <typename T> void array(std::vector<T>& v, std::size_t count) {
    v.resize(count);
    bytes(v.data(), count * sizeof(T));
  }
  std::uint64_t offset() const { return offset_; }

private:
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

} // namespace detail

inline void save_checkpoint(const GaussianModel& m, const std::string& path) {
  detail::ByteWriter w(path);
  w.bytes("VGSF", 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.timeline.n_frames));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.poly_degree));
  w.array(m.timeline.w);
  w.array(m.m_s);
  w.array(m.m_t_raw);
  w.array(m.log_s1);
  w.array(m.log_s2);
  w.array(m.theta_raw);
  w.array(m.log_sigma_t);
  w.array(m.poly);
  w.array(m.opacity_raw);
  w.array(m.color);
  w.pod<std::uint32_t>(m.steps_trained);
  w.pod<std::uint64_t>(m.seed);
  w.pod<float>(m.eps_thickness);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.config_echo.size()));
  w.bytes(m.config_echo.data(), m.config_echo.size());
  // Editor overlays (doubles: overlays are derived state, kept bit-exact).
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.frame_overrides.size()));
  for (const auto& [k, scene] : m.frame_overrides) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(k));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(scene.size()));
    for (std::size_t i = 0; i < scene.size(); ++i) {
      const auto& g = scene.gaussians[i];
      for (double v : {g.mean.x, g.mean.y, g.theta, g.s1, g.s2, g.scale, g.opacity, g.color.r,
                       g.color.g, g.color.b})
        w.pod<double>(v);
      w.pod<std::int32_t>(scene.order_key[i]);
    }
  }
}

inline GaussianModel load_checkpoint(const std::string& path) {
  detail::ByteReader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "VGSF", 4) != 0) throw corrupt_checkpoint(0, "bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw corrupt_checkpoint(4, "unsupported version " + std::to_string(version));
  GaussianModel m;
  const auto n = r.pod<std::uint32_t>();
  const auto n_frames = r.pod<std::uint32_t>();
  m.poly_degree = static_cast<int>(r.pod<std::uint32_t>());
  m.timeline.n_frames = static_cast<int>(n_frames);
  if (n_frames > 0) r.array(m.timeline.w, n_frames - 1);
  r.array(m.m_s, 2 * static_cast<size_t>(n));
  r.array(m.m_t_raw, n);
  r.array(m.log_s1, n);
  r.array(m.log_s2, n);
  r.array(m.theta_raw, n);
  r.array(m.log_sigma_t, n);
  r.array(m.poly, 2 * static_cast<size_t>(m.poly_degree) * n);
  r.array(m.opacity_raw, n);
  r.array(m.color, 3 * static_cast<size_t>(n));
  m.steps_trained = r.pod<std::uint32_t>();
  m.seed = r.pod<std::uint64_t>();
  m.eps_thickness = r.pod<float>();
  const auto echo_len = r.pod<std::uint32_t>();
  m.config_echo.resize(echo_len);
  if (echo_len > 0) r.bytes(m.config_echo.data(), echo_len);
  const auto n_over = r.pod<std::uint32_t>();
  for (std::uint32_t o = 0; o < n_over; ++o) {
    const auto k = r.pod<std::uint32_t>();
    const auto cnt = r.pod<std::uint32_t>();
    SplatScene scene;
    for (std::uint32_t i = 0; i < cnt; ++i) {
      ConditionedGaussian2D g;
      g.mean.x = r.pod<double>();
      g.mean.y = r.pod<double>();
      g.theta = r.pod<double>();
      g.s1 = r.pod<double>();
      g.s2 = r.pod<double>();
      g.scale = r.pod<double>();
      g.opacity = r.pod<double>();
      g.color.r = r.pod<double>();
      g.color.g = r.pod<double>();
      g.color.b = r.pod<double>();
      const auto key = r.pod<std::int32_t>();
      scene.push_back(g, key);
    }
    m.frame_overrides[static_cast<int>(k)] = std::move(scene);
  }
  return m;
}

} // namespace vgs
