#pragma once

// Declarative edits on a fitted model: spatial/temporal selection, affine
// transforms routed through the triangle-face parameterization, duplication,
// deletion, and single-frame overrides baked as overlay scenes. Scripts are
// JSON; application is atomic (the input model is untouched on error).

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgs/model.hpp"

namespace vgs {

struct SelectCriteria {
  std::optional<std::array<double, 4>> box; // x0, y0, x1, y1 (normalized)
  std::vector<Vec2> polygon;                // alternative region, >= 3 points
  std::optional<std::array<double, 2>> time_window; // applied to m_t
  double reference_time = 0.0;
};

struct Selection {
  std::vector<int> ids; // ascending component indices
};

namespace detail {

inline bool point_in_box(Vec2 p, const std::array<double, 4>& b) {
  const double x0 = std::min(b[0], b[2]), x1 = std::max(b[0], b[2]);
  const double y0 = std::min(b[1], b[3]), y1 = std::max(b[1], b[3]);
  return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
}

inline bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Vec2 a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) &&
        p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x)
      inside = !inside;
  }
  return inside;
}

} // namespace detail

/// Components whose conditioned mean at the reference time lies in the
/// region (and whose m_t lies in the window, when given). An empty region
/// yields an empty selection, not an error.
inline Selection select(const GaussianModel& model, const SelectCriteria& c) {
  if (!c.box && c.polygon.size() < 3)
    throw edit_error("select: criteria need a box or a polygon with >= 3 vertices");
  Selection sel;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const FoldedGaussian3D fg = model.activate_component(i);
    if (c.time_window) {
      if (fg.m_t < (*c.time_window)[0] || fg.m_t > (*c.time_window)[1]) continue;
    }
    const Vec2 mean = fg.m_s + fg.poly.eval(fg.m_t - c.reference_time);
    const bool hit = c.box ? detail::point_in_box(mean, *c.box)
                           : detail::point_in_polygon(mean, c.polygon);
    if (hit) sel.ids.push_back(static_cast<int>(i));
  }
  return sel;
}

/// 2x3 affine matrix [linear | translation], row major.
struct Affine2 {
  double a = 1, b = 0, tx = 0;
  double c = 0, d = 1, ty = 0;

  double det() const { return a * d - b * c; }
  Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Vec2 apply_linear(Vec2 p) const { return {a * p.x + b * p.y, c * p.x + d * p.y}; }
  bool is_identity() const {
    return a == 1 && b == 0 && c == 0 && d == 1 && tx == 0 && ty == 0;
  }
};

namespace detail {

inline float theta_to_raw(double theta) {
  double tn = theta / kTwoPi;
  tn -= std::floor(tn); // wrap into [0,1)
  tn = std::clamp(tn, 1e-12, 1.0 - 1e-12);
  return static_cast<float>(logit(tn));
}

} // namespace detail

/// Re-pose selected components by mapping their triangle faces through M;
/// polynomial shift vectors follow the linear part so the motion track moves
/// with the object. m_t, sigma_t, opacity and color are untouched.
inline void transform_affine(GaussianModel& model, const Selection& sel, const Affine2& M) {
  if (M.det() == 0.0) throw edit_error("transform_affine: singular linear part");
  if (M.is_identity()) return;
  for (int id : sel.ids) {
    const auto i = static_cast<size_t>(id);
    if (i >= model.size()) throw edit_error("transform_affine: stale component id", -1, id);
    TriangleFace V;
    try {
      V = to_triangle(model.base_flat(i));
    } catch (const edit_error& e) {
      throw edit_error(std::string(e.what()), -1, id);
    }
    const Vec2 m = M.apply({V.m.x, V.m.y});
    const Vec2 v1 = M.apply({V.v1.x, V.v1.y});
    const Vec2 v2 = M.apply({V.v2.x, V.v2.y});
    FlatGaussian g;
    try {
      g = from_triangle({{m.x, m.y, 0}, {v1.x, v1.y, 0}, {v2.x, v2.y, 0}});
    } catch (const edit_error& e) {
      throw edit_error(std::string(e.what()), -1, id);
    }
    model.m_s[2 * i] = static_cast<float>(g.m.x);
    model.m_s[2 * i + 1] = static_cast<float>(g.m.y);
    model.theta_raw[i] = detail::theta_to_raw(g.theta);
    model.log_s1[i] = static_cast<float>(std::log(g.s1));
    model.log_s2[i] = static_cast<float>(std::log(g.s2));
    const std::size_t deg = static_cast<size_t>(model.poly_degree);
    for (std::size_t p = 0; p < deg; ++p) {
      const Vec2 cp{model.poly[2 * deg * i + p], model.poly[2 * deg * i + deg + p]};
      const Vec2 mapped = M.apply_linear(cp);
      model.poly[2 * deg * i + p] = static_cast<float>(mapped.x);
      model.poly[2 * deg * i + deg + p] = static_cast<float>(mapped.y);
    }
  }
}

/// Append `count` copies of each selected component, shifted by j * offset
/// (j = 1..count). Order keys land after all existing components.
inline void duplicate(GaussianModel& model, const Selection& sel, Vec2 offset, int count) {
  if (count < 1) throw edit_error("duplicate: count must be >= 1");
  for (int j = 1; j <= count; ++j) {
    for (int id : sel.ids) {
      const auto i = static_cast<size_t>(id);
      if (i >= model.size()) throw edit_error("duplicate: stale component id", -1, id);
      RawGaussianParams r = model.get_raw(i);
      r.m_s[0] = static_cast<float>(r.m_s[0] + j * offset.x);
      r.m_s[1] = static_cast<float>(r.m_s[1] + j * offset.y);
      detail::append_component(model, r);
    }
  }
}

/// Remove selected components; survivors keep their relative order, so a
/// render equals a from-scratch render of the complement set exactly.
inline void delete_components(GaussianModel& model, const Selection& sel) {
  if (sel.ids.empty()) return;
  std::vector<char> keep(model.size(), 1);
  for (int id : sel.ids) {
    if (id < 0 || static_cast<size_t>(id) >= model.size())
      throw edit_error("delete: stale component id", -1, id);
    keep[static_cast<size_t>(id)] = 0;
  }
  const std::size_t n = model.size();
  auto compact = [&](auto& vec, std::size_t stride) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      for (std::size_t c = 0; c < stride; ++c) vec[out * stride + c] = vec[i * stride + c];
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
}

// ---------------------------------------------------------------------------
// Edit scripts.

struct EditOp {
  enum class Kind { Select, Transform, Duplicate, Delete, OverrideFrame } kind;
  SelectCriteria criteria;        // Select
  Affine2 matrix;                 // Transform
  Vec2 offset;                    // Duplicate
  int count = 1;                  // Duplicate
  int frame = 0;                  // OverrideFrame
  std::vector<EditOp> nested;     // OverrideFrame
};

struct EditScript {
  std::vector<EditOp> ops;
};

namespace detail {

inline EditOp parse_op(const nlohmann::json& j, int index, bool nested);

inline std::vector<EditOp> parse_ops(const nlohmann::json& arr, bool nested) {
  if (!arr.is_array()) throw edit_error("edit script: \"ops\" must be an array");
  std::vector<EditOp> ops;
  for (std::size_t i = 0; i < arr.size(); ++i)
    ops.push_back(parse_op(arr[i], static_cast<int>(i), nested));
  return ops;
}

inline EditOp parse_op(const nlohmann::json& j, int index, bool nested) {
  const auto fail = [&](const std::string& why) {
    throw edit_error("edit script op " + std::to_string(index) + ": " + why, index);
  };
  if (!j.is_object() || !j.contains("op")) fail("missing \"op\" field");
  const std::string name = j.at("op").get<std::string>();
  EditOp op{};
  if (name == "select") {
    op.kind = EditOp::Kind::Select;
    if (j.contains("box")) {
      const auto& b = j.at("box");
      if (!b.is_array() || b.size() != 4) fail("\"box\" must be [x0,y0,x1,y1]");
      op.criteria.box = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                         b[3].get<double>()};
    } else if (j.contains("polygon")) {
      for (const auto& p : j.at("polygon"))
        op.criteria.polygon.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      if (op.criteria.polygon.size() < 3) fail("\"polygon\" needs >= 3 points");
    } else {
      fail("select needs \"box\" or \"polygon\"");
    }
    if (j.contains("time_window")) {
      if (nested) fail("nested select cannot use time_window (overlay is timeless)");
      const auto& t = j.at("time_window");
      if (!t.is_array() || t.size() != 2) fail("\"time_window\" must be [t_a,t_b]");
      op.criteria.time_window = {t[0].get<double>(), t[1].get<double>()};
    }
    op.criteria.reference_time = j.value("reference_time", 0.0);
  } else if (name == "transform") {
    op.kind = EditOp::Kind::Transform;
    const auto& m = j.at("matrix");
    if (!m.is_array() || m.size() != 2 || m[0].size() != 3 || m[1].size() != 3)
      fail("\"matrix\" must be 2x3");
    op.matrix = {m[0][0].get<double>(), m[0][1].get<double>(), m[0][2].get<double>(),
                 m[1][0].get<double>(), m[1][1].get<double>(), m[1][2].get<double>()};
  } else if (name == "duplicate") {
    op.kind = EditOp::Kind::Duplicate;
    const auto& o = j.at("offset");
    op.offset = {o.at(0).get<double>(), o.at(1).get<double>()};
    op.count = j.value("count", 1);
    if (op.count < 1) fail("\"count\" must be >= 1");
  } else if (name == "delete") {
    op.kind = EditOp::Kind::Delete;
  } else if (name == "override_frame") {
    if (nested) fail("override_frame cannot be nested");
    op.kind = EditOp::Kind::OverrideFrame;
    op.frame = j.at("frame").get<int>();
    op.nested = parse_ops(j.value("ops", nlohmann::json::array()), true);
  } else {
    fail("unknown op \"" + name + "\"");
  }
  return op;
}

} // namespace detail

inline EditScript parse_script(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw edit_error(std::string("edit script: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("ops")) throw edit_error("edit script: missing \"ops\"");
  EditScript s;
  s.ops = detail::parse_ops(j.at("ops"), false);
  return s;
}

// ---------------------------------------------------------------------------
// Overlay (single-frame) editing and script application.

namespace detail {

inline Selection select_overlay(const SplatScene& scene, const SelectCriteria& c) {
  if (!c.box && c.polygon.size() < 3)
    throw edit_error("select: criteria need a box or a polygon with >= 3 vertices");
  Selection sel;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Vec2 mean = scene.gaussians[i].mean;
    const bool hit = c.box ? point_in_box(mean, *c.box) : point_in_polygon(mean, c.polygon);
    if (hit) sel.ids.push_back(static_cast<int>(i));
  }
  return sel;
}

inline void transform_overlay(SplatScene& scene, const Selection& sel, const Affine2& M) {
  if (M.det() == 0.0) throw edit_error("transform_affine: singular linear part");
  if (M.is_identity()) return;
  for (int id : sel.ids) {
    auto& g = scene.gaussians[static_cast<size_t>(id)];
    const double r = std::sqrt(g.scale);
    const FlatGaussian flat{g.mean, g.theta, r * g.s1, r * g.s2};
    const TriangleFace V = to_triangle(flat);
    const Vec2 m = M.apply({V.m.x, V.m.y});
    const Vec2 v1 = M.apply({V.v1.x, V.v1.y});
    const Vec2 v2 = M.apply({V.v2.x, V.v2.y});
    const FlatGaussian out = from_triangle({{m.x, m.y, 0}, {v1.x, v1.y, 0}, {v2.x, v2.y, 0}});
    g.mean = out.m;
    g.theta = out.theta;
    g.s1 = out.s1;
    g.s2 = out.s2;
    g.scale = 1.0; // temporal factor folded into the baked scales
  }
}

} // namespace detail

/// Bake the conditioned scene of key frame k and apply nested ops to that
/// overlay; renders at exactly t_k use the overlay, every other time the
/// unmodified model (interpolated times are not overridden).
inline void override_frame(GaussianModel& model, int k, const std::vector<EditOp>& ops) {
  if (model.timeline.n_frames < 2) throw edit_error("override_frame: model has no timeline");
  if (k < 0 || k >= model.timeline.n_frames)
    throw edit_error("override_frame: frame index out of range");
  const auto times = frame_times(model.timeline);
  // Baked verbatim: an override with no ops renders bit-identically. The
  // temporal factor is folded into the scales only when a transform touches
  // a Gaussian (see transform_overlay).
  SplatScene overlay = condition_all(model, times[static_cast<size_t>(k)]).scene;
  Selection sel;
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditOp::Kind::Select:
        if (op.criteria.time_window)
          throw edit_error("override_frame: nested select cannot use a time window");
        sel = detail::select_overlay(overlay, op.criteria);
        break;
      case EditOp::Kind::Transform:
        detail::transform_overlay(overlay, sel, op.matrix);
        break;
      case EditOp::Kind::Duplicate: {
        if (op.count < 1) throw edit_error("duplicate: count must be >= 1");
        int next_key = 0;
        for (int key : overlay.order_key) next_key = std::max(next_key, key + 1);
        for (int j = 1; j <= op.count; ++j)
          for (int id : sel.ids) {
            ConditionedGaussian2D g = overlay.gaussians[static_cast<size_t>(id)];
            g.mean = g.mean + static_cast<double>(j) * op.offset;
            overlay.push_back(g, next_key++);
          }
        break;
      }
      case EditOp::Kind::Delete: {
        SplatScene kept;
        std::vector<char> drop(overlay.size(), 0);
        for (int id : sel.ids) drop[static_cast<size_t>(id)] = 1;
        for (std::size_t i = 0; i < overlay.size(); ++i)
          if (!drop[i]) kept.push_back(overlay.gaussians[i], overlay.order_key[i]);
        overlay = std::move(kept);
        sel.ids.clear();
        break;
      }
      case EditOp::Kind::OverrideFrame:
        throw edit_error("override_frame cannot be nested");
    }
  }
  model.frame_overrides[k] = std::move(overlay);
}

/// Apply a parsed script atomically: the returned model has all ops applied
/// in order; the input is untouched if any op fails.
inline GaussianModel apply_script(const GaussianModel& input, const EditScript& script) {
  GaussianModel model = input;
  Selection sel;
  for (std::size_t i = 0; i < script.ops.size(); ++i) {
    const auto& op = script.ops[i];
    try {
      switch (op.kind) {
        case EditOp::Kind::Select:
          sel = select(model, op.criteria);
          break;
        case EditOp::Kind::Transform:
          transform_affine(model, sel, op.matrix);
          break;
        case EditOp::Kind::Duplicate:
          duplicate(model, sel, op.offset, op.count);
          break;
        case EditOp::Kind::Delete:
          delete_components(model, sel);
          sel.ids.clear(); // ids are invalidated by the compaction
          break;
        case EditOp::Kind::OverrideFrame:
          override_frame(model, op.frame, op.nested);
          break;
      }
    } catch (const edit_error& e) {
      throw edit_error("op " + std::to_string(i) + ": " + e.what(), static_cast<int>(i),
                       e.component());
    }
  }
  return model;
}

} // namespace vgs
