#include "idc/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace idc {

namespace {

struct Rgb {
  uint8_t r, g, b;
};

constexpr Rgb kPalette[kNumColors] = {
    {220, 50, 47},    // red
    {60, 180, 75},    // green
    {0, 114, 178},    // blue
    {240, 228, 66},   // yellow
    {230, 140, 30},   // orange
    {150, 70, 190},   // purple
    {0, 190, 190},    // cyan
    {220, 70, 160},   // magenta
};

constexpr const char* kColorNames[kNumColors] = {
    "red", "green", "blue", "yellow", "orange", "purple", "cyan", "magenta"};

constexpr Rgb kBackgrounds[kNumBackgrounds] = {
    {40, 42, 46}, {80, 90, 105}, {70, 75, 55}};

constexpr double kEdgeMargin = 0.05;
constexpr double kGapMargin = 0.02;
constexpr int kMaxRetries = 1000;
constexpr int kPlacementGrid = 24;

EditInstruction sample_edit_impl(Rng& rng, EditCategory category,
                                 const Scene& scene, int max_retries);

bool point_in_object(const SceneObject& o, double px, double py) {
  const double r = object_radius(o.size);
  const double dx = px - o.cx, dy = py - o.cy;
  switch (o.shape) {
    case ShapeKind::Circle:
      return dx * dx + dy * dy <= r * r;
    case ShapeKind::Square: {
      const double hs = 0.82 * r;
      return std::fabs(dx) <= hs && std::fabs(dy) <= hs;
    }
    case ShapeKind::Triangle: {
      // equilateral, apex up, circumradius r
      const double ax = 0.0, ay = -r;
      const double bx = r * 0.8660254037844386, by = r * 0.5;
      const double cx2 = -bx, cy2 = by;
      auto side = [&](double x1, double y1, double x2, double y2) {
        return (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1);
      };
      const double s1 = side(ax, ay, bx, by);
      const double s2 = side(bx, by, cx2, cy2);
      const double s3 = side(cx2, cy2, ax, ay);
      return (s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0);
    }
  }
  return false;
}

bool placement_ok(const SceneObject& o, const std::vector<SceneObject>& others,
                  int skip = -1) {
  const double r = object_radius(o.size);
  if (o.cx < r + kEdgeMargin || o.cx > 1.0 - r - kEdgeMargin ||
      o.cy < r + kEdgeMargin || o.cy > 1.0 - r - kEdgeMargin)
    return false;
  for (size_t i = 0; i < others.size(); ++i) {
    if (int(i) == skip) continue;
    const double rr = object_radius(others[i].size) + r + kGapMargin;
    const double dx = o.cx - others[i].cx, dy = o.cy - others[i].cy;
    if (dx * dx + dy * dy <= rr * rr) return false;
  }
  return true;
}


}  // namespace

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
  }
  return "?";
}

const char* size_name(SizeKind s) {
  return s == SizeKind::Small ? "small" : "large";
}

const char* color_name(int color) {
  if (color < 0 || color >= kNumColors)
    throw std::invalid_argument("color_name: bad index " +
                                std::to_string(color));
  return kColorNames[color];
}

const char* texture_name(bool striped) { return striped ? "striped" : "solid"; }

const char* category_name(EditCategory c) {
  switch (c) {
    case EditCategory::Color: return "color";
    case EditCategory::Texture: return "texture";
    case EditCategory::Move: return "move";
    case EditCategory::Add: return "add";
    case EditCategory::Drop: return "drop";
    case EditCategory::Same: return "same";
  }
  return "?";
}

EditCategory category_from_name(const std::string& name) {
  for (int i = 0; i < kNumCategories; ++i)
    if (name == category_name(EditCategory(i))) return EditCategory(i);
  throw std::invalid_argument("unknown edit category: " + name);
}

double object_radius(SizeKind s) { return s == SizeKind::Small ? 0.14 : 0.20; }

bool scene_valid(const Scene& scene, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (scene.background < 0 || scene.background >= kNumBackgrounds)
    return fail("bad background id");
  if (scene.objects.size() < 2 || scene.objects.size() > 5)
    return fail("object count " + std::to_string(scene.objects.size()) +
                " outside [2,5]");
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& o = scene.objects[i];
    if (o.color < 0 || o.color >= kNumColors) return fail("bad color");
    const double r = object_radius(o.size);
    if (o.cx < r || o.cx > 1.0 - r || o.cy < r || o.cy > 1.0 - r)
      return fail("object " + std::to_string(i) + " outside canvas");
    for (size_t j = i + 1; j < scene.objects.size(); ++j) {
      const SceneObject& p = scene.objects[j];
      const double rr = r + object_radius(p.size);
      const double dx = o.cx - p.cx, dy = o.cy - p.cy;
      if (dx * dx + dy * dy <= rr * rr)
        return fail("objects " + std::to_string(i) + " and " +
                    std::to_string(j) + " overlap");
    }
  }
  return true;
}

Scene sample_scene(Rng& rng, int min_objects, int max_objects) {
  // Greedy placement can paint itself into a corner, so dead ends restart
  // the whole scene. Placement enumerates grid cells; rng only picks among
  // the feasible ones.
  for (int restart = 0; restart < 100; ++restart) {
    Scene scene;
    scene.background = int(rng.range(kNumBackgrounds));
    const int n = int(rng.range(min_objects, max_objects));
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      SceneObject o;
      o.shape = ShapeKind(rng.range(3));
      o.color = int(rng.range(kNumColors));
      o.striped = rng.bernoulli(0.5);
      o.size = rng.bernoulli(0.5) ? SizeKind::Small : SizeKind::Large;
      std::vector<std::pair<double, double>> cells;
      for (int gy = 0; gy < kPlacementGrid; ++gy)
        for (int gx = 0; gx < kPlacementGrid; ++gx) {
          o.cx = (gx + 0.5) / kPlacementGrid;
          o.cy = (gy + 0.5) / kPlacementGrid;
          if (placement_ok(o, scene.objects)) cells.emplace_back(o.cx, o.cy);
        }
      if (cells.empty()) {
        ok = false;
        break;
      }
      const auto [cx, cy] = cells[size_t(rng.range(int64_t(cells.size())))];
      o.cx = cx;
      o.cy = cy;
      scene.objects.push_back(o);
    }
    if (ok) return scene;
  }
  throw std::runtime_error(
      "sample_scene: no valid layout after 100 restarts");
}

Scene sample_editable_scene(Rng& rng, int min_objects, int max_objects) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Scene scene = sample_scene(rng, min_objects, max_objects);
    // Move and Add enumerate placements exhaustively, so one probe per
    // category decides feasibility exactly.
    Rng probe(rng.next_u64());
    bool ok = true;
    for (int c = 0; c < kNumCategories && ok; ++c) {
      try {
        sample_edit_impl(probe, EditCategory(c), scene, 50);
      } catch (const std::runtime_error&) {
        ok = false;
      }
    }
    if (ok) return scene;
  }
  throw std::runtime_error(
      "sample_editable_scene: no scene admitted all edit categories");
}

namespace {

EditInstruction sample_edit_impl(Rng& rng, EditCategory category,
                                 const Scene& scene, int max_retries) {
  EditInstruction edit;
  edit.category = category;
  const int n = int(scene.objects.size());
  auto give_up = [&]() -> std::runtime_error {
    return std::runtime_error(std::string("sample_edit: no valid edit of "
                                          "category '") +
                              category_name(category) + "' after " +
                              std::to_string(max_retries) + " retries");
  };
  switch (category) {
    case EditCategory::Same:
      return edit;
    case EditCategory::Color: {
      edit.target = int(rng.range(n));
      const int old = scene.objects[edit.target].color;
      edit.new_color = int(rng.range(kNumColors - 1));
      if (edit.new_color >= old) ++edit.new_color;
      return edit;
    }
    case EditCategory::Texture: {
      edit.target = int(rng.range(n));
      edit.new_striped = !scene.objects[edit.target].striped;
      return edit;
    }
    case EditCategory::Move: {
      // enumerate destination cells on a grid; rng only picks among the
      // feasible ones, so feasibility never depends on retry luck
      std::vector<int> targets(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) targets[size_t(i)] = i;
      for (size_t i = targets.size(); i > 1; --i)
        std::swap(targets[i - 1], targets[size_t(rng.range(int64_t(i)))]);
      for (int t : targets) {
        const SceneObject& obj = scene.objects[t];
        std::vector<std::pair<double, double>> cells;
        for (int gy = 0; gy < kPlacementGrid; ++gy)
          for (int gx = 0; gx < kPlacementGrid; ++gx) {
            const double cx = (gx + 0.5) / kPlacementGrid;
            const double cy = (gy + 0.5) / kPlacementGrid;
            const double dist = std::hypot(cx - obj.cx, cy - obj.cy);
            if (dist < kMoveMinDistance + 0.03 || dist > 0.45) continue;
            SceneObject moved = obj;
            moved.cx = cx;
            moved.cy = cy;
            if (placement_ok(moved, scene.objects, t)) cells.emplace_back(cx, cy);
          }
        if (cells.empty()) continue;
        const auto [cx, cy] = cells[size_t(rng.range(int64_t(cells.size())))];
        edit.target = t;
        edit.dx = cx - obj.cx;
        edit.dy = cy - obj.cy;
        return edit;
      }
      throw give_up();
    }
    case EditCategory::Add: {
      if (n >= 5)
        throw std::runtime_error(
            "sample_edit: Add requires at most 4 objects");
      SceneObject o;
      o.shape = ShapeKind(rng.range(3));
      o.color = int(rng.range(kNumColors));
      o.striped = rng.bernoulli(0.5);
      const SizeKind preferred =
          rng.bernoulli(0.5) ? SizeKind::Small : SizeKind::Large;
      for (SizeKind size : {preferred, preferred == SizeKind::Small
                                           ? SizeKind::Large
                                           : SizeKind::Small}) {
        o.size = size;
        std::vector<std::pair<double, double>> cells;
        for (int gy = 0; gy < kPlacementGrid; ++gy)
          for (int gx = 0; gx < kPlacementGrid; ++gx) {
            o.cx = (gx + 0.5) / kPlacementGrid;
            o.cy = (gy + 0.5) / kPlacementGrid;
            if (placement_ok(o, scene.objects)) cells.emplace_back(o.cx, o.cy);
          }
        if (cells.empty()) continue;
        const auto [cx, cy] = cells[size_t(rng.range(int64_t(cells.size())))];
        o.cx = cx;
        o.cy = cy;
        edit.new_object = o;
        return edit;
      }
      throw give_up();
    }
    case EditCategory::Drop: {
      if (n < 2)
        throw std::runtime_error(
            "sample_edit: Drop requires at least 2 objects");
      edit.target = int(rng.range(n));
      return edit;
    }
  }
  throw give_up();
}

}  // namespace

EditInstruction sample_edit(Rng& rng, EditCategory category,
                            const Scene& scene) {
  return sample_edit_impl(rng, category, scene, kMaxRetries);
}

Scene apply_edit(const Scene& scene, const EditInstruction& edit) {
  const int n = int(scene.objects.size());
  auto check_target = [&]() {
    if (edit.target < 0 || edit.target >= n)
      throw std::invalid_argument("apply_edit: target index " +
                                  std::to_string(edit.target) +
                                  " invalid for scene with " +
                                  std::to_string(n) + " objects");
  };
  Scene out = scene;
  switch (edit.category) {
    case EditCategory::Same:
      return out;
    case EditCategory::Color:
      check_target();
      out.objects[edit.target].color = edit.new_color;
      return out;
    case EditCategory::Texture:
      check_target();
      out.objects[edit.target].striped = edit.new_striped;
      return out;
    case EditCategory::Move: {
      check_target();
      const double d = std::hypot(edit.dx, edit.dy);
      if (d < kMoveMinDistance)
        throw std::invalid_argument(
            "apply_edit: move displacement below minimum");
      out.objects[edit.target].cx += edit.dx;
      out.objects[edit.target].cy += edit.dy;
      return out;
    }
    case EditCategory::Add:
      out.objects.push_back(edit.new_object);
      return out;
    case EditCategory::Drop:
      check_target();
      out.objects.erase(out.objects.begin() + edit.target);
      return out;
  }
  return out;
}

Raster render(const Scene& scene, uint64_t jitter_seed, int side) {
  Rng jitter(jitter_seed);
  const int brightness = int(jitter.range(-8, 8));
  const double off_x = double(jitter.range(-2, 2)) / side;
  const double off_y = double(jitter.range(-2, 2)) / side;

  const Rgb bg = kBackgrounds[scene.background];
  Raster img(side, side);
  // 2x2 supersampling, object membership tested in canvas coordinates.
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      int acc[3] = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const double px = (x + 0.25 + 0.5 * sx) / side - off_x;
          const double py = (y + 0.25 + 0.5 * sy) / side - off_y;
          Rgb c = bg;
          for (const SceneObject& o : scene.objects) {
            if (!point_in_object(o, px, py)) continue;
            c = kPalette[o.color];
            if (o.striped) {
              // bands are canvas-relative so texture survives resizing
              const long band = long(std::floor((py - o.cy) / 0.08)) & 1L;
              if (band) {
                c.r = uint8_t(c.r * 45 / 100);
                c.g = uint8_t(c.g * 45 / 100);
                c.b = uint8_t(c.b * 45 / 100);
              }
            }
            break;  // objects never overlap
          }
          acc[0] += c.r;
          acc[1] += c.g;
          acc[2] += c.b;
        }
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) =
            uint8_t(std::clamp(acc[c] / 4 + brightness, 0, 255));
    }
  }
  return img;
}

}  // namespace idc
