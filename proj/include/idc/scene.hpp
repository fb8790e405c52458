#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "idc/image.hpp"
#include "idc/rng.hpp"

namespace idc {

enum class ShapeKind { Circle, Square, Triangle };
enum class SizeKind { Small, Large };
enum class EditCategory { Color, Texture, Move, Add, Drop, Same };

constexpr int kNumColors = 8;
constexpr int kNumBackgrounds = 3;
constexpr int kNumCategories = 6;

const char* shape_name(ShapeKind s);
const char* size_name(SizeKind s);
const char* color_name(int color);
const char* texture_name(bool striped);
const char* category_name(EditCategory c);
EditCategory category_from_name(const std::string& name);

// Circumradius in canvas units.
double object_radius(SizeKind s);

struct SceneObject {
  ShapeKind shape = ShapeKind::Circle;
  int color = 0;  // palette index
  bool striped = false;
  double cx = 0.5, cy = 0.5;  // center in [0,1]^2
  SizeKind size = SizeKind::Small;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  int background = 0;
  std::vector<SceneObject> objects;

  bool operator==(const Scene&) const = default;
};

struct EditInstruction {
  EditCategory category = EditCategory::Same;
  int target = -1;             // object index; -1 for Add/Same
  int new_color = -1;          // Color
  bool new_striped = false;    // Texture
  double dx = 0.0, dy = 0.0;   // Move displacement in canvas units
  SceneObject new_object;      // Add
  std::string text;            // canonical caption, filled by the captioner
};

// Invariants: 2-5 objects, pairwise non-overlapping, fully inside canvas.
bool scene_valid(const Scene& scene, std::string* why = nullptr);

Scene sample_scene(Rng& rng, int min_objects = 2, int max_objects = 5);

// Like sample_scene, but resamples until every category in the taxonomy
// admits an edit (a packed canvas can make Add or Move impossible).
Scene sample_editable_scene(Rng& rng, int min_objects, int max_objects);

// Rejection-samples an edit of the given category; throws after 1000
// failed attempts, naming the category.
EditInstruction sample_edit(Rng& rng, EditCategory category,
                            const Scene& scene);

Scene apply_edit(const Scene& scene, const EditInstruction& edit);

// Deterministic rasterization. jitter_seed drives non-semantic noise:
// brightness +/-8 and a +/-2 px camera translate.
Raster render(const Scene& scene, uint64_t jitter_seed, int side = 48);

constexpr double kMoveMinDistance = 0.15;

}  // namespace idc
