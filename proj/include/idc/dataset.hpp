#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "idc/image.hpp"
#include "idc/scene.hpp"

namespace idc {

enum class Split { Train, Val, Test };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

// One IDC sample: an image pair, its reference captions and edit category.
struct Triplet {
  std::string id;
  std::string ref;  // image paths relative to the dataset dir
  std::string mod;
  std::vector<std::string> captions;  // train: 1 canonical; test/val: 5
  EditCategory category = EditCategory::Same;
  int variant = 0;  // 0..variants_per_original-1
  Split split = Split::Train;
};

// Word-level vocabulary over the train split only.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_tok;
  std::unordered_map<std::string, int> tok_to_id;

  static Vocab build(const std::vector<std::string>& train_captions);
  static Vocab from_tokens(const std::vector<std::string>& id_to_tok);

  int size() const { return int(id_to_tok.size()); }
  int lookup(const std::string& tok) const;
  std::vector<int> encode(const std::string& caption) const;
  std::string decode(const std::vector<int>& ids) const;
};

struct BuildConfig {
  int n_originals = 10;
  int variants_per_original = 8;
  double test_fraction = 0.1;
  int test_count_override = -1;  // >= 0 pins the test count directly, so a
                                 // 1-variant base set can share the test
                                 // split of its 8-variant superset
  uint64_t seed = 0;
  std::string out_dir;
  int render_side = 48;
};

// Writes images/, triplets.jsonl and manifest.json under out_dir and
// returns the manifest. Fully deterministic in (config, seed); the val
// split is sized at a quarter of the test split.
std::string build_dataset(const BuildConfig& config);

struct Dataset {
  std::string dir;
  std::vector<Triplet> triplets;
  Vocab vocab;
  uint64_t seed = 0;

  std::vector<const Triplet*> split(Split s) const;
  Raster load_image(const std::string& rel_path) const;
};

// Loads and validates a dataset directory; the first violated invariant
// aborts the load, naming the offending record.
Dataset load_dataset(const std::string& dir);

// Taxonomy cycled over variants and test samples, in declaration order.
EditCategory taxonomy_at(int64_t index);

}  // namespace idc
