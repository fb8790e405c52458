#include "idc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "idc/captions.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace idc {

namespace {

constexpr int kFormatVersion = 1;

// Originals carry 3-4 objects so every category in the cycle applies and
// edited scenes stay inside the 2-5 object invariant.
constexpr int kMinOriginalObjects = 3;
constexpr int kMaxOriginalObjects = 3;

struct Record {
  Triplet triplet;
  Raster ref_img;
  Raster mod_img;
  bool own_ref = true;  // train variants share the original's ref image
};

std::string zero_pad(int64_t v, int width) {
  std::string s = std::to_string(v);
  while (int(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

// One generated evaluation sample (test or val): fresh scene, one edit,
// canonical caption plus 4 paraphrases, augmented renders.
Record make_eval_record(uint64_t seed, const char* tag, int64_t index,
                        int render_side) {
  Rng rng = rng_stream(seed, tag, uint64_t(index));
  const Scene scene =
      sample_editable_scene(rng, kMinOriginalObjects, kMaxOriginalObjects);
  const EditCategory category = taxonomy_at(index);
  EditInstruction edit = sample_edit(rng, category, scene);
  const Scene edited = apply_edit(scene, edit);
  edit.text = caption_template(edit, scene);

  Record rec;
  rec.triplet.captions.push_back(edit.text);
  Rng para_rng = rng_stream(seed, "paraphrase", hash_str(tag), uint64_t(index));
  for (std::string& p : paraphrase(edit.text, 4, para_rng))
    rec.triplet.captions.push_back(std::move(p));
  rec.triplet.category = category;
  rec.triplet.variant = 0;

  const uint64_t jref = rng.next_u64();
  const uint64_t jmod = rng.next_u64();
  rec.ref_img = render(scene, jref, render_side);
  rec.mod_img = render(edited, jmod, render_side);
  // Evaluation images pass through the non-disruptive augmentations so the
  // eval distribution is not the train renderer's.
  Rng aug_rng = rng_stream(seed, "evalaug", hash_str(tag), uint64_t(index));
  rec.ref_img = augment(rec.ref_img, aug_rng);
  rec.mod_img = augment(rec.mod_img, aug_rng);
  return rec;
}

json triplet_to_json(const Triplet& t) {
  json j;
  j["id"] = t.id;
  j["ref"] = t.ref;
  j["mod"] = t.mod;
  j["captions"] = t.captions;
  j["category"] = category_name(t.category);
  j["variant"] = t.variant;
  j["split"] = split_name(t.split);
  return j;
}

Triplet triplet_from_json(const json& j) {
  Triplet t;
  t.id = j.at("id").get<std::string>();
  t.ref = j.at("ref").get<std::string>();
  t.mod = j.at("mod").get<std::string>();
  t.captions = j.at("captions").get<std::vector<std::string>>();
  t.category = category_from_name(j.at("category").get<std::string>());
  t.variant = j.at("variant").get<int>();
  t.split = split_from_name(j.at("split").get<std::string>());
  return t;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split: " + name);
}

EditCategory taxonomy_at(int64_t index) {
  return EditCategory(index % kNumCategories);
}

Vocab Vocab::build(const std::vector<std::string>& train_captions) {
  Vocab v;
  v.id_to_tok = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < 4; ++i) v.tok_to_id[v.id_to_tok[i]] = i;
  for (const std::string& caption : train_captions)
    for (const std::string& tok : split_tokens(caption))
      if (!v.tok_to_id.count(tok)) {
        v.tok_to_id[tok] = int(v.id_to_tok.size());
        v.id_to_tok.push_back(tok);
      }
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& id_to_tok) {
  Vocab v;
  v.id_to_tok = id_to_tok;
  for (size_t i = 0; i < id_to_tok.size(); ++i)
    v.tok_to_id[id_to_tok[i]] = int(i);
  return v;
}

int Vocab::lookup(const std::string& tok) const {
  auto it = tok_to_id.find(tok);
  return it == tok_to_id.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(const std::string& caption) const {
  std::vector<int> ids;
  for (const std::string& tok : split_tokens(caption))
    ids.push_back(lookup(tok));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> words;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (id < 0 || id >= size())
      throw std::invalid_argument("Vocab::decode: id " + std::to_string(id) +
                                  " outside vocabulary");
    words.push_back(id_to_tok[id]);
  }
  return join_tokens(words);
}

std::string build_dataset(const BuildConfig& config) {
  if (config.n_originals <= 0 || config.variants_per_original <= 0)
    throw std::invalid_argument("build_dataset: counts must be positive");
  if (config.test_fraction < 0.0 || config.test_fraction > 1.0)
    throw std::invalid_argument("build_dataset: test_fraction outside [0,1]");
  if (config.out_dir.empty())
    throw std::invalid_argument("build_dataset: out_dir is required");

  const int64_t n_train =
      int64_t(config.n_originals) * config.variants_per_original;
  const int64_t n_test =
      config.test_count_override >= 0
          ? config.test_count_override
          : llround(config.test_fraction * double(n_train));
  const int64_t n_val = llround(0.25 * double(n_test));

  fs::create_directories(fs::path(config.out_dir) / "images");

  // Train: per-original rng streams keyed on (seed, index) so the output
  // is independent of worker count.
  std::vector<Raster> ref_images(size_t(config.n_originals));
  std::vector<Record> train(static_cast<size_t>(n_train));
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < config.n_originals; ++j) {
    Rng orig_rng = rng_stream(config.seed, "origin", uint64_t(j));
    const Scene scene = sample_editable_scene(orig_rng, kMinOriginalObjects,
                                              kMaxOriginalObjects);
    ref_images[size_t(j)] =
        render(scene, orig_rng.next_u64(), config.render_side);
    for (int v = 0; v < config.variants_per_original; ++v) {
      Rng var_rng = rng_stream(config.seed, "variant", uint64_t(j), uint64_t(v));
      // (j + v) mod 6: variant 0 keeps its category whatever the variant
      // count, so a 1-variant build nests inside an 8-variant one.
      const EditCategory category = taxonomy_at(int64_t(j) + v);
      EditInstruction edit = sample_edit(var_rng, category, scene);
      const Scene edited = apply_edit(scene, edit);
      edit.text = caption_template(edit, scene);

      Record& rec = train[size_t(j) * config.variants_per_original + v];
      rec.own_ref = false;
      rec.mod_img = render(edited, var_rng.next_u64(), config.render_side);
      Triplet& t = rec.triplet;
      t.id = "tr" + zero_pad(j, 5) + "v" + std::to_string(v);
      t.ref = "images/or" + zero_pad(j, 5) + "_ref.ppm";
      t.mod = "images/" + t.id + "_mod.ppm";
      t.captions = {edit.text};
      t.category = category;
      t.variant = v;
      t.split = Split::Train;
    }
  }

  std::vector<Record> test(static_cast<size_t>(n_test));
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n_test; ++i) {
    test[size_t(i)] =
        make_eval_record(config.seed, "test", i, config.render_side);
    Triplet& t = test[size_t(i)].triplet;
    t.id = "te" + zero_pad(i, 5);
    t.ref = "images/" + t.id + "_ref.ppm";
    t.mod = "images/" + t.id + "_mod.ppm";
    t.split = Split::Test;
  }

  std::vector<Record> val(static_cast<size_t>(n_val));
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n_val; ++i) {
    val[size_t(i)] =
        make_eval_record(config.seed, "val", i, config.render_side);
    Triplet& t = val[size_t(i)].triplet;
    t.id = "va" + zero_pad(i, 5);
    t.ref = "images/" + t.id + "_ref.ppm";
    t.mod = "images/" + t.id + "_mod.ppm";
    t.split = Split::Val;
  }

  // Serial writes in index order.
  std::vector<std::string> files;
  for (int j = 0; j < config.n_originals; ++j) {
    std::string rel = "images/or" + zero_pad(j, 5) + "_ref.ppm";
    write_ppm((fs::path(config.out_dir) / rel).string(), ref_images[size_t(j)]);
    files.push_back(rel);
  }
  std::ofstream jsonl(fs::path(config.out_dir) / "triplets.jsonl");
  if (!jsonl)
    throw std::runtime_error("build_dataset: cannot write triplets.jsonl in " +
                             config.out_dir);
  std::map<std::string, std::map<std::string, int>> per_category;
  auto emit = [&](const Record& rec) {
    const Triplet& t = rec.triplet;
    if (rec.own_ref) {
      write_ppm((fs::path(config.out_dir) / t.ref).string(), rec.ref_img);
      files.push_back(t.ref);
    }
    write_ppm((fs::path(config.out_dir) / t.mod).string(), rec.mod_img);
    files.push_back(t.mod);
    jsonl << triplet_to_json(t).dump() << "\n";
    per_category[split_name(t.split)][category_name(t.category)] += 1;
  };
  for (const Record& r : train) emit(r);
  for (const Record& r : val) emit(r);
  for (const Record& r : test) emit(r);
  jsonl.close();
  if (!jsonl)
    throw std::runtime_error("build_dataset: short write to triplets.jsonl");
  files.push_back("triplets.jsonl");
  std::sort(files.begin(), files.end());

  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["seed"] = config.seed;
  manifest["counts"] = {{"train", n_train}, {"val", n_val}, {"test", n_test}};
  manifest["per_category"] = per_category;
  manifest["files"] = files;
  manifest["render_side"] = config.render_side;
  manifest["variants_per_original"] = config.variants_per_original;
  std::ofstream mf(fs::path(config.out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
  if (!mf) throw std::runtime_error("build_dataset: cannot write manifest");
  return manifest.dump(2);
}

std::vector<const Triplet*> Dataset::split(Split s) const {
  std::vector<const Triplet*> out;
  for (const Triplet& t : triplets)
    if (t.split == s) out.push_back(&t);
  return out;
}

Raster Dataset::load_image(const std::string& rel_path) const {
  return read_ppm((fs::path(dir) / rel_path).string());
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  ds.dir = dir;

  std::ifstream mf(fs::path(dir) / "manifest.json");
  if (!mf)
    throw std::runtime_error("load_dataset: missing manifest.json in " + dir);
  json manifest = json::parse(mf);
  if (manifest.at("format_version").get<int>() != kFormatVersion)
    throw std::runtime_error("load_dataset: unsupported format_version in " +
                             dir);
  ds.seed = manifest.at("seed").get<uint64_t>();

  std::ifstream jf(fs::path(dir) / "triplets.jsonl");
  if (!jf)
    throw std::runtime_error("load_dataset: missing triplets.jsonl in " + dir);
  std::string line;
  int64_t line_no = 0;
  std::map<std::string, int64_t> counts;
  std::map<std::string, std::map<std::string, int>> per_category;
  std::set<std::string> seen_ids;
  while (std::getline(jf, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("load_dataset: malformed JSONL at line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    Triplet t = triplet_from_json(j);
    if (!seen_ids.insert(t.id).second)
      throw std::runtime_error("load_dataset: duplicate id " + t.id);
    if (t.captions.empty())
      throw std::runtime_error("load_dataset: record " + t.id +
                               " has no captions");
    if (t.split != Split::Train && t.captions.size() != 5)
      throw std::runtime_error("load_dataset: record " + t.id + " has " +
                               std::to_string(t.captions.size()) +
                               " captions, eval records need exactly 5");
    for (const std::string& rel : {t.ref, t.mod})
      if (!fs::exists(fs::path(dir) / rel))
        throw std::runtime_error("load_dataset: record " + t.id +
                                 " references missing file " + rel);
    counts[split_name(t.split)] += 1;
    per_category[split_name(t.split)][category_name(t.category)] += 1;
    ds.triplets.push_back(std::move(t));
  }

  for (const char* split : {"train", "val", "test"}) {
    const int64_t declared = manifest.at("counts").at(split).get<int64_t>();
    if (declared != counts[split])
      throw std::runtime_error(
          std::string("load_dataset: manifest declares ") +
          std::to_string(declared) + " " + split + " records, found " +
          std::to_string(counts[split]));
  }
  // Stratification: per-category test counts balanced within +/-1.
  if (counts["test"] > 0) {
    int lo = INT32_MAX, hi = 0;
    for (int c = 0; c < kNumCategories; ++c) {
      const int v = per_category["test"][category_name(EditCategory(c))];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > 1)
      throw std::runtime_error(
          "load_dataset: test split unbalanced across categories (" +
          std::to_string(lo) + ".." + std::to_string(hi) + ")");
  }

  std::vector<std::string> train_captions;
  for (const Triplet& t : ds.triplets)
    if (t.split == Split::Train)
      for (const std::string& c : t.captions) train_captions.push_back(c);
  ds.vocab = Vocab::build(train_captions);
  return ds;
}

}  // namespace idc
