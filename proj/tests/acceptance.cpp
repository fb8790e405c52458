// End-to-end acceptance suite. Each criterion prints one [PASS]/[FAIL]
// line; the process exits nonzero if any criterion fails.
//
//  1  gradient suite: analytic vs central differences on a 2-layer model
//  2  metric oracles: worked fixtures to 1e-6 + exhaustive ROUGE-L sweep
//  3  LoRA contract: bit-neutral attach, closed-form trainable counts
//  4  memorization: one triplet to loss < 0.01 and exact greedy decode
//  5  encoder comparison: joint beats two-stream over 3 seeds
//  6  ablation shape: tune-all >= tune-qformer-only over 3 seeds
//  7  augmentation benefit: base+synthetic beats base over 3 seeds
//  8  dataset properties: variants, references, balance, determinism
//  9  robustness: non-disruptive input augmentation moves Same-category
//     exact-match accuracy by at most 10 points

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "idc/captions.hpp"
#include "idc/dataset.hpp"
#include "idc/kernels.hpp"
#include "idc/metrics.hpp"
#include "idc/model.hpp"
#include "idc/train.hpp"
#include "metric_fixture.hpp"
#include "metric_oracle.hpp"

namespace fs = std::filesystem;
using namespace idc;

namespace {

// --- pinned experiment configuration --------------------------------------

constexpr int kStudyOriginals = 250;   // 250 x 8 = 2000 train pairs
constexpr double kStudyTestFraction = 0.1;  // 200 test triplets, 5 refs each
constexpr uint64_t kDataSeed = 20240808;
constexpr int64_t kStudySteps = 2000;
constexpr int kStudyBatch = 8;
constexpr double kStudyLr = 1e-3;
constexpr uint64_t kStudySeeds[3] = {0, 1, 2};

ModelConfig study_model_config() {
  ModelConfig m;
  m.image_side = 48;
  m.patch_side = 8;
  m.d_model = 64;
  m.n_heads = 4;
  m.vit_layers = 2;
  m.qformer_layers = 2;
  m.decoder_layers = 2;
  m.n_queries = 8;
  m.max_caption_len = 16;
  return m;
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << std::fixed << v;
  return os.str();
}

// Trained arm cached for reuse across criteria 5, 6, 7 and 9.
struct Arm {
  TrainRun run;
  EvalRun eval;
  double train_seconds = 0;
};

class Context {
 public:
  Context() {
    workdir_ = fs::temp_directory_path() / "idc_acceptance";
    fs::create_directories(workdir_);
  }

  const std::string& dataset_dir() {
    if (dataset_dir_.empty()) {
      dataset_dir_ = (workdir_ / "data_full").string();
      if (!fs::exists(fs::path(dataset_dir_) / "manifest.json")) {
        BuildConfig cfg = superset_build_config(dataset_dir_);
        build_dataset(cfg);
      }
    }
    return dataset_dir_;
  }

  const std::string& base_dataset_dir() {
    if (base_dir_.empty()) {
      base_dir_ = (workdir_ / "data_base").string();
      if (!fs::exists(fs::path(base_dir_) / "manifest.json")) {
        BuildConfig cfg = superset_build_config(base_dir_);
        cfg.variants_per_original = 1;
        cfg.test_count_override =
            int(llround(kStudyTestFraction * kStudyOriginals * 8));
        build_dataset(cfg);
      }
    }
    return base_dir_;
  }

  BuildConfig superset_build_config(const std::string& out) const {
    BuildConfig cfg;
    cfg.n_originals = kStudyOriginals;
    cfg.variants_per_original = 8;
    cfg.test_fraction = kStudyTestFraction;
    cfg.seed = kDataSeed;
    cfg.out_dir = out;
    return cfg;
  }

  TrainConfig study_train_config(uint64_t seed, const std::string& data) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.steps = kStudySteps;
    cfg.batch_size = kStudyBatch;
    cfg.lr = kStudyLr;
    cfg.augmentation = true;
    cfg.dataset_dirs = {data};
    cfg.model = study_model_config();
    return cfg;
  }

  Arm train_arm(const TrainConfig& cfg, const std::string& eval_dataset) {
    Arm arm;
    Timer t;
    arm.run = train(cfg);
    arm.train_seconds = t.seconds();
    Dataset ds = load_dataset(eval_dataset);
    arm.eval = evaluate_split(*arm.run.model, arm.run.vocab, ds, Split::Test);
    return arm;
  }

  // joint, tune-all runs on the full dataset: shared by criteria 5, 6, 7, 9
  std::vector<Arm>& joint_arms() {
    if (joint_arms_.empty())
      for (uint64_t seed : kStudySeeds) {
        TrainConfig cfg = study_train_config(seed, dataset_dir());
        std::cout << "  ... training joint seed " << seed << std::flush;
        joint_arms_.push_back(train_arm(cfg, dataset_dir()));
        std::cout << " (" << fmt(joint_arms_.back().train_seconds, 0)
                  << " s, cider "
                  << fmt(joint_arms_.back().eval.report.overall.cider) << ")\n";
      }
    return joint_arms_;
  }

  std::vector<Arm>& two_stream_arms() {
    if (two_stream_arms_.empty())
      for (uint64_t seed : kStudySeeds) {
        TrainConfig cfg = study_train_config(seed, dataset_dir());
        cfg.encoder_mode = EncoderMode::TwoStream;
        cfg.model.encoder_mode = EncoderMode::TwoStream;
        std::cout << "  ... training two_stream seed " << seed << std::flush;
        two_stream_arms_.push_back(train_arm(cfg, dataset_dir()));
        std::cout << " (" << fmt(two_stream_arms_.back().train_seconds, 0)
                  << " s, cider "
                  << fmt(two_stream_arms_.back().eval.report.overall.cider)
                  << ")\n";
      }
    return two_stream_arms_;
  }

  const fs::path& workdir() const { return workdir_; }

 private:
  fs::path workdir_;
  std::string dataset_dir_;
  std::string base_dir_;
  std::vector<Arm> joint_arms_;
  std::vector<Arm> two_stream_arms_;
};

double mean_cider(const std::vector<Arm>& arms) {
  double sum = 0;
  for (const Arm& a : arms) sum += a.eval.report.overall.cider;
  return sum / double(arms.size());
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// --- criterion 1: gradient suite -------------------------------------------

Outcome criterion_gradients(Context&) {
  Timer timer;
  ModelConfig cfg;
  cfg.image_side = 16;
  cfg.patch_side = 8;
  cfg.d_model = 12;
  cfg.n_heads = 2;
  cfg.vit_layers = 2;  // the 2-layer joint encoder under test
  cfg.qformer_layers = 1;
  cfg.decoder_layers = 1;
  cfg.n_queries = 4;
  cfg.vocab_size = 12;
  cfg.max_caption_len = 6;
  IdcModel model(cfg, 20240808);

  Raster ref(16, 16), mod(16, 16);
  Rng rng(4242);
  for (uint8_t& v : ref.px) v = uint8_t(rng.range(int64_t(256)));
  for (uint8_t& v : mod.px) v = uint8_t(rng.range(int64_t(256)));
  const std::vector<int> caption = {4, 7, 9, 5};

  auto loss = [&]() {
    Tensor q = model.encode_pair(ref, mod);
    return model.caption_loss(q, caption);
  };
  // every parameter entry, central differences
  GradCheckReport report = grad_check(loss, model.params(), 1e-5, 1e-4, 0);
  const double secs = timer.seconds();
  Outcome out;
  out.pass = report.pass && secs < 120.0;
  out.detail = "max rel err " + fmt(report.max_rel_err, 8) + " over " +
               std::to_string(report.checked) + " entries (worst " +
               report.worst + "), " + fmt(secs, 1) + " s";
  return out;
}

// --- criterion 2: metric oracles -------------------------------------------

Outcome criterion_metrics(Context&) {
  Timer timer;
  std::ostringstream detail;
  bool pass = true;

  bool degenerate = false;
  const auto ciders = cider_d(fixture::kCands, fixture::kRefs, &degenerate);
  double worst = 0;
  for (int i = 0; i < 5; ++i) {
    const auto& frozen = fixture::kFrozen[i];
    const double errs[4] = {
        std::fabs(bleu4(fixture::kCands[i], fixture::kRefs[i]) - frozen.bleu),
        std::fabs(rouge_l(fixture::kCands[i], fixture::kRefs[i]) -
                  frozen.rouge),
        std::fabs(meteor_lite(fixture::kCands[i], fixture::kRefs[i]) -
                  frozen.meteor),
        std::fabs(ciders[size_t(i)] - frozen.cider)};
    for (double e : errs) {
      worst = std::max(worst, e);
      if (e > 1e-6) pass = false;
    }
  }
  detail << "fixture worst |err| " << worst;

  // exhaustive ROUGE-L DP vs brute-force subsequence search, all strings of
  // length <= 8 over {a, b, c}
  std::vector<TokenSeq> strings = {{}};
  {
    std::vector<TokenSeq> frontier = {{}};
    for (int l = 0; l < 8; ++l) {
      std::vector<TokenSeq> next;
      for (const TokenSeq& s : frontier)
        for (const char* a : {"a", "b", "c"}) {
          TokenSeq t = s;
          t.push_back(a);
          next.push_back(t);
          strings.push_back(t);
        }
      frontier = std::move(next);
    }
  }
  std::atomic<int64_t> mismatches{0};
  std::atomic<int64_t> done{0};
#pragma omp parallel for schedule(dynamic, 64)
  for (size_t i = 0; i < strings.size(); ++i) {
    for (size_t j = i; j < strings.size(); ++j) {
      const TokenSeq& a = strings[i];
      const TokenSeq& b = strings[j];
      const int64_t dp = lcs_length(a, b);
      const long long brute = a.size() <= b.size() ? oracle::lcs_brute(a, b)
                                                   : oracle::lcs_brute(b, a);
      if (dp != brute) ++mismatches;
    }
    ++done;
  }
  if (mismatches.load() != 0) pass = false;
  detail << "; lcs sweep " << strings.size() << " strings, "
         << mismatches.load() << " mismatches, " << fmt(timer.seconds(), 1)
         << " s";
  return {pass, detail.str()};
}

// --- criterion 3: LoRA contract ---------------------------------------------

Outcome criterion_lora(Context&) {
  ModelConfig cfg;  // stock dimensions: d 128, vit 4, qformer 2, decoder 2
  cfg.vocab_size = 40;
  IdcModel model(cfg, 7);
  Raster ref(64, 64), mod(64, 64);
  Rng rng(99);
  for (uint8_t& v : ref.px) v = uint8_t(rng.range(int64_t(256)));
  for (uint8_t& v : mod.px) v = uint8_t(rng.range(int64_t(256)));

  Tensor before = model.encode_pair(ref, mod);
  Tensor logits_before = model.decode_logits(before, {Vocab::kBos, 5, 6});
  model.apply_lora(8, 16.0, {"vit", "qformer", "lm"});
  Tensor after = model.encode_pair(ref, mod);
  Tensor logits_after = model.decode_logits(after, {Vocab::kBos, 5, 6});

  const bool neutral =
      std::memcmp(before.ptr(), after.ptr(),
                  size_t(before.numel()) * sizeof(double)) == 0 &&
      std::memcmp(logits_before.ptr(), logits_after.ptr(),
                  size_t(logits_before.numel()) * sizeof(double)) == 0;

  // closed form: 3 projections x 2 factors x d x r per attention layer;
  // attention layers = vit self + (qformer and decoder) self+cross
  const int64_t n_attn = cfg.vit_layers + 2 * cfg.qformer_layers +
                         2 * cfg.decoder_layers;
  const int64_t closed_form = 3 * 2 * int64_t(cfg.d_model) * 8 * n_attn;
  const ParamCountReport counts = model.count_params();
  const bool count_ok = counts.trainable == closed_form;

  Outcome out;
  out.pass = neutral && count_ok && counts.trainable_fraction() < 0.05;
  out.detail = std::string("attach ") +
               (neutral ? "bit-neutral" : "NOT neutral") + "; trainable " +
               std::to_string(counts.trainable) + " (closed form " +
               std::to_string(closed_form) + ") of " +
               std::to_string(counts.total) + " = " +
               fmt(100.0 * counts.trainable_fraction(), 2) + "%";
  return out;
}

// --- criterion 4: memorization ----------------------------------------------

Outcome criterion_memorization(Context& ctx) {
  Timer timer;
  const std::string dir = (ctx.workdir() / "data_one").string();
  if (!fs::exists(fs::path(dir) / "manifest.json")) {
    BuildConfig cfg;
    cfg.n_originals = 1;
    cfg.variants_per_original = 1;
    cfg.test_fraction = 0.0;
    cfg.seed = kDataSeed;
    cfg.out_dir = dir;
    build_dataset(cfg);
  }
  TrainConfig cfg;
  cfg.seed = 0;
  cfg.steps = 500;
  cfg.batch_size = 1;
  cfg.lr = 1e-3;
  cfg.dataset_dirs = {dir};
  cfg.model = study_model_config();
  TrainRun run = train(cfg);

  Dataset ds = load_dataset(dir);
  const Triplet* t = ds.split(Split::Train)[0];
  Tensor q = run.model->encode_pair(ds.load_image(t->ref),
                                    ds.load_image(t->mod));
  const GenResult gen = run.model->generate(q, 1);
  const std::string decoded = run.vocab.decode(gen.tokens);
  const double secs = timer.seconds();

  Outcome out;
  out.pass = run.final_loss < 0.01 && decoded == t->captions[0] && secs < 300;
  out.detail = "final loss " + fmt(run.final_loss, 5) + ", decode '" +
               decoded + "' vs '" + t->captions[0] + "', " + fmt(secs, 0) +
               " s";
  return out;
}

// --- criterion 5: encoder comparison ----------------------------------------

Outcome criterion_encoder(Context& ctx) {
  Timer timer;
  std::vector<Arm>& joint = ctx.joint_arms();
  std::vector<Arm>& two = ctx.two_stream_arms();
  double train_secs = 0;
  for (const Arm& a : joint) train_secs += a.train_seconds;
  for (const Arm& a : two) train_secs += a.train_seconds;

  const double mj = mean_cider(joint);
  const double mt = mean_cider(two);
  // equal parameter budget: two-stream adds only the stream embeddings
  const int64_t pj = joint[0].run.param_counts.total;
  const int64_t pt = two[0].run.param_counts.total;
  const bool budget_ok = pt == pj + 2 * study_model_config().d_model;

  std::ostringstream detail;
  detail << "mean test CIDEr joint " << fmt(mj) << " vs two_stream "
         << fmt(mt) << " over 3 seeds (";
  for (const Arm& a : joint) detail << " " << fmt(a.eval.report.overall.cider);
  detail << " |";
  for (const Arm& a : two) detail << " " << fmt(a.eval.report.overall.cider);
  detail << " ); params " << pj << "/" << pt << "; train "
         << fmt(train_secs / 60.0, 1) << " min";

  // persist the study CSV next to the workdir for inspection
  std::ofstream csv(ctx.workdir() / "study_encoder.csv");
  csv << "encoder_mode,seed,test_cider,final_loss\n";
  for (size_t i = 0; i < joint.size(); ++i)
    csv << "joint," << kStudySeeds[i] << ","
        << joint[i].eval.report.overall.cider << "," << joint[i].run.final_loss
        << "\n";
  for (size_t i = 0; i < two.size(); ++i)
    csv << "two_stream," << kStudySeeds[i] << ","
        << two[i].eval.report.overall.cider << "," << two[i].run.final_loss
        << "\n";

  Outcome out;
  out.pass = mj > mt && budget_ok && train_secs < 3600.0;
  out.detail = detail.str();
  (void)timer;
  return out;
}

// --- criterion 6: ablation shape ---------------------------------------------

Outcome criterion_ablation(Context& ctx) {
  std::vector<Arm>& all_arms = ctx.joint_arms();  // tune-all by construction
  std::vector<Arm> qf_arms;
  for (uint64_t seed : kStudySeeds) {
    TrainConfig cfg = ctx.study_train_config(seed, ctx.dataset_dir());
    cfg.tune = {false, true, false};
    std::cout << "  ... training qformer-only seed " << seed << std::flush;
    qf_arms.push_back(ctx.train_arm(cfg, ctx.dataset_dir()));
    std::cout << " (cider " << fmt(qf_arms.back().eval.report.overall.cider)
              << ")\n";
  }
  const double m_all = mean_cider(all_arms);
  const double m_qf = mean_cider(qf_arms);
  Outcome out;
  out.pass = m_all >= m_qf;
  out.detail = "mean CIDEr tune-all " + fmt(m_all) + " vs tune-qformer-only " +
               fmt(m_qf) + " over 3 seeds";
  return out;
}

// --- criterion 7: augmentation benefit ----------------------------------------

Outcome criterion_augmentation(Context& ctx) {
  // identical test splits by construction; verified here
  Dataset small = load_dataset(ctx.base_dataset_dir());
  Dataset large = load_dataset(ctx.dataset_dir());
  auto ids = [](const Dataset& d) {
    std::vector<std::string> out;
    for (const Triplet* t : d.split(Split::Test)) out.push_back(t->id);
    return out;
  };
  if (ids(small) != ids(large))
    return {false, "test splits differ between base and superset"};

  std::vector<Arm> base_arms;
  for (uint64_t seed : kStudySeeds) {
    TrainConfig cfg = ctx.study_train_config(seed, ctx.base_dataset_dir());
    std::cout << "  ... training base-only seed " << seed << std::flush;
    base_arms.push_back(ctx.train_arm(cfg, ctx.base_dataset_dir()));
    std::cout << " (cider " << fmt(base_arms.back().eval.report.overall.cider)
              << ")\n";
  }
  std::vector<Arm>& aug_arms = ctx.joint_arms();  // trained on the superset

  const size_t n_base = small.split(Split::Train).size();
  const size_t n_aug = large.split(Split::Train).size();
  const double m_base = mean_cider(base_arms);
  const double m_aug = mean_cider(aug_arms);

  Outcome out;
  out.pass = m_aug > m_base && n_aug > n_base;
  out.detail = "mean CIDEr base(" + std::to_string(n_base) + " pairs) " +
               fmt(m_base) + " vs base+synthetic(" + std::to_string(n_aug) +
               ") " + fmt(m_aug) + "; improvement " +
               fmt(m_base > 0 ? 100.0 * (m_aug - m_base) / m_base : 0.0, 1) +
               "%";
  return out;
}

// --- criterion 8: dataset properties -------------------------------------------

Outcome criterion_dataset(Context& ctx) {
  Dataset ds = load_dataset(ctx.dataset_dir());
  std::ostringstream detail;
  bool pass = true;

  // 8 variants per original
  std::map<std::string, std::set<int>> variants;
  for (const Triplet* t : ds.split(Split::Train))
    variants[t->id.substr(0, 7)].insert(t->variant);
  if (int(variants.size()) != kStudyOriginals) pass = false;
  for (const auto& [orig, vs] : variants)
    if (vs.size() != 8) pass = false;
  detail << variants.size() << " originals x 8 variants";

  // 5 references per test triplet, balance within 1
  std::map<std::string, int> per_cat;
  for (const Triplet* t : ds.split(Split::Test)) {
    if (t->captions.size() != 5) pass = false;
    per_cat[category_name(t->category)] += 1;
  }
  int lo = 1 << 20, hi = 0;
  for (int c = 0; c < kNumCategories; ++c) {
    const int n = per_cat[category_name(EditCategory(c))];
    lo = std::min(lo, n);
    hi = std::max(hi, n);
  }
  if (hi - lo > 1) pass = false;
  detail << "; " << ds.split(Split::Test).size()
         << " test triplets x 5 refs, category counts " << lo << ".." << hi;

  // bit determinism: rebuild into a fresh dir and compare every byte
  const std::string rebuilt = (ctx.workdir() / "data_rebuild").string();
  fs::remove_all(rebuilt);
  BuildConfig cfg = ctx.superset_build_config(rebuilt);
  build_dataset(cfg);
  auto file_bytes = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  bool identical =
      file_bytes(fs::path(ctx.dataset_dir()) / "manifest.json") ==
          file_bytes(fs::path(rebuilt) / "manifest.json") &&
      file_bytes(fs::path(ctx.dataset_dir()) / "triplets.jsonl") ==
          file_bytes(fs::path(rebuilt) / "triplets.jsonl");
  int64_t images_checked = 0;
  if (identical)
    for (const auto& entry :
         fs::directory_iterator(fs::path(ctx.dataset_dir()) / "images")) {
      if (file_bytes(entry.path()) !=
          file_bytes(fs::path(rebuilt) / "images" / entry.path().filename())) {
        identical = false;
        break;
      }
      ++images_checked;
    }
  fs::remove_all(rebuilt);
  if (!identical) pass = false;
  detail << "; rebuild byte-identical over " << images_checked << " images: "
         << (identical ? "yes" : "NO");
  return {pass, detail.str()};
}

// --- criterion 9: robustness invariance ------------------------------------------

Outcome criterion_robustness(Context& ctx) {
  Arm& arm = ctx.joint_arms()[0];  // seed 0 model
  Dataset ds = load_dataset(ctx.dataset_dir());

  auto same_exact_match = [&](const EvalRun& ev) {
    int64_t same_total = 0, same_hit = 0;
    std::map<std::string, const Triplet*> by_id;
    for (const Triplet* t : ds.split(Split::Test)) by_id[t->id] = t;
    for (const PredEntry& p : ev.predictions) {
      const Triplet* t = by_id.at(p.id);
      if (t->category != EditCategory::Same) continue;
      ++same_total;
      for (const std::string& ref : t->captions)
        if (p.caption == ref) {
          ++same_hit;
          break;
        }
    }
    return same_total > 0 ? double(same_hit) / double(same_total) : 0.0;
  };

  const double clean_acc = same_exact_match(arm.eval);
  EvalOptions opts;
  opts.augment_inputs = true;
  opts.augment_seed = 555;
  EvalRun augmented =
      evaluate_split(*arm.run.model, arm.run.vocab, ds, Split::Test, opts);
  const double aug_acc = same_exact_match(augmented);
  const double delta_pp = 100.0 * std::fabs(clean_acc - aug_acc);

  Outcome out;
  out.pass = delta_pp <= 10.0;
  out.detail = "Same-category exact match: clean " + fmt(100 * clean_acc, 1) +
               "% vs augmented " + fmt(100 * aug_acc, 1) + "% (delta " +
               fmt(delta_pp, 1) + " pp)";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
  }

  struct Entry {
    int id;
    const char* name;
    std::function<Outcome(Context&)> run;
  };
  const std::vector<Entry> criteria = {
      {1, "gradient suite", criterion_gradients},
      {2, "metric oracles", criterion_metrics},
      {3, "LoRA contract", criterion_lora},
      {4, "memorization", criterion_memorization},
      {5, "encoder comparison", criterion_encoder},
      {6, "ablation shape", criterion_ablation},
      {7, "augmentation benefit", criterion_augmentation},
      {8, "dataset properties", criterion_dataset},
      {9, "robustness invariance", criterion_robustness},
  };

  Context ctx;
  int failures = 0;
  for (const Entry& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome outcome;
    try {
      outcome = c.run(ctx);
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (outcome.pass ? "[PASS]" : "[FAIL]") << " criterion " << c.id
              << " (" << c.name << "): " << outcome.detail << "\n";
    if (!outcome.pass) ++failures;
  }
  if (failures) std::cout << failures << " criterion(s) failed\n";
  return failures == 0 ? 0 : 1;
}
