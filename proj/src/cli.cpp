#include "idc/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "idc/dataset.hpp"
#include "idc/kernels.hpp"
#include "idc/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

#ifndef IDC_GIT_DESC
#define IDC_GIT_DESC "unversioned"
#endif

namespace idc {

namespace {

constexpr const char* kVersion = "idc 0.1.0 (" IDC_GIT_DESC ")";

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

// Every run leaves a manifest with the fully resolved configuration. The
// timestamp lives here and nowhere else, so all other outputs stay
// byte-reproducible.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const json& resolved, uint64_t seed) {
  fs::create_directories(out_dir);
  json manifest;
  manifest["command"] = command;
  manifest["config"] = resolved;
  manifest["seed"] = seed;
  manifest["version"] = kVersion;
  manifest["timestamp"] = timestamp_utc();
  std::ofstream out(fs::path(out_dir) / "run_manifest.json");
  out << manifest.dump(2) << "\n";
}

void apply_thread_env() {
  if (const char* env = std::getenv("IDC_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) kernels::set_max_threads(n);
  }
}

struct TrainFlags {
  TrainConfig config;
  std::string tune_csv = "vit,qformer,lm";
  std::string encoder = "joint";

  void add_model_options(CLI::App* cmd) {
    cmd->add_option("--image-side", config.model.image_side);
    cmd->add_option("--patch-side", config.model.patch_side);
    cmd->add_option("--d-model", config.model.d_model);
    cmd->add_option("--heads", config.model.n_heads);
    cmd->add_option("--vit-layers", config.model.vit_layers);
    cmd->add_option("--qformer-layers", config.model.qformer_layers);
    cmd->add_option("--decoder-layers", config.model.decoder_layers);
    cmd->add_option("--queries", config.model.n_queries);
    cmd->add_option("--max-caption-len", config.model.max_caption_len);
  }

  void add_train_options(CLI::App* cmd) {
    cmd->add_option("--steps", config.steps);
    cmd->add_option("--batch", config.batch_size);
    cmd->add_option("--lr", config.lr);
    cmd->add_option("--seed", config.seed);
    cmd->add_flag("--lora", config.lora.enabled);
    cmd->add_option("--lora-rank", config.lora.rank);
    cmd->add_option("--lora-alpha", config.lora.alpha);
    cmd->add_option("--tune", tune_csv,
                    "comma list out of vit,qformer,lm (default all)");
    cmd->add_option("--encoder", encoder, "joint or two_stream");
    cmd->add_flag("--augment", config.augmentation);
    cmd->add_option("--eval-every", config.eval_every);
    add_model_options(cmd);
  }

  void resolve() {
    TuneFlags tune{false, false, false};
    std::stringstream ss(tune_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "vit") tune.vit = true;
      else if (item == "qformer") tune.qformer = true;
      else if (item == "lm") tune.lm = true;
      else if (!item.empty())
        throw CLI::ValidationError("--tune", "unknown module '" + item + "'");
    }
    config.tune = tune;
    config.encoder_mode = encoder_mode_from_name(encoder);
    config.model.encoder_mode = config.encoder_mode;
  }
};

json train_summary(const TrainRun& run) {
  json j;
  j["final_loss"] = run.final_loss;
  j["params_total"] = run.param_counts.total;
  j["params_trainable"] = run.param_counts.trainable;
  j["trainable_fraction"] = run.param_counts.trainable_fraction();
  if (run.val_cider >= 0) j["val_cider"] = run.val_cider;
  if (!run.checkpoint_path.empty()) j["checkpoint"] = run.checkpoint_path;
  return j;
}

void write_report(const MetricReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "report.csv");
  csv << report.to_csv();
  std::ofstream md(fs::path(out_dir) / "report.md");
  md << report.to_markdown();
}

void write_predictions(const std::vector<PredEntry>& preds,
                       const std::string& path) {
  std::ofstream out(path);
  for (const PredEntry& p : preds) {
    json j;
    j["id"] = p.id;
    j["caption"] = p.caption;
    out << j.dump() << "\n";
  }
}

std::vector<PredEntry> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file " + path);
  std::vector<PredEntry> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    preds.push_back(
        {j.at("id").get<std::string>(), j.at("caption").get<std::string>()});
  }
  return preds;
}

std::vector<RefEntry> read_references(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open references file " + path);
  std::vector<RefEntry> refs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    RefEntry r;
    r.id = j.at("id").get<std::string>();
    if (j.contains("captions"))
      r.captions = j.at("captions").get<std::vector<std::string>>();
    else
      r.captions = {j.at("caption").get<std::string>()};
    if (j.contains("category")) r.category = j.at("category").get<std::string>();
    refs.push_back(std::move(r));
  }
  return refs;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"desk-scale image difference captioning lab"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  apply_thread_env();

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  BuildConfig build;
  gen->add_option("--out", build.out_dir)->required();
  gen->add_option("--originals", build.n_originals);
  gen->add_option("--test-fraction", build.test_fraction);
  gen->add_option("--test-count", build.test_count_override,
                  "pin the test count (for base/superset dataset pairs)");
  gen->add_option("--seed", build.seed);
  gen->add_option("--variants", build.variants_per_original);
  gen->add_option("--render-side", build.render_side);
  gen->callback([&]() {
    const std::string manifest_str = build_dataset(build);
    const json manifest = json::parse(manifest_str);
    const json counts = manifest.at("counts");
    std::cout << counts.at("train").get<int64_t>() << " train pairs\n"
              << counts.at("val").get<int64_t>() << " val triplets\n"
              << counts.at("test").get<int64_t>() << " test triplets\n";
    std::cout << "per-category counts:\n";
    for (const auto& [split, cats] : manifest.at("per_category").items()) {
      std::cout << "  " << split << ":";
      for (const auto& [cat, n] : cats.items())
        std::cout << " " << cat << "=" << n.get<int>();
      std::cout << "\n";
    }
    write_run_manifest(build.out_dir, "gen-data",
                       json{{"out", build.out_dir},
                            {"originals", build.n_originals},
                            {"test_fraction", build.test_fraction},
                            {"variants", build.variants_per_original},
                            {"render_side", build.render_side}},
                       build.seed);
  });

  // train --------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "fine-tune a model on a dataset");
  TrainFlags tf;
  tr->add_option("--data", tf.config.dataset_dirs, "dataset dir(s)")
      ->required();
  std::string train_out;
  tr->add_option("--out", train_out)->required();
  tf.add_train_options(tr);
  tr->callback([&]() {
    tf.resolve();
    tf.config.out_dir = train_out;
    write_run_manifest(train_out, "train", json::parse(train_config_echo(tf.config)),
                       tf.config.seed);
    TrainRun run = train(tf.config);
    std::cout << train_summary(run).dump(2) << "\n";
  });

  // eval ---------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "decode a split and score it");
  std::string ckpt, base_ckpt, eval_data, eval_out, eval_split = "test";
  int beam = 1;
  bool augment_inputs = false;
  uint64_t aug_seed = 0;
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--base", base_ckpt, "base checkpoint for LoRA-only files");
  ev->add_option("--data", eval_data)->required();
  ev->add_option("--out", eval_out)->required();
  ev->add_option("--beam", beam);
  ev->add_option("--split", eval_split);
  ev->add_flag("--augment-inputs", augment_inputs,
               "apply non-disruptive augmentations to eval inputs");
  ev->add_option("--aug-seed", aug_seed);
  ev->callback([&]() {
    LoadedCheckpoint loaded = load_checkpoint(ckpt, base_ckpt);
    Dataset ds = load_dataset(eval_data);
    EvalOptions opts;
    opts.beam_width = beam;
    opts.augment_inputs = augment_inputs;
    opts.augment_seed = aug_seed;
    EvalRun result = evaluate_split(*loaded.model, loaded.vocab, ds,
                                    split_from_name(eval_split), opts);
    fs::create_directories(eval_out);
    write_predictions(result.predictions,
                      (fs::path(eval_out) / "predictions.jsonl").string());
    write_report(result.report, eval_out);
    std::cout << result.report.to_markdown();
    write_run_manifest(eval_out, "eval",
                       json{{"ckpt", ckpt},
                            {"data", eval_data},
                            {"split", eval_split},
                            {"beam", beam},
                            {"augment_inputs", augment_inputs}},
                       aug_seed);
  });

  // metrics ------------------------------------------------------------
  auto* me = app.add_subcommand(
      "metrics", "score externally supplied predictions against references");
  std::string pred_path, refs_path, metrics_out;
  me->add_option("--pred", pred_path)->required();
  me->add_option("--refs", refs_path)->required();
  me->add_option("--out", metrics_out)->required();
  me->callback([&]() {
    MetricReport report =
        corpus_evaluate(read_predictions(pred_path), read_references(refs_path));
    write_report(report, metrics_out);
    std::cout << report.to_markdown();
    write_run_manifest(metrics_out, "metrics",
                       json{{"pred", pred_path}, {"refs", refs_path}}, 0);
  });

  // studies --------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "train every tune-flag subset");
  TrainFlags af;
  std::string ab_data, ab_out;
  int ab_seeds = 1;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--out", ab_out)->required();
  ab->add_option("--seeds", ab_seeds);
  af.add_train_options(ab);
  ab->callback([&]() {
    af.resolve();
    StudyTable table = run_ablation(af.config, ab_data, ab_seeds);
    fs::create_directories(ab_out);
    std::ofstream csv(fs::path(ab_out) / "ablation.csv");
    csv << table.to_csv();
    std::cout << table.to_csv();
    write_run_manifest(ab_out, "ablate", json::parse(train_config_echo(af.config)),
                       af.config.seed);
  });

  auto* sa = app.add_subcommand("study-aug",
                                "base vs base+synthetic training comparison");
  TrainFlags sa_flags;
  std::string sa_base, sa_augmented, sa_out;
  int sa_seeds = 3;
  sa->add_option("--base", sa_base)->required();
  sa->add_option("--augmented", sa_augmented)->required();
  sa->add_option("--out", sa_out)->required();
  sa->add_option("--seeds", sa_seeds);
  sa_flags.add_train_options(sa);
  sa->callback([&]() {
    sa_flags.resolve();
    sa_flags.config.dataset_dirs = {sa_base};
    StudyTable table =
        run_augmentation_study(sa_flags.config, sa_base, sa_augmented, sa_seeds);
    const double base_mean = table.mean_cider("base");
    const double aug_mean = table.mean_cider("base+synthetic");
    fs::create_directories(sa_out);
    std::ofstream csv(fs::path(sa_out) / "study_aug.csv");
    csv << table.to_csv();
    csv << "improvement_percent,,"
        << (base_mean > 0 ? 100.0 * (aug_mean - base_mean) / base_mean : 0.0)
        << ",,,\n";
    std::cout << table.to_csv();
    std::cout << "mean cider: base=" << base_mean
              << " base+synthetic=" << aug_mean << "\n";
    write_run_manifest(sa_out, "study-aug", json::parse(train_config_echo(sa_flags.config)),
                       sa_flags.config.seed);
  });

  auto* se = app.add_subcommand("study-encoder",
                                "joint vs two-stream encoder comparison");
  TrainFlags se_flags;
  std::string se_data, se_out;
  int se_seeds = 3;
  se->add_option("--data", se_data)->required();
  se->add_option("--out", se_out)->required();
  se->add_option("--seeds", se_seeds);
  se_flags.add_train_options(se);
  se->callback([&]() {
    se_flags.resolve();
    se_flags.config.dataset_dirs = {se_data};
    StudyTable table =
        run_encoder_comparison(se_flags.config, se_data, se_seeds);
    fs::create_directories(se_out);
    std::ofstream csv(fs::path(se_out) / "study_encoder.csv");
    csv << table.to_csv();
    std::cout << table.to_csv();
    std::cout << "mean cider: joint=" << table.mean_cider("joint")
              << " two_stream=" << table.mean_cider("two_stream") << "\n";
    write_run_manifest(se_out, "study-encoder",
                       json::parse(train_config_echo(se_flags.config)), se_flags.config.seed);
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace idc
