#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "idc/dataset.hpp"
#include "idc/metrics.hpp"
#include "idc/model.hpp"

namespace idc {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct LoraConfig {
  bool enabled = false;
  int rank = 8;
  double alpha = 16.0;
};

struct TrainConfig {
  uint64_t seed = 0;
  int64_t steps = 100;
  int batch_size = 16;
  double lr = 3e-4;
  AdamParams adam;
  LoraConfig lora;
  TuneFlags tune;
  EncoderMode encoder_mode = EncoderMode::Joint;
  bool augmentation = false;
  std::vector<std::string> dataset_dirs;
  ModelConfig model;        // vocab_size filled from the data at train time
  int64_t eval_every = 0;   // periodic greedy val CIDEr; 0 disables
  std::string out_dir;      // loss.csv + checkpoints; empty keeps it in memory

  void validate() const;
};

// Linear warmup over the first 5% of steps, then cosine decay.
double lr_at_step(double base_lr, int64_t step, int64_t total_steps);

class Adam {
 public:
  Adam(std::vector<NamedParam> params, double base_lr, AdamParams hp,
       int64_t total_steps);

  void step();
  void zero_grad();
  double current_lr() const;
  double last_grad_norm() const { return last_grad_norm_; }
  int64_t steps_done() const { return t_; }

 private:
  std::vector<NamedParam> params_;
  std::vector<std::vector<double>> m_, v_;
  double base_lr_;
  AdamParams hp_;
  int64_t total_steps_;
  int64_t t_ = 0;
  double last_grad_norm_ = 0.0;
};

// Train triplets concatenated over dataset dirs, images preloaded; vocab
// over the concatenated train captions; val/test come from the first dir.
struct TrainData {
  std::vector<Triplet> train;
  std::vector<std::pair<Raster, Raster>> images;  // parallel to train
  Dataset primary;
  Vocab vocab;
};

TrainData load_train_data(const std::vector<std::string>& dirs);

struct TrainRun {
  TrainConfig config;
  std::unique_ptr<IdcModel> model;
  Vocab vocab;
  std::vector<double> loss_curve;
  double final_loss = 0.0;
  double val_cider = -1.0;  // last periodic value; -1 when never evaluated
  std::vector<std::pair<int64_t, double>> val_history;  // (step, cider)
  ParamCountReport param_counts;
  std::string checkpoint_path;  // empty when out_dir unset
};

// Deterministic in (config, seed): batch order, augmentation draws and
// updates are all derived from the seed. NaN loss aborts with step, lr and
// the last gradient norm.
TrainRun train(const TrainConfig& config);

// Fully resolved config as a JSON string, for run manifests.
std::string train_config_echo(const TrainConfig& config);

struct EvalOptions {
  int beam_width = 1;
  bool augment_inputs = false;  // robustness probe on eval inputs
  uint64_t augment_seed = 0;
};

struct EvalRun {
  MetricReport report;
  std::vector<PredEntry> predictions;
};

EvalRun evaluate_split(const IdcModel& model, const Vocab& vocab,
                       const Dataset& dataset, Split split,
                       const EvalOptions& options = EvalOptions{});

// --- checkpoints ---------------------------------------------------------
// Container: magic "IDCK", format version u32, u64 JSON header length, the
// header, then raw little-endian f64 tensor payloads in header order.

void save_checkpoint(IdcModel& model, const Vocab& vocab,
                     const TrainConfig& config, int64_t step,
                     const std::string& path, bool lora_only = false);

struct LoadedCheckpoint {
  std::unique_ptr<IdcModel> model;
  Vocab vocab;
  TrainConfig config;
  int64_t step = 0;
  bool lora_only = false;
};

// base_path is required for LoRA-only checkpoints and must carry the
// matching base weight id.
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::string& base_path = "");

// FNV-1a over the non-adapter weights, the identity a LoRA-only
// checkpoint pins its base to.
std::string base_weights_id(IdcModel& model);

// --- studies -------------------------------------------------------------

struct StudyRow {
  std::string label;
  uint64_t seed = 0;
  double test_cider = 0.0;
  double final_loss = 0.0;
  int64_t params_total = 0;
  int64_t params_trainable = 0;
};

struct StudyTable {
  std::string factor;  // the one config field rows differ in
  std::vector<StudyRow> rows;

  double mean_cider(const std::string& label) const;
  std::string to_csv() const;
};

// Same data, seeds and budget; only encoder_mode differs per row.
StudyTable run_encoder_comparison(const TrainConfig& base,
                                  const std::string& dataset_dir,
                                  int n_seeds = 3);

// The 7 non-empty {vit, qformer, lm} subsets, identical seeds and steps.
StudyTable run_ablation(const TrainConfig& base,
                        const std::string& dataset_dir, int n_seeds = 1);

// base vs base+synthetic: the augmented dir must contain the base train
// pairs as its variant-0 subset and an identical test split.
StudyTable run_augmentation_study(const TrainConfig& base,
                                  const std::string& base_dir,
                                  const std::string& augmented_dir,
                                  int n_seeds = 3);

}  // namespace idc
