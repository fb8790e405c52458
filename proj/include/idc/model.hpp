#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "idc/image.hpp"
#include "idc/tensor.hpp"

namespace idc {

enum class EncoderMode { Joint, TwoStream };

const char* encoder_mode_name(EncoderMode m);
EncoderMode encoder_mode_from_name(const std::string& name);

struct ModelConfig {
  int image_side = 64;
  int patch_side = 8;
  int channels = 3;
  int d_model = 128;
  int n_heads = 4;
  int vit_layers = 4;
  int qformer_layers = 2;
  int decoder_layers = 2;
  int n_queries = 8;
  int vocab_size = 0;  // from dataset
  int max_caption_len = 24;
  EncoderMode encoder_mode = EncoderMode::Joint;

  void validate() const;
  int patches_per_side() const { return image_side / patch_side; }
  int n_patches() const { return patches_per_side() * patches_per_side(); }
  int patch_dim() const { return patch_side * patch_side * channels; }
  int head_dim() const { return d_model / n_heads; }
};

struct LoraAdapter {
  Tensor a;  // [d, r]
  Tensor b;  // [r, d], zero-initialized so the initial delta is exactly 0
  int rank = 8;
  double alpha = 16.0;
  double scaling() const { return alpha / double(rank); }
};

// d x d projection with an optional low-rank delta on the side:
// y = x W + (alpha/r) (x A) B.
struct LoraLinear {
  Tensor w;
  std::optional<LoraAdapter> lora;
  Tensor forward(const Tensor& x) const;
};

struct AttentionLayer {
  LoraLinear wq, wk, wv;  // adapters attach to Q, K, V only
  Tensor wo;
  int n_heads = 1;

  Tensor forward(const Tensor& x_q, const Tensor& x_kv, bool causal) const;
};

struct Mlp {
  Tensor w1, b1, w2, b2;
  Tensor forward(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain, bias;
  Tensor forward(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

// Pre-LN transformer block; cross-attention is present in the QFormer and
// decoder stacks only.
struct Block {
  LayerNormParams ln1;
  AttentionLayer self_attn;
  bool has_cross = false;
  LayerNormParams ln_cross;
  AttentionLayer cross_attn;
  LayerNormParams ln2;
  Mlp mlp;

  Tensor forward(const Tensor& x, const Tensor* cross_kv, bool causal) const;
};

struct TuneFlags {
  bool vit = true;
  bool qformer = true;
  bool lm = true;

  bool any() const { return vit || qformer || lm; }
  bool of(const std::string& module) const;
  std::string str() const;
};

struct ParamCountReport {
  int64_t total = 0;
  int64_t trainable = 0;
  std::map<std::string, int64_t> per_module_total;
  std::map<std::string, int64_t> per_module_trainable;
  double trainable_fraction() const {
    return total ? double(trainable) / double(total) : 0.0;
  }
};

struct GenResult {
  std::vector<int> tokens;  // caption ids, no BOS/EOS
  double log_prob = 0.0;
};

// next-token logits for a prefix that starts with BOS
using StepFn = std::function<std::vector<double>(const std::vector<int>&)>;

// Shared decoding loop: beam_width 1 is greedy. Completed beams are ranked
// by log-prob, ties by shorter length then lexicographic token order.
GenResult generate_with(const StepFn& step, int vocab_size, int max_len,
                        int beam_width, int bos_id, int eos_id);

class IdcModel {
 public:
  IdcModel(const ModelConfig& config, uint64_t init_seed);
  IdcModel(const IdcModel&) = delete;
  IdcModel& operator=(const IdcModel&) = delete;
  IdcModel(IdcModel&&) = default;

  // [n_patches, patch_dim] in row-major patch order; values mapped to
  // [-0.5, 0.5]. Rejects rasters that are not image_side square.
  Tensor patchify(const Raster& image) const;

  Tensor encode_vit(const Raster& image) const;
  Tensor encode_joint(const Raster& pair_input) const;
  Tensor encode_two_stream(const Raster& img_a, const Raster& img_b) const;
  // Preprocesses per encoder_mode (concat+resize vs separate resize).
  Tensor encode_pair(const Raster& img_ref, const Raster& img_mod) const;

  // Causal logits for every position of [BOS, tokens...].
  Tensor decode_logits(const Tensor& queries_out,
                       const std::vector<int>& input_tokens) const;
  std::vector<double> decode_step(const Tensor& queries_out,
                                  const std::vector<int>& prefix) const;
  // Teacher-forced mean cross-entropy of the caption given the encoding.
  Tensor caption_loss(const Tensor& queries_out,
                      const std::vector<int>& caption_ids,
                      bool* all_pad_warn = nullptr) const;

  GenResult generate(const Tensor& queries_out, int beam_width = 1) const;

  // Attaches adapters to the Q,K,V projections of every attention layer in
  // the target modules ("vit", "qformer", "lm"). Forward output is
  // bit-identical until the adapters receive updates.
  void apply_lora(int rank, double alpha,
                  const std::set<std::string>& target_modules);

  std::vector<NamedParam> params();
  std::vector<NamedParam> trainable_params();
  bool is_trainable(const std::string& param_name) const;
  ParamCountReport count_params();

  const ModelConfig& config() const { return config_; }
  uint64_t init_seed() const { return init_seed_; }
  TuneFlags tune;             // freeze flag per module (false = frozen)
  bool lora_mode = false;     // set by apply_lora

 private:
  Tensor qformer_forward(const Tensor& vision_tokens) const;

  ModelConfig config_;
  uint64_t init_seed_ = 0;

  // vit
  Tensor patch_embed_w_, patch_embed_b_, patch_pos_;
  std::vector<Block> vit_blocks_;
  LayerNormParams vit_ln_;
  // two-stream fusion
  Tensor stream_embed_[2];
  // qformer
  Tensor queries_;
  std::vector<Block> qf_blocks_;
  LayerNormParams qf_ln_;
  // lm
  Tensor tok_embed_;
  Tensor text_pos_;  // sinusoidal, not a parameter
  std::vector<Block> lm_blocks_;
  LayerNormParams lm_ln_;
  Tensor head_w_, head_b_;
};

}  // namespace idc
