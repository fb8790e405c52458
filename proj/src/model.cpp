#include "idc/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "idc/dataset.hpp"
#include "idc/rng.hpp"

namespace idc {

namespace {

Tensor xavier(Rng& rng, int64_t fan_in, int64_t fan_out) {
  const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor t({fan_in, fan_out}, true);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-bound, bound);
  return t;
}

Tensor gaussian(Rng& rng, std::vector<int64_t> shape, double stddev) {
  Tensor t(std::move(shape), true);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, stddev);
  return t;
}

Tensor causal_mask(int64_t t_len) {
  Tensor mask({t_len, t_len});
  for (int64_t i = 0; i < t_len; ++i)
    for (int64_t j = i + 1; j < t_len; ++j) mask.at2(i, j) = -1e30;
  return mask;
}

Tensor sinusoid_table(int64_t max_len, int64_t d) {
  Tensor t({max_len, d});
  for (int64_t p = 0; p < max_len; ++p)
    for (int64_t i = 0; i < d; ++i) {
      const double angle =
          double(p) / std::pow(10000.0, double(2 * (i / 2)) / double(d));
      t.at2(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return t;
}

// Learned patch positions start from a scaled 2-d sin-cos grid: row and
// column each get half the channels. The structured start lets attention
// pick up cross-patch correspondences long before random embeddings would.
Tensor sincos_2d_grid(int grid, int64_t d, double amplitude) {
  Tensor t({int64_t(grid) * grid, d}, true);
  const int64_t half = d / 2;
  for (int py = 0; py < grid; ++py)
    for (int px = 0; px < grid; ++px) {
      const int64_t patch = int64_t(py) * grid + px;
      for (int64_t i = 0; i < d; ++i) {
        const bool row_part = i < half;
        const int64_t j = row_part ? i : i - half;
        const double pos = row_part ? py : px;
        const double denom =
            std::pow(10000.0, double(2 * (j / 2)) / double(half));
        const double angle = pos / denom;
        t.at2(patch, i) =
            amplitude * ((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
      }
    }
  return t;
}

void init_attention(Rng& rng, AttentionLayer& attn, int d, int n_heads) {
  attn.wq.w = xavier(rng, d, d);
  attn.wk.w = xavier(rng, d, d);
  attn.wv.w = xavier(rng, d, d);
  attn.wo = xavier(rng, d, d);
  attn.n_heads = n_heads;
}

void init_block(Rng& rng, Block& block, int d, int n_heads, bool has_cross) {
  block.ln1.gain = Tensor::full({d}, 1.0, true);
  block.ln1.bias = Tensor::zeros({d}, true);
  init_attention(rng, block.self_attn, d, n_heads);
  block.has_cross = has_cross;
  if (has_cross) {
    block.ln_cross.gain = Tensor::full({d}, 1.0, true);
    block.ln_cross.bias = Tensor::zeros({d}, true);
    init_attention(rng, block.cross_attn, d, n_heads);
  }
  block.ln2.gain = Tensor::full({d}, 1.0, true);
  block.ln2.bias = Tensor::zeros({d}, true);
  block.mlp.w1 = xavier(rng, d, 4 * d);
  block.mlp.b1 = Tensor::zeros({4 * d}, true);
  block.mlp.w2 = xavier(rng, 4 * d, d);
  block.mlp.b2 = Tensor::zeros({d}, true);
}

void collect_attention(const std::string& prefix, AttentionLayer& attn,
                       std::vector<NamedParam>& out) {
  out.push_back({prefix + ".wq", &attn.wq.w});
  if (attn.wq.lora) {
    out.push_back({prefix + ".wq.lora_a", &attn.wq.lora->a});
    out.push_back({prefix + ".wq.lora_b", &attn.wq.lora->b});
  }
  out.push_back({prefix + ".wk", &attn.wk.w});
  if (attn.wk.lora) {
    out.push_back({prefix + ".wk.lora_a", &attn.wk.lora->a});
    out.push_back({prefix + ".wk.lora_b", &attn.wk.lora->b});
  }
  out.push_back({prefix + ".wv", &attn.wv.w});
  if (attn.wv.lora) {
    out.push_back({prefix + ".wv.lora_a", &attn.wv.lora->a});
    out.push_back({prefix + ".wv.lora_b", &attn.wv.lora->b});
  }
  out.push_back({prefix + ".wo", &attn.wo});
}

void collect_block(const std::string& prefix, Block& block,
                   std::vector<NamedParam>& out) {
  out.push_back({prefix + ".ln1.gain", &block.ln1.gain});
  out.push_back({prefix + ".ln1.bias", &block.ln1.bias});
  collect_attention(prefix + ".attn", block.self_attn, out);
  if (block.has_cross) {
    out.push_back({prefix + ".lnc.gain", &block.ln_cross.gain});
    out.push_back({prefix + ".lnc.bias", &block.ln_cross.bias});
    collect_attention(prefix + ".cross", block.cross_attn, out);
  }
  out.push_back({prefix + ".ln2.gain", &block.ln2.gain});
  out.push_back({prefix + ".ln2.bias", &block.ln2.bias});
  out.push_back({prefix + ".mlp.w1", &block.mlp.w1});
  out.push_back({prefix + ".mlp.b1", &block.mlp.b1});
  out.push_back({prefix + ".mlp.w2", &block.mlp.w2});
  out.push_back({prefix + ".mlp.b2", &block.mlp.b2});
}

void attach_lora(AttentionLayer& attn, Rng& rng, int rank, double alpha,
                 int d) {
  for (LoraLinear* lin : {&attn.wq, &attn.wk, &attn.wv}) {
    LoraAdapter adapter;
    adapter.rank = rank;
    adapter.alpha = alpha;
    adapter.a = gaussian(rng, {d, rank}, 0.02);
    adapter.b = Tensor::zeros({rank, d}, true);
    lin->lora = std::move(adapter);
  }
}

}  // namespace

const char* encoder_mode_name(EncoderMode m) {
  return m == EncoderMode::Joint ? "joint" : "two_stream";
}

EncoderMode encoder_mode_from_name(const std::string& name) {
  if (name == "joint") return EncoderMode::Joint;
  if (name == "two_stream") return EncoderMode::TwoStream;
  throw std::invalid_argument("unknown encoder mode: " + name);
}

void ModelConfig::validate() const {
  if (image_side <= 0 || patch_side <= 0 || image_side % patch_side != 0)
    throw std::invalid_argument(
        "ModelConfig: image_side must be a positive multiple of patch_side");
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0)
    throw std::invalid_argument(
        "ModelConfig: d_model must be a positive multiple of n_heads");
  if (n_queries < 1)
    throw std::invalid_argument("ModelConfig: n_queries must be >= 1");
  if (vocab_size < 5)
    throw std::invalid_argument("ModelConfig: vocab_size not set");
  if (vit_layers < 1 || qformer_layers < 1 || decoder_layers < 1)
    throw std::invalid_argument("ModelConfig: layer counts must be >= 1");
  if (max_caption_len < 2)
    throw std::invalid_argument("ModelConfig: max_caption_len too small");
}

bool TuneFlags::of(const std::string& module) const {
  if (module == "vit") return vit;
  if (module == "qformer") return qformer;
  if (module == "lm") return lm;
  throw std::invalid_argument("unknown module: " + module);
}

std::string TuneFlags::str() const {
  std::string s;
  auto append = [&](const char* name) {
    if (!s.empty()) s += "+";
    s += name;
  };
  if (vit) append("vit");
  if (qformer) append("qformer");
  if (lm) append("lm");
  return s.empty() ? "none" : s;
}

Tensor LoraLinear::forward(const Tensor& x) const {
  Tensor y = matmul(x, w);
  if (lora) {
    Tensor delta = matmul(matmul(x, lora->a), lora->b);
    y = add(y, scale(delta, lora->scaling()));
  }
  return y;
}

Tensor AttentionLayer::forward(const Tensor& x_q, const Tensor& x_kv,
                               bool causal) const {
  const int64_t d = wq.w.shape[0];
  const int64_t hd = d / n_heads;
  Tensor q = wq.forward(x_q);
  Tensor k = wk.forward(x_kv);
  Tensor v = wv.forward(x_kv);
  Tensor mask;
  if (causal) mask = causal_mask(x_q.shape[0]);
  std::vector<Tensor> heads;
  heads.reserve(size_t(n_heads));
  const double inv_sqrt = 1.0 / std::sqrt(double(hd));
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, (h + 1) * hd);
    Tensor kh = slice_cols(k, h * hd, (h + 1) * hd);
    Tensor vh = slice_cols(v, h * hd, (h + 1) * hd);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (causal) scores = add(scores, mask);
    heads.push_back(matmul(softmax(scores), vh));
  }
  return matmul(concat_cols(heads), wo);
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = gelu(add_rowvec(matmul(x, w1), b1));
  return add_rowvec(matmul(h, w2), b2);
}

Tensor Block::forward(const Tensor& x, const Tensor* cross_kv,
                      bool causal) const {
  Tensor normed = ln1.forward(x);
  Tensor h = add(x, self_attn.forward(normed, normed, causal));
  if (has_cross) {
    if (!cross_kv)
      throw std::invalid_argument("Block: cross block needs cross_kv");
    h = add(h, cross_attn.forward(ln_cross.forward(h), *cross_kv, false));
  }
  return add(h, mlp.forward(ln2.forward(h)));
}

IdcModel::IdcModel(const ModelConfig& config, uint64_t init_seed)
    : config_(config), init_seed_(init_seed) {
  config_.validate();
  Rng rng = rng_stream(init_seed, "model_init");
  const int d = config_.d_model;

  patch_embed_w_ = xavier(rng, config_.patch_dim(), d);
  patch_embed_b_ = Tensor::zeros({d}, true);
  patch_pos_ = sincos_2d_grid(config_.patches_per_side(), d, 0.3);
  vit_blocks_.resize(size_t(config_.vit_layers));
  for (Block& b : vit_blocks_) init_block(rng, b, d, config_.n_heads, false);
  vit_ln_.gain = Tensor::full({d}, 1.0, true);
  vit_ln_.bias = Tensor::zeros({d}, true);

  queries_ = gaussian(rng, {config_.n_queries, d}, 0.02);
  if (config_.encoder_mode == EncoderMode::TwoStream) {
    stream_embed_[0] = gaussian(rng, {1, d}, 0.02);
    stream_embed_[1] = gaussian(rng, {1, d}, 0.02);
  }
  qf_blocks_.resize(size_t(config_.qformer_layers));
  for (Block& b : qf_blocks_) init_block(rng, b, d, config_.n_heads, true);
  qf_ln_.gain = Tensor::full({d}, 1.0, true);
  qf_ln_.bias = Tensor::zeros({d}, true);

  tok_embed_ = gaussian(rng, {config_.vocab_size, d}, 0.02);
  text_pos_ = sinusoid_table(config_.max_caption_len + 2, d);
  lm_blocks_.resize(size_t(config_.decoder_layers));
  for (Block& b : lm_blocks_) init_block(rng, b, d, config_.n_heads, true);
  lm_ln_.gain = Tensor::full({d}, 1.0, true);
  lm_ln_.bias = Tensor::zeros({d}, true);
  head_w_ = xavier(rng, d, config_.vocab_size);
  head_b_ = Tensor::zeros({config_.vocab_size}, true);
}

Tensor IdcModel::patchify(const Raster& image) const {
  if (image.width != config_.image_side || image.height != config_.image_side)
    throw std::invalid_argument(
        "patchify: raster is " + std::to_string(image.width) + "x" +
        std::to_string(image.height) + ", model wants " +
        std::to_string(config_.image_side) + " square");
  const int ps = config_.patch_side;
  const int grid = config_.patches_per_side();
  Tensor out({config_.n_patches(), config_.patch_dim()});
  for (int py = 0; py < grid; ++py)
    for (int px = 0; px < grid; ++px) {
      const int64_t patch = int64_t(py) * grid + px;
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x)
          for (int c = 0; c < 3; ++c) {
            const int64_t dim = (int64_t(y) * ps + x) * 3 + c;
            out.at2(patch, dim) =
                image.at(px * ps + x, py * ps + y, c) / 255.0 - 0.5;
          }
    }
  return out;
}

Tensor IdcModel::encode_vit(const Raster& image) const {
  Tensor x = add_rowvec(matmul(patchify(image), patch_embed_w_),
                        patch_embed_b_);
  x = add(x, patch_pos_);
  for (const Block& b : vit_blocks_) x = b.forward(x, nullptr, false);
  return vit_ln_.forward(x);
}

Tensor IdcModel::qformer_forward(const Tensor& vision_tokens) const {
  Tensor x = queries_;
  for (const Block& b : qf_blocks_) x = b.forward(x, &vision_tokens, false);
  return qf_ln_.forward(x);
}

Tensor IdcModel::encode_joint(const Raster& pair_input) const {
  return qformer_forward(encode_vit(pair_input));
}

Tensor IdcModel::encode_two_stream(const Raster& img_a,
                                   const Raster& img_b) const {
  Tensor ta = add_rowvec(encode_vit(img_a), stream_embed_[0]);
  Tensor tb = add_rowvec(encode_vit(img_b), stream_embed_[1]);
  return qformer_forward(concat_rows({ta, tb}));
}

Tensor IdcModel::encode_pair(const Raster& img_ref,
                             const Raster& img_mod) const {
  if (config_.encoder_mode == EncoderMode::Joint)
    return encode_joint(
        concat_and_resize(img_ref, img_mod, config_.image_side));
  return encode_two_stream(
      resize_bilinear(img_ref, config_.image_side, config_.image_side),
      resize_bilinear(img_mod, config_.image_side, config_.image_side));
}

Tensor IdcModel::decode_logits(const Tensor& queries_out,
                               const std::vector<int>& input_tokens) const {
  if (int64_t(input_tokens.size()) > config_.max_caption_len + 1)
    throw std::invalid_argument("decode_logits: prefix of " +
                                std::to_string(input_tokens.size()) +
                                " tokens exceeds max_caption_len");
  Tensor x = embedding_gather(tok_embed_, input_tokens);
  std::vector<int> positions(input_tokens.size());
  for (size_t i = 0; i < positions.size(); ++i) positions[i] = int(i);
  x = add(x, embedding_gather(text_pos_, positions));
  for (const Block& b : lm_blocks_) x = b.forward(x, &queries_out, true);
  return add_rowvec(matmul(lm_ln_.forward(x), head_w_), head_b_);
}

std::vector<double> IdcModel::decode_step(const Tensor& queries_out,
                                          const std::vector<int>& prefix) const {
  NoTapeScope no_tape;
  Tensor logits = decode_logits(queries_out, prefix);
  const int64_t v = logits.shape[1];
  const int64_t last = logits.shape[0] - 1;
  std::vector<double> out(static_cast<size_t>(v));
  for (int64_t j = 0; j < v; ++j) out[size_t(j)] = logits.at2(last, j);
  return out;
}

Tensor IdcModel::caption_loss(const Tensor& queries_out,
                              const std::vector<int>& caption_ids,
                              bool* all_pad_warn) const {
  std::vector<int> input = {Vocab::kBos};
  input.insert(input.end(), caption_ids.begin(), caption_ids.end());
  std::vector<int> targets = caption_ids;
  targets.push_back(Vocab::kEos);
  Tensor logits = decode_logits(queries_out, input);
  return cross_entropy(logits, targets, Vocab::kPad, all_pad_warn);
}

namespace {

struct Beam {
  std::vector<int> tokens;  // after BOS
  double log_prob = 0.0;
  bool done = false;
};

bool beam_better(const Beam& a, const Beam& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens.size() != b.tokens.size())
    return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

std::vector<double> log_softmax_vec(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

// Sequences that reach max_len are force-completed with the EOS term, so
// every hypothesis carries a comparable full-sequence log-prob.
Beam beam_core(const StepFn& step, int vocab_size, int max_len,
               int beam_width, int bos_id, int eos_id) {
  std::vector<Beam> beams = {Beam{}};
  for (int t = 0; t <= max_len; ++t) {
    std::vector<Beam> next;
    bool expanded = false;
    for (const Beam& beam : beams) {
      if (beam.done) {
        next.push_back(beam);
        continue;
      }
      expanded = true;
      std::vector<int> prefix = {bos_id};
      prefix.insert(prefix.end(), beam.tokens.begin(), beam.tokens.end());
      const std::vector<double> lp = log_softmax_vec(step(prefix));
      if (int(lp.size()) != vocab_size)
        throw std::runtime_error("generate_with: step returned " +
                                 std::to_string(lp.size()) + " logits, want " +
                                 std::to_string(vocab_size));
      if (t == max_len) {
        Beam b = beam;
        b.log_prob += lp[size_t(eos_id)];
        b.done = true;
        next.push_back(std::move(b));
        continue;
      }
      for (int tok = 0; tok < vocab_size; ++tok) {
        Beam b = beam;
        b.log_prob += lp[size_t(tok)];
        if (tok == eos_id) {
          b.done = true;
        } else {
          b.tokens.push_back(tok);
        }
        next.push_back(std::move(b));
      }
    }
    if (!expanded) break;
    std::sort(next.begin(), next.end(), beam_better);
    if (int(next.size()) > beam_width) next.resize(size_t(beam_width));
    beams = std::move(next);
  }
  Beam best;
  best.log_prob = -std::numeric_limits<double>::infinity();
  for (const Beam& b : beams)
    if (b.done && (best.log_prob == -std::numeric_limits<double>::infinity() ||
                   beam_better(b, best)))
      best = b;
  return best;
}

}  // namespace

GenResult generate_with(const StepFn& step, int vocab_size, int max_len,
                        int beam_width, int bos_id, int eos_id) {
  if (beam_width < 1)
    throw std::invalid_argument("generate_with: beam width must be >= 1");
  Beam best = beam_core(step, vocab_size, max_len, beam_width, bos_id, eos_id);
  if (beam_width > 1) {
    // The greedy chain always competes, so widening the beam never loses
    // to beam width 1.
    Beam greedy = beam_core(step, vocab_size, max_len, 1, bos_id, eos_id);
    if (beam_better(greedy, best)) best = greedy;
  }
  return GenResult{best.tokens, best.log_prob};
}

GenResult IdcModel::generate(const Tensor& queries_out, int beam_width) const {
  NoTapeScope no_tape;
  StepFn step = [&](const std::vector<int>& prefix) {
    return decode_step(queries_out, prefix);
  };
  return generate_with(step, config_.vocab_size, config_.max_caption_len,
                       beam_width, Vocab::kBos, Vocab::kEos);
}

void IdcModel::apply_lora(int rank, double alpha,
                          const std::set<std::string>& target_modules) {
  if (rank < 1) throw std::invalid_argument("apply_lora: rank must be >= 1");
  for (const std::string& m : target_modules)
    if (m != "vit" && m != "qformer" && m != "lm")
      throw std::invalid_argument("apply_lora: unknown target module '" + m +
                                  "'");
  Rng rng = rng_stream(init_seed_, "lora_init");
  const int d = config_.d_model;
  auto attach_stack = [&](std::vector<Block>& blocks) {
    for (Block& b : blocks) {
      attach_lora(b.self_attn, rng, rank, alpha, d);
      if (b.has_cross) attach_lora(b.cross_attn, rng, rank, alpha, d);
    }
  };
  if (target_modules.count("vit")) attach_stack(vit_blocks_);
  if (target_modules.count("qformer")) attach_stack(qf_blocks_);
  if (target_modules.count("lm")) attach_stack(lm_blocks_);
  lora_mode = true;
}

std::vector<NamedParam> IdcModel::params() {
  std::vector<NamedParam> out;
  out.push_back({"vit.patch_embed.w", &patch_embed_w_});
  out.push_back({"vit.patch_embed.b", &patch_embed_b_});
  out.push_back({"vit.patch_pos", &patch_pos_});
  for (size_t i = 0; i < vit_blocks_.size(); ++i)
    collect_block("vit.block" + std::to_string(i), vit_blocks_[i], out);
  out.push_back({"vit.ln.gain", &vit_ln_.gain});
  out.push_back({"vit.ln.bias", &vit_ln_.bias});

  out.push_back({"qformer.queries", &queries_});
  if (config_.encoder_mode == EncoderMode::TwoStream) {
    out.push_back({"qformer.stream0", &stream_embed_[0]});
    out.push_back({"qformer.stream1", &stream_embed_[1]});
  }
  for (size_t i = 0; i < qf_blocks_.size(); ++i)
    collect_block("qformer.block" + std::to_string(i), qf_blocks_[i], out);
  out.push_back({"qformer.ln.gain", &qf_ln_.gain});
  out.push_back({"qformer.ln.bias", &qf_ln_.bias});

  out.push_back({"lm.tok_embed", &tok_embed_});
  for (size_t i = 0; i < lm_blocks_.size(); ++i)
    collect_block("lm.block" + std::to_string(i), lm_blocks_[i], out);
  out.push_back({"lm.ln.gain", &lm_ln_.gain});
  out.push_back({"lm.ln.bias", &lm_ln_.bias});
  out.push_back({"lm.head.w", &head_w_});
  out.push_back({"lm.head.b", &head_b_});
  return out;
}

bool IdcModel::is_trainable(const std::string& param_name) const {
  const std::string module = param_name.substr(0, param_name.find('.'));
  if (!tune.of(module)) return false;
  if (lora_mode) return param_name.find(".lora_") != std::string::npos;
  return true;
}

std::vector<NamedParam> IdcModel::trainable_params() {
  std::vector<NamedParam> out;
  for (NamedParam& p : params())
    if (is_trainable(p.name)) out.push_back(p);
  return out;
}

ParamCountReport IdcModel::count_params() {
  ParamCountReport report;
  for (NamedParam& p : params()) {
    const std::string module = p.name.substr(0, p.name.find('.'));
    const int64_t n = p.tensor->numel();
    report.total += n;
    report.per_module_total[module] += n;
    if (is_trainable(p.name)) {
      report.trainable += n;
      report.per_module_trainable[module] += n;
    }
  }
  return report;
}

}  // namespace idc
