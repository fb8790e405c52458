#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>

#include "idc/dataset.hpp"
#include "idc/model.hpp"
#include "idc/rng.hpp"
#include "idc/scene.hpp"
#include "idc/tensor.hpp"

using idc::EncoderMode;
using idc::GenResult;
using idc::IdcModel;
using idc::ModelConfig;
using idc::Raster;
using idc::Rng;
using idc::StepFn;
using idc::Tensor;
using idc::Vocab;

namespace {

ModelConfig tiny_config(EncoderMode mode = EncoderMode::Joint) {
  ModelConfig c;
  c.image_side = 16;
  c.patch_side = 8;
  c.d_model = 16;
  c.n_heads = 2;
  c.vit_layers = 1;
  c.qformer_layers = 1;
  c.decoder_layers = 1;
  c.n_queries = 4;
  c.vocab_size = 11;
  c.max_caption_len = 6;
  c.encoder_mode = mode;
  return c;
}

Raster random_raster(int side, uint64_t seed) {
  Raster img(side, side);
  Rng rng(seed);
  for (uint8_t& v : img.px) v = uint8_t(rng.range(int64_t(256)));
  return img;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.ptr(), b.ptr(), size_t(a.numel()) * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("patchify shapes, constant image, single-pixel locality") {
  ModelConfig c;
  c.image_side = 64;
  c.patch_side = 8;
  c.vocab_size = 11;
  IdcModel model(c, 1);
  CHECK(c.n_patches() == 64);
  CHECK(c.patch_dim() == 192);

  Raster img(64, 64);
  for (uint8_t& v : img.px) v = 77;
  Tensor patches = model.patchify(img);
  CHECK(patches.shape == std::vector<int64_t>({64, 192}));
  for (int64_t p = 1; p < 64; ++p)
    for (int64_t d = 0; d < 192; ++d)
      CHECK(patches.at2(p, d) == patches.at2(0, d));

  Raster black(64, 64);
  black.at(0, 0, 0) = 255;
  black.at(0, 0, 1) = 255;
  black.at(0, 0, 2) = 255;
  Tensor sparse = model.patchify(black);
  for (int64_t p = 0; p < 64; ++p) {
    double mx = 0;
    for (int64_t d = 0; d < 192; ++d)
      mx = std::max(mx, std::fabs(sparse.at2(p, d) + 0.5));  // -0.5 is black
    if (p == 0)
      CHECK(mx > 0.9);  // the white pixel lives in patch 0
    else
      CHECK(mx == 0.0);
  }

  Raster wrong(32, 64);
  CHECK_THROWS_AS(model.patchify(wrong), std::invalid_argument);
}

TEST_CASE("encoders produce (n_queries, d_model) and are deterministic") {
  IdcModel joint(tiny_config(), 7);
  const Raster pair_img = random_raster(16, 3);
  Tensor q1 = joint.encode_joint(pair_img);
  Tensor q2 = joint.encode_joint(pair_img);
  CHECK(q1.shape == std::vector<int64_t>({4, 16}));
  CHECK(bit_equal(q1, q2));

  IdcModel two(tiny_config(EncoderMode::TwoStream), 7);
  const Raster a = random_raster(16, 4), b = random_raster(16, 5);
  Tensor qa = two.encode_two_stream(a, b);
  CHECK(qa.shape == std::vector<int64_t>({4, 16}));
  // same image on both streams is legal
  Tensor qb = two.encode_two_stream(a, a);
  CHECK(qb.shape == std::vector<int64_t>({4, 16}));
  // stream-id embeddings break input symmetry
  Tensor qswap = two.encode_two_stream(b, a);
  CHECK(!bit_equal(qa, qswap));
}

TEST_CASE("two-stream parameter count is joint plus the stream embeddings") {
  IdcModel joint(tiny_config(EncoderMode::Joint), 9);
  IdcModel two(tiny_config(EncoderMode::TwoStream), 9);
  const auto cj = joint.count_params();
  const auto ct = two.count_params();
  CHECK(ct.total == cj.total + 2 * 16);
  // totals are config-deterministic
  IdcModel joint2(tiny_config(EncoderMode::Joint), 1234);
  CHECK(joint2.count_params().total == cj.total);
}

TEST_CASE("gradient reaches the query embeddings through the joint path") {
  IdcModel model(tiny_config(), 11);
  const Raster img = random_raster(16, 6);
  idc::NamedParam queries{"", nullptr};
  for (auto& p : model.params())
    if (p.name == "qformer.queries") queries = p;
  REQUIRE(queries.tensor != nullptr);

  auto f = [&]() {
    Tensor q = model.encode_joint(img);
    return model.caption_loss(q, {4, 5, 6});
  };
  auto report = idc::grad_check(f, {queries}, 1e-5, 1e-4, 8);
  CHECK(report.pass);
  // and the analytic gradient is not identically zero
  queries.tensor->zero_grad();
  idc::Tape tape;
  {
    idc::TapeScope scope(tape);
    Tensor loss = f();
    idc::backward(loss);
  }
  double norm = 0;
  for (double g : *queries.tensor->grad) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("decoder causality: future tokens cannot move current logits") {
  IdcModel model(tiny_config(), 13);
  const Raster img = random_raster(16, 8);
  Tensor q = model.encode_joint(img);
  std::vector<int> tokens = {Vocab::kBos, 4, 5, 6, 7};
  Tensor logits = model.decode_logits(q, tokens);
  CHECK(logits.shape == std::vector<int64_t>({5, 11}));
  std::vector<int> mutated = tokens;
  mutated[3] = 9;  // position 3 changes; logits at 0..2 must not
  Tensor logits2 = model.decode_logits(q, mutated);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t v = 0; v < 11; ++v)
      CHECK(logits.at2(t, v) == logits2.at2(t, v));
  for (int64_t v = 0; v < 11; ++v)
    CHECK(logits.at2(4, v) != doctest::Approx(logits2.at2(4, v)).epsilon(1e-15));

  std::vector<int> overlong(9, 4);
  CHECK_THROWS_AS(model.decode_logits(q, overlong), std::invalid_argument);
  const auto step = model.decode_step(q, tokens);
  CHECK(step.size() == 11);
}

TEST_CASE("generate_with follows a forced one-hot schedule") {
  const int vocab = 6;
  const std::vector<int> schedule = {3, 5, 4};
  StepFn step = [&](const std::vector<int>& prefix) {
    std::vector<double> logits(vocab, -100.0);
    const size_t pos = prefix.size() - 1;
    if (pos < schedule.size())
      logits[size_t(schedule[pos])] = 100.0;
    else
      logits[size_t(Vocab::kEos)] = 100.0;
    return logits;
  };
  const GenResult greedy =
      idc::generate_with(step, vocab, 8, 1, Vocab::kBos, Vocab::kEos);
  CHECK(greedy.tokens == schedule);
  const GenResult beam =
      idc::generate_with(step, vocab, 8, 4, Vocab::kBos, Vocab::kEos);
  CHECK(beam.tokens == schedule);
}

TEST_CASE("beam(1) equals greedy on random logit tables") {
  const int vocab = 7;
  for (uint64_t seed = 0; seed < 30; ++seed) {
    StepFn step = [&](const std::vector<int>& prefix) {
      uint64_t h = seed;
      for (int t : prefix) h = idc::hash_mix(h, uint64_t(t) + 17);
      Rng rng(h);
      std::vector<double> logits(vocab);
      for (double& v : logits) v = rng.uniform(-3.0, 3.0);
      return logits;
    };
    const GenResult a =
        idc::generate_with(step, vocab, 5, 1, Vocab::kBos, Vocab::kEos);
    const GenResult b =
        idc::generate_with(step, vocab, 5, 1, Vocab::kBos, Vocab::kEos);
    CHECK(a.tokens == b.tokens);  // deterministic
    CHECK(a.log_prob == b.log_prob);
  }
}

TEST_CASE("beam search: wider is no worse, exhaustive oracle at full width") {
  const int vocab = 5, max_len = 3;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    StepFn step = [&](const std::vector<int>& prefix) {
      uint64_t h = idc::hash_mix(seed, 991);
      for (int t : prefix) h = idc::hash_mix(h, uint64_t(t) + 29);
      Rng rng(h);
      std::vector<double> logits(vocab);
      for (double& v : logits) v = rng.uniform(-2.0, 2.0);
      return logits;
    };
    const GenResult greedy =
        idc::generate_with(step, vocab, max_len, 1, Vocab::kBos, Vocab::kEos);
    const GenResult beam4 =
        idc::generate_with(step, vocab, max_len, 4, Vocab::kBos, Vocab::kEos);
    CHECK(beam4.log_prob >= greedy.log_prob - 1e-12);

    // exhaustive: every caption of length <= 3, each completed with the
    // EOS term, under the same scoring
    auto log_softmax_at = [&](const std::vector<int>& prefix, int tok) {
      const auto logits = step(prefix);
      double mx = logits[0];
      for (double v : logits) mx = std::max(mx, v);
      double sum = 0;
      for (double v : logits) sum += std::exp(v - mx);
      return logits[size_t(tok)] - mx - std::log(sum);
    };
    std::vector<int> best_tokens;
    double best_lp = -1e300;
    auto consider = [&](const std::vector<int>& tokens, double lp) {
      if (lp > best_lp ||
          (lp == best_lp && (tokens.size() < best_tokens.size() ||
                             (tokens.size() == best_tokens.size() &&
                              tokens < best_tokens)))) {
        best_tokens = tokens;
        best_lp = lp;
      }
    };
    // enumerate token strings over the non-EOS vocabulary
    std::function<void(std::vector<int>&, double)> rec =
        [&](std::vector<int>& tokens, double lp) {
          std::vector<int> prefix = {Vocab::kBos};
          prefix.insert(prefix.end(), tokens.begin(), tokens.end());
          consider(tokens, lp + log_softmax_at(prefix, Vocab::kEos));
          if (int(tokens.size()) == max_len) return;
          for (int t = 0; t < vocab; ++t) {
            if (t == Vocab::kEos) continue;
            tokens.push_back(t);
            rec(tokens, lp + log_softmax_at(prefix, t));
            tokens.pop_back();
          }
        };
    std::vector<int> empty;
    rec(empty, 0.0);

    const GenResult full = idc::generate_with(step, vocab, max_len, 4096,
                                              Vocab::kBos, Vocab::kEos);
    CHECK(full.tokens == best_tokens);
    CHECK(full.log_prob == doctest::Approx(best_lp).epsilon(1e-12));
  }
}

TEST_CASE("beam ties break to shorter then lexicographic") {
  // tokens 3 and 4 are equally likely, EOS forced afterwards
  StepFn step = [&](const std::vector<int>& prefix) {
    std::vector<double> logits(5, -1e9);
    if (prefix.size() == 1) {
      logits[3] = 1.0;
      logits[4] = 1.0;
    } else {
      logits[size_t(Vocab::kEos)] = 1.0;
    }
    return logits;
  };
  const GenResult r =
      idc::generate_with(step, 5, 4, 8, Vocab::kBos, Vocab::kEos);
  CHECK(r.tokens == std::vector<int>({3}));
}

TEST_CASE("LoRA attachment is forward-neutral bit for bit") {
  IdcModel model(tiny_config(), 21);
  const Raster img = random_raster(16, 9);
  Tensor before_q = model.encode_joint(img);
  Tensor before_logits = model.decode_logits(before_q, {Vocab::kBos, 4, 5});

  model.apply_lora(4, 8.0, {"vit", "qformer", "lm"});
  Tensor after_q = model.encode_joint(img);
  Tensor after_logits = model.decode_logits(after_q, {Vocab::kBos, 4, 5});
  CHECK(bit_equal(before_q, after_q));
  CHECK(bit_equal(before_logits, after_logits));

  CHECK_THROWS_AS(model.apply_lora(4, 8.0, {"decoder"}),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.apply_lora(0, 8.0, {"lm"}), std::invalid_argument);
}

TEST_CASE("LoRA trainable counts match the closed form") {
  ModelConfig c = tiny_config();
  c.d_model = 128;
  c.n_heads = 4;
  c.image_side = 64;
  c.vit_layers = 4;
  c.qformer_layers = 2;
  c.decoder_layers = 2;
  IdcModel model(c, 33);
  model.apply_lora(8, 16.0, {"vit", "qformer", "lm"});
  model.tune = {true, true, true};

  // per attention layer: 3 projections x (d*r + r*d) = 3*2*128*8 = 6144
  const int64_t per_layer = 3 * 2 * 128 * 8;
  CHECK(per_layer == 6144);
  // attention layers: vit 4 self; qformer 2 self + 2 cross; lm 2 + 2
  const int64_t n_attn = 4 + 4 + 4;
  const auto counts = model.count_params();
  CHECK(counts.trainable == per_layer * n_attn);
  CHECK(counts.trainable_fraction() < 0.05);

  model.tune = {false, false, false};
  CHECK(model.count_params().trainable == 0);

  model.tune = {false, true, false};
  CHECK(model.count_params().trainable == per_layer * 4);

  // breakdown sums to the total
  int64_t sum = 0;
  for (const auto& [mod, n] : counts.per_module_total) sum += n;
  CHECK(sum == counts.total);
}

TEST_CASE("end-to-end gradient check on a tiny model passes at 1e-4") {
  ModelConfig c = tiny_config();
  IdcModel model(c, 55);
  const Raster ref = random_raster(16, 10), mod = random_raster(16, 11);
  const std::vector<int> caption = {4, 6, 8};
  auto f = [&]() {
    Tensor q = model.encode_pair(ref, mod);
    return model.caption_loss(q, caption);
  };
  auto report = idc::grad_check(f, model.params(), 1e-5, 1e-4, 6);
  CAPTURE(report.worst);
  CAPTURE(report.max_rel_err);
  CHECK(report.pass);
  CHECK(report.checked > 100);
}
