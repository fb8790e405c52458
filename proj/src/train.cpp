#include "idc/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "idc/captions.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian f64");

namespace idc {

namespace {

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kMagic[4] = {'I', 'D', 'C', 'K'};

uint64_t fnv1a(const uint8_t* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return buf;
}

json tune_to_json(const TuneFlags& t) {
  return json{{"vit", t.vit}, {"qformer", t.qformer}, {"lm", t.lm}};
}

TuneFlags tune_from_json(const json& j) {
  TuneFlags t;
  t.vit = j.at("vit").get<bool>();
  t.qformer = j.at("qformer").get<bool>();
  t.lm = j.at("lm").get<bool>();
  return t;
}

json model_config_to_json(const ModelConfig& m) {
  return json{{"image_side", m.image_side},
              {"patch_side", m.patch_side},
              {"channels", m.channels},
              {"d_model", m.d_model},
              {"n_heads", m.n_heads},
              {"vit_layers", m.vit_layers},
              {"qformer_layers", m.qformer_layers},
              {"decoder_layers", m.decoder_layers},
              {"n_queries", m.n_queries},
              {"vocab_size", m.vocab_size},
              {"max_caption_len", m.max_caption_len},
              {"encoder_mode", encoder_mode_name(m.encoder_mode)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.image_side = j.at("image_side").get<int>();
  m.patch_side = j.at("patch_side").get<int>();
  m.channels = j.at("channels").get<int>();
  m.d_model = j.at("d_model").get<int>();
  m.n_heads = j.at("n_heads").get<int>();
  m.vit_layers = j.at("vit_layers").get<int>();
  m.qformer_layers = j.at("qformer_layers").get<int>();
  m.decoder_layers = j.at("decoder_layers").get<int>();
  m.n_queries = j.at("n_queries").get<int>();
  m.vocab_size = j.at("vocab_size").get<int>();
  m.max_caption_len = j.at("max_caption_len").get<int>();
  m.encoder_mode =
      encoder_mode_from_name(j.at("encoder_mode").get<std::string>());
  return m;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"seed", c.seed},
              {"steps", c.steps},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"adam",
               {{"beta1", c.adam.beta1},
                {"beta2", c.adam.beta2},
                {"eps", c.adam.eps}}},
              {"lora",
               {{"enabled", c.lora.enabled},
                {"rank", c.lora.rank},
                {"alpha", c.lora.alpha}}},
              {"tune", tune_to_json(c.tune)},
              {"encoder_mode", encoder_mode_name(c.encoder_mode)},
              {"augmentation", c.augmentation},
              {"dataset_dirs", c.dataset_dirs},
              {"model", model_config_to_json(c.model)},
              {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.steps = j.at("steps").get<int64_t>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.adam.beta1 = j.at("adam").at("beta1").get<double>();
  c.adam.beta2 = j.at("adam").at("beta2").get<double>();
  c.adam.eps = j.at("adam").at("eps").get<double>();
  c.lora.enabled = j.at("lora").at("enabled").get<bool>();
  c.lora.rank = j.at("lora").at("rank").get<int>();
  c.lora.alpha = j.at("lora").at("alpha").get<double>();
  c.tune = tune_from_json(j.at("tune"));
  c.encoder_mode =
      encoder_mode_from_name(j.at("encoder_mode").get<std::string>());
  c.augmentation = j.at("augmentation").get<bool>();
  c.dataset_dirs = j.at("dataset_dirs").get<std::vector<std::string>>();
  c.model = model_config_from_json(j.at("model"));
  c.eval_every = j.at("eval_every").get<int64_t>();
  return c;
}

// rows differ in exactly the named factor
void assert_single_factor(const TrainConfig& a, const TrainConfig& b,
                          const std::string& factor) {
  json ja = train_config_to_json(a);
  json jb = train_config_to_json(b);
  for (json* j : {&ja, &jb}) {
    j->erase("seed");  // seeds vary across repetitions by design
    if (factor == "encoder_mode") {
      j->erase("encoder_mode");
      j->at("model").erase("encoder_mode");
    } else {
      j->erase(factor);
    }
  }
  if (ja.dump() != jb.dump())
    throw std::logic_error("study rows differ outside factor '" + factor +
                           "': " + ja.dump() + " vs " + jb.dump());
}

std::set<std::string> tuned_modules(const TuneFlags& tune) {
  std::set<std::string> out;
  if (tune.vit) out.insert("vit");
  if (tune.qformer) out.insert("qformer");
  if (tune.lm) out.insert("lm");
  return out;
}

}  // namespace

std::string train_config_echo(const TrainConfig& config) {
  return train_config_to_json(config).dump();
}

void TrainConfig::validate() const {
  if (steps <= 0) throw std::invalid_argument("TrainConfig: steps must be > 0");
  if (batch_size <= 0)
    throw std::invalid_argument("TrainConfig: batch_size must be > 0");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (!tune.any() && !lora.enabled)
    throw std::invalid_argument(
        "TrainConfig: all modules frozen and LoRA disabled; nothing to train");
  if (lora.enabled && !tune.any())
    throw std::invalid_argument(
        "TrainConfig: LoRA enabled but no module tuned; adapters have no "
        "home");
  if (dataset_dirs.empty())
    throw std::invalid_argument("TrainConfig: no dataset dirs");
}

double lr_at_step(double base_lr, int64_t step, int64_t total_steps) {
  const int64_t warmup = std::max<int64_t>(1, (total_steps * 5 + 99) / 100);
  if (step < warmup) return base_lr * double(step + 1) / double(warmup);
  if (total_steps <= warmup) return base_lr;
  const double progress =
      double(step - warmup) / double(total_steps - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

Adam::Adam(std::vector<NamedParam> params, double base_lr, AdamParams hp,
           int64_t total_steps)
    : params_(std::move(params)),
      base_lr_(base_lr),
      hp_(hp),
      total_steps_(total_steps) {
  for (const NamedParam& p : params_) {
    m_.emplace_back(size_t(p.tensor->numel()), 0.0);
    v_.emplace_back(size_t(p.tensor->numel()), 0.0);
  }
}

double Adam::current_lr() const {
  return lr_at_step(base_lr_, t_, total_steps_);
}

void Adam::step() {
  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(hp_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(hp_.beta2, double(t_));
  double norm_sq = 0.0;
  for (size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& t = *params_[pi].tensor;
    t.ensure_grad();
    const int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double g = (*t.grad)[i];
      norm_sq += g * g;
      m_[pi][size_t(i)] = hp_.beta1 * m_[pi][size_t(i)] + (1.0 - hp_.beta1) * g;
      v_[pi][size_t(i)] =
          hp_.beta2 * v_[pi][size_t(i)] + (1.0 - hp_.beta2) * g * g;
      const double mh = m_[pi][size_t(i)] / bc1;
      const double vh = v_[pi][size_t(i)] / bc2;
      t.at(i) -= lr * mh / (std::sqrt(vh) + hp_.eps);
    }
  }
  last_grad_norm_ = std::sqrt(norm_sq);
}

void Adam::zero_grad() {
  for (const NamedParam& p : params_) p.tensor->zero_grad();
}

TrainData load_train_data(const std::vector<std::string>& dirs) {
  if (dirs.empty()) throw std::invalid_argument("load_train_data: no dirs");
  TrainData data;
  data.primary = load_dataset(dirs[0]);
  std::vector<std::string> train_captions;
  for (size_t di = 0; di < dirs.size(); ++di) {
    const Dataset ds = di == 0 ? data.primary : load_dataset(dirs[di]);
    for (const Triplet* t : ds.split(Split::Train)) {
      data.train.push_back(*t);
      data.images.emplace_back(ds.load_image(t->ref), ds.load_image(t->mod));
      for (const std::string& c : t->captions) train_captions.push_back(c);
    }
  }
  if (data.train.empty())
    throw std::runtime_error("load_train_data: empty train split");
  data.vocab = Vocab::build(train_captions);
  return data;
}

TrainRun train(const TrainConfig& config) {
  config.validate();
  TrainData data = load_train_data(config.dataset_dirs);

  ModelConfig mc = config.model;
  mc.vocab_size = data.vocab.size();
  mc.encoder_mode = config.encoder_mode;
  // Longest train caption (plus BOS/EOS) must fit the decoder.
  int64_t longest = 0;
  for (const Triplet& t : data.train)
    longest = std::max(longest,
                       int64_t(split_tokens(t.captions[0]).size()));
  if (longest >= mc.max_caption_len)
    throw std::runtime_error("train: caption of " + std::to_string(longest) +
                             " tokens does not fit max_caption_len " +
                             std::to_string(mc.max_caption_len));

  TrainRun run;
  run.config = config;
  run.vocab = data.vocab;
  run.model = std::make_unique<IdcModel>(mc, config.seed);
  run.model->tune = config.tune;
  if (config.lora.enabled)
    run.model->apply_lora(config.lora.rank, config.lora.alpha,
                          tuned_modules(config.tune));
  std::vector<NamedParam> trainable = run.model->trainable_params();
  if (trainable.empty())
    throw std::invalid_argument("train: configuration has no trainable "
                                "parameters");
  run.param_counts = run.model->count_params();

  Adam opt(trainable, config.lr, config.adam, config.steps);

  std::ofstream loss_csv;
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    loss_csv.open(fs::path(config.out_dir) / "loss.csv");
    loss_csv << "step,lr,loss\n";
  }

  // Epoch-wise shuffled sample stream, a pure function of the seed.
  const int64_t n_train = int64_t(data.train.size());
  std::vector<int64_t> order;
  int64_t epoch = 0;
  auto refill = [&]() {
    std::vector<int64_t> perm(static_cast<size_t>(n_train));
    for (int64_t i = 0; i < n_train; ++i) perm[size_t(i)] = i;
    Rng rng = rng_stream(config.seed, "batch_order", uint64_t(epoch));
    for (int64_t i = n_train; i > 1; --i)
      std::swap(perm[size_t(i - 1)], perm[size_t(rng.range(i))]);
    ++epoch;
    order.insert(order.end(), perm.begin(), perm.end());
  };

  std::vector<int> caption_ids;
  for (int64_t step = 0; step < config.steps; ++step) {
    Tape tape;
    Tensor batch_loss;
    {
      TapeScope scope(tape);
      Tensor sum = Tensor::scalar(0.0);
      for (int b = 0; b < config.batch_size; ++b) {
        if (order.empty()) refill();
        const int64_t idx = order.front();
        order.erase(order.begin());
        const Triplet& t = data.train[size_t(idx)];
        Raster ref = data.images[size_t(idx)].first;
        Raster mod = data.images[size_t(idx)].second;
        if (config.augmentation) {
          Rng aug_rng =
              rng_stream(config.seed, "train_aug", uint64_t(step), uint64_t(b));
          ref = augment(ref, aug_rng);
          mod = augment(mod, aug_rng);
        }
        Tensor queries_out = run.model->encode_pair(ref, mod);
        caption_ids = data.vocab.encode(t.captions[0]);
        sum = add(sum, run.model->caption_loss(queries_out, caption_ids));
      }
      batch_loss = scale(sum, 1.0 / double(config.batch_size));
      const double loss_value = batch_loss.at(0);
      if (!std::isfinite(loss_value))
        throw std::runtime_error(
            "train: non-finite loss at step " + std::to_string(step) +
            " (lr=" + std::to_string(opt.current_lr()) +
            ", last grad norm=" + std::to_string(opt.last_grad_norm()) + ")");
      backward(batch_loss);
    }
    opt.step();
    opt.zero_grad();

    const double loss_value = batch_loss.at(0);
    run.loss_curve.push_back(loss_value);
    if (loss_csv.is_open())
      loss_csv << step << "," << opt.current_lr() << "," << loss_value << "\n";

    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 &&
        !data.primary.split(Split::Val).empty()) {
      EvalRun ev = evaluate_split(*run.model, run.vocab, data.primary,
                                  Split::Val);
      run.val_cider = ev.report.overall.cider;
      run.val_history.emplace_back(step + 1, run.val_cider);
    }
  }
  run.final_loss = run.loss_curve.empty() ? 0.0 : run.loss_curve.back();

  if (!config.out_dir.empty()) {
    run.checkpoint_path =
        (fs::path(config.out_dir) / "checkpoint.idck").string();
    save_checkpoint(*run.model, run.vocab, config, config.steps,
                    run.checkpoint_path, false);
    if (config.lora.enabled)
      save_checkpoint(*run.model, run.vocab, config, config.steps,
                      (fs::path(config.out_dir) / "adapter.idck").string(),
                      true);
  }
  return run;
}

EvalRun evaluate_split(const IdcModel& model, const Vocab& vocab,
                       const Dataset& dataset, Split split,
                       const EvalOptions& options) {
  EvalRun out;
  std::vector<RefEntry> refs;
  int64_t index = 0;
  for (const Triplet* t : dataset.split(split)) {
    Raster ref_img = dataset.load_image(t->ref);
    Raster mod_img = dataset.load_image(t->mod);
    if (options.augment_inputs) {
      Rng rng = rng_stream(options.augment_seed, "eval_aug", uint64_t(index));
      ref_img = augment(ref_img, rng);
      mod_img = augment(mod_img, rng);
    }
    Tensor queries_out = model.encode_pair(ref_img, mod_img);
    const GenResult gen = model.generate(queries_out, options.beam_width);
    out.predictions.push_back({t->id, vocab.decode(gen.tokens)});
    refs.push_back({t->id, t->captions, category_name(t->category)});
    ++index;
  }
  out.report = corpus_evaluate(out.predictions, refs);
  return out;
}

// --- checkpoints -----------------------------------------------------------

std::string base_weights_id(IdcModel& model) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const NamedParam& p : model.params()) {
    if (p.name.find(".lora_") != std::string::npos) continue;
    h = fnv1a(reinterpret_cast<const uint8_t*>(p.tensor->ptr()),
              size_t(p.tensor->numel()) * sizeof(double), h);
  }
  return hex64(h);
}

void save_checkpoint(IdcModel& model, const Vocab& vocab,
                     const TrainConfig& config, int64_t step,
                     const std::string& path, bool lora_only) {
  std::vector<NamedParam> all = model.params();
  std::vector<NamedParam> saved;
  for (NamedParam& p : all) {
    const bool is_lora = p.name.find(".lora_") != std::string::npos;
    if (lora_only && !is_lora) continue;
    saved.push_back(p);
  }
  if (lora_only && saved.empty())
    throw std::invalid_argument(
        "save_checkpoint: lora_only requested but the model has no adapters");

  json header;
  header["train_config"] = train_config_to_json(config);
  header["model_config"] = model_config_to_json(model.config());
  header["step"] = step;
  header["vocab"] = vocab.id_to_tok;
  header["rng_state"] = {{"seed", config.seed}, {"steps_completed", step}};
  header["lora_only"] = lora_only;
  header["init_seed"] = model.init_seed();
  header["lora"] = {{"enabled", config.lora.enabled},
                    {"rank", config.lora.rank},
                    {"alpha", config.lora.alpha}};
  header["tune"] = tune_to_json(model.tune);
  header["base_id"] = base_weights_id(model);
  json tensors = json::array();
  for (const NamedParam& p : saved)
    tensors.push_back({{"name", p.name}, {"shape", p.tensor->shape}});
  header["tensors"] = tensors;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
  out.write(header_str.data(), std::streamsize(header_str.size()));
  for (const NamedParam& p : saved)
    out.write(reinterpret_cast<const char*>(p.tensor->ptr()),
              std::streamsize(p.tensor->numel() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: short write to " + path);
}

namespace {

struct RawCheckpoint {
  json header;
  std::vector<std::vector<double>> payloads;
};

RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " +
                             std::to_string(version) + " in " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), std::streamsize(hlen));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " +
                                    path);
  RawCheckpoint raw;
  raw.header = json::parse(header_str);
  for (const json& t : raw.header.at("tensors")) {
    int64_t numel = 1;
    for (int64_t d : t.at("shape").get<std::vector<int64_t>>()) numel *= d;
    std::vector<double> buf(static_cast<size_t>(numel));
    in.read(reinterpret_cast<char*>(buf.data()),
            std::streamsize(buf.size() * sizeof(double)));
    if (!in)
      throw std::runtime_error("load_checkpoint: truncated payload for " +
                               t.at("name").get<std::string>());
    raw.payloads.push_back(std::move(buf));
  }
  return raw;
}

void fill_params(IdcModel& model, const RawCheckpoint& raw) {
  std::vector<NamedParam> params = model.params();
  size_t pi = 0;
  for (const json& t : raw.header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<int64_t>>();
    NamedParam* found = nullptr;
    for (NamedParam& p : params)
      if (p.name == name) {
        found = &p;
        break;
      }
    if (!found)
      throw std::runtime_error("load_checkpoint: model has no parameter '" +
                               name + "'");
    if (found->tensor->shape != shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for '" + name +
                               "': file " + std::to_string(shape.size()) +
                               "-d vs model " + found->tensor->shape_str());
    *found->tensor->data = raw.payloads[pi++];
  }
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::string& base_path) {
  RawCheckpoint raw = read_checkpoint_file(path);
  LoadedCheckpoint out;
  out.config = train_config_from_json(raw.header.at("train_config"));
  out.step = raw.header.at("step").get<int64_t>();
  out.lora_only = raw.header.at("lora_only").get<bool>();
  out.vocab =
      Vocab::from_tokens(raw.header.at("vocab").get<std::vector<std::string>>());

  const ModelConfig mc = model_config_from_json(raw.header.at("model_config"));
  const uint64_t init_seed = raw.header.at("init_seed").get<uint64_t>();

  if (!out.lora_only) {
    out.model = std::make_unique<IdcModel>(mc, init_seed);
    out.model->tune = tune_from_json(raw.header.at("tune"));
    if (raw.header.at("lora").at("enabled").get<bool>())
      out.model->apply_lora(raw.header.at("lora").at("rank").get<int>(),
                            raw.header.at("lora").at("alpha").get<double>(),
                            tuned_modules(out.model->tune));
    fill_params(*out.model, raw);
    return out;
  }

  if (base_path.empty())
    throw std::runtime_error(
        "load_checkpoint: LoRA-only checkpoint needs a base checkpoint");
  LoadedCheckpoint base = load_checkpoint(base_path);
  const std::string want = raw.header.at("base_id").get<std::string>();
  const std::string have = base_weights_id(*base.model);
  if (want != have)
    throw std::runtime_error("load_checkpoint: base id mismatch: adapter "
                             "wants " + want + ", base checkpoint is " + have);
  out.model = std::move(base.model);
  if (!out.model->lora_mode)
    out.model->apply_lora(raw.header.at("lora").at("rank").get<int>(),
                          raw.header.at("lora").at("alpha").get<double>(),
                          tuned_modules(tune_from_json(raw.header.at("tune"))));
  out.model->tune = tune_from_json(raw.header.at("tune"));
  fill_params(*out.model, raw);
  return out;
}

// --- studies ----------------------------------------------------------------

double StudyTable::mean_cider(const std::string& label) const {
  double sum = 0.0;
  int64_t n = 0;
  for (const StudyRow& r : rows)
    if (r.label == label) {
      sum += r.test_cider;
      ++n;
    }
  if (n == 0) throw std::invalid_argument("no study rows labelled " + label);
  return sum / double(n);
}

std::string StudyTable::to_csv() const {
  std::ostringstream os;
  os << factor << ",seed,test_cider,final_loss,params_total,params_trainable\n";
  for (const StudyRow& r : rows)
    os << r.label << "," << r.seed << "," << r.test_cider << ","
       << r.final_loss << "," << r.params_total << "," << r.params_trainable
       << "\n";
  return os.str();
}

namespace {

StudyRow run_study_cell(const TrainConfig& config, const Dataset& test_source,
                        const std::string& label) {
  TrainRun run = train(config);
  EvalRun ev =
      evaluate_split(*run.model, run.vocab, test_source, Split::Test);
  StudyRow row;
  row.label = label;
  row.seed = config.seed;
  row.test_cider = ev.report.overall.cider;
  row.final_loss = run.final_loss;
  row.params_total = run.param_counts.total;
  row.params_trainable = run.param_counts.trainable;
  return row;
}

}  // namespace

StudyTable run_encoder_comparison(const TrainConfig& base,
                                  const std::string& dataset_dir,
                                  int n_seeds) {
  StudyTable table;
  table.factor = "encoder_mode";
  const Dataset test_source = load_dataset(dataset_dir);
  for (int s = 0; s < n_seeds; ++s) {
    for (EncoderMode mode : {EncoderMode::Joint, EncoderMode::TwoStream}) {
      TrainConfig cfg = base;
      cfg.dataset_dirs = {dataset_dir};
      cfg.seed = base.seed + uint64_t(s);
      cfg.encoder_mode = mode;
      cfg.model.encoder_mode = mode;
      cfg.out_dir.clear();
      TrainConfig probe = cfg;
      probe.encoder_mode = base.encoder_mode;
      probe.model.encoder_mode = base.encoder_mode;
      probe.dataset_dirs = {dataset_dir};
      assert_single_factor(cfg, probe, "encoder_mode");
      table.rows.push_back(
          run_study_cell(cfg, test_source, encoder_mode_name(mode)));
    }
  }
  return table;
}

StudyTable run_ablation(const TrainConfig& base, const std::string& dataset_dir,
                        int n_seeds) {
  StudyTable table;
  table.factor = "tune";
  const Dataset test_source = load_dataset(dataset_dir);
  const TuneFlags subsets[7] = {
      {true, false, false}, {false, true, false}, {false, false, true},
      {true, true, false},  {true, false, true},  {false, true, true},
      {true, true, true},
  };
  for (int s = 0; s < n_seeds; ++s) {
    for (const TuneFlags& flags : subsets) {
      TrainConfig cfg = base;
      cfg.dataset_dirs = {dataset_dir};
      cfg.seed = base.seed + uint64_t(s);
      cfg.tune = flags;
      cfg.out_dir.clear();
      TrainConfig probe = cfg;
      probe.tune = base.tune;
      assert_single_factor(cfg, probe, "tune");
      table.rows.push_back(run_study_cell(cfg, test_source, flags.str()));
    }
  }
  return table;
}

StudyTable run_augmentation_study(const TrainConfig& base,
                                  const std::string& base_dir,
                                  const std::string& augmented_dir,
                                  int n_seeds) {
  const Dataset small = load_dataset(base_dir);
  const Dataset large = load_dataset(augmented_dir);
  // Identical evaluation sets, or the comparison is meaningless.
  auto test_ids = [](const Dataset& ds) {
    std::vector<std::string> ids;
    for (const Triplet* t : ds.split(Split::Test)) ids.push_back(t->id);
    return ids;
  };
  if (test_ids(small) != test_ids(large))
    throw std::runtime_error(
        "run_augmentation_study: test splits differ between '" + base_dir +
        "' and '" + augmented_dir + "'");
  if (small.split(Split::Train).size() >= large.split(Split::Train).size())
    throw std::runtime_error(
        "run_augmentation_study: augmented dir does not extend the base "
        "train split");

  StudyTable table;
  table.factor = "dataset_dirs";
  for (int s = 0; s < n_seeds; ++s) {
    for (bool augmented : {false, true}) {
      TrainConfig cfg = base;
      cfg.seed = base.seed + uint64_t(s);
      cfg.dataset_dirs = {augmented ? augmented_dir : base_dir};
      cfg.out_dir.clear();
      TrainConfig probe = cfg;
      probe.dataset_dirs = base.dataset_dirs;
      assert_single_factor(cfg, probe, "dataset_dirs");
      table.rows.push_back(run_study_cell(
          cfg, small, augmented ? "base+synthetic" : "base"));
    }
  }
  return table;
}

}  // namespace idc
