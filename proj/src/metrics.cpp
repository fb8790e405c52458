#include "idc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "idc/captions.hpp"

namespace idc {

namespace {

constexpr double kBleuEps = 1e-9;
constexpr double kRougeBeta = 1.2;
constexpr double kMeteorAlpha = 0.9;
constexpr double kMeteorGamma = 0.5;
constexpr double kMeteorTheta = 3.0;
constexpr double kCiderSigma = 6.0;

using NGramCounts = std::unordered_map<std::string, int64_t>;

// n-grams keyed by tokens joined with an unprintable separator.
NGramCounts count_ngrams(const TokenSeq& tokens, int n) {
  NGramCounts counts;
  if (int64_t(tokens.size()) < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (int j = 1; j < n; ++j) {
      key.push_back('\x1e');
      key += tokens[i + j];
    }
    counts[key] += 1;
  }
  return counts;
}

struct BleuStats {
  int64_t matched[4] = {0, 0, 0, 0};
  int64_t total[4] = {0, 0, 0, 0};
  int64_t cand_len = 0;
  int64_t ref_len = 0;  // closest reference length (ties: shorter)
};

BleuStats bleu_stats(const TokenSeq& cand, const std::vector<TokenSeq>& refs) {
  BleuStats s;
  s.cand_len = int64_t(cand.size());
  int64_t best_ref = 0, best_diff = INT64_MAX;
  for (const TokenSeq& r : refs) {
    const int64_t len = int64_t(r.size());
    const int64_t diff = std::llabs(len - s.cand_len);
    if (diff < best_diff || (diff == best_diff && len < best_ref)) {
      best_diff = diff;
      best_ref = len;
    }
  }
  s.ref_len = best_ref;
  for (int n = 1; n <= 4; ++n) {
    NGramCounts cc = count_ngrams(cand, n);
    NGramCounts max_ref;
    for (const TokenSeq& r : refs)
      for (const auto& [g, c] : count_ngrams(r, n))
        max_ref[g] = std::max(max_ref[g], c);
    for (const auto& [g, c] : cc) {
      s.total[n - 1] += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) s.matched[n - 1] += std::min(c, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s) {
  if (s.cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double p = s.total[n] > 0 ? double(s.matched[n]) / double(s.total[n]) : 0.0;
    if (p <= 0.0) p = kBleuEps;
    log_sum += std::log(p);
  }
  const double geo = std::exp(log_sum / 4.0);
  const double bp =
      s.cand_len >= s.ref_len
          ? 1.0
          : std::exp(1.0 - double(s.ref_len) / double(s.cand_len));
  return bp * geo;
}

// --- METEOR alignment --------------------------------------------------

struct Alignment {
  int matches = 0;
  int chunks = 0;
};

// Backtracking over candidate positions in order, keeping the alignment
// with most matches and, among those, fewest chunks. Chunk count is
// monotone along the search path, which gives the main pruning rule. The
// node budget bounds degenerate inputs; traversal order keeps the result
// deterministic either way.
class AlignSearch {
 public:
  AlignSearch(const TokenSeq& cand, const TokenSeq& ref) {
    compat_.resize(cand.size());
    for (size_t i = 0; i < cand.size(); ++i)
      for (size_t j = 0; j < ref.size(); ++j)
        if (cand[i] == ref[j] || meteor_stem(cand[i]) == meteor_stem(ref[j]))
          compat_[i].push_back(int(j));
    used_.assign(ref.size(), false);
  }

  Alignment run() {
    dfs(0, 0, 0, -2, -2);
    return best_;
  }

 private:
  void dfs(size_t i, int matches, int chunks, int prev_c, int prev_r) {
    if (++nodes_ > kNodeBudget) return;
    if (i == compat_.size()) {
      if (matches > best_.matches ||
          (matches == best_.matches && chunks < best_.chunks))
        best_ = {matches, chunks};
      return;
    }
    // Upper bound on total matches from here cannot beat best: prune.
    int remaining = 0;
    for (size_t k = i; k < compat_.size(); ++k)
      for (int j : compat_[k])
        if (!used_[j]) {
          ++remaining;
          break;
        }
    if (matches + remaining < best_.matches) return;
    if (matches + remaining == best_.matches && chunks >= best_.chunks)
      return;

    for (int j : compat_[i]) {
      if (used_[j]) continue;
      const bool extends = (int(i) == prev_c + 1 && j == prev_r + 1);
      used_[j] = true;
      dfs(i + 1, matches + 1, chunks + (extends ? 0 : 1), int(i), j);
      used_[j] = false;
    }
    dfs(i + 1, matches, chunks, prev_c, prev_r);
  }

  static constexpr int64_t kNodeBudget = 1 << 20;
  std::vector<std::vector<int>> compat_;
  std::vector<bool> used_;
  Alignment best_{0, INT32_MAX};
  int64_t nodes_ = 0;
};

double meteor_single(const TokenSeq& cand, const TokenSeq& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  const Alignment a = AlignSearch(cand, ref).run();
  if (a.matches == 0) return 0.0;
  const double m = double(a.matches);
  const double p = m / double(cand.size());
  const double r = m / double(ref.size());
  const double f = p * r / (kMeteorAlpha * p + (1.0 - kMeteorAlpha) * r);
  const double penalty =
      kMeteorGamma * std::pow(double(a.chunks) / m, kMeteorTheta);
  return f * (1.0 - penalty);
}

// --- CIDEr-D vectors ----------------------------------------------------

struct TfIdfVec {
  NGramCounts counts[4];
  double weights_norm[4] = {0, 0, 0, 0};
  int64_t length = 0;
};

}  // namespace

double bleu4(const TokenSeq& candidate, const std::vector<TokenSeq>& refs) {
  if (refs.empty()) throw std::invalid_argument("bleu4: no references");
  return bleu_from_stats(bleu_stats(candidate, refs));
}

int64_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  const size_t la = a.size(), lb = b.size();
  std::vector<int64_t> prev(lb + 1, 0), cur(lb + 1, 0);
  for (size_t i = 1; i <= la; ++i) {
    for (size_t j = 1; j <= lb; ++j) {
      if (a[i - 1] == b[j - 1])
        cur[j] = prev[j - 1] + 1;
      else
        cur[j] = std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[lb];
}

double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& refs) {
  if (refs.empty()) throw std::invalid_argument("rouge_l: no references");
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  const double b2 = kRougeBeta * kRougeBeta;
  for (const TokenSeq& ref : refs) {
    if (ref.empty()) continue;
    const double l = double(lcs_length(candidate, ref));
    if (l == 0.0) continue;
    const double p = l / double(candidate.size());
    const double r = l / double(ref.size());
    const double f = (1.0 + b2) * r * p / (r + b2 * p);
    best = std::max(best, f);
  }
  return best;
}

std::string meteor_stem(const std::string& word) {
  const size_t n = word.size();
  auto ends = [&](const char* suf, size_t len) {
    return n >= len && word.compare(n - len, len, suf) == 0;
  };
  if (n >= 5 && ends("ing", 3)) return word.substr(0, n - 3);
  if (n >= 4 && (ends("ed", 2) || ends("es", 2))) return word.substr(0, n - 2);
  if (n >= 3 && ends("s", 1) && !ends("ss", 2)) return word.substr(0, n - 1);
  return word;
}

double meteor_lite(const TokenSeq& candidate,
                   const std::vector<TokenSeq>& refs) {
  if (refs.empty()) throw std::invalid_argument("meteor_lite: no references");
  double best = 0.0;
  for (const TokenSeq& ref : refs)
    best = std::max(best, meteor_single(candidate, ref));
  return best;
}

std::vector<double> cider_d(const std::vector<TokenSeq>& candidates,
                            const std::vector<std::vector<TokenSeq>>& refs,
                            bool* idf_degenerate) {
  if (candidates.size() != refs.size())
    throw std::invalid_argument("cider_d: candidate/reference count mismatch");
  const int64_t n_samples = int64_t(candidates.size());
  if (n_samples == 0) return {};
  for (size_t i = 0; i < refs.size(); ++i)
    if (refs[i].empty())
      throw std::invalid_argument("cider_d: sample " + std::to_string(i) +
                                  " has no references");
  if (n_samples == 1 && idf_degenerate) *idf_degenerate = true;

  // Document frequency over reference sets, counted once per sample.
  NGramCounts df[4];
  for (const auto& sample_refs : refs) {
    NGramCounts seen[4];
    for (const TokenSeq& r : sample_refs)
      for (int n = 0; n < 4; ++n)
        for (const auto& [g, c] : count_ngrams(r, n + 1)) seen[n][g] = 1;
    for (int n = 0; n < 4; ++n)
      for (const auto& [g, c] : seen[n]) df[n][g] += 1;
  }
  const double log_n = std::log(double(n_samples));

  auto make_vec = [&](const TokenSeq& tokens) {
    TfIdfVec v;
    v.length = int64_t(tokens.size());
    for (int n = 0; n < 4; ++n) {
      v.counts[n] = count_ngrams(tokens, n + 1);
      double norm = 0.0;
      for (const auto& [g, c] : v.counts[n]) {
        auto it = df[n].find(g);
        const double idf =
            log_n - std::log(std::max(1.0, it == df[n].end()
                                               ? 0.0
                                               : double(it->second)));
        const double w = double(c) * idf;
        norm += w * w;
      }
      v.weights_norm[n] = std::sqrt(norm);
    }
    return v;
  };
  auto idf_of = [&](int n, const std::string& g) {
    auto it = df[n].find(g);
    return log_n -
           std::log(std::max(1.0, it == df[n].end() ? 0.0 : double(it->second)));
  };

  std::vector<double> scores(size_t(n_samples), 0.0);
  for (int64_t s = 0; s < n_samples; ++s) {
    const TfIdfVec vc = make_vec(candidates[size_t(s)]);
    double acc[4] = {0, 0, 0, 0};
    for (const TokenSeq& ref : refs[size_t(s)]) {
      const TfIdfVec vr = make_vec(ref);
      const double delta = double(vc.length - vr.length);
      const double len_pen =
          std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
      for (int n = 0; n < 4; ++n) {
        if (vc.weights_norm[n] == 0.0 || vr.weights_norm[n] == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, c] : vc.counts[n]) {
          auto it = vr.counts[n].find(g);
          if (it == vr.counts[n].end()) continue;
          const double idf = idf_of(n, g);
          // candidate count clipped at the reference count
          dot += std::min(double(c), double(it->second)) * idf *
                 double(it->second) * idf;
        }
        acc[n] += len_pen * dot / (vc.weights_norm[n] * vr.weights_norm[n]);
      }
    }
    double sum = 0.0;
    for (int n = 0; n < 4; ++n) sum += acc[n];
    scores[size_t(s)] =
        10.0 * sum / (4.0 * double(refs[size_t(s)].size()));
  }
  return scores;
}

namespace {

void add_to(AggregateScores& agg, const SampleScores& s) {
  agg.bleu4 += s.bleu4;
  agg.rouge_l += s.rouge_l;
  agg.meteor += s.meteor;
  agg.cider += s.cider;
  agg.count += 1;
}

void finish(AggregateScores& agg) {
  if (agg.count == 0) return;
  agg.bleu4 /= double(agg.count);
  agg.rouge_l /= double(agg.count);
  agg.meteor /= double(agg.count);
  agg.cider /= double(agg.count);
}

}  // namespace

MetricReport corpus_evaluate(const std::vector<PredEntry>& predictions,
                             const std::vector<RefEntry>& references) {
  std::unordered_map<std::string, const PredEntry*> by_id;
  for (const PredEntry& p : predictions) by_id[p.id] = &p;

  MetricReport report;
  std::vector<TokenSeq> cands;
  std::vector<std::vector<TokenSeq>> all_refs;
  BleuStats corpus_stats;
  for (const RefEntry& ref : references) {
    auto it = by_id.find(ref.id);
    if (it == by_id.end())
      throw std::runtime_error("corpus_evaluate: missing prediction for id " +
                               ref.id);
    const TokenSeq cand = split_tokens(it->second->caption);
    std::vector<TokenSeq> ref_tokens;
    for (const std::string& r : ref.captions)
      ref_tokens.push_back(split_tokens(r));
    if (ref_tokens.empty())
      throw std::runtime_error("corpus_evaluate: no references for id " +
                               ref.id);

    SampleScores s;
    s.id = ref.id;
    s.category = ref.category.empty() ? "all" : ref.category;
    s.bleu4 = bleu4(cand, ref_tokens);
    s.rouge_l = rouge_l(cand, ref_tokens);
    s.meteor = meteor_lite(cand, ref_tokens);
    report.samples.push_back(s);

    const BleuStats bs = bleu_stats(cand, ref_tokens);
    for (int n = 0; n < 4; ++n) {
      corpus_stats.matched[n] += bs.matched[n];
      corpus_stats.total[n] += bs.total[n];
    }
    corpus_stats.cand_len += bs.cand_len;
    corpus_stats.ref_len += bs.ref_len;

    cands.push_back(std::move(cand));
    all_refs.push_back(std::move(ref_tokens));
  }

  const std::vector<double> ciders =
      cider_d(cands, all_refs, &report.idf_degenerate);
  for (size_t i = 0; i < report.samples.size(); ++i)
    report.samples[i].cider = ciders[i];

  for (const SampleScores& s : report.samples) {
    add_to(report.per_category[s.category], s);
    add_to(report.overall, s);
  }
  for (auto& [cat, agg] : report.per_category) finish(agg);
  finish(report.overall);
  report.corpus_bleu4 = bleu_from_stats(corpus_stats);
  return report;
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "scope,category,count,bleu4,rouge_l,meteor_lite,cider_d\n";
  for (const auto& [cat, agg] : per_category)
    os << "category," << cat << "," << agg.count << "," << agg.bleu4 << ","
       << agg.rouge_l << "," << agg.meteor << "," << agg.cider << "\n";
  os << "overall,all," << overall.count << "," << overall.bleu4 << ","
     << overall.rouge_l << "," << overall.meteor << "," << overall.cider
     << "\n";
  os << "corpus_bleu,all," << overall.count << "," << corpus_bleu4 << ",,,\n";
  os << "id,category,,bleu4,rouge_l,meteor_lite,cider_d\n";
  for (const SampleScores& s : samples)
    os << s.id << "," << s.category << ",," << s.bleu4 << "," << s.rouge_l
       << "," << s.meteor << "," << s.cider << "\n";
  return os.str();
}

std::string MetricReport::to_markdown() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "| category | n | BLEU-4 | ROUGE-L | M* | CIDEr-D |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& [cat, agg] : per_category)
    os << "| " << cat << " | " << agg.count << " | " << agg.bleu4 << " | "
       << agg.rouge_l << " | " << agg.meteor << " | " << agg.cider << " |\n";
  os << "| **overall** | " << overall.count << " | " << overall.bleu4 << " | "
     << overall.rouge_l << " | " << overall.meteor << " | " << overall.cider
     << " |\n";
  if (idf_degenerate)
    os << "\n(warning: single-sample corpus, CIDEr idf is degenerate)\n";
  return os.str();
}

}  // namespace idc
