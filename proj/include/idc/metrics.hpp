#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace idc {

using TokenSeq = std::vector<std::string>;

// Clipped n-gram precisions (n=1..4), geometric mean, brevity penalty.
// Zero precisions are replaced by 1e-9 so the geometric mean survives.
double bleu4(const TokenSeq& candidate, const std::vector<TokenSeq>& refs);

// LCS F-measure with beta = 1.2; max over references.
double rouge_l(const TokenSeq& candidate, const std::vector<TokenSeq>& refs);
int64_t lcs_length(const TokenSeq& a, const TokenSeq& b);

// Unigram alignment (exact or suffix-stem match) maximizing matches then
// minimizing chunks; F_mean alpha = 0.9, penalty gamma = 0.5, theta = 3;
// max over references.
double meteor_lite(const TokenSeq& candidate, const std::vector<TokenSeq>& refs);
std::string meteor_stem(const std::string& word);

// CIDEr-D over a corpus: tf-idf n-gram cosine per n with candidate-count
// clipping and a length Gaussian (sigma = 6), averaged over n, x10, mean
// over references. idf = log(N / max(1, df)), df counted once per sample.
std::vector<double> cider_d(const std::vector<TokenSeq>& candidates,
                            const std::vector<std::vector<TokenSeq>>& refs,
                            bool* idf_degenerate = nullptr);

struct SampleScores {
  std::string id;
  std::string category;
  double bleu4 = 0, rouge_l = 0, meteor = 0, cider = 0;
};

struct AggregateScores {
  double bleu4 = 0, rouge_l = 0, meteor = 0, cider = 0;
  int64_t count = 0;
};

struct MetricReport {
  std::vector<SampleScores> samples;
  std::map<std::string, AggregateScores> per_category;
  AggregateScores overall;  // means of per-sample scores
  double corpus_bleu4 = 0;  // count-aggregated; does not decompose
  bool idf_degenerate = false;

  std::string to_csv() const;
  std::string to_markdown() const;
};

struct PredEntry {
  std::string id;
  std::string caption;
};

struct RefEntry {
  std::string id;
  std::vector<std::string> captions;
  std::string category;  // empty allowed; grouped under "all"
};

// One prediction per reference entry, matched by id; a missing prediction
// aborts with the offending id.
MetricReport corpus_evaluate(const std::vector<PredEntry>& predictions,
                             const std::vector<RefEntry>& references);

}  // namespace idc
