// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "planforge/schema.hpp"

namespace planforge {

// Tokenization rule behind every BLEU number this tool reports: lowercase,
// maximal alphanumeric runs are tokens, every other non-whitespace character
// is its own single-character token (multi-byte UTF-8 sequences count as one
// character). Whitespace only delimits.
std::vector<std::string> tokenize(const std::string& text);

// Sentence-level BLEU with multi-reference clipping:
//   p_k  modified k-gram precision, counts clipped against the per-k-gram
//        maximum across all references
//   BP   exp(1 - r/c) when c < r else 1, r = reference length closest to c
//        (ties -> shorter)
//   score = BP * exp(sum log p_k / max_n)
// Smoothing: k >= 2 with zero matches uses p_k = 1/(2*H_k), H_k = hypothesis
// k-gram count. p_1 = 0 or any H_k = 0 forces the score to 0.
struct BleuResult {
  double score = 0.0;
  bool empty_hypothesis = false;
};

BleuResult bleu_sentence(const std::vector<std::string>& hyp,
                         const std::vector<std::vector<std::string>>& refs, int max_n);

// Mean of sentence scores x100, one decimal, half away from zero.
double bleu_corpus(const std::vector<std::pair<std::vector<std::string>,
                                               std::vector<std::vector<std::string>>>>& pairs,
                   int max_n);

// Table-style aggregation of four already-scaled BLEU numbers.
double bleu_avg(double b1, double b2, double b3, double b4);

// Round x100-scaled score to one decimal, half away from zero.
double round_one_decimal(double value);

// ---------------------------------------------------------------------------
// Output normalization (task-aware).

struct NormalizedAnswer {
  bool parseable = true;
  std::string text;   // free-form normalized text, or the option letter
  int rule = 0;       // MCQ: which cascade rule fired (1..3); 0 = free-form
};

// MCQ cascade: (1) first standalone letter wins; (2) exact match against a
// normalized option; (3) unique containment of an option in the raw text;
// (4) UNPARSEABLE (parseable = false). Free-form: whitespace collapse + trim.
NormalizedAnswer normalize_output(const std::string& raw, TaskType task,
                                  const std::vector<std::string>& options = {});

// ---------------------------------------------------------------------------
// Protocols.

struct Prediction {
  std::string id;
  std::string raw_text;
};

struct BleuGold {
  std::string id;
  std::vector<std::string> refs;
};

struct McqGold {
  std::string id;
  char letter = 'A';
  std::vector<std::string> options;
  std::string category;
};

struct BleuReport {
  std::string protocol = "robovqa-bleu/sentence-mean/clip-any-ref/smooth-half-hk/v1";
  std::uint64_t scored = 0;
  std::uint64_t missing_predictions = 0;
  std::uint64_t empty_hypotheses = 0;
  double bleu[4] = {0, 0, 0, 0};  // x100, one decimal
  double bleu_avg = 0.0;          // mean of unrounded corpus scores, then rounded

  std::string to_json() const;
};

struct Top1Report {
  std::string protocol = "egoplan-top1/sample-weighted/v1";
  std::uint64_t total = 0;
  std::uint64_t correct = 0;
  std::uint64_t missing_predictions = 0;
  std::uint64_t unparseable = 0;
  std::map<int, std::uint64_t> rule_counts;  // cascade rule -> fired count
  // null accuracy (vacuous category) encoded as missing value
  std::map<std::string, std::optional<double>> per_category;
  double overall = 0.0;        // sample-weighted
  double category_mean = 0.0;  // auxiliary, mean over nonempty categories

  std::string to_json() const;
};

// Missing predictions score as incorrect and are audited. `categories` may
// pre-seed the taxonomy so empty categories appear as null.
BleuReport score_bleu(const std::vector<Prediction>& predictions,
                      const std::vector<BleuGold>& gold);
Top1Report score_top1(const std::vector<Prediction>& predictions,
                      const std::vector<McqGold>& gold,
                      const std::vector<std::string>& categories = {});

std::vector<Prediction> load_predictions(const std::string& path);
std::vector<BleuGold> load_bleu_gold(const std::string& path);
std::vector<McqGold> load_mcq_gold(const std::string& path);

}  // namespace planforge
