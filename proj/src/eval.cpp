// SPDX-License-Identifier: Apache-2.0
#include "planforge/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "planforge/error.hpp"

namespace planforge {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  const auto* bytes = reinterpret_cast<const unsigned char*>(text.data());

  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };

  while (i < text.size()) {
    unsigned char c = bytes[i];
    if (c < 0x80) {
      if (std::isspace(c)) {
        flush();
        i++;
      } else if (std::isalnum(c)) {
        current += static_cast<char>(std::tolower(c));
        i++;
      } else {
        flush();
        tokens.push_back(std::string(1, static_cast<char>(c)));
        i++;
      }
    } else {
      // One multi-byte UTF-8 sequence = one single-character token.
      flush();
      std::size_t len = (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
      len = std::min(len, text.size() - i);
      tokens.push_back(text.substr(i, len));
      i += len;
    }
  }
  flush();
  return tokens;
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

using NgramCounts = std::unordered_map<std::string, std::uint64_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k > 0) key += '\x1f';
      key += tokens[i + k];
    }
    counts[key]++;
  }
  return counts;
}

}  // namespace

BleuResult bleu_sentence(const std::vector<std::string>& hyp,
                         const std::vector<std::vector<std::string>>& refs, int max_n) {
  if (refs.empty()) throw Error(ErrorCode::kBadConfig, "bleu needs at least one reference");
  if (max_n < 1 || max_n > 4) throw Error(ErrorCode::kBadConfig, "max_n must be 1..4");

  BleuResult result;
  if (hyp.empty()) {
    result.empty_hypothesis = true;
    return result;  // score 0, flagged
  }

  const auto c = static_cast<std::uint64_t>(hyp.size());
  // Closest reference length; ties resolved toward the shorter one.
  std::uint64_t r = refs.front().size();
  for (const auto& ref : refs) {
    const auto len = static_cast<std::uint64_t>(ref.size());
    const auto dist = [&](std::uint64_t x) {
      return x > c ? x - c : c - x;
    };
    if (dist(len) < dist(r) || (dist(len) == dist(r) && len < r)) r = len;
  }

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts hyp_counts = count_ngrams(hyp, n);
    std::uint64_t total = 0;
    for (const auto& [gram, count] : hyp_counts) total += count;
    if (total == 0) return result;  // H_k = 0 forces score 0

    NgramCounts max_ref;
    for (const auto& ref : refs) {
      for (const auto& [gram, count] : count_ngrams(ref, n)) {
        auto& best = max_ref[gram];
        best = std::max(best, count);
      }
    }

    std::uint64_t clipped = 0;
    for (const auto& [gram, count] : hyp_counts) {
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(count, it->second);
    }

    double p;
    if (clipped > 0) {
      p = static_cast<double>(clipped) / static_cast<double>(total);
    } else if (n == 1) {
      return result;  // no unigram overlap: no credit
    } else {
      p = 1.0 / (2.0 * static_cast<double>(total));
    }
    log_sum += std::log(p);
  }

  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c))
                          : 1.0;
  result.score = bp * std::exp(log_sum / max_n);
  return result;
}

double round_one_decimal(double value) {
  return static_cast<double>(std::llround(value * 10.0)) / 10.0;
}

double bleu_corpus(const std::vector<std::pair<std::vector<std::string>,
                                               std::vector<std::vector<std::string>>>>& pairs,
                   int max_n) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [hyp, refs] : pairs) {
    sum += bleu_sentence(hyp, refs, max_n).score;
  }
  return round_one_decimal(sum / static_cast<double>(pairs.size()) * 100.0);
}

double bleu_avg(double b1, double b2, double b3, double b4) {
  return round_one_decimal((b1 + b2 + b3 + b4) / 4.0);
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

std::string collapse_whitespace(const std::string& text) {
  std::string out;
  bool pending = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending = !out.empty();
      continue;
    }
    if (pending) {
      out += ' ';
      pending = false;
    }
    out += static_cast<char>(c);
  }
  return out;
}

std::string lower_collapse(const std::string& text) {
  std::string out = collapse_whitespace(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

// First standalone letter within the option range, word-boundary delimited.
std::optional<char> first_standalone_letter(const std::string& raw, std::size_t n_options) {
  const char last = static_cast<char>('A' + std::min<std::size_t>(n_options, 26) - 1);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char up = static_cast<char>(std::toupper(static_cast<unsigned char>(raw[i])));
    if (up < 'A' || up > last) continue;
    const bool left_ok = i == 0 || !is_word_char(static_cast<unsigned char>(raw[i - 1]));
    const bool right_ok =
        i + 1 >= raw.size() || !is_word_char(static_cast<unsigned char>(raw[i + 1]));
    if (left_ok && right_ok) return up;
  }
  return std::nullopt;
}

}  // namespace

NormalizedAnswer normalize_output(const std::string& raw, TaskType task,
                                  const std::vector<std::string>& options) {
  NormalizedAnswer answer;
  if (task != TaskType::kEgoViewMcq) {
    answer.text = collapse_whitespace(raw);
    return answer;
  }
  if (options.empty()) {
    throw Error(ErrorCode::kBadConfig, "MCQ normalization requires options");
  }

  if (auto letter = first_standalone_letter(raw, options.size())) {
    answer.text = std::string(1, *letter);
    answer.rule = 1;
    return answer;
  }

  const std::string norm_raw = lower_collapse(raw);
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (norm_raw == lower_collapse(options[i])) {
      answer.text = std::string(1, static_cast<char>('A' + i));
      answer.rule = 2;
      return answer;
    }
  }

  std::optional<std::size_t> contained;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const std::string norm_opt = lower_collapse(options[i]);
    if (!norm_opt.empty() && norm_raw.find(norm_opt) != std::string::npos) {
      if (contained.has_value()) {
        contained.reset();  // ambiguous containment
        break;
      }
      contained = i;
    }
  }
  if (contained.has_value()) {
    answer.text = std::string(1, static_cast<char>('A' + *contained));
    answer.rule = 3;
    return answer;
  }

  answer.parseable = false;
  return answer;
}

// ---------------------------------------------------------------------------
// Protocol scoring

BleuReport score_bleu(const std::vector<Prediction>& predictions,
                      const std::vector<BleuGold>& gold) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const Prediction& p : predictions) by_id[p.id] = &p;

  BleuReport report;
  double sums[4] = {0, 0, 0, 0};
  for (const BleuGold& g : gold) {
    std::vector<std::vector<std::string>> refs;
    refs.reserve(g.refs.size());
    for (const std::string& r : g.refs) refs.push_back(tokenize(r));

    std::vector<std::string> hyp;
    auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      report.missing_predictions++;  // scored as empty hypothesis: 0
    } else {
      hyp = tokenize(normalize_output(it->second->raw_text, TaskType::kPlanningQa).text);
    }
    for (int n = 1; n <= 4; ++n) {
      BleuResult r = bleu_sentence(hyp, refs, n);
      sums[n - 1] += r.score;
      if (n == 1 && r.empty_hypothesis && it != by_id.end()) report.empty_hypotheses++;
    }
    report.scored++;
  }

  double unrounded[4];
  for (int n = 0; n < 4; ++n) {
    unrounded[n] =
        report.scored ? sums[n] / static_cast<double>(report.scored) * 100.0 : 0.0;
    report.bleu[n] = round_one_decimal(unrounded[n]);
  }
  // Mean of the unrounded corpus scores, then rounded (the report invariant);
  // the table-identity helper bleu_avg() is for already-rounded inputs.
  report.bleu_avg =
      round_one_decimal((unrounded[0] + unrounded[1] + unrounded[2] + unrounded[3]) / 4.0);
  return report;
}

Top1Report score_top1(const std::vector<Prediction>& predictions,
                      const std::vector<McqGold>& gold,
                      const std::vector<std::string>& categories) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const Prediction& p : predictions) by_id[p.id] = &p;

  Top1Report report;
  std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> cat;  // correct, total
  for (const std::string& c : categories) cat[c] = {0, 0};

  for (const McqGold& g : gold) {
    auto& [correct, total] = cat[g.category];
    total++;
    report.total++;

    auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      report.missing_predictions++;
      continue;
    }
    NormalizedAnswer answer =
        normalize_output(it->second->raw_text, TaskType::kEgoViewMcq, g.options);
    if (!answer.parseable) {
      report.unparseable++;
      continue;
    }
    report.rule_counts[answer.rule]++;
    if (answer.text.size() == 1 && answer.text[0] == g.letter) {
      correct++;
      report.correct++;
    }
  }

  double cat_sum = 0.0;
  std::uint64_t nonempty = 0;
  for (const auto& [name, counts] : cat) {
    if (counts.second == 0) {
      report.per_category[name] = std::nullopt;  // vacuous: null accuracy
    } else {
      double acc = static_cast<double>(counts.first) / static_cast<double>(counts.second);
      report.per_category[name] = acc;
      cat_sum += acc;
      nonempty++;
    }
  }
  report.overall =
      report.total ? static_cast<double>(report.correct) / static_cast<double>(report.total)
                   : 0.0;
  report.category_mean = nonempty ? cat_sum / static_cast<double>(nonempty) : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization and file loading

std::string BleuReport::to_json() const {
  json j;
  j["protocol"] = protocol;
  j["counts"] = {{"scored", scored},
                 {"missing_predictions", missing_predictions},
                 {"empty_hypotheses", empty_hypotheses}};
  j["scores"] = {{"bleu_1", bleu[0]},
                 {"bleu_2", bleu[1]},
                 {"bleu_3", bleu[2]},
                 {"bleu_4", bleu[3]},
                 {"bleu_avg", bleu_avg}};
  return j.dump();
}

std::string Top1Report::to_json() const {
  json j;
  j["protocol"] = protocol;
  j["counts"] = {{"total", total},
                 {"correct", correct},
                 {"missing_predictions", missing_predictions},
                 {"unparseable", unparseable}};
  json rules = json::object();
  for (const auto& [rule, count] : rule_counts) {
    rules["rule_" + std::to_string(rule)] = count;
  }
  j["normalization_audit"] = rules;
  json cats = json::object();
  for (const auto& [name, acc] : per_category) {
    if (acc.has_value()) {
      cats[name] = *acc;
    } else {
      cats[name] = nullptr;
    }
  }
  j["scores"] = {{"per_category", cats},
                 {"overall", overall},
                 {"category_mean", category_mean}};
  return j.dump();
}

namespace {

std::vector<json> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  std::vector<json> rows;
  std::string line;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorCode::kIoFailure,
                  path + ":" + std::to_string(line_no) + ": malformed JSON line");
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

}  // namespace

std::vector<Prediction> load_predictions(const std::string& path) {
  std::vector<Prediction> out;
  for (const json& j : load_jsonl(path)) {
    out.push_back({j.value("id", ""), j.value("raw_text", "")});
  }
  return out;
}

std::vector<BleuGold> load_bleu_gold(const std::string& path) {
  std::vector<BleuGold> out;
  for (const json& j : load_jsonl(path)) {
    BleuGold g;
    g.id = j.value("id", "");
    for (const auto& r : j.value("refs", json::array())) {
      g.refs.push_back(r.get<std::string>());
    }
    if (g.refs.empty()) {
      throw Error(ErrorCode::kIoFailure, "gold row " + g.id + " has no refs");
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<McqGold> load_mcq_gold(const std::string& path) {
  std::vector<McqGold> out;
  for (const json& j : load_jsonl(path)) {
    McqGold g;
    g.id = j.value("id", "");
    std::string letter = j.value("letter", "A");
    g.letter = letter.empty() ? 'A' : letter[0];
    for (const auto& o : j.value("options", json::array())) {
      g.options.push_back(o.get<std::string>());
    }
    g.category = j.value("category", "uncategorized");
    if (g.options.empty()) {
      throw Error(ErrorCode::kIoFailure, "gold row " + g.id + " has no options");
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace planforge
