#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"

namespace chainplan {

struct ToolScores {
  double ir = 0;  // irrelevant / predicted
  double nr = 0;  // necessary / predicted
  double mr = 0;  // missing / gold
};

// Tool-name multisets: necessary = P ∩ G, irrelevant = P − G, missing = G − P.
inline ToolScores tool_selection_scores(const Plan& predicted, const Plan& gold) {
  std::map<std::string, long> pc, gc;
  for (const auto& c : predicted.calls) ++pc[c.tool_name];
  for (const auto& c : gold.calls) ++gc[c.tool_name];
  long necessary = 0;
  for (const auto& [name, n] : pc) {
    auto it = gc.find(name);
    if (it != gc.end()) necessary += std::min(n, it->second);
  }
  const auto p = static_cast<double>(predicted.calls.size());
  const auto g = static_cast<double>(gold.calls.size());
  ToolScores s;
  if (p > 0) {
    s.nr = static_cast<double>(necessary) / p;
    s.ir = (p - static_cast<double>(necessary)) / p;
  }
  if (g > 0) s.mr = (g - static_cast<double>(necessary)) / g;
  return s;
}

namespace detail {

inline bool literal_has_malformed_ref(const Json& j) {
  if (j.is_string()) return is_malformed_prev_ref(j.get_ref<const std::string&>());
  if (j.is_array() || j.is_object()) {
    for (const auto& e : j) {
      if (literal_has_malformed_ref(e)) return true;
    }
  }
  return false;
}

inline bool value_hallucinated(const ArgValue& v, std::size_t position) {
  if (v.is_ref()) return v.as_ref().index >= position;
  if (v.is_literal()) return literal_has_malformed_ref(v.as_literal());
  for (const auto& e : v.as_list()) {
    if (value_hallucinated(e, position)) return true;
  }
  return false;
}

}  // namespace detail

struct HallucinationCount {
  std::size_t hallucinated = 0;
  std::size_t units = 0;

  double rate() const { return units == 0 ? 0.0 : static_cast<double>(hallucinated) / static_cast<double>(units); }
};

// Units are every call's tool name plus every (call, argument) assignment.
inline HallucinationCount count_hallucinations(const Plan& predicted, const Registry& registry) {
  HallucinationCount h;
  for (std::size_t p = 0; p < predicted.calls.size(); ++p) {
    const auto& call = predicted.calls[p];
    const ToolSpec* tool = registry.find(call.tool_name);
    ++h.units;
    if (!tool) ++h.hallucinated;
    for (const auto& arg : call.arguments) {
      ++h.units;
      bool bad = !tool || !tool->find_argument(arg.name) || detail::value_hallucinated(arg.value, p);
      if (bad) ++h.hallucinated;
    }
  }
  return h;
}

inline double hallucination_rate(const Plan& predicted, const Registry& registry) {
  return count_hallucinations(predicted, registry).rate();
}

// Splits on JSON structural characters and whitespace; structural
// characters are kept as tokens of their own.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      flush();
    } else if (std::string_view("{}[],\":").find(c) != std::string_view::npos) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

inline std::vector<std::string> tokenize_plan(const Plan& plan) { return tokenize(serialize_plan(plan)); }

// Sentence-level BLEU-4, uniform weights. An order n ≥ 2 with zero matches
// uses 1 / (candidate n-grams + 1); a zero unigram precision gives 0.
// Brevity penalty exp(1 − |gold|/|pred|) when the prediction is shorter.
inline double bleu(const std::vector<std::string>& predicted, const std::vector<std::string>& gold, int max_order = 4) {
  if (gold.empty()) throw Error("bleu: empty reference");
  if (predicted.empty()) return 0.0;
  double log_sum = 0;
  for (int n = 1; n <= max_order; ++n) {
    std::map<std::vector<std::string>, long> ref;
    for (std::size_t i = 0; i + n <= gold.size(); ++i) ++ref[{gold.begin() + i, gold.begin() + i + n}];
    std::map<std::vector<std::string>, long> cand;
    long total = 0;
    for (std::size_t i = 0; i + n <= predicted.size(); ++i, ++total) ++cand[{predicted.begin() + i, predicted.begin() + i + n}];
    long matches = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matches += std::min(count, it->second);
    }
    double precision;
    if (matches > 0) {
      precision = static_cast<double>(matches) / static_cast<double>(total);
    } else if (n == 1) {
      return 0.0;
    } else {
      precision = 1.0 / static_cast<double>(total + 1);
    }
    log_sum += std::log(precision);
  }
  double bp = 1.0;
  if (predicted.size() < gold.size()) {
    bp = std::exp(1.0 - static_cast<double>(gold.size()) / static_cast<double>(predicted.size()));
  }
  return bp * std::exp(log_sum / max_order);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline double rouge_l_f1(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  if (gold.empty()) throw Error("rouge_l_f1: empty reference");
  std::size_t l = lcs_length(predicted, gold);
  if (l == 0) return 0.0;
  double p = static_cast<double>(l) / static_cast<double>(predicted.size());
  double r = static_cast<double>(l) / static_cast<double>(gold.size());
  return 2 * p * r / (p + r);
}

// Gold's tool sequence appears, in order, inside the predicted sequence.
inline bool correct_path(const Plan& predicted, const Plan& gold) {
  std::size_t g = 0;
  for (const auto& c : predicted.calls) {
    if (g < gold.calls.size() && c.tool_name == gold.calls[g].tool_name) ++g;
  }
  return g == gold.calls.size();
}

struct EvalRecord {
  std::string query;
  Plan gold;
  std::string predicted_text;
  std::size_t llm_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct ExampleScores {
  bool invalid_json = false;
  double ir = 0, nr = 0, mr = 0, hr = 0;
  double bleu = 0, rouge_l_f1 = 0;
  bool correct_path = false;
};

struct MetricsReport {
  std::vector<ExampleScores> examples;
  std::size_t parsed = 0;
  double ir = 0, nr = 0, mr = 0, hr = 0;
  double bleu = 0, rouge_l_f1 = 0;
  double invalid_json_rate = 0;
  double correct_path_rate = 0;
  std::size_t llm_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

inline ExampleScores score_example(const EvalRecord& rec, const Registry& registry) {
  ExampleScores s;
  ParseOutcome parsed = parse_plan(rec.predicted_text);
  if (!parsed.is_ok()) {
    s.invalid_json = true;
    return s;
  }
  const Plan& pred = parsed.plan();
  auto tools = tool_selection_scores(pred, rec.gold);
  s.ir = tools.ir;
  s.nr = tools.nr;
  s.mr = tools.mr;
  s.hr = hallucination_rate(pred, registry);
  auto gold_tokens = tokenize_plan(rec.gold);
  auto pred_tokens = tokenize_plan(pred);
  s.bleu = bleu(pred_tokens, gold_tokens);
  s.rouge_l_f1 = rouge_l_f1(pred_tokens, gold_tokens);
  s.correct_path = correct_path(pred, rec.gold);
  return s;
}

// Tool, argument and solution metrics average over parsed examples only;
// the invalid-JSON rate is over all examples.
inline MetricsReport evaluate_dataset(const std::vector<EvalRecord>& records, const Registry& registry) {
  if (records.empty()) throw Error("evaluate_dataset: dataset is empty");
  MetricsReport r;
  std::size_t invalid = 0, paths = 0;
  for (const auto& rec : records) {
    ExampleScores s = score_example(rec, registry);
    r.llm_calls += rec.llm_calls;
    r.prompt_tokens += rec.prompt_tokens;
    r.completion_tokens += rec.completion_tokens;
    if (s.invalid_json) {
      ++invalid;
    } else {
      ++r.parsed;
      r.ir += s.ir;
      r.nr += s.nr;
      r.mr += s.mr;
      r.hr += s.hr;
      r.bleu += s.bleu;
      r.rouge_l_f1 += s.rouge_l_f1;
      paths += s.correct_path;
    }
    r.examples.push_back(s);
  }
  if (r.parsed > 0) {
    const auto n = static_cast<double>(r.parsed);
    r.ir /= n;
    r.nr /= n;
    r.mr /= n;
    r.hr /= n;
    r.bleu /= n;
    r.rouge_l_f1 /= n;
    r.correct_path_rate = static_cast<double>(paths) / n;
  }
  r.invalid_json_rate = static_cast<double>(invalid) / static_cast<double>(records.size());
  return r;
}

class DatasetError : public Error {
 public:
  DatasetError(std::size_t line, const std::string& what)
      : Error("dataset line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct GoldExample {
  std::string query;
  Plan gold;
};

// JSON lines of {"query": str, "gold": <plan>}. Blank lines are skipped but
// still counted for error line numbers.
inline std::vector<GoldExample> load_dataset(std::string_view text) {
  std::vector<GoldExample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("query") || !j["query"].is_string() || !j.contains("gold")) {
      throw DatasetError(lineno, "expected {\"query\": string, \"gold\": plan}");
    }
    ParseOutcome gold = parse_plan_json(Json(j["gold"]));
    if (!gold.is_ok()) throw DatasetError(lineno, "gold plan: " + gold.describe());
    out.push_back({j["query"].get<std::string>(), gold.plan()});
  }
  return out;
}

inline std::vector<GoldExample> load_dataset_file(const std::filesystem::path& path) {
  return load_dataset(read_text_file(path));
}

inline std::string dataset_to_jsonl(const std::vector<GoldExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    Json j = {{"query", e.query}, {"gold", plan_to_json(e.gold)}};
    out += j.dump() + "\n";
  }
  return out;
}

// JSON lines of {"predicted": <string or plan array>}; a string holds raw
// model text, which may not be valid JSON at all.
inline std::vector<std::string> load_predictions(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DatasetError(lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("predicted")) throw DatasetError(lineno, "expected {\"predicted\": ...}");
    const auto& p = j["predicted"];
    out.push_back(p.is_string() ? p.get<std::string>() : p.dump());
  }
  return out;
}

enum class ReportFormat { kTable, kCsv, kJson };

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& s : r.examples) {
    nlohmann::json e = {{"invalid_json", s.invalid_json}};
    if (!s.invalid_json) {
      e.update({{"ir", s.ir}, {"nr", s.nr}, {"mr", s.mr}, {"hr", s.hr}, {"bleu", s.bleu},
                {"rouge_l_f1", s.rouge_l_f1}, {"correct_path", s.correct_path}});
    }
    ex.push_back(std::move(e));
  }
  return {{"aggregate",
           {{"ir", r.ir}, {"nr", r.nr}, {"hr", r.hr}, {"mr", r.mr}, {"bleu", r.bleu}, {"rouge_l_f1", r.rouge_l_f1},
            {"invalid_json_rate", r.invalid_json_rate}, {"correct_path_rate", r.correct_path_rate}}},
          {"counts",
           {{"examples", r.examples.size()}, {"parsed", r.parsed}, {"llm_calls", r.llm_calls},
            {"prompt_tokens", r.prompt_tokens}, {"completion_tokens", r.completion_tokens}}},
          {"examples", std::move(ex)}};
}

inline std::string format_report(const MetricsReport& r, ReportFormat format) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  const std::vector<std::pair<std::string, double>> cols = {
      {"IR ↓", r.ir},     {"NR ↑", r.nr},         {"HR ↓", r.hr},
      {"MR ↓", r.mr},     {"BLEU ↑", r.bleu},     {"ROUGE-L-F1 ↑", r.rouge_l_f1},
      {"Invalid JSON ↓", r.invalid_json_rate},    {"Correct Path ↑", r.correct_path_rate}};
  switch (format) {
    case ReportFormat::kJson:
      return report_to_json(r).dump(2) + "\n";
    case ReportFormat::kCsv:
      os << "ir,nr,hr,mr,bleu,rouge_l_f1,invalid_json_rate,correct_path_rate,examples,parsed,llm_calls\n";
      for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i].second;
      os << ',' << r.examples.size() << ',' << r.parsed << ',' << r.llm_calls << '\n';
      return os.str();
    case ReportFormat::kTable: {
      // Arrow glyphs are 3 bytes but one column wide.
      auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
      };
      std::string header, values;
      for (const auto& [name, v] : cols) {
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(3) << v;
        std::size_t w = std::max(width(name), cell.str().size()) + 2;
        header += name + std::string(w - width(name), ' ');
        values += cell.str() + std::string(w - cell.str().size(), ' ');
      }
      os << header << '\n' << values << '\n';
      os << "examples: " << r.examples.size() << "  parsed: " << r.parsed << "  llm calls: " << r.llm_calls
         << "  tokens: " << r.prompt_tokens + r.completion_tokens << '\n';
      return os.str();
    }
  }
  return {};
}

}  // namespace chainplan
