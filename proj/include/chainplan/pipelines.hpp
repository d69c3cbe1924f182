#pragma once

#include <cctype>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"
#include "chainplan/llm_client.hpp"
#include "chainplan/metrics.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"
#include "chainplan/retriever.hpp"
#include "chainplan/schema.hpp"
#include "chainplan/type_graph.hpp"

namespace chainplan {

class PipelineError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Prompt templates

using Slots = std::map<std::string, std::string>;

namespace detail {

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls fn(begin, end, name) for each {identifier} in the template. Braces
// around anything else (JSON in few-shot examples) are plain text.
template <class Fn>
void scan_placeholders(std::string_view tmpl, Fn&& fn) {
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    if (tmpl[i] != '{' || i + 1 >= tmpl.size() || !is_ident_start(tmpl[i + 1])) continue;
    std::size_t j = i + 1;
    while (j < tmpl.size() && is_ident_char(tmpl[j])) ++j;
    if (j < tmpl.size() && tmpl[j] == '}') {
      fn(i, j + 1, std::string(tmpl.substr(i + 1, j - i - 1)));
      i = j;
    }
  }
}

}  // namespace detail

inline std::set<std::string> placeholders(std::string_view tmpl) {
  std::set<std::string> out;
  detail::scan_placeholders(tmpl, [&](std::size_t, std::size_t, std::string name) { out.insert(std::move(name)); });
  return out;
}

// Single-pass substitution: slot values are never rescanned.
inline std::string build_prompt(std::string_view tmpl, const Slots& slots) {
  std::string out;
  std::size_t copied = 0;
  detail::scan_placeholders(tmpl, [&](std::size_t begin, std::size_t end, const std::string& name) {
    auto it = slots.find(name);
    if (it == slots.end()) throw PipelineError("prompt template placeholder {" + name + "} has no value (missing slot '" + name + "')");
    out.append(tmpl.substr(copied, begin - copied));
    out += it->second;
    copied = end;
  });
  out.append(tmpl.substr(copied));
  return out;
}

inline constexpr std::string_view kDefaultDecomposeTemplate =
    R"(Break the user query into sub-tasks. Each sub-task uses exactly one of the tools below, and the sub-tasks are listed in the order they must run.

Tools:
{tools}

Example
Query: summarize my p0 issues
Sub-tasks: [{"id":0,"thought":"Find out who the current user is","tool_name":"who_am_i"},{"id":1,"thought":"List p0 issues owned by that user","tool_name":"works_list"},{"id":2,"thought":"Summarize the issues found","tool_name":"summarize_objects"}]

Query: {query}
Sub-tasks: )";

inline constexpr std::string_view kDefaultRecomposeTemplate =
    R"(Recompose the sub-tasks into one JSON plan. A plan is a list of calls shaped like {"tool_name": ..., "arguments": [{"argument_name": ..., "argument_value": ...}]}.
To use the output of an earlier call, write "$$PREV[i]" where i counts calls from 0. Put it inside a list when the argument takes a list of that output.

Tools:
{tools}

Example
Query: summarize my p0 issues
Sub-tasks: [{"id":0,"thought":"Find out who the current user is","tool_name":"who_am_i"},{"id":1,"thought":"List p0 issues owned by that user","tool_name":"works_list"},{"id":2,"thought":"Summarize the issues found","tool_name":"summarize_objects"}]
Plan: [{"tool_name":"who_am_i","arguments":[]},{"tool_name":"works_list","arguments":[{"argument_name":"issue_priority","argument_value":["p0"]},{"argument_name":"owned_by","argument_value":["$$PREV[0]"]},{"argument_name":"type","argument_value":["issue"]}]},{"tool_name":"summarize_objects","arguments":[{"argument_name":"objects","argument_value":"$$PREV[1]"}]}]

Query: {query}
Sub-tasks: {subtasks}
Plan: )";

inline constexpr std::string_view kDefaultRapTemplate =
    R"(Guidelines learned from earlier planning runs:
{insights}

Plan by moving between states with actions. A state is what is known so far: the query plus the outputs of the calls made up to that point. An action is a single tool call that produces a new state. The output of action i (counting from 0) is written "$$PREV[i]". Stop once the state answers the query.

Available tools:
{tools}

Worked examples:
{examples}

Query: {query}
Reply with the JSON plan only.)";

inline const std::vector<std::string>& default_insights() {
  static const std::vector<std::string> kInsights = {
      "Resolve names and people to IDs first (who_am_i, search_object_by_name) before filtering on them.",
      "Only pass arguments the query asks for; leave optional filters out otherwise.",
      "Wrap \"$$PREV[i]\" in a list when the argument takes a list of what call i returns.",
      "Pass a list-returning call directly, without extra brackets, to an argument taking that list.",
      "Keep filter values exactly as allowed by the argument description, such as p0 or high.",
      "When the query needs no tool, answer with an empty plan [].",
  };
  return kInsights;
}

struct PipelineConfig {
  std::size_t k = 10;
  std::size_t example_count = 2;
  std::size_t token_budget = 4000;
  std::string model;
  std::string system;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::string decompose_template{kDefaultDecomposeTemplate};
  std::string recompose_template{kDefaultRecomposeTemplate};
  std::string rap_template{kDefaultRapTemplate};
  std::vector<std::string> insights = default_insights();
  bool dry_run = false;
  // Project the single RE-GAINS completion onto the schema. Off gives the
  // raw parse baseline used for comparisons.
  bool enforce = true;

  void validate() const {
    if (k == 0) throw PipelineError("config: k must be positive");
    if (max_tokens < 1) throw PipelineError("config: max_tokens must be positive");
    auto need = [](const std::string& tmpl, const char* which, std::initializer_list<const char*> names) {
      auto have = placeholders(tmpl);
      for (const char* n : names) {
        if (!have.count(n)) throw PipelineError(std::string("config: ") + which + " template lacks placeholder {" + n + "}");
      }
    };
    need(decompose_template, "decompose", {"query", "tools"});
    need(recompose_template, "recompose", {"query", "tools", "subtasks"});
    need(rap_template, "rap", {"insights", "query", "tools", "examples"});
  }
};

// Paths inside the config resolve relative to the config file.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    c.k = j.value("k", c.k);
    c.example_count = j.value("example_count", c.example_count);
    c.token_budget = j.value("token_budget", c.token_budget);
    if (auto m = j.find("model"); m != j.end()) {
      c.model = m->value("name", c.model);
      c.system = m->value("system", c.system);
      c.max_tokens = m->value("max_tokens", c.max_tokens);
      c.temperature = m->value("temperature", c.temperature);
    }
    if (auto t = j.find("templates"); t != j.end()) {
      if (t->contains("decompose")) c.decompose_template = read_text_file(resolve(t->at("decompose").get<std::string>()));
      if (t->contains("recompose")) c.recompose_template = read_text_file(resolve(t->at("recompose").get<std::string>()));
      if (t->contains("rap")) c.rap_template = read_text_file(resolve(t->at("rap").get<std::string>()));
    }
    if (auto ins = j.find("insights"); ins != j.end()) {
      c.insights.clear();
      std::istringstream in(read_text_file(resolve(ins->get<std::string>())));
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
        c.insights.push_back(line);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(std::string("malformed pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw PipelineError("pipeline config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Prompt sections

namespace detail {

inline std::string trim_newlines(std::string s) {
  while (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

}  // namespace detail

inline std::string render_tools(const std::vector<ToolSpec>& tools) {
  std::string out;
  for (const auto& t : tools) {
    out += t.name + "(";
    for (std::size_t i = 0; i < t.arguments.size(); ++i) {
      if (i) out += ", ";
      out += t.arguments[i].name + (t.arguments[i].required ? "" : "?");
    }
    out += ") -> " + t.returns.keyword() + "\n  " + t.description + "\n";
    for (const auto& a : t.arguments) {
      out += "  - " + a.name + " (" + a.value_type.keyword() + (a.required ? "" : ", optional") + "): " + a.description + "\n";
    }
  }
  return detail::trim_newlines(std::move(out));
}

inline std::string render_examples(const std::vector<const GoldExample*>& examples) {
  std::string out;
  for (const auto* ex : examples) out += "Query: " + ex->query + "\nPlan: " + serialize_plan(ex->gold) + "\n\n";
  if (out.empty()) out = "(none)";
  return detail::trim_newlines(std::move(out));
}

inline std::string render_insights(const std::vector<std::string>& insights) {
  std::string out;
  for (std::size_t i = 0; i < insights.size(); ++i) out += std::to_string(i + 1) + ". " + insights[i] + "\n";
  if (out.empty()) out = "(none)";
  return detail::trim_newlines(std::move(out));
}

// Worked examples for RE-GAINS, indexed by query text.
struct ExampleStore {
  Corpus corpus;
  std::vector<GoldExample> examples;

  static std::string id_for(std::size_t i) { return "ex-" + std::to_string(i); }

  const GoldExample& get(const std::string& id) const {
    if (id.rfind("ex-", 0) == 0) {
      std::size_t i = std::stoul(id.substr(3));
      if (i < examples.size()) return examples[i];
    }
    throw PipelineError("unknown example id '" + id + "'");
  }
};

inline ExampleStore index_examples(const EmbeddingProvider& provider, std::vector<GoldExample> examples,
                                   const std::string& registry_version) {
  std::vector<TextItem> items;
  for (std::size_t i = 0; i < examples.size(); ++i) items.push_back({ExampleStore::id_for(i), examples[i].query});
  ExampleStore store;
  store.corpus = index_corpus(provider, items, CorpusKind::kExamples, registry_version);
  store.examples = std::move(examples);
  return store;
}

// ---------------------------------------------------------------------------
// Traces

struct StageRecord {
  std::string name;
  std::string prompt;
  std::string raw_text;
  std::string text;
  Enforcement enforcement = Enforcement::kNone;
  std::vector<RepairEdit> edits;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency_ms = 0;
};

struct PipelineTrace {
  std::string pipeline;
  std::string query;
  bool dry_run = false;
  std::vector<ScoredItem> retrieved_tools;
  std::vector<ScoredItem> retrieved_examples;
  std::vector<StageRecord> stages;
  std::vector<SubTask> subtasks;
  std::vector<Repair> repairs;  // type-graph repairs
  std::optional<Plan> plan;
  std::string parse_error;
  bool repaired = false;      // enforced_repair changed the model text
  bool repair_heavy = false;  // ... and rewrote more than a quarter of it
  std::size_t llm_calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::size_t prompt_token_estimate = 0;
  bool over_budget = false;

  // What the pipeline hands to evaluation: the final plan when one exists,
  // otherwise the last model text.
  std::string final_text() const {
    if (plan) return serialize_plan(*plan);
    return stages.empty() ? std::string() : stages.back().text;
  }
};

inline Json to_json(const PipelineTrace& t, bool include_timing = true) {
  auto scored = [](const std::vector<ScoredItem>& items) {
    Json arr = Json::array();
    for (const auto& s : items) arr.push_back({{"id", s.id}, {"score", s.score}});
    return arr;
  };
  Json stages = Json::array();
  for (const auto& s : t.stages) {
    Json edits = Json::array();
    for (const auto& e : s.edits) edits.push_back(to_json(e));
    Json st = {{"name", s.name},
                         {"prompt", s.prompt},
                         {"raw_text", s.raw_text},
                         {"text", s.text},
                         {"enforcement", to_string(s.enforcement)},
                         {"edits", std::move(edits)},
                         {"prompt_tokens", s.prompt_tokens},
                         {"completion_tokens", s.completion_tokens}};
    if (include_timing) st["latency_ms"] = s.latency_ms;
    stages.push_back(std::move(st));
  }
  Json subtasks = Json::array();
  for (const auto& s : t.subtasks) subtasks.push_back({{"id", s.index}, {"thought", s.thought}, {"tool_name", s.tool_name}});
  Json repairs = Json::array();
  for (const auto& r : t.repairs) repairs.push_back(to_json(r));
  Json j = {{"pipeline", t.pipeline},
                      {"query", t.query},
                      {"dry_run", t.dry_run},
                      {"retrieved_tools", scored(t.retrieved_tools)},
                      {"retrieved_examples", scored(t.retrieved_examples)},
                      {"stages", std::move(stages)},
                      {"subtasks", std::move(subtasks)},
                      {"repairs", std::move(repairs)},
                      {"plan", t.plan ? Json(plan_to_json(*t.plan)) : Json(nullptr)},
                      {"repaired", t.repaired},
                      {"repair_heavy", t.repair_heavy},
                      {"llm_calls", t.llm_calls},
                      {"prompt_tokens", t.prompt_tokens},
                      {"completion_tokens", t.completion_tokens},
                      {"prompt_token_estimate", t.prompt_token_estimate},
                      {"over_budget", t.over_budget}};
  if (!t.parse_error.empty()) j["parse_error"] = t.parse_error;
  return j;
}

// ---------------------------------------------------------------------------
// Pipelines

struct PipelineInputs {
  const Registry& registry;
  const EmbeddingProvider& provider;
  const Corpus& tool_corpus;
  const ExampleStore* examples = nullptr;
};

namespace detail {

inline Registry retrieve_tools(const std::string& query, const PipelineInputs& in, const PipelineConfig& cfg,
                               PipelineTrace& trace) {
  if (in.tool_corpus.registry_version != in.registry.version()) {
    throw PipelineError("tool corpus was indexed for registry " + in.tool_corpus.registry_version + ", not " +
                        in.registry.version() + "; re-run indexing");
  }
  trace.retrieved_tools = retrieve_top_k(query, in.tool_corpus, in.provider, cfg.k);
  std::vector<std::string> names;
  for (const auto& s : trace.retrieved_tools) {
    if (!in.registry.contains(s.id)) throw PipelineError("retrieved tool '" + s.id + "' is not in the registry");
    names.push_back(s.id);
  }
  return in.registry.subset(names);
}

inline CompletionRequest make_request(const PipelineConfig& cfg, std::string prompt) {
  CompletionRequest r;
  r.system = cfg.system;
  r.prompt = std::move(prompt);
  r.max_tokens = cfg.max_tokens;
  r.temperature = cfg.temperature;
  r.model = cfg.model;
  return r;
}

inline StageRecord stage_from(std::string name, const CompletionRequest& req, CompletionResult r) {
  StageRecord s;
  s.name = std::move(name);
  s.prompt = req.prompt;
  s.raw_text = r.raw_text.empty() ? r.text : std::move(r.raw_text);
  s.text = std::move(r.text);
  s.enforcement = r.enforcement;
  s.edits = std::move(r.edits);
  s.prompt_tokens = r.prompt_tokens;
  s.completion_tokens = r.completion_tokens;
  s.latency_ms = r.latency_ms;
  return s;
}

inline std::size_t edited_chars(const std::vector<RepairEdit>& edits) {
  std::size_t n = 0;
  for (const auto& e : edits) n += e.text.size();
  return n;
}

inline void finish_accounting(PipelineTrace& t) {
  t.llm_calls = t.stages.size();
  for (const auto& s : t.stages) {
    t.prompt_tokens += s.prompt_tokens;
    t.completion_tokens += s.completion_tokens;
  }
}

}  // namespace detail

inline std::string decompose_prompt(const PipelineConfig& cfg, const std::string& query, const Registry& tools) {
  return build_prompt(cfg.decompose_template, {{"query", query}, {"tools", render_tools(tools.tools())}});
}

inline std::string recompose_prompt(const PipelineConfig& cfg, const std::string& query, const Registry& tools,
                                    const std::vector<SubTask>& subtasks) {
  return build_prompt(cfg.recompose_template,
                      {{"query", query}, {"tools", render_tools(tools.tools())}, {"subtasks", serialize_subtasks(subtasks)}});
}

inline std::string rap_prompt(const PipelineConfig& cfg, const std::string& query, const Registry& tools,
                              const std::vector<const GoldExample*>& examples) {
  return build_prompt(cfg.rap_template, {{"insights", render_insights(cfg.insights)},
                                         {"query", query},
                                         {"tools", render_tools(tools.tools())},
                                         {"examples", render_examples(examples)}});
}

// Retrieve, decompose under the sub-task automaton, recompose under the plan
// automaton of the retrieved tools, then type-graph repair. Two model calls.
inline PipelineTrace run_enchant(const std::string& query, const PipelineInputs& in, LanguageModel& model,
                                 const PipelineConfig& cfg) {
  cfg.validate();
  PipelineTrace trace;
  trace.pipeline = "enchant";
  trace.query = query;
  trace.dry_run = cfg.dry_run;
  Registry tools = detail::retrieve_tools(query, in, cfg, trace);

  auto req1 = detail::make_request(cfg, decompose_prompt(cfg, query, tools));
  trace.prompt_token_estimate = estimate_tokens(req1.full_prompt());
  if (cfg.dry_run) {
    StageRecord s;
    s.name = "decompose";
    s.prompt = req1.prompt;
    trace.stages.push_back(std::move(s));
    trace.over_budget = trace.prompt_token_estimate > cfg.token_budget;
    return trace;
  }

  DecoderSession sub_session(compile_subtask_schema(tools));
  trace.stages.push_back(detail::stage_from("decompose", req1, constrained_complete(model, req1, sub_session)));
  trace.subtasks = parse_subtasks(trace.stages.back().text);

  auto req2 = detail::make_request(cfg, recompose_prompt(cfg, query, tools, trace.subtasks));
  trace.prompt_token_estimate = std::max(trace.prompt_token_estimate, estimate_tokens(req2.full_prompt()));
  trace.over_budget = trace.prompt_token_estimate > cfg.token_budget;
  DecoderSession plan_session(compile_schema(tools));
  trace.stages.push_back(detail::stage_from("recompose", req2, constrained_complete(model, req2, plan_session)));

  const auto& final_stage = trace.stages.back();
  trace.repaired = !final_stage.edits.empty();
  trace.repair_heavy = detail::edited_chars(final_stage.edits) * 4 > final_stage.raw_text.size();
  ParseOutcome parsed = parse_plan(final_stage.text);
  if (!parsed.is_ok()) throw PipelineError("enforced recomposition did not parse: " + parsed.describe());
  RepairResult fixed = repair_plan(build_graph(in.registry), parsed.plan());
  trace.plan = std::move(fixed.plan);
  trace.repairs = std::move(fixed.repairs);
  detail::finish_accounting(trace);
  return trace;
}

// Retrieve tools and worked examples, one RAP-style completion, projection
// onto the schema, then type-graph repair.
inline PipelineTrace run_regains(const std::string& query, const PipelineInputs& in, LanguageModel& model,
                                 const PipelineConfig& cfg) {
  cfg.validate();
  PipelineTrace trace;
  trace.pipeline = "regains";
  trace.query = query;
  trace.dry_run = cfg.dry_run;
  Registry tools = detail::retrieve_tools(query, in, cfg, trace);

  std::vector<const GoldExample*> examples;
  if (cfg.example_count > 0) {
    if (!in.examples || in.examples->corpus.empty()) throw PipelineError("RE-GAINS needs a non-empty example corpus");
    trace.retrieved_examples = retrieve_top_k(query, in.examples->corpus, in.provider, cfg.example_count);
    for (const auto& s : trace.retrieved_examples) examples.push_back(&in.examples->get(s.id));
  }

  auto req = detail::make_request(cfg, rap_prompt(cfg, query, tools, examples));
  trace.prompt_token_estimate = estimate_tokens(req.full_prompt());
  trace.over_budget = trace.prompt_token_estimate > cfg.token_budget;
  if (cfg.dry_run) {
    StageRecord s;
    s.name = "rap";
    s.prompt = req.prompt;
    trace.stages.push_back(std::move(s));
    return trace;
  }

  StageRecord stage = detail::stage_from("rap", req, model.complete(req));
  if (cfg.enforce) {
    // Valid text projects onto itself, so this is a no-op on conformant output.
    EnforcedText fixed = enforced_repair(*compile_schema(in.registry), stage.raw_text);
    stage.text = std::move(fixed.text);
    stage.edits = std::move(fixed.edits);
    stage.enforcement = stage.edits.empty() ? Enforcement::kNone : Enforcement::kRepaired;
    trace.repaired = !stage.edits.empty();
    trace.repair_heavy = detail::edited_chars(stage.edits) * 4 > stage.raw_text.size();
  }
  trace.stages.push_back(std::move(stage));
  detail::finish_accounting(trace);

  ParseOutcome parsed = parse_plan(trace.stages.back().text);
  if (!parsed.is_ok()) {
    if (cfg.enforce) throw PipelineError("projected output did not parse: " + parsed.describe());
    trace.parse_error = parsed.describe();
    return trace;
  }
  if (!cfg.enforce) {
    trace.plan = parsed.plan();
    return trace;
  }
  RepairResult fixed = repair_plan(build_graph(in.registry), parsed.plan());
  trace.plan = std::move(fixed.plan);
  trace.repairs = std::move(fixed.repairs);
  return trace;
}

}  // namespace chainplan
