#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chainplan/executor.hpp"
#include "chainplan/llm_client.hpp"
#include "chainplan/metrics.hpp"
#include "chainplan/pipelines.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"
#include "chainplan/remote.hpp"
#include "chainplan/retriever.hpp"
#include "chainplan/schema.hpp"
#include "chainplan/type_graph.hpp"

#ifndef CHAINPLAN_DATA_DIR
#define CHAINPLAN_DATA_DIR "data"
#endif

namespace chainplan {

// Exit codes: 0 success, 1 domain error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct CliEnv {
  std::istream* in = &std::cin;
  std::function<std::shared_ptr<HttpTransport>()> transport = [] { return std::make_shared<HttplibTransport>(); };
  std::filesystem::path data_dir = CHAINPLAN_DATA_DIR;
};

namespace cli_detail {

struct Options {
  std::string tools;
  bool ops = false;
  bool graph = false;
  std::string format = "text";
  std::string in;
  std::string out;
  std::string trace;
  std::string query;
  std::string pipeline = "regains";
  std::string examples;
  std::string config;
  std::string mock;
  std::string corpus;
  std::string embedder = "hash";
  std::string dataset;
  std::string predictions;
  std::string schema = "plan";
  std::size_t k = 0;
  bool dry_run = false;
};

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << text;
  if (!f) throw Error("failed writing " + path);
}

inline std::string read_input(const Options& o, const CliEnv& env) {
  if (!o.in.empty()) return read_text_file(o.in);
  return std::string(std::istreambuf_iterator<char>(*env.in), std::istreambuf_iterator<char>());
}

inline Registry load_tools(const Options& o) {
  Registry r = load_registry_file(o.tools);
  return o.ops ? with_operator_tools(r) : r;
}

inline Plan read_plan(const Options& o, const CliEnv& env) {
  ParseOutcome p = parse_plan(read_input(o, env));
  if (!p.is_ok()) throw Error("input is not a plan: " + p.describe());
  return p.plan();
}

inline std::unique_ptr<EmbeddingProvider> make_embedder(const Options& o, const CliEnv& env) {
  if (o.embedder == "remote") {
    if (!o.mock.empty()) throw UsageError("--embedder remote needs the network and cannot be combined with --mock");
    return std::make_unique<RemoteEmbeddingProvider>(RemoteConfig::from_env(), env.transport());
  }
  return std::make_unique<HashingEmbeddingProvider>();
}

inline std::unique_ptr<LanguageModel> make_model(const Options& o, const CliEnv& env) {
  if (!o.mock.empty()) return std::make_unique<ScriptedModel>(load_replay_file(o.mock));
  return std::make_unique<RemoteChatModel>(RemoteConfig::from_env(), env.transport());
}

inline PipelineConfig load_config(const Options& o) {
  PipelineConfig c = o.config.empty() ? PipelineConfig{} : load_pipeline_config(o.config);
  if (o.k > 0) c.k = o.k;
  c.dry_run = o.dry_run;
  return c;
}

// Tool and example corpora, from a cache written by `index` or built on the spot.
struct Corpora {
  Corpus tools;
  ExampleStore examples;
};

inline Corpora load_corpora(const Options& o, const Registry& registry, const EmbeddingProvider& provider) {
  Corpora c;
  std::vector<GoldExample> examples;
  if (!o.examples.empty()) examples = load_dataset_file(o.examples);
  if (!o.corpus.empty()) {
    auto j = nlohmann::json::parse(read_text_file(o.corpus));
    c.tools = corpus_from_json(j.at("tools"), registry.version(), provider.id());
    if (j.contains("examples")) {
      c.examples.corpus = corpus_from_json(j.at("examples"), registry.version(), provider.id());
      if (c.examples.corpus.items.size() != examples.size()) {
        throw RetrievalError("example cache holds " + std::to_string(c.examples.corpus.items.size()) +
                             " items but --examples has " + std::to_string(examples.size()) + "; re-run index");
      }
      c.examples.examples = std::move(examples);
      return c;
    }
  } else {
    c.tools = index_corpus(provider, tool_items(registry), CorpusKind::kTools, registry.version());
  }
  c.examples = index_examples(provider, std::move(examples), registry.version());
  return c;
}

inline PipelineTrace run_pipeline(const std::string& name, const std::string& query, const PipelineInputs& in,
                                  LanguageModel& model, const PipelineConfig& cfg) {
  if (name == "enchant") return run_enchant(query, in, model, cfg);
  return run_regains(query, in, model, cfg);
}

inline std::string diagnostics_text(const std::vector<Diagnostic>& diags) {
  std::string out;
  for (const auto& d : diags) out += std::string(to_string(d.severity)) + " " + d.location + ": " + d.message + "\n";
  return out;
}

inline nlohmann::json diagnostics_json(const std::vector<Diagnostic>& diags) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : diags) arr.push_back({{"severity", to_string(d.severity)}, {"location", d.location}, {"message", d.message}});
  return arr;
}

// ---------------------------------------------------------------------------

inline int cmd_tools(const Options& o, std::ostream& out, std::ostream& err) {
  Registry reg = load_tools(o);
  auto diags = validate_registry(reg);
  if (o.graph) {
    TypeGraph g = build_graph(reg);
    if (o.format == "json") {
      out << g.to_json().dump(2) << "\n";
    } else {
      for (const auto& e : g.edges()) out << e.from_tool << " -> " << e.to_tool << "." << e.to_argument << " (" << e.weight << ")\n";
    }
  } else if (o.format == "json") {
    out << nlohmann::json{{"version", reg.version()},
                          {"tools", reg.names()},
                          {"diagnostics", diagnostics_json(diags)}}.dump(2)
        << "\n";
  } else {
    out << "registry " << reg.version() << ", " << reg.tools().size() << " tools\n";
    for (const auto& t : reg.tools()) {
      out << "  " << t.name << "(";
      for (std::size_t i = 0; i < t.arguments.size(); ++i) {
        out << (i ? ", " : "") << t.arguments[i].name << (t.arguments[i].required ? "" : "?") << ": "
            << t.arguments[i].value_type.keyword();
      }
      out << ") -> " << t.returns.keyword() << "\n";
    }
  }
  if (o.format != "json") err << diagnostics_text(diags);
  return has_errors(diags) ? kExitDomain : kExitOk;
}

inline int cmd_index(const Options& o, const CliEnv& env, std::ostream& out) {
  Registry reg = load_tools(o);
  auto provider = make_embedder(o, env);
  nlohmann::json doc;
  doc["tools"] = corpus_to_json(index_corpus(*provider, tool_items(reg), CorpusKind::kTools, reg.version()));
  std::size_t n_examples = 0;
  if (!o.examples.empty()) {
    auto store = index_examples(*provider, load_dataset_file(o.examples), reg.version());
    n_examples = store.examples.size();
    doc["examples"] = corpus_to_json(store.corpus);
  }
  write_text_file(o.out, doc.dump() + "\n");
  out << "indexed " << reg.tools().size() << " tools and " << n_examples << " examples with " << provider->id()
      << " (registry " << reg.version() << ") into " << o.out << "\n";
  return kExitOk;
}

inline int cmd_plan(const Options& o, const CliEnv& env, std::ostream& out, std::ostream& err) {
  Registry reg = load_tools(o);
  PipelineConfig cfg = load_config(o);
  auto provider = make_embedder(o, env);
  Corpora corpora = load_corpora(o, reg, *provider);
  PipelineInputs in{reg, *provider, corpora.tools, &corpora.examples};
  std::unique_ptr<LanguageModel> model;
  if (!cfg.dry_run) model = make_model(o, env);
  CallbackModel unused([](const CompletionRequest&) -> std::string { throw ModelError("dry run makes no model calls"); });
  PipelineTrace trace = run_pipeline(o.pipeline, o.query, in, model ? *model : unused, cfg);
  write_text_file(o.trace, to_json(trace).dump(2) + "\n");
  if (cfg.dry_run) {
    for (const auto& s : trace.stages) out << "=== " << s.name << " prompt (~" << estimate_tokens(s.prompt) << " tokens) ===\n" << s.prompt << "\n";
    return kExitOk;
  }
  if (!trace.plan) {
    err << "no plan: " << trace.parse_error << "\n";
    return kExitDomain;
  }
  out << serialize_plan(*trace.plan) << "\n";
  err << trace.pipeline << ": " << trace.llm_calls << " LLM call(s), " << trace.repairs.size() << " type repair(s)"
      << (trace.repaired ? ", output repaired" : "") << "; trace in " << o.trace << "\n";
  return kExitOk;
}

inline int cmd_check(const Options& o, const CliEnv& env, std::ostream& out) {
  Registry reg = load_tools(o);
  Plan plan = read_plan(o, env);
  auto diags = check_plan(plan, reg, build_graph(reg));
  if (o.format == "json") {
    out << diagnostics_json(diags).dump(2) << "\n";
  } else {
    out << diagnostics_text(diags);
    if (diags.empty()) out << "ok: " << plan.calls.size() << " call(s), no findings\n";
  }
  return has_errors(diags) ? kExitDomain : kExitOk;
}

inline int cmd_repair(const Options& o, const CliEnv& env, std::ostream& out, std::ostream& err) {
  Registry reg = load_tools(o);
  Plan plan = read_plan(o, env);
  RepairResult r = repair_plan(build_graph(reg), plan);
  if (o.format == "json") {
    Json log = Json::array();
    for (const auto& rep : r.repairs) log.push_back(to_json(rep));
    out << Json{{"plan", plan_to_json(r.plan)}, {"repairs", std::move(log)}}.dump() << "\n";
  } else {
    out << serialize_plan(r.plan) << "\n";
    for (const auto& rep : r.repairs) err << to_string(rep.action) << " /" << rep.position << "/" << rep.argument << ": " << rep.detail << "\n";
  }
  return kExitOk;
}

inline int cmd_enforce(const Options& o, const CliEnv& env, std::ostream& out, std::ostream& err) {
  Registry reg = load_tools(o);
  std::string text = read_input(o, env);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  std::shared_ptr<const CharAutomaton> automaton;
  if (o.schema == "subtasks") {
    automaton = compile_subtask_schema(reg);
  } else {
    automaton = compile_schema(reg);
  }
  EnforcedText fixed = enforced_repair(*automaton, text);
  if (o.format == "json") {
    Json edits = Json::array();
    for (const auto& e : fixed.edits) edits.push_back(to_json(e));
    out << Json{{"text", fixed.text}, {"edits", std::move(edits)}}.dump() << "\n";
  } else {
    out << fixed.text << "\n";
    for (const auto& e : fixed.edits) err << to_json(e).dump() << "\n";
  }
  return kExitOk;
}

inline int cmd_exec(const Options& o, const CliEnv& env, std::ostream& out) {
  Registry reg = load_tools(o);
  Plan plan = read_plan(o, env);
  CompositeRuntime runtime({std::make_shared<StubRuntime>(), std::make_shared<OperatorRuntime>()});
  ExecutionTrace trace = execute(plan, runtime, build_graph(reg));
  auto j = to_json(trace);
  if (!o.trace.empty()) write_text_file(o.trace, j.dump(2) + "\n");
  if (o.format == "json") {
    out << j.dump(2) << "\n";
  } else {
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
      out << "[" << i << "] " << trace.steps[i].tool_name << " -> " << to_json(trace.steps[i].output).dump() << "\n";
    }
  }
  return kExitOk;
}

inline int cmd_eval(const Options& o, const CliEnv& env, std::ostream& out) {
  Registry reg = load_tools(o);
  auto dataset = load_dataset_file(o.dataset);
  std::vector<EvalRecord> records;
  Json traces = Json::array();
  if (!o.predictions.empty()) {
    auto preds = load_predictions(read_text_file(o.predictions));
    if (preds.size() != dataset.size()) {
      throw Error("predictions file has " + std::to_string(preds.size()) + " lines but the dataset has " +
                  std::to_string(dataset.size()));
    }
    for (std::size_t i = 0; i < dataset.size(); ++i) records.push_back({dataset[i].query, dataset[i].gold, preds[i]});
  } else {
    PipelineConfig cfg = load_config(o);
    if (cfg.dry_run) throw UsageError("eval cannot run in dry-run mode");
    auto provider = make_embedder(o, env);
    Corpora corpora = load_corpora(o, reg, *provider);
    PipelineInputs in{reg, *provider, corpora.tools, &corpora.examples};
    auto model = make_model(o, env);
    for (const auto& ex : dataset) {
      PipelineTrace t = run_pipeline(o.pipeline, ex.query, in, *model, cfg);
      records.push_back({ex.query, ex.gold, t.final_text(), t.llm_calls, t.prompt_tokens, t.completion_tokens});
      traces.push_back(to_json(t));
    }
  }
  MetricsReport report = evaluate_dataset(records, reg);
  write_text_file(o.trace, Json{{"report", Json(report_to_json(report))}, {"traces", std::move(traces)}}.dump(2) + "\n");
  ReportFormat fmt = o.format == "json" ? ReportFormat::kJson : o.format == "csv" ? ReportFormat::kCsv : ReportFormat::kTable;
  out << format_report(report, fmt);
  return kExitOk;
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err, const CliEnv& env = {}) {
  using cli_detail::Options;
  Options o;
  const std::string data = env.data_dir.string();
  o.tools = (env.data_dir / "tools" / "devrev_tools.json").string();

  CLI::App app{"chainplan: plan, check, repair and evaluate chained tool calls", "chainplan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all commands");

  auto add_tools = [&](CLI::App* c) {
    c->add_option("--tools", o.tools, "Tool registry JSON file")->check(CLI::ExistingFile)->capture_default_str();
    c->add_flag("--ops", o.ops, "Add the op_* arithmetic and comparison tools to the registry");
  };
  auto add_input = [&](CLI::App* c) { c->add_option("--in", o.in, "Read input from FILE instead of stdin")->check(CLI::ExistingFile); };
  auto add_format = [&](CLI::App* c, std::vector<std::string> choices) {
    c->add_option("--format", o.format, "Output format")->check(CLI::IsMember(std::move(choices)))->capture_default_str();
  };
  auto add_pipeline = [&](CLI::App* c) {
    c->add_option("--pipeline", o.pipeline, "Planning pipeline")->check(CLI::IsMember({"enchant", "regains"}))->capture_default_str();
    c->add_option("--examples", o.examples, "Worked examples JSONL for RE-GAINS")->check(CLI::ExistingFile);
    c->add_option("--config", o.config, "Pipeline config JSON")->check(CLI::ExistingFile);
    c->add_option("--mock", o.mock, "Replay model responses from a JSONL file; no network access")->check(CLI::ExistingFile);
    c->add_option("--corpus", o.corpus, "Corpus cache written by 'index'")->check(CLI::ExistingFile);
    c->add_option("--embedder", o.embedder, "Embedding provider")->check(CLI::IsMember({"hash", "remote"}))->capture_default_str();
    c->add_option("--k", o.k, "Override the number of retrieved tools");
  };

  auto* tools = app.add_subcommand("tools", "Validate and list a tool registry");
  add_tools(tools);
  tools->add_flag("--graph", o.graph, "Print the type graph instead");
  add_format(tools, {"text", "json"});

  auto* index = app.add_subcommand("index", "Embed tools (and examples) into a corpus cache");
  add_tools(index);
  index->add_option("--examples", o.examples, "Worked examples JSONL")->check(CLI::ExistingFile);
  index->add_option("--out", o.out, "Cache file to write")->required();
  index->add_option("--embedder", o.embedder, "Embedding provider")->check(CLI::IsMember({"hash", "remote"}));

  auto* plan = app.add_subcommand("plan", "Turn a query into a tool-call plan");
  plan->add_option("query", o.query, "Natural-language query")->required();
  add_tools(plan);
  add_pipeline(plan);
  plan->add_option("--trace", o.trace, "Trace JSON output")->capture_default_str();
  plan->add_flag("--dry-run", o.dry_run, "Print the assembled prompt without calling a model");

  auto* check = app.add_subcommand("check", "Report problems in a plan");
  add_tools(check);
  add_input(check);
  add_format(check, {"text", "json"});

  auto* repair = app.add_subcommand("repair", "Fix array wrapping of $$PREV references");
  add_tools(repair);
  add_input(repair);
  add_format(repair, {"text", "json"});

  auto* enforce = app.add_subcommand("enforce", "Project raw model text onto the plan schema");
  add_tools(enforce);
  add_input(enforce);
  add_format(enforce, {"text", "json"});
  enforce->add_option("--schema", o.schema, "Target schema")->check(CLI::IsMember({"plan", "subtasks"}))->capture_default_str();

  auto* exec = app.add_subcommand("exec", "Run a plan against the stub runtime");
  add_tools(exec);
  add_input(exec);
  add_format(exec, {"text", "json"});
  exec->add_option("--trace", o.trace, "Also write the execution trace here");

  auto* eval = app.add_subcommand("eval", "Score predictions or a pipeline against a gold dataset");
  add_tools(eval);
  eval->add_option("--dataset", o.dataset, "Gold dataset JSONL")->required()->check(CLI::ExistingFile);
  auto* preds = eval->add_option("--predictions", o.predictions, "Predictions JSONL")->check(CLI::ExistingFile);
  add_pipeline(eval);
  eval->get_option("--pipeline")->excludes(preds);
  eval->add_option("--trace", o.trace, "Report and trace JSON output")->capture_default_str();
  add_format(eval, {"table", "csv", "json"});

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  if (o.trace.empty() && (app.got_subcommand(plan) || app.got_subcommand(eval))) o.trace = "chainplan-trace.json";
  if (app.got_subcommand(eval) && o.predictions.empty() && eval->count("--pipeline") == 0) {
    err << "eval: pass --predictions FILE or --pipeline enchant|regains\n";
    return kExitUsage;
  }
  if (app.got_subcommand(plan) || app.got_subcommand(eval)) {
    if (o.examples.empty() && std::filesystem::exists(env.data_dir / "examples.jsonl")) {
      o.examples = (env.data_dir / "examples.jsonl").string();
    }
  }

  try {
    if (app.got_subcommand(tools)) return cli_detail::cmd_tools(o, out, err);
    if (app.got_subcommand(index)) return cli_detail::cmd_index(o, env, out);
    if (app.got_subcommand(plan)) return cli_detail::cmd_plan(o, env, out, err);
    if (app.got_subcommand(check)) return cli_detail::cmd_check(o, env, out);
    if (app.got_subcommand(repair)) return cli_detail::cmd_repair(o, env, out, err);
    if (app.got_subcommand(enforce)) return cli_detail::cmd_enforce(o, env, out, err);
    if (app.got_subcommand(exec)) return cli_detail::cmd_exec(o, env, out);
    if (app.got_subcommand(eval)) return cli_detail::cmd_eval(o, env, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace chainplan
