// Regenerates the scripted replay used by the end-to-end tests:
//   gen_replay <tools.json> <examples.jsonl> <golden.jsonl> <out.jsonl>
// Each golden query gets a RE-GAINS entry (its gold plan) and two EnChAnT
// entries (a sub-task list, then the gold plan). Prompts are rebuilt with the
// default pipeline config, so the file goes stale when templates change.

#include <fstream>
#include <iostream>

#include "chainplan/chainplan.hpp"

using namespace chainplan;

int main(int argc, char** argv) {
  if (argc != 5) {
    std::cerr << "usage: gen_replay TOOLS EXAMPLES GOLDEN OUT\n";
    return 2;
  }
  try {
    Registry reg = load_registry_file(argv[1]);
    HashingEmbeddingProvider provider;
    Corpus tools = index_corpus(provider, tool_items(reg), CorpusKind::kTools, reg.version());
    ExampleStore store = index_examples(provider, load_dataset_file(argv[2]), reg.version());
    PipelineInputs in{reg, provider, tools, &store};
    PipelineConfig cfg;
    cfg.dry_run = true;
    CallbackModel none([](const CompletionRequest&) -> std::string { throw ModelError("unused"); });

    std::ofstream out(argv[4], std::ios::binary);
    auto emit = [&](const std::string& prompt, const std::string& response) {
      CompletionRequest req;
      req.system = cfg.system;
      req.prompt = prompt;
      out << nlohmann::json{{"fingerprint", prompt_fingerprint(req.full_prompt())}, {"response", response}}.dump() << "\n";
    };
    for (const auto& ex : load_dataset_file(argv[3])) {
      emit(run_regains(ex.query, in, none, cfg).stages.at(0).prompt, serialize_plan(ex.gold));

      PipelineTrace dry = run_enchant(ex.query, in, none, cfg);
      std::vector<SubTask> subtasks;
      for (std::size_t i = 0; i < ex.gold.calls.size(); ++i) {
        const auto& name = ex.gold.calls[i].tool_name;
        subtasks.push_back({i, "Step " + std::to_string(i + 1) + ": call " + name, name});
      }
      emit(dry.stages.at(0).prompt, serialize_subtasks(subtasks));
      std::vector<std::string> names;
      for (const auto& s : dry.retrieved_tools) names.push_back(s.id);
      emit(recompose_prompt(cfg, ex.query, reg.subset(names), subtasks), serialize_plan(ex.gold));
    }
  } catch (const std::exception& e) {
    std::cerr << "gen_replay: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
