#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"
#include "chainplan/registry.hpp"
#include "chainplan/schema.hpp"

namespace chainplan {

class ModelError : public Error {
 public:
  using Error::Error;
};

class ReplayMismatch : public ModelError {
 public:
  ReplayMismatch(const std::string& expected, const std::string& got)
      : ModelError("replay mismatch: expected prompt fingerprint " + expected + ", got " + got), expected_(expected) {}
  const std::string& expected() const { return expected_; }

 private:
  std::string expected_;
};

class DecodeError : public ModelError {
 public:
  using ModelError::ModelError;
};

struct CompletionRequest {
  std::string system;
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.0;
  std::string model;

  void validate() const {
    if (max_tokens < 1) throw ModelError("max_tokens must be at least 1");
    if (temperature < 0) throw ModelError("temperature must be nonnegative");
  }

  std::string full_prompt() const { return system.empty() ? prompt : system + "\n\n" + prompt; }
};

enum class Enforcement { kNone, kEnforced, kRepaired };

inline const char* to_string(Enforcement e) {
  switch (e) {
    case Enforcement::kNone: return "none";
    case Enforcement::kEnforced: return "enforced";
    case Enforcement::kRepaired: return "repaired";
  }
  return "";
}

struct CompletionResult {
  std::string text;
  std::string raw_text;  // model output before projection, when it differs
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double latency_ms = 0;
  Enforcement enforcement = Enforcement::kNone;
  std::vector<RepairEdit> edits;  // enforced_repair log on the repaired path
};

// Rough token estimate (~4 characters per token) for models that report no
// usage and for prompt budgeting.
inline std::size_t estimate_tokens(std::string_view text) { return (text.size() + 3) / 4; }

// Whitespace-normalized prompt hash used to key replay entries.
inline std::string prompt_fingerprint(std::string_view prompt) {
  std::string norm;
  norm.reserve(prompt.size());
  bool space = false;
  for (char c : prompt) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      space = !norm.empty();
      continue;
    }
    if (space) norm += ' ';
    space = false;
    norm += c;
  }
  return hex64(fnv1a64(norm));
}

inline constexpr std::string_view kEndOfText = "<|end|>";

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  // Every call goes through here, so call and token accounting stays exact.
  CompletionResult complete(const CompletionRequest& request) {
    request.validate();
    auto t0 = std::chrono::steady_clock::now();
    CompletionResult r = do_complete(request);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    record(r);
    return r;
  }

  // Models with per-step access expose their ranked next-token candidates.
  virtual bool supports_token_steps() const { return false; }
  virtual std::vector<std::string> candidate_tokens(const CompletionRequest&, std::size_t /*step*/,
                                                    std::string_view /*generated*/) {
    return {};
  }

  std::size_t calls() const { return calls_.load(); }
  std::size_t prompt_tokens() const { return prompt_tokens_.load(); }
  std::size_t completion_tokens() const { return completion_tokens_.load(); }

  void record(const CompletionResult& r) {
    ++calls_;
    prompt_tokens_ += r.prompt_tokens;
    completion_tokens_ += r.completion_tokens;
  }

 protected:
  virtual CompletionResult do_complete(const CompletionRequest& request) = 0;

 private:
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> prompt_tokens_{0};
  std::atomic<std::size_t> completion_tokens_{0};
};

struct ReplayEntry {
  std::string fingerprint;
  std::string response;
};

// Replays canned responses keyed by prompt fingerprint. Strict mode demands
// requests arrive in file order.
class ScriptedModel final : public LanguageModel {
 public:
  explicit ScriptedModel(std::vector<ReplayEntry> entries, bool strict = false)
      : entries_(std::move(entries)), used_(entries_.size(), false), strict_(strict) {}

  static ScriptedModel from_jsonl(std::string_view text, bool strict = false);
  static ScriptedModel from_file(const std::filesystem::path& path, bool strict = false);

  std::size_t remaining() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (bool u : used_) n += !u;
    return n;
  }

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override {
    std::string prompt = request.full_prompt();
    std::string fp = prompt_fingerprint(prompt);
    std::lock_guard lock(mu_);
    std::size_t pick = entries_.size();
    if (strict_) {
      if (cursor_ >= entries_.size()) throw ModelError("replay exhausted at request fingerprint " + fp);
      if (entries_[cursor_].fingerprint != fp) throw ReplayMismatch(entries_[cursor_].fingerprint, fp);
      pick = cursor_++;
    } else {
      std::size_t fallback = entries_.size();
      for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].fingerprint != fp) continue;
        if (!used_[i]) {
          pick = i;
          break;
        }
        fallback = i;
      }
      if (pick == entries_.size()) pick = fallback;
      if (pick == entries_.size()) throw ModelError("no replay entry for prompt fingerprint " + fp);
    }
    used_[pick] = true;
    CompletionResult r;
    r.text = entries_[pick].response;
    r.prompt_tokens = estimate_tokens(prompt);
    r.completion_tokens = estimate_tokens(r.text);
    return r;
  }

 private:
  std::vector<ReplayEntry> entries_;
  std::vector<bool> used_;
  std::size_t cursor_ = 0;
  bool strict_;
  mutable std::mutex mu_;
};

inline std::vector<ReplayEntry> parse_replay(std::string_view text) {
  std::vector<ReplayEntry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries.push_back({j.at("fingerprint").get<std::string>(), j.at("response").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ModelError("replay line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return entries;
}

inline std::vector<ReplayEntry> load_replay_file(const std::filesystem::path& path) { return parse_replay(read_text_file(path)); }

inline ScriptedModel ScriptedModel::from_jsonl(std::string_view text, bool strict) {
  return ScriptedModel(parse_replay(text), strict);
}

inline ScriptedModel ScriptedModel::from_file(const std::filesystem::path& path, bool strict) {
  return ScriptedModel(load_replay_file(path), strict);
}

// Token-level scripted model: step i offers a fixed ranked candidate list.
// Unconstrained decoding always takes the top candidate.
class ScriptedTokenModel final : public LanguageModel {
 public:
  explicit ScriptedTokenModel(std::vector<std::vector<std::string>> steps) : steps_(std::move(steps)) {}

  bool supports_token_steps() const override { return true; }

  std::vector<std::string> candidate_tokens(const CompletionRequest&, std::size_t step, std::string_view) override {
    return step < steps_.size() ? steps_[step] : std::vector<std::string>{};
  }

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override {
    CompletionResult r;
    for (const auto& cands : steps_) {
      if (cands.empty() || cands.front() == kEndOfText) break;
      r.text += cands.front();
      ++r.completion_tokens;
    }
    r.prompt_tokens = estimate_tokens(request.full_prompt());
    return r;
  }

 private:
  std::vector<std::vector<std::string>> steps_;
};

// Adapter for tests and embedding in other programs.
class CallbackModel final : public LanguageModel {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit CallbackModel(Fn fn) : fn_(std::move(fn)) {}

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override {
    CompletionResult r;
    r.text = fn_(request);
    r.prompt_tokens = estimate_tokens(request.full_prompt());
    r.completion_tokens = estimate_tokens(r.text);
    return r;
  }

 private:
  Fn fn_;
};

// Decodes under the session's automaton. Step-access models have every
// candidate list masked before selection; other models complete freely and
// the text is projected with enforced_repair afterwards.
inline CompletionResult constrained_complete(LanguageModel& model, const CompletionRequest& request,
                                             DecoderSession& session) {
  if (!model.supports_token_steps()) {
    if (!session.text().empty()) throw DecodeError("repair-path constrained decoding needs a fresh session");
    CompletionResult r = model.complete(request);
    EnforcedText fixed = enforced_repair(session.automaton(), r.text);
    session.advance(fixed.text);
    r.raw_text = std::move(r.text);
    r.text = std::move(fixed.text);
    r.edits = std::move(fixed.edits);
    r.enforcement = Enforcement::kRepaired;
    return r;
  }

  request.validate();
  auto t0 = std::chrono::steady_clock::now();
  CompletionResult r;
  r.enforcement = Enforcement::kEnforced;
  r.prompt_tokens = estimate_tokens(request.full_prompt());
  std::size_t start_len = session.text().size();
  for (std::size_t step = 0;; ++step) {
    if (step >= static_cast<std::size_t>(request.max_tokens)) {
      throw DecodeError("decode dead-end: max_tokens reached before the output was complete");
    }
    auto cands = model.candidate_tokens(request, step, session.text());
    if (cands.empty()) {
      if (session.accepting()) break;
      throw DecodeError("decode dead-end: model stopped at step " + std::to_string(step) + " with incomplete output");
    }
    auto mask = session.mask_vocabulary(cands);
    std::size_t chosen = cands.size();
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i] == kEndOfText ? session.accepting() : static_cast<bool>(mask[i])) {
        chosen = i;
        break;
      }
    }
    if (chosen == cands.size()) {
      throw DecodeError("no permissible token at step " + std::to_string(step) + "; allowed next: \"" +
                        session.allowed_next().chars + "\"");
    }
    if (cands[chosen] == kEndOfText) break;
    session.advance(cands[chosen]);
    ++r.completion_tokens;
  }
  r.text = session.text().substr(start_len);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  model.record(r);
  return r;
}

}  // namespace chainplan
