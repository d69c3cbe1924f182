#pragma once

// Seeded random inputs shared by the unit and acceptance suites.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "chainplan/chainplan.hpp"

namespace chainplan::testgen {

using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline bool coin(Rng& rng, double p = 0.5) { return std::bernoulli_distribution(p)(rng); }

template <class T>
const T& choose(Rng& rng, const std::vector<T>& v) {
  return v[pick(rng, 0, v.size() - 1)];
}

inline std::string random_word(Rng& rng) {
  static const std::vector<std::string> kWords = {"alpha", "beta", "login", "crash", "p0", "high", "UserA", "sprint 9",
                                                  "x", "docs", "a,b", "q[1]", "{brace}", "tab\there", "quote\"d"};
  return choose(rng, kWords);
}

inline ValueType random_value_type(Rng& rng) {
  static const std::vector<std::string> kTypes = {
      "string", "integer", "float", "boolean", "object:Item", "object:User", "array of string",
      "array of integer", "array of object:Item", "array of object:User", "array of array of string"};
  return *ValueType::parse(choose(rng, kTypes));
}

// Up to max_tools tools named tool_<i>, each with up to four arguments.
inline Registry random_registry(Rng& rng, std::size_t max_tools = 8) {
  std::size_t n = pick(rng, 1, max_tools);
  std::vector<ToolSpec> tools;
  for (std::size_t i = 0; i < n; ++i) {
    ToolSpec t;
    t.name = "tool_" + std::to_string(i);
    t.description = "random tool " + std::to_string(i);
    t.returns = random_value_type(rng);
    std::size_t nargs = pick(rng, 0, 4);
    for (std::size_t j = 0; j < nargs; ++j) {
      t.arguments.push_back({"arg_" + std::to_string(j), "argument " + std::to_string(j), random_value_type(rng), coin(rng)});
    }
    tools.push_back(std::move(t));
  }
  return Registry(std::move(tools));
}

inline Json random_literal(Rng& rng, const ValueType& type) {
  switch (type.kind()) {
    case ValueType::Kind::kString: return random_word(rng);
    case ValueType::Kind::kInteger: return static_cast<std::int64_t>(pick(rng, 0, 2000)) - 1000;
    case ValueType::Kind::kFloat: return static_cast<double>(pick(rng, 0, 4000)) / 8.0 - 250.0;
    case ValueType::Kind::kBoolean: return coin(rng);
    case ValueType::Kind::kObject: return Json{{"id", random_word(rng)}, {"rank", static_cast<int>(pick(rng, 0, 9))}};
    case ValueType::Kind::kList: {
      Json arr = Json::array();
      std::size_t n = pick(rng, 0, 3);
      for (std::size_t i = 0; i < n; ++i) arr.push_back(random_literal(rng, type.element()));
      return arr;
    }
  }
  return nullptr;
}

// Plans over `registry` whose back-references always point backwards but are
// wrapped in a list or left bare at random, so some need type repair.
inline Plan random_plan(Rng& rng, const Registry& registry, std::size_t max_calls = 6, double ref_prob = 0.5) {
  Plan plan;
  std::size_t n = pick(rng, 0, max_calls);
  for (std::size_t p = 0; p < n; ++p) {
    const ToolSpec& tool = choose(rng, registry.tools());
    ToolCall call;
    call.tool_name = tool.name;
    for (const auto& spec : tool.arguments) {
      if (!spec.required && coin(rng, 0.4)) continue;
      ArgValue v;
      if (p > 0 && coin(rng, ref_prob)) {
        std::size_t idx = pick(rng, 0, p - 1);
        if (coin(rng)) {
          v = ArgValue::ref(idx);
        } else {
          ArgValue::List elems;
          if (coin(rng, 0.3)) elems.push_back(ArgValue::literal(random_word(rng)));
          elems.push_back(ArgValue::ref(idx));
          v = ArgValue::list(std::move(elems));
        }
      } else {
        Json lit = random_literal(rng, spec.value_type);
        v = lit.is_array() ? detail::decode_value(lit) : ArgValue::literal(lit);
      }
      call.arguments.push_back({spec.name, std::move(v)});
    }
    plan.calls.push_back(std::move(call));
  }
  return plan;
}

// Plans for metric checks: tool names from a pool that mixes real and fake
// names, stray argument names, forward references and malformed tags.
inline Plan random_metric_plan(Rng& rng, const Registry& registry, const std::vector<std::string>& name_pool,
                               std::size_t max_calls = 6) {
  Plan plan;
  std::size_t n = pick(rng, 0, max_calls);
  for (std::size_t p = 0; p < n; ++p) {
    ToolCall call;
    call.tool_name = choose(rng, name_pool);
    std::vector<std::string> arg_names = {"bogus", "limit_x"};
    if (const ToolSpec* t = registry.find(call.tool_name)) {
      for (const auto& a : t->arguments) arg_names.push_back(a.name);
    }
    std::shuffle(arg_names.begin(), arg_names.end(), rng);
    std::size_t nargs = pick(rng, 0, std::min<std::size_t>(3, arg_names.size()));
    for (std::size_t j = 0; j < nargs; ++j) {
      ArgValue v;
      switch (pick(rng, 0, 4)) {
        case 0: v = ArgValue::literal(random_word(rng)); break;
        case 1: v = ArgValue::ref(pick(rng, 0, 6)); break;
        case 2: v = ArgValue::list({ArgValue::ref(pick(rng, 0, 6)), ArgValue::literal("x")}); break;
        case 3: v = ArgValue::literal(coin(rng) ? "$$PREV[one]" : "$$PREV1"); break;
        default: v = ArgValue::literal(Json::array({"ok", coin(rng) ? "$$PREV[-1]" : "fine"})); break;
      }
      call.arguments.push_back({arg_names[j], std::move(v)});
    }
    plan.calls.push_back(std::move(call));
  }
  return plan;
}

inline std::vector<std::string> random_tokens(Rng& rng, std::size_t min_len, std::size_t max_len, std::size_t alphabet = 6) {
  std::vector<std::string> out(pick(rng, min_len, max_len));
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + pick(rng, 0, alphabet - 1)));
  return out;
}

// Random walk through an automaton. Closing characters are favoured more as
// the walk grows so it stays finite; after max_steps the cheapest completion is forced.
inline std::string random_walk(Rng& rng, const CharAutomaton& a, std::size_t max_steps = 600) {
  std::string out;
  AutomatonState s = a.start();
  for (std::size_t step = 0; !a.accepting(s); ++step) {
    std::string allowed = a.allowed(s);
    if (allowed.empty()) throw std::logic_error("random_walk: dead state");
    char c;
    if (step >= max_steps) {
      c = detail::pick_insertion(allowed);
    } else {
      std::string closers;
      for (char ch : allowed) {
        if (std::string_view("]}\",").find(ch) != std::string_view::npos) closers += ch;
      }
      double bias = std::min(0.35, static_cast<double>(step) / 300.0);
      c = !closers.empty() && coin(rng, bias) ? closers[pick(rng, 0, closers.size() - 1)] : allowed[pick(rng, 0, allowed.size() - 1)];
    }
    s = *a.step(s, c);
    out += c;
  }
  return out;
}

}  // namespace chainplan::testgen
