#pragma once

#include <charconv>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"

namespace chainplan {

using Json = nlohmann::ordered_json;

// Reference to the output of an earlier call, written "$$PREV[i]" on the wire.
struct PrevRef {
  std::size_t index = 0;
  bool operator==(const PrevRef&) const = default;
};

inline constexpr std::string_view kPrevPrefix = "$$PREV";

inline std::string prev_ref_text(std::size_t index) { return "$$PREV[" + std::to_string(index) + "]"; }

// Exact match on $$PREV[<digits>].
inline std::optional<std::size_t> match_prev_ref(std::string_view s) {
  constexpr std::string_view head = "$$PREV[";
  if (s.size() < head.size() + 2 || s.substr(0, head.size()) != head || s.back() != ']') return std::nullopt;
  std::string_view digits = s.substr(head.size(), s.size() - head.size() - 1);
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc() || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

// Strings that look like an attempted back-reference but are not one.
inline bool is_malformed_prev_ref(std::string_view s) {
  return s.substr(0, kPrevPrefix.size()) == kPrevPrefix && !match_prev_ref(s);
}

struct ArgValue {
  using List = std::vector<ArgValue>;
  std::variant<Json, PrevRef, List> value;

  ArgValue() = default;
  ArgValue(Json literal) : value(std::move(literal)) {}
  ArgValue(PrevRef ref) : value(ref) {}
  ArgValue(List elements) : value(std::move(elements)) {}

  static ArgValue literal(Json j) { return ArgValue(std::move(j)); }
  static ArgValue ref(std::size_t index) { return ArgValue(PrevRef{index}); }
  static ArgValue list(List elements) { return ArgValue(std::move(elements)); }

  bool is_literal() const { return std::holds_alternative<Json>(value); }
  bool is_ref() const { return std::holds_alternative<PrevRef>(value); }
  bool is_list() const { return std::holds_alternative<List>(value); }
  const Json& as_literal() const { return std::get<Json>(value); }
  const PrevRef& as_ref() const { return std::get<PrevRef>(value); }
  const List& as_list() const { return std::get<List>(value); }
  List& as_list() { return std::get<List>(value); }

  friend bool operator==(const ArgValue& a, const ArgValue& b) { return a.value == b.value; }
};

struct Argument {
  std::string name;
  ArgValue value;
  bool operator==(const Argument&) const = default;
};

struct ToolCall {
  std::string tool_name;
  std::vector<Argument> arguments;

  const Argument* find(std::string_view arg) const {
    for (const auto& a : arguments) {
      if (a.name == arg) return &a;
    }
    return nullptr;
  }

  bool operator==(const ToolCall&) const = default;
};

struct Plan {
  std::vector<ToolCall> calls;

  std::vector<std::string> tool_names() const {
    std::vector<std::string> out;
    out.reserve(calls.size());
    for (const auto& c : calls) out.push_back(c.tool_name);
    return out;
  }

  bool operator==(const Plan&) const = default;
};

// Result of parse_plan: exactly one of Ok / InvalidJson / SchemaViolation.
class ParseOutcome {
 public:
  struct InvalidJson {
    std::string detail;
  };
  struct SchemaViolation {
    std::string path;
    std::string detail;
  };

  static ParseOutcome ok(Plan p) { return ParseOutcome(std::move(p)); }
  static ParseOutcome invalid_json(std::string detail) { return ParseOutcome(InvalidJson{std::move(detail)}); }
  static ParseOutcome schema_violation(std::string path, std::string detail) {
    return ParseOutcome(SchemaViolation{std::move(path), std::move(detail)});
  }

  bool is_ok() const { return std::holds_alternative<Plan>(v_); }
  bool is_invalid_json() const { return std::holds_alternative<InvalidJson>(v_); }
  bool is_schema_violation() const { return std::holds_alternative<SchemaViolation>(v_); }

  const Plan& plan() const {
    if (!is_ok()) throw Error("parse outcome is not Ok: " + describe());
    return std::get<Plan>(v_);
  }
  const InvalidJson& invalid() const { return std::get<InvalidJson>(v_); }
  const SchemaViolation& violation() const { return std::get<SchemaViolation>(v_); }

  std::string describe() const {
    if (is_ok()) return "ok";
    if (is_invalid_json()) return "invalid JSON: " + invalid().detail;
    return "schema violation at " + violation().path + ": " + violation().detail;
  }

 private:
  template <class T>
  explicit ParseOutcome(T v) : v_(std::move(v)) {}

  std::variant<Plan, InvalidJson, SchemaViolation> v_;
};

namespace detail {

struct PlanShapeError {
  std::string path;
  std::string detail;
};

inline ArgValue decode_element(const Json& j) {
  if (j.is_string()) {
    if (auto idx = match_prev_ref(j.get_ref<const std::string&>())) return ArgValue::ref(*idx);
  }
  return ArgValue::literal(j);
}

inline ArgValue decode_value(const Json& j) {
  if (j.is_array()) {
    ArgValue::List elems;
    elems.reserve(j.size());
    for (const auto& e : j) elems.push_back(decode_element(e));
    return ArgValue::list(std::move(elems));
  }
  return decode_element(j);
}

inline Plan decode_plan(const Json& doc) {
  if (!doc.is_array()) throw PlanShapeError{"", "plan must be a JSON array of tool calls"};
  Plan plan;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& c = doc[i];
    std::string path = pointer_join("", i);
    if (!c.is_object()) throw PlanShapeError{path, "tool call must be an object"};
    for (const auto& [key, _] : c.items()) {
      if (key != "tool_name" && key != "arguments") throw PlanShapeError{pointer_join(path, key), "unexpected key"};
    }
    auto tn = c.find("tool_name");
    if (tn == c.end()) throw PlanShapeError{path, "missing 'tool_name'"};
    if (!tn->is_string()) throw PlanShapeError{pointer_join(path, "tool_name"), "'tool_name' must be a string"};
    auto args = c.find("arguments");
    if (args == c.end()) throw PlanShapeError{path, "missing 'arguments'"};
    if (!args->is_array()) throw PlanShapeError{pointer_join(path, "arguments"), "'arguments' must be an array"};
    ToolCall call;
    call.tool_name = tn->get<std::string>();
    std::unordered_set<std::string> seen;
    for (std::size_t j = 0; j < args->size(); ++j) {
      const auto& a = (*args)[j];
      std::string apath = pointer_join(pointer_join(path, "arguments"), j);
      if (!a.is_object()) throw PlanShapeError{apath, "argument must be an object"};
      for (const auto& [key, _] : a.items()) {
        if (key != "argument_name" && key != "argument_value") throw PlanShapeError{pointer_join(apath, key), "unexpected key"};
      }
      auto an = a.find("argument_name");
      if (an == a.end()) throw PlanShapeError{apath, "missing 'argument_name'"};
      if (!an->is_string()) throw PlanShapeError{pointer_join(apath, "argument_name"), "'argument_name' must be a string"};
      auto av = a.find("argument_value");
      if (av == a.end()) throw PlanShapeError{apath, "missing 'argument_value'"};
      std::string name = an->get<std::string>();
      if (!seen.insert(name).second) {
        throw PlanShapeError{pointer_join(apath, "argument_name"), "duplicate argument '" + name + "'"};
      }
      call.arguments.push_back({std::move(name), decode_value(*av)});
    }
    plan.calls.push_back(std::move(call));
  }
  return plan;
}

inline Json encode_element(const ArgValue& v) {
  if (v.is_ref()) return prev_ref_text(v.as_ref().index);
  if (v.is_literal()) return v.as_literal();
  Json arr = Json::array();
  for (const auto& e : v.as_list()) arr.push_back(encode_element(e));
  return arr;
}

}  // namespace detail

inline ParseOutcome parse_plan_json(const Json& doc) {
  try {
    return ParseOutcome::ok(detail::decode_plan(doc));
  } catch (const detail::PlanShapeError& e) {
    return ParseOutcome::schema_violation(e.path.empty() ? "/" : e.path, e.detail);
  }
}

inline ParseOutcome parse_plan(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    return ParseOutcome::invalid_json(e.what());
  }
  return parse_plan_json(doc);
}

inline Json plan_to_json(const Plan& plan) {
  Json arr = Json::array();
  for (const auto& c : plan.calls) {
    Json args = Json::array();
    for (const auto& a : c.arguments) {
      args.push_back({{"argument_name", a.name}, {"argument_value", detail::encode_element(a.value)}});
    }
    arr.push_back({{"tool_name", c.tool_name}, {"arguments", std::move(args)}});
  }
  return arr;
}

// Canonical single-line form, no insignificant whitespace.
inline std::string serialize_plan(const Plan& plan) { return plan_to_json(plan).dump(); }

namespace detail {

template <class Fn>
void for_each_ref(const ArgValue& v, Fn&& fn) {
  if (v.is_ref()) {
    fn(v.as_ref());
  } else if (v.is_list()) {
    for (const auto& e : v.as_list()) {
      if (e.is_ref()) fn(e.as_ref());
    }
  }
}

}  // namespace detail

// One diagnostic per back-reference that does not point strictly backwards.
inline std::vector<Diagnostic> validate_refs(const Plan& plan) {
  std::vector<Diagnostic> out;
  for (std::size_t p = 0; p < plan.calls.size(); ++p) {
    for (const auto& arg : plan.calls[p].arguments) {
      std::string loc = pointer_join(pointer_join(pointer_join("", p), "arguments"), arg.name);
      detail::for_each_ref(arg.value, [&](const PrevRef& r) {
        if (r.index == p) {
          out.push_back({Severity::kError, loc, "self reference " + prev_ref_text(r.index) + " in call " + std::to_string(p)});
        } else if (r.index > p) {
          out.push_back({Severity::kError, loc,
                         "forward reference " + prev_ref_text(r.index) + " in call " + std::to_string(p) +
                             (r.index >= plan.calls.size() ? " (out of range)" : "")});
        }
      });
    }
  }
  return out;
}

}  // namespace chainplan
