#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "chainplan/core.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"
#include "chainplan/type_graph.hpp"

namespace chainplan {

struct RuntimeValue;

struct OpaqueObject {
  std::string type_name;
  std::vector<std::pair<std::string, RuntimeValue>> fields;

  const RuntimeValue* field(std::string_view name) const;
  friend bool operator==(const OpaqueObject& a, const OpaqueObject& b);
};

struct RuntimeValue {
  using List = std::vector<RuntimeValue>;
  std::variant<std::int64_t, double, std::string, bool, List, OpaqueObject> v;

  RuntimeValue() : v(std::int64_t{0}) {}
  RuntimeValue(std::int64_t i) : v(i) {}
  RuntimeValue(int i) : v(std::int64_t{i}) {}
  RuntimeValue(double d) : v(d) {}
  RuntimeValue(std::string s) : v(std::move(s)) {}
  RuntimeValue(const char* s) : v(std::string(s)) {}
  RuntimeValue(bool b) : v(b) {}
  RuntimeValue(List l) : v(std::move(l)) {}
  RuntimeValue(OpaqueObject o) : v(std::move(o)) {}

  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_double() const { return std::holds_alternative<double>(v); }
  bool is_number() const { return is_int() || is_double(); }
  bool is_text() const { return std::holds_alternative<std::string>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_list() const { return std::holds_alternative<List>(v); }
  bool is_object() const { return std::holds_alternative<OpaqueObject>(v); }

  std::int64_t as_int() const { return std::get<std::int64_t>(v); }
  double as_double() const { return is_int() ? static_cast<double>(as_int()) : std::get<double>(v); }
  const std::string& as_text() const { return std::get<std::string>(v); }
  bool as_bool() const { return std::get<bool>(v); }
  const List& as_list() const { return std::get<List>(v); }
  const OpaqueObject& as_object() const { return std::get<OpaqueObject>(v); }

  // number, text, boolean, list, object
  int kind() const {
    if (is_number()) return 0;
    if (is_text()) return 1;
    if (is_bool()) return 2;
    if (is_list()) return 3;
    return 4;
  }

  friend bool operator==(const RuntimeValue& a, const RuntimeValue& b) {
    if (a.is_number() && b.is_number()) {
      if (a.is_int() && b.is_int()) return a.as_int() == b.as_int();
      return a.as_double() == b.as_double();
    }
    return a.v == b.v;
  }
};

inline const RuntimeValue* OpaqueObject::field(std::string_view name) const {
  for (const auto& [k, val] : fields) {
    if (k == name) return &val;
  }
  return nullptr;
}

inline bool operator==(const OpaqueObject& a, const OpaqueObject& b) {
  return a.type_name == b.type_name && a.fields == b.fields;
}

inline Json to_json(const RuntimeValue& rv) {
  if (rv.is_int()) return rv.as_int();
  if (rv.is_double()) return rv.as_double();
  if (rv.is_text()) return rv.as_text();
  if (rv.is_bool()) return rv.as_bool();
  if (rv.is_list()) {
    Json arr = Json::array();
    for (const auto& e : rv.as_list()) arr.push_back(to_json(e));
    return arr;
  }
  Json obj = Json::object();
  const auto& o = rv.as_object();
  if (!o.type_name.empty()) obj["$type"] = o.type_name;
  for (const auto& [k, val] : o.fields) obj[k] = to_json(val);
  return obj;
}

class ExecutionError : public Error {
 public:
  ExecutionError(std::optional<std::size_t> step, const std::string& what)
      : Error(step ? "step " + std::to_string(*step) + ": " + what : what), step_(step) {}
  std::optional<std::size_t> step() const { return step_; }

 private:
  std::optional<std::size_t> step_;
};

inline RuntimeValue from_json(const Json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) {
    if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      return static_cast<double>(j.get<std::uint64_t>());
    }
    return j.get<std::int64_t>();
  }
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    RuntimeValue::List l;
    for (const auto& e : j) l.push_back(from_json(e));
    return l;
  }
  if (j.is_object()) {
    OpaqueObject o;
    for (const auto& [k, val] : j.items()) {
      if (k == "$type" && val.is_string()) {
        o.type_name = val.get<std::string>();
      } else {
        o.fields.emplace_back(k, from_json(val));
      }
    }
    return o;
  }
  throw ExecutionError(std::nullopt, "null literals have no runtime value");
}

// ---------------------------------------------------------------------------
// Output manipulation operators

enum class Operator { kAdd, kSub, kMul, kDiv, kFloorDiv, kPow, kMod, kGt, kLt, kGe, kLe, kEq, kNeq };

inline constexpr std::array<std::pair<Operator, std::string_view>, 13> kOperatorNames = {{
    {Operator::kAdd, "add"}, {Operator::kSub, "sub"}, {Operator::kMul, "mul"}, {Operator::kDiv, "div"},
    {Operator::kFloorDiv, "floordiv"}, {Operator::kPow, "pow"}, {Operator::kMod, "mod"}, {Operator::kGt, "gt"},
    {Operator::kLt, "lt"}, {Operator::kGe, "ge"}, {Operator::kLe, "le"}, {Operator::kEq, "eq"}, {Operator::kNeq, "neq"},
}};

inline std::string_view operator_name(Operator op) {
  for (const auto& [o, name] : kOperatorNames) {
    if (o == op) return name;
  }
  return {};
}

inline std::optional<Operator> parse_operator(std::string_view name) {
  for (const auto& [o, n] : kOperatorNames) {
    if (n == name) return o;
  }
  return std::nullopt;
}

inline bool is_comparison(Operator op) { return op >= Operator::kGt; }

class OperatorError : public Error {
 public:
  enum class Code { kDivisionByZero, kKindMismatch, kNonFinite };
  OperatorError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

namespace detail {

inline RuntimeValue finite_or_throw(double d, Operator op) {
  if (!std::isfinite(d)) {
    throw OperatorError(OperatorError::Code::kNonFinite, std::string(operator_name(op)) + " produced a non-finite result");
  }
  return d;
}

inline std::optional<std::int64_t> int_pow(std::int64_t base, std::int64_t exp) {
  std::int64_t result = 1;
  while (exp > 0) {
    if (exp & 1) {
      if (__builtin_mul_overflow(result, base, &result)) return std::nullopt;
    }
    exp >>= 1;
    if (exp > 0 && __builtin_mul_overflow(base, base, &base)) return std::nullopt;
  }
  return result;
}

inline RuntimeValue arithmetic(Operator op, const RuntimeValue& a, const RuntimeValue& b) {
  using Code = OperatorError::Code;
  bool ints = a.is_int() && b.is_int();
  bool b_zero = b.is_int() ? b.as_int() == 0 : b.as_double() == 0.0;
  if ((op == Operator::kDiv || op == Operator::kFloorDiv || op == Operator::kMod) && b_zero) {
    throw OperatorError(Code::kDivisionByZero, std::string(operator_name(op)) + ": division by zero");
  }
  if (ints) {
    std::int64_t x = a.as_int(), y = b.as_int(), r = 0;
    switch (op) {
      case Operator::kAdd:
        if (!__builtin_add_overflow(x, y, &r)) return r;
        break;
      case Operator::kSub:
        if (!__builtin_sub_overflow(x, y, &r)) return r;
        break;
      case Operator::kMul:
        if (!__builtin_mul_overflow(x, y, &r)) return r;
        break;
      case Operator::kFloorDiv: {
        if (x == std::numeric_limits<std::int64_t>::min() && y == -1) break;
        std::int64_t q = x / y;
        if (x % y != 0 && ((x < 0) != (y < 0))) --q;
        return q;
      }
      case Operator::kMod: {
        if (y == -1) return std::int64_t{0};
        std::int64_t m = x % y;
        if (m != 0 && ((m < 0) != (y < 0))) m += y;
        return m;
      }
      case Operator::kPow:
        if (y >= 0) {
          if (auto p = int_pow(x, y)) return *p;
        } else if (x == 0) {
          throw OperatorError(Code::kDivisionByZero, "pow: zero raised to a negative power");
        }
        break;
      default:
        break;
    }
  }
  double x = a.as_double(), y = b.as_double();
  switch (op) {
    case Operator::kAdd: return finite_or_throw(x + y, op);
    case Operator::kSub: return finite_or_throw(x - y, op);
    case Operator::kMul: return finite_or_throw(x * y, op);
    case Operator::kDiv: return finite_or_throw(x / y, op);
    case Operator::kFloorDiv: return finite_or_throw(std::floor(x / y), op);
    case Operator::kMod: {
      double m = std::fmod(x, y);
      if (m != 0 && ((m < 0) != (y < 0))) m += y;
      return finite_or_throw(m, op);
    }
    case Operator::kPow:
      if (x == 0 && y < 0) throw OperatorError(Code::kDivisionByZero, "pow: zero raised to a negative power");
      return finite_or_throw(std::pow(x, y), op);
    default:
      break;
  }
  throw OperatorError(Code::kKindMismatch, "not an arithmetic operator");
}

// -1, 0, 1
inline int compare_ordered(const RuntimeValue& a, const RuntimeValue& b) {
  if (a.is_text()) return a.as_text() < b.as_text() ? -1 : (a.as_text() == b.as_text() ? 0 : 1);
  if (a.is_int() && b.is_int()) return a.as_int() < b.as_int() ? -1 : (a.as_int() == b.as_int() ? 0 : 1);
  double x = a.as_double(), y = b.as_double();
  return x < y ? -1 : (x == y ? 0 : 1);
}

}  // namespace detail

inline RuntimeValue apply_operator(Operator op, const RuntimeValue& a, const RuntimeValue& b) {
  using Code = OperatorError::Code;
  auto mismatch = [&](const char* need) {
    return OperatorError(Code::kKindMismatch, std::string(operator_name(op)) + " requires " + need);
  };
  if (!is_comparison(op)) {
    if (!a.is_number() || !b.is_number()) throw mismatch("numeric operands");
    return detail::arithmetic(op, a, b);
  }
  if (op == Operator::kEq || op == Operator::kNeq) {
    if (a.kind() != b.kind()) throw mismatch("operands of the same kind");
    bool eq = a == b;
    return op == Operator::kEq ? eq : !eq;
  }
  bool ordered = (a.is_number() && b.is_number()) || (a.is_text() && b.is_text());
  if (!ordered) throw mismatch("two numbers or two texts");
  int c = detail::compare_ordered(a, b);
  switch (op) {
    case Operator::kGt: return c > 0;
    case Operator::kLt: return c < 0;
    case Operator::kGe: return c >= 0;
    default: return c <= 0;
  }
}

inline constexpr std::string_view kOperatorToolPrefix = "op_";

// Pseudo-tools op_add, op_gt, ... taking arguments "a" and "b".
inline std::vector<ToolSpec> operator_tool_specs() {
  std::vector<ToolSpec> out;
  for (const auto& [op, name] : kOperatorNames) {
    ToolSpec t;
    t.name = std::string(kOperatorToolPrefix) + std::string(name);
    bool cmp = is_comparison(op);
    t.description = cmp ? "Compares two values with '" + std::string(name) + "' and returns a boolean"
                        : "Applies the arithmetic operator '" + std::string(name) + "' to two numbers";
    t.arguments = {{"a", "Left operand", ValueType::floating(), true}, {"b", "Right operand", ValueType::floating(), true}};
    t.returns = cmp ? ValueType::boolean() : ValueType::floating();
    out.push_back(std::move(t));
  }
  return out;
}

inline Registry with_operator_tools(const Registry& registry) { return registry.with_tools(operator_tool_specs()); }

// ---------------------------------------------------------------------------
// Runtimes

using ResolvedArgs = std::map<std::string, RuntimeValue>;

class ToolRuntime {
 public:
  virtual ~ToolRuntime() = default;
  virtual bool covers(const std::string& tool) const = 0;
  virtual RuntimeValue invoke(const std::string& tool, const ResolvedArgs& args) = 0;
};

class OperatorRuntime final : public ToolRuntime {
 public:
  bool covers(const std::string& tool) const override { return resolve(tool).has_value(); }

  RuntimeValue invoke(const std::string& tool, const ResolvedArgs& args) override {
    auto op = resolve(tool);
    if (!op) throw ExecutionError(std::nullopt, "not an operator tool: " + tool);
    auto a = args.find("a"), b = args.find("b");
    if (a == args.end() || b == args.end()) throw ExecutionError(std::nullopt, tool + " needs arguments 'a' and 'b'");
    return apply_operator(*op, a->second, b->second);
  }

 private:
  static std::optional<Operator> resolve(const std::string& tool) {
    if (tool.rfind(kOperatorToolPrefix, 0) != 0) return std::nullopt;
    return parse_operator(std::string_view(tool).substr(kOperatorToolPrefix.size()));
  }
};

// Canned outputs for the nine fixture tools. Values are synthetic.
class StubRuntime final : public ToolRuntime {
 public:
  bool covers(const std::string& tool) const override {
    static const std::array<std::string_view, 9> kTools = {
        "works_list", "summarize_objects", "prioritize_objects", "add_work_items_to_sprint", "get_sprint_id",
        "get_similar_work_items", "search_object_by_name", "create_actionable_tasks_from_text", "who_am_i"};
    return std::find(kTools.begin(), kTools.end(), tool) != kTools.end();
  }

  RuntimeValue invoke(const std::string& tool, const ResolvedArgs& args) override {
    if (tool == "who_am_i") return "USER-001";
    if (tool == "get_sprint_id") return "SPRINT-042";
    if (tool == "add_work_items_to_sprint") return true;
    if (tool == "search_object_by_name") {
      std::string q = text_arg(args, "query");
      return "OBJ-" + hex64(fnv1a64(q)).substr(0, 6);
    }
    if (tool == "works_list") {
      std::string owner = "USER-001";
      if (auto it = args.find("owned_by"); it != args.end() && it->second.is_list() && !it->second.as_list().empty() &&
                                           it->second.as_list().front().is_text()) {
        owner = it->second.as_list().front().as_text();
      }
      return RuntimeValue::List{work_item("WI-101", "Fix login timeout", "p2", owner),
                                work_item("WI-102", "Crash on empty sprint", "p0", owner)};
    }
    if (tool == "get_similar_work_items") {
      return RuntimeValue::List{work_item("WI-201", "Login timeout on mobile", "p1", "USER-007"),
                                work_item("WI-202", "Session expires early", "p3", "USER-009")};
    }
    if (tool == "create_actionable_tasks_from_text") {
      std::string text = text_arg(args, "text");
      return RuntimeValue::List{work_item("WI-301", text.substr(0, 40), "p2", "USER-001")};
    }
    if (tool == "prioritize_objects") {
      auto items = list_arg(args, "objects");
      std::stable_sort(items.begin(), items.end(), [](const RuntimeValue& x, const RuntimeValue& y) {
        return priority(x) < priority(y);
      });
      return items;
    }
    if (tool == "summarize_objects") {
      auto items = list_arg(args, "objects");
      std::string ids;
      for (const auto& it : items) {
        if (!it.is_object()) continue;
        if (const auto* id = it.as_object().field("id"); id && id->is_text()) ids += (ids.empty() ? "" : ", ") + id->as_text();
      }
      return "Summary of " + std::to_string(items.size()) + " objects: " + ids;
    }
    throw ExecutionError(std::nullopt, "stub runtime does not cover tool " + tool);
  }

 private:
  static RuntimeValue work_item(std::string id, std::string title, std::string prio, std::string owner) {
    OpaqueObject o;
    o.type_name = "WorkItem";
    o.fields = {{"id", std::move(id)}, {"title", std::move(title)}, {"priority", std::move(prio)}, {"owned_by", std::move(owner)}};
    return o;
  }

  static std::string priority(const RuntimeValue& v) {
    if (!v.is_object()) return "~";
    const auto* p = v.as_object().field("priority");
    return p && p->is_text() ? p->as_text() : "~";
  }

  static std::string text_arg(const ResolvedArgs& args, const std::string& name) {
    auto it = args.find(name);
    return it != args.end() && it->second.is_text() ? it->second.as_text() : std::string();
  }

  static RuntimeValue::List list_arg(const ResolvedArgs& args, const std::string& name) {
    auto it = args.find(name);
    if (it == args.end()) return {};
    if (it->second.is_list()) return it->second.as_list();
    return {it->second};
  }
};

// First runtime covering a tool wins.
class CompositeRuntime final : public ToolRuntime {
 public:
  explicit CompositeRuntime(std::vector<std::shared_ptr<ToolRuntime>> parts) : parts_(std::move(parts)) {}

  bool covers(const std::string& tool) const override { return find(tool) != nullptr; }

  RuntimeValue invoke(const std::string& tool, const ResolvedArgs& args) override {
    auto* r = find(tool);
    if (!r) throw ExecutionError(std::nullopt, "no runtime covers tool " + tool);
    return r->invoke(tool, args);
  }

 private:
  ToolRuntime* find(const std::string& tool) const {
    for (const auto& p : parts_) {
      if (p->covers(tool)) return p.get();
    }
    return nullptr;
  }

  std::vector<std::shared_ptr<ToolRuntime>> parts_;
};

// ---------------------------------------------------------------------------
// Execution

struct ExecutionStep {
  std::string tool_name;
  ResolvedArgs arguments;
  RuntimeValue output;
  double duration_ms = 0;
};

struct ExecutionTrace {
  std::vector<ExecutionStep> steps;

  std::vector<RuntimeValue> outputs() const {
    std::vector<RuntimeValue> out;
    for (const auto& s : steps) out.push_back(s.output);
    return out;
  }
};

inline Json to_json(const ExecutionTrace& t) {
  Json steps = Json::array();
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& s = t.steps[i];
    Json args = Json::object();
    for (const auto& [k, v] : s.arguments) args[k] = to_json(v);
    steps.push_back({{"step", i}, {"tool_name", s.tool_name}, {"arguments", std::move(args)},
                     {"output", to_json(s.output)}, {"duration_ms", s.duration_ms}});
  }
  return {{"steps", std::move(steps)}};
}

namespace detail {

inline RuntimeValue resolve_value(const ArgValue& v, const std::vector<ExecutionStep>& done) {
  if (v.is_ref()) return done.at(v.as_ref().index).output;
  if (v.is_literal()) return from_json(v.as_literal());
  RuntimeValue::List l;
  for (const auto& e : v.as_list()) l.push_back(resolve_value(e, done));
  return l;
}

}  // namespace detail

// Runs calls strictly in order. Everything that can be checked up front
// (coverage, reference direction, type-graph compatibility) is checked
// before the first invocation.
inline ExecutionTrace execute(const Plan& plan, ToolRuntime& runtime, const TypeGraph& graph) {
  for (std::size_t i = 0; i < plan.calls.size(); ++i) {
    if (!runtime.covers(plan.calls[i].tool_name)) {
      throw ExecutionError(i, "no runtime covers tool '" + plan.calls[i].tool_name + "'");
    }
  }
  if (auto diags = validate_refs(plan); !diags.empty()) {
    throw ExecutionError(std::nullopt, "invalid back-reference at " + diags.front().location + ": " + diags.front().message);
  }
  for (std::size_t i = 0; i < plan.calls.size(); ++i) {
    for (const auto& arg : plan.calls[i].arguments) {
      auto r = check_ref(graph, plan, i, arg.name);
      if (r.kind == CheckResult::Kind::kNotAPrevRef) continue;
      if (!r.compatible()) throw ExecutionError(i, "argument '" + arg.name + "': " + r.reason);
      if (r.wrapping_mismatch) throw ExecutionError(i, "argument '" + arg.name + "': " + r.reason + " (repair the plan first)");
    }
  }
  ExecutionTrace trace;
  for (std::size_t i = 0; i < plan.calls.size(); ++i) {
    const auto& call = plan.calls[i];
    ExecutionStep step;
    step.tool_name = call.tool_name;
    for (const auto& arg : call.arguments) step.arguments[arg.name] = detail::resolve_value(arg.value, trace.steps);
    auto t0 = std::chrono::steady_clock::now();
    try {
      step.output = runtime.invoke(call.tool_name, step.arguments);
    } catch (const ExecutionError& e) {
      throw ExecutionError(i, e.what());
    } catch (const std::exception& e) {
      throw ExecutionError(i, std::string("tool '") + call.tool_name + "' failed: " + e.what());
    }
    step.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

}  // namespace chainplan
