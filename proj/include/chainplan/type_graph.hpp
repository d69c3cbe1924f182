#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"

namespace chainplan {

// from_tool's output feeds to_tool.to_argument directly (weight 1) or as an
// element of a list-typed argument (weight 2).
struct TypeEdge {
  std::string from_tool;
  std::string to_tool;
  std::string to_argument;
  int weight = 1;

  auto key() const { return std::tie(from_tool, to_tool, to_argument); }
  friend bool operator==(const TypeEdge& a, const TypeEdge& b) { return a.key() == b.key() && a.weight == b.weight; }
  friend bool operator<(const TypeEdge& a, const TypeEdge& b) {
    return std::tie(a.from_tool, a.to_tool, a.to_argument, a.weight) <
           std::tie(b.from_tool, b.to_tool, b.to_argument, b.weight);
  }
};

class TypeGraph {
 public:
  TypeGraph() = default;

  const std::string& registry_version() const { return registry_version_; }
  const std::vector<TypeEdge>& edges() const { return edges_; }
  bool has_tool(const std::string& name) const { return tools_.count(name) > 0; }

  std::optional<int> weight(const std::string& from, const std::string& to, const std::string& argument) const {
    auto it = index_.find(std::make_tuple(from, to, argument));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  Json to_json() const {
    Json arr = Json::array();
    for (const auto& e : edges_) {
      arr.push_back({{"from", e.from_tool}, {"to", e.to_tool}, {"argument", e.to_argument}, {"weight", e.weight}});
    }
    return arr;
  }

  friend TypeGraph build_graph(const Registry& registry);

 private:
  std::string registry_version_;
  std::vector<TypeEdge> edges_;
  std::set<std::string> tools_;
  std::map<std::tuple<std::string, std::string, std::string>, int> index_;
};

inline TypeGraph build_graph(const Registry& registry) {
  TypeGraph g;
  g.registry_version_ = registry.version();
  for (const auto& from : registry.tools()) {
    g.tools_.insert(from.name);
    for (const auto& to : registry.tools()) {
      for (const auto& arg : to.arguments) {
        int w = 0;
        if (from.returns == arg.value_type) {
          w = 1;
        } else if (arg.value_type.is_list() && arg.value_type.element() == from.returns) {
          w = 2;
        }
        if (w == 0) continue;
        if (g.index_.emplace(std::make_tuple(from.name, to.name, arg.name), w).second) {
          g.edges_.push_back({from.name, to.name, arg.name, w});
        }
      }
    }
  }
  std::sort(g.edges_.begin(), g.edges_.end());
  return g;
}

struct CheckResult {
  enum class Kind { kCompatible, kIncompatible, kNotAPrevRef };

  Kind kind = Kind::kNotAPrevRef;
  int weight = 0;
  bool wrapping_mismatch = false;
  std::string reason;

  bool compatible() const { return kind == Kind::kCompatible; }
  bool clean() const { return kind == Kind::kCompatible && !wrapping_mismatch; }

  static CheckResult compatible_with(int w, bool mismatch, std::string note = {}) {
    return {Kind::kCompatible, w, mismatch, std::move(note)};
  }
  static CheckResult incompatible(std::string why) { return {Kind::kIncompatible, 0, false, std::move(why)}; }
  static CheckResult not_a_ref() { return {}; }
};

namespace detail {

inline CheckResult check_single_ref(const TypeGraph& graph, const Plan& plan, std::size_t position,
                                    const std::string& argument, std::size_t ref, bool listed) {
  const std::string& to = plan.calls[position].tool_name;
  if (ref >= position) return CheckResult::incompatible("reference " + prev_ref_text(ref) + " does not point to an earlier call");
  const std::string& from = plan.calls[ref].tool_name;
  if (!graph.has_tool(to) || !graph.has_tool(from)) return CheckResult::incompatible("unknown tool");
  auto w = graph.weight(from, to, argument);
  if (!w) return CheckResult::incompatible("no edge " + from + " -> " + to + "." + argument);
  bool mismatch = (*w == 1) == listed;
  std::string note;
  if (mismatch) note = *w == 2 ? "bare value where an array is required" : "array where a bare value is required";
  return CheckResult::compatible_with(*w, mismatch, std::move(note));
}

}  // namespace detail

// Checks the back-reference(s) in one argument of the call at `position`.
// With several references in a list, the first non-clean result is returned.
inline CheckResult check_ref(const TypeGraph& graph, const Plan& plan, std::size_t position, const std::string& argument) {
  if (position >= plan.calls.size()) throw std::out_of_range("check_ref: position out of range");
  const Argument* arg = plan.calls[position].find(argument);
  if (!arg) throw std::invalid_argument("check_ref: call " + std::to_string(position) + " has no argument '" + argument + "'");
  if (arg->value.is_ref()) {
    return detail::check_single_ref(graph, plan, position, argument, arg->value.as_ref().index, false);
  }
  if (!arg->value.is_list()) return CheckResult::not_a_ref();
  std::optional<CheckResult> first;
  for (const auto& e : arg->value.as_list()) {
    if (!e.is_ref()) continue;
    auto r = detail::check_single_ref(graph, plan, position, argument, e.as_ref().index, true);
    if (!r.clean()) return r;
    if (!first) first = r;
  }
  return first ? *first : CheckResult::not_a_ref();
}

struct Repair {
  enum class Action { kWrapped, kUnwrapped, kUnrepaired };

  std::size_t position = 0;
  std::string argument;
  Action action = Action::kUnrepaired;
  std::string detail;

  bool applied() const { return action != Action::kUnrepaired; }
};

inline const char* to_string(Repair::Action a) {
  switch (a) {
    case Repair::Action::kWrapped: return "wrapped";
    case Repair::Action::kUnwrapped: return "unwrapped";
    case Repair::Action::kUnrepaired: return "unrepaired";
  }
  return "";
}

struct RepairResult {
  Plan plan;
  std::vector<Repair> repairs;

  std::size_t applied_count() const {
    return static_cast<std::size_t>(std::count_if(repairs.begin(), repairs.end(), [](const Repair& r) { return r.applied(); }));
  }
};

inline Json to_json(const Repair& r) {
  return {{"position", r.position}, {"argument", r.argument}, {"action", to_string(r.action)}, {"detail", r.detail}};
}

// Rewraps every edged back-reference to agree with its edge weight. Tool
// order, names and literal values are never touched.
inline RepairResult repair_plan(const TypeGraph& graph, const Plan& plan) {
  RepairResult out{plan, {}};
  for (std::size_t p = 0; p < out.plan.calls.size(); ++p) {
    for (auto& arg : out.plan.calls[p].arguments) {
      auto& v = arg.value;
      if (v.is_ref()) {
        auto r = detail::check_single_ref(graph, out.plan, p, arg.name, v.as_ref().index, false);
        if (!r.compatible()) {
          out.repairs.push_back({p, arg.name, Repair::Action::kUnrepaired, r.reason});
        } else if (r.wrapping_mismatch) {
          std::size_t idx = v.as_ref().index;
          v = ArgValue::list({ArgValue::ref(idx)});
          out.repairs.push_back({p, arg.name, Repair::Action::kWrapped, "wrapped " + prev_ref_text(idx) + " into an array"});
        }
      } else if (v.is_list()) {
        auto& elems = v.as_list();
        for (const auto& e : elems) {
          if (!e.is_ref()) continue;
          std::size_t idx = e.as_ref().index;
          auto r = detail::check_single_ref(graph, out.plan, p, arg.name, idx, true);
          if (!r.compatible()) {
            out.repairs.push_back({p, arg.name, Repair::Action::kUnrepaired, r.reason});
          } else if (r.wrapping_mismatch) {
            if (elems.size() == 1) {
              v = ArgValue::ref(idx);
              out.repairs.push_back({p, arg.name, Repair::Action::kUnwrapped, "unwrapped " + prev_ref_text(idx) + " from its array"});
              break;
            }
            out.repairs.push_back({p, arg.name, Repair::Action::kUnrepaired,
                                   "cannot unwrap " + prev_ref_text(idx) + " without dropping sibling elements"});
          }
        }
      }
    }
  }
  return out;
}

// Everything `check` reports: unknown tools and arguments, missing required
// arguments, back-references that do not point backwards, and references
// the type graph rejects or that need rewrapping.
inline std::vector<Diagnostic> check_plan(const Plan& plan, const Registry& registry, const TypeGraph& graph) {
  std::vector<Diagnostic> out = validate_refs(plan);
  std::set<std::string> bad_refs;
  for (const auto& d : out) bad_refs.insert(d.location);
  for (std::size_t p = 0; p < plan.calls.size(); ++p) {
    const auto& call = plan.calls[p];
    std::string call_loc = pointer_join("", p);
    const ToolSpec* tool = registry.find(call.tool_name);
    if (!tool) {
      out.push_back({Severity::kError, pointer_join(call_loc, "tool_name"), "unknown tool '" + call.tool_name + "'"});
      continue;
    }
    for (const auto& spec : tool->arguments) {
      if (spec.required && !call.find(spec.name)) {
        out.push_back({Severity::kError, pointer_join(call_loc, "arguments"),
                       "missing required argument '" + spec.name + "' of " + tool->name});
      }
    }
    for (const auto& arg : call.arguments) {
      std::string loc = pointer_join(pointer_join(call_loc, "arguments"), arg.name);
      if (!tool->find_argument(arg.name)) {
        out.push_back({Severity::kError, loc, "unknown argument '" + arg.name + "' for " + tool->name});
        continue;
      }
      if (bad_refs.count(loc)) continue;
      auto r = check_ref(graph, plan, p, arg.name);
      if (r.kind == CheckResult::Kind::kNotAPrevRef || r.clean()) continue;
      out.push_back({Severity::kError, loc, r.compatible() ? r.reason + " (repair can fix this)" : r.reason});
    }
  }
  return out;
}

}  // namespace chainplan
