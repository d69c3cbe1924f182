#pragma once

// Character-level acceptor for schema-valid plan texts, decoding sessions
// over it (next-character sets, vocabulary masks) and greedy projection of
// arbitrary text onto the accepted language.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chainplan/core.hpp"
#include "chainplan/plan.hpp"
#include "chainplan/registry.hpp"

namespace chainplan {

struct SchemaLimits {
  std::uint16_t max_string = 512;  // content characters per string literal
  std::uint16_t max_digits = 12;   // per integer/fraction digit run
  std::uint16_t max_exponent_digits = 2;
  std::uint16_t max_calls = 64;    // calls per plan (items per sub-task list)
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

namespace detail {

enum class StrMode : std::uint8_t { kFree, kLiteralOrRef, kRefOnly, kNoRef };
enum class ScalarKind : std::uint8_t { kNone, kString, kNumber, kWord };
enum class StepResult : std::uint8_t { kConsumed, kDone, kEndedBefore, kReject };

inline constexpr std::string_view kRefPattern = "$$PREV[";
inline constexpr std::uint8_t kDiverged = 0xff;
inline constexpr std::array<std::string_view, 3> kWords = {"true", "false", "null"};

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

struct ScalarState {
  ScalarKind kind = ScalarKind::kNone;
  std::uint8_t mode = 0;  // StrMode (strings), flag bits (numbers), word id (words)
  std::uint8_t phase = 0;
  std::uint8_t prefix = 0;  // progress against "$$PREV["
  std::uint8_t digits = 0;  // digits in a back-reference index
  std::uint16_t len = 0;    // string length, digit run, or word offset
  std::uint16_t ref_value = 0;
  std::uint16_t ref_limit = 0;  // back-references must be < ref_limit

  bool operator==(const ScalarState&) const = default;
};

inline constexpr std::uint8_t kNumFloat = 1;
inline constexpr std::uint8_t kNumMinus = 2;

inline ScalarState make_string(StrMode mode, std::uint16_t ref_limit) {
  ScalarState s;
  s.kind = ScalarKind::kString;
  s.mode = static_cast<std::uint8_t>(mode);
  s.ref_limit = ref_limit;
  return s;
}

inline ScalarState make_number(std::uint8_t flags) {
  ScalarState s;
  s.kind = ScalarKind::kNumber;
  s.mode = flags;
  return s;
}

// String body after the opening quote. Phases: 0 content, 1 escape,
// 2 reference digits, 3 reference closed (only the quote may follow).
inline StepResult string_step(ScalarState& s, char c, const SchemaLimits& lim) {
  auto mode = static_cast<StrMode>(s.mode);
  switch (s.phase) {
    case 3:
      return c == '"' ? StepResult::kDone : StepResult::kReject;
    case 2:
      if (is_digit(c)) {
        unsigned d = static_cast<unsigned>(c - '0');
        unsigned next = 0;
        if (s.digits == 0) {
          next = d;
        } else {
          if (s.ref_value == 0) return StepResult::kReject;  // no leading zeros
          next = s.ref_value * 10u + d;
        }
        if (next >= s.ref_limit) return StepResult::kReject;
        s.ref_value = static_cast<std::uint16_t>(next);
        ++s.digits;
        return StepResult::kConsumed;
      }
      if (c == ']' && s.digits > 0) {
        s.phase = 3;
        return StepResult::kConsumed;
      }
      return StepResult::kReject;
    case 1:
      switch (c) {
        case '"': case '\\': case '/': case 'b': case 'f': case 'n': case 'r': case 't':
          s.phase = 0;
          return StepResult::kConsumed;
        default:
          return StepResult::kReject;
      }
    default:
      break;
  }
  if (c == '"') {
    if (mode == StrMode::kRefOnly) return StepResult::kReject;
    if (s.prefix == kRefPattern.size() - 1) return StepResult::kReject;  // bare "$$PREV"
    return StepResult::kDone;
  }
  if (c < 0x20 || c > 0x7e) return StepResult::kReject;
  if (s.len >= lim.max_string) return StepResult::kReject;
  if (mode == StrMode::kFree) {
    ++s.len;
    if (c == '\\') s.phase = 1;
    return StepResult::kConsumed;
  }
  if (s.prefix != kDiverged) {
    if (c == kRefPattern[s.prefix]) {
      bool refs = mode == StrMode::kLiteralOrRef || mode == StrMode::kRefOnly;
      if (s.prefix == kRefPattern.size() - 2 && !(refs && s.ref_limit > 0)) return StepResult::kReject;
      ++s.prefix;
      ++s.len;
      if (s.prefix == kRefPattern.size()) s.phase = 2;
      return StepResult::kConsumed;
    }
    if (mode == StrMode::kRefOnly) return StepResult::kReject;
    if (s.prefix == kRefPattern.size() - 1) return StepResult::kReject;  // "$$PREV" + anything but '['
    s.prefix = kDiverged;
  }
  ++s.len;
  if (c == '\\') s.phase = 1;
  return StepResult::kConsumed;
}

// JSON number. Phases: 0 start, 1 after '-', 2 leading zero, 3 integer run,
// 4 fraction start, 5 fraction run, 6 exponent start, 7 exponent sign,
// 8 exponent run.
inline StepResult number_step(ScalarState& s, char c, const SchemaLimits& lim) {
  bool digit = is_digit(c);
  bool is_float = s.mode & kNumFloat;
  auto run = [&](std::uint16_t max) {
    if (s.len >= max) return StepResult::kReject;
    ++s.len;
    return StepResult::kConsumed;
  };
  auto start_run = [&](std::uint8_t phase) {
    s.phase = phase;
    s.len = 1;
    return StepResult::kConsumed;
  };
  auto int_start = [&]() {
    if (c == '0') {
      s.phase = 2;
      return StepResult::kConsumed;
    }
    return start_run(3);
  };
  switch (s.phase) {
    case 0:
      if (c == '-' && (s.mode & kNumMinus)) {
        s.phase = 1;
        return StepResult::kConsumed;
      }
      return digit ? int_start() : StepResult::kReject;
    case 1:
      return digit ? int_start() : StepResult::kReject;
    case 2:
    case 3:
    case 5:
      if (digit) return s.phase == 2 ? StepResult::kReject : run(lim.max_digits);
      if (is_float && c == '.' && s.phase != 5) {
        s.phase = 4;
        return StepResult::kConsumed;
      }
      if (is_float && (c == 'e' || c == 'E')) {
        s.phase = 6;
        return StepResult::kConsumed;
      }
      return StepResult::kEndedBefore;
    case 4:
      return digit ? start_run(5) : StepResult::kReject;
    case 6:
      if (c == '+' || c == '-') {
        s.phase = 7;
        return StepResult::kConsumed;
      }
      return digit ? start_run(8) : StepResult::kReject;
    case 7:
      return digit ? start_run(8) : StepResult::kReject;
    case 8:
      if (digit) return run(lim.max_exponent_digits);
      return StepResult::kEndedBefore;
    default:
      return StepResult::kReject;
  }
}

inline StepResult word_step(ScalarState& s, char c) {
  std::string_view w = kWords[s.mode];
  if (s.len >= w.size() || w[s.len] != c) return StepResult::kReject;
  ++s.len;
  return s.len == w.size() ? StepResult::kDone : StepResult::kConsumed;
}

inline StepResult scalar_step(ScalarState& s, char c, const SchemaLimits& lim) {
  switch (s.kind) {
    case ScalarKind::kString: return string_step(s, c, lim);
    case ScalarKind::kNumber: return number_step(s, c, lim);
    case ScalarKind::kWord: return word_step(s, c);
    default: return StepResult::kReject;
  }
}

// Starts a number or word scalar whose first character is `c`.
inline std::optional<ScalarState> begin_number(std::uint8_t flags, char c, const SchemaLimits& lim) {
  ScalarState s = make_number(flags);
  if (number_step(s, c, lim) != StepResult::kConsumed) return std::nullopt;
  return s;
}

inline std::optional<ScalarState> begin_word(char c, bool allow_null) {
  for (std::uint8_t i = 0; i < kWords.size(); ++i) {
    if (i == 2 && !allow_null) break;
    if (kWords[i][0] == c) {
      ScalarState s;
      s.kind = ScalarKind::kWord;
      s.mode = i;
      s.len = 1;
      return s;
    }
  }
  return std::nullopt;
}

// Trie over identifiers. Each node records which entries live below it so
// argument names already used in a call can be excluded.
class NameTrie {
 public:
  struct Node {
    std::vector<std::pair<char, std::uint32_t>> next;
    int terminal = -1;
    std::uint64_t mask = 0;
  };

  NameTrie() : nodes_(1) {}

  void insert(std::string_view name, int index) {
    std::uint32_t cur = 0;
    std::uint64_t bit = index < 64 ? (std::uint64_t{1} << index) : 0;
    nodes_[0].mask |= bit;
    for (char c : name) {
      auto nxt = child(cur, c);
      if (!nxt) {
        nodes_.push_back({});
        std::uint32_t id = static_cast<std::uint32_t>(nodes_.size() - 1);
        nodes_[cur].next.emplace_back(c, id);
        nxt = id;
      }
      cur = *nxt;
      nodes_[cur].mask |= bit;
    }
    nodes_[cur].terminal = index;
  }

  std::optional<std::uint32_t> child(std::uint32_t node, char c) const {
    for (const auto& [ch, id] : nodes_[node].next) {
      if (ch == c) return id;
    }
    return std::nullopt;
  }

  const Node& node(std::uint32_t id) const { return nodes_[id]; }

 private:
  std::vector<Node> nodes_;
};

}  // namespace detail

// Opaque automaton state. Value-semantic and cheap to copy, so speculative
// walks (vocabulary masks, repair lookahead) never disturb a session.
struct AutomatonState {
  std::uint8_t phase = 0;
  std::uint8_t literal = 0;
  std::uint16_t offset = 0;
  std::uint32_t node = 0;
  std::uint16_t tool = 0;
  std::uint16_t arg = 0;
  std::uint16_t call = 0;
  std::uint64_t used = 0;
  std::uint8_t value_phase = 0;
  std::uint8_t list_depth = 0;
  detail::ScalarState scalar;

  bool operator==(const AutomatonState&) const = default;
};

inline constexpr char kFirstPrintable = 0x20;
inline constexpr char kLastPrintable = 0x7e;

// Deterministic character acceptor: at most one successor per (state, char).
class CharAutomaton {
 public:
  virtual ~CharAutomaton() = default;

  virtual AutomatonState start() const = 0;
  virtual std::optional<AutomatonState> step(const AutomatonState& s, char c) const = 0;
  virtual bool accepting(const AutomatonState& s) const = 0;
  virtual const std::string& registry_version() const = 0;

  std::string allowed(const AutomatonState& s) const {
    std::string out;
    for (char c = kFirstPrintable; c <= kLastPrintable; ++c) {
      if (step(s, c)) out += c;
    }
    return out;
  }

  std::optional<AutomatonState> run(const AutomatonState& s, std::string_view text) const {
    AutomatonState cur = s;
    for (char c : text) {
      auto next = step(cur, c);
      if (!next) return std::nullopt;
      cur = *next;
    }
    return cur;
  }

  bool accepts(std::string_view text) const {
    auto end = run(start(), text);
    return end && accepting(*end);
  }
};

// Accepts exactly the canonical (whitespace-free) plan texts whose tool
// names, argument names and argument values conform to a registry.
class PlanAutomaton final : public CharAutomaton {
 public:
  PlanAutomaton(const Registry& registry, SchemaLimits limits) : limits_(limits), version_(registry.version()) {
    if (registry.empty()) throw SchemaError("cannot compile a schema for an empty registry");
    tools_ = registry.tools();
    for (std::size_t i = 0; i < tools_.size(); ++i) {
      tool_trie_.insert(tools_[i].name, static_cast<int>(i));
      if (tools_[i].arguments.size() > 64) throw SchemaError("tool '" + tools_[i].name + "' has more than 64 arguments");
      detail::NameTrie args;
      for (std::size_t j = 0; j < tools_[i].arguments.size(); ++j) args.insert(tools_[i].arguments[j].name, static_cast<int>(j));
      arg_tries_.push_back(std::move(args));
      std::uint64_t req = 0;
      for (std::size_t j = 0; j < tools_[i].arguments.size(); ++j) {
        if (tools_[i].arguments[j].required) req |= std::uint64_t{1} << j;
      }
      required_.push_back(req);
    }
  }

  AutomatonState start() const override { return {}; }
  bool accepting(const AutomatonState& s) const override { return s.phase == kAccept; }
  const std::string& registry_version() const override { return version_; }
  const std::vector<ToolSpec>& tools() const { return tools_; }
  const SchemaLimits& limits() const { return limits_; }

  std::optional<AutomatonState> step(const AutomatonState& in, char c) const override {
    AutomatonState s = in;
    if (advance(s, c)) return s;
    return std::nullopt;
  }

 private:
  enum Phase : std::uint8_t {
    kStart, kPlanOpen, kLiteral, kToolName, kArgsOpen, kArgName, kValue, kArgClose, kAfterArg, kCallClose, kAfterCall,
    kAccept
  };
  enum Literal : std::uint8_t { kCallHead, kCallMid, kArgHead, kArgMid };
  enum ValuePhase : std::uint8_t {
    kVStart, kVListOpen, kVAfterElem, kVScalar, kVObjOpen, kVObjKey, kVObjColon, kVObjValue, kVObjScalar,
    kVObjAfterValue, kVObjComma, kVDone
  };

  static constexpr std::array<std::string_view, 4> kLiterals = {
      R"({"tool_name":")", R"(,"arguments":[)", R"({"argument_name":")", R"(,"argument_value":)"};

  static void enter_literal(AutomatonState& s, Literal lit, std::uint16_t offset) {
    s.phase = kLiteral;
    s.literal = lit;
    s.offset = offset;
  }

  std::uint64_t all_args(const AutomatonState& s) const {
    std::size_t n = tools_[s.tool].arguments.size();
    return n == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  }

  bool has_unused_arg(const AutomatonState& s) const { return (s.used & all_args(s)) != all_args(s); }
  bool required_done(const AutomatonState& s) const { return (s.used & required_[s.tool]) == required_[s.tool]; }

  bool advance(AutomatonState& s, char c) const {
    switch (s.phase) {
      case kStart:
        if (c != '[') return false;
        s.phase = kPlanOpen;
        return true;
      case kPlanOpen:
        if (c == ']') {
          s.phase = kAccept;
          return true;
        }
        if (c == '{') {
          enter_literal(s, kCallHead, 1);
          return true;
        }
        return false;
      case kLiteral: {
        std::string_view lit = kLiterals[s.literal];
        if (c != lit[s.offset]) return false;
        if (++s.offset < lit.size()) return true;
        switch (s.literal) {
          case kCallHead:
            s.phase = kToolName;
            s.node = 0;
            break;
          case kCallMid:
            s.phase = kArgsOpen;
            break;
          case kArgHead:
            s.phase = kArgName;
            s.node = 0;
            break;
          case kArgMid:
            s.phase = kValue;
            s.value_phase = kVStart;
            s.list_depth = 0;
            s.scalar = {};
            break;
        }
        return true;
      }
      case kToolName: {
        if (c == '"') {
          int t = tool_trie_.node(s.node).terminal;
          if (t < 0) return false;
          s.tool = static_cast<std::uint16_t>(t);
          s.used = 0;
          enter_literal(s, kCallMid, 0);
          return true;
        }
        auto nxt = tool_trie_.child(s.node, c);
        if (!nxt) return false;
        s.node = *nxt;
        return true;
      }
      case kArgsOpen:
        if (c == ']' && required_done(s)) {
          s.phase = kCallClose;
          return true;
        }
        if (c == '{' && has_unused_arg(s)) {
          enter_literal(s, kArgHead, 1);
          return true;
        }
        return false;
      case kArgName: {
        const auto& trie = arg_tries_[s.tool];
        if (c == '"') {
          int a = trie.node(s.node).terminal;
          if (a < 0 || (s.used >> a) & 1u) return false;
          s.arg = static_cast<std::uint16_t>(a);
          s.used |= std::uint64_t{1} << a;
          enter_literal(s, kArgMid, 0);
          return true;
        }
        auto nxt = trie.child(s.node, c);
        if (!nxt || (trie.node(*nxt).mask & ~s.used) == 0) return false;
        s.node = *nxt;
        return true;
      }
      case kValue: {
        auto r = value_step(s, c);
        if (r == detail::StepResult::kReject) return false;
        if (r == detail::StepResult::kEndedBefore) {
          s.phase = kArgClose;
          return advance(s, c);
        }
        if (s.value_phase == kVDone) s.phase = kArgClose;
        return true;
      }
      case kArgClose:
        if (c != '}') return false;
        s.phase = kAfterArg;
        return true;
      case kAfterArg:
        if (c == ']' && required_done(s)) {
          s.phase = kCallClose;
          return true;
        }
        if (c == ',' && has_unused_arg(s)) {
          enter_literal(s, kArgHead, 0);
          return true;
        }
        return false;
      case kCallClose:
        if (c != '}') return false;
        s.phase = kAfterCall;
        return true;
      case kAfterCall:
        if (c == ']') {
          s.phase = kAccept;
          return true;
        }
        if (c == ',' && s.call + 1u < limits_.max_calls) {
          ++s.call;
          enter_literal(s, kCallHead, 0);
          return true;
        }
        return false;
      default:
        return false;
    }
  }

  const ValueType& type_at_depth(const AutomatonState& s, int depth) const {
    const ValueType* t = &tools_[s.tool].arguments[s.arg].value_type;
    for (int i = 0; i < depth; ++i) t = &t->element();
    return *t;
  }

  void finish_value(AutomatonState& s) const { s.value_phase = s.list_depth == 0 ? kVDone : kVAfterElem; }

  // Begins a value of the type expected at the current list depth.
  bool begin_value(AutomatonState& s, char c) const {
    using namespace detail;
    const ValueType& t = type_at_depth(s, s.list_depth);
    std::uint16_t limit = s.call;
    bool refs = s.list_depth <= 1 && limit > 0;
    if (c == '"' && t.kind() != ValueType::Kind::kString) {
      if (!refs) return false;
      s.scalar = make_string(StrMode::kRefOnly, limit);
      s.value_phase = kVScalar;
      return true;
    }
    switch (t.kind()) {
      case ValueType::Kind::kString:
        if (c != '"') return false;
        s.scalar = make_string(refs ? StrMode::kLiteralOrRef : StrMode::kNoRef, limit);
        s.value_phase = kVScalar;
        return true;
      case ValueType::Kind::kInteger:
      case ValueType::Kind::kFloat: {
        std::uint8_t flags = kNumMinus | (t.kind() == ValueType::Kind::kFloat ? kNumFloat : 0);
        auto n = begin_number(flags, c, limits_);
        if (!n) return false;
        s.scalar = *n;
        s.value_phase = kVScalar;
        return true;
      }
      case ValueType::Kind::kBoolean: {
        auto w = begin_word(c, false);
        if (!w) return false;
        s.scalar = *w;
        s.value_phase = kVScalar;
        return true;
      }
      case ValueType::Kind::kObject:
        if (c != '{') return false;
        s.value_phase = kVObjOpen;
        return true;
      case ValueType::Kind::kList:
        if (c != '[') return false;
        ++s.list_depth;
        s.value_phase = kVListOpen;
        return true;
    }
    return false;
  }

  detail::StepResult value_step(AutomatonState& s, char c) const {
    using namespace detail;
    auto ok = [](bool b) { return b ? StepResult::kConsumed : StepResult::kReject; };
    switch (s.value_phase) {
      case kVStart:
        return ok(begin_value(s, c));
      case kVListOpen:
        if (c == ']') {
          --s.list_depth;
          finish_value(s);
          return StepResult::kConsumed;
        }
        return ok(begin_value(s, c));
      case kVAfterElem:
        if (c == ',') {
          s.value_phase = kVStart;
          return StepResult::kConsumed;
        }
        if (c == ']') {
          --s.list_depth;
          finish_value(s);
          return StepResult::kConsumed;
        }
        return StepResult::kReject;
      case kVScalar: {
        auto r = scalar_step(s.scalar, c, limits_);
        if (r == StepResult::kDone) {
          finish_value(s);
          return StepResult::kConsumed;
        }
        if (r == StepResult::kEndedBefore) {
          finish_value(s);
          if (s.value_phase == kVDone) return StepResult::kEndedBefore;
          return value_step(s, c);
        }
        return r;
      }
      case kVObjOpen:
        if (c == '}') {
          finish_value(s);
          return StepResult::kConsumed;
        }
        [[fallthrough]];
      case kVObjComma:
        if (c != '"') return StepResult::kReject;
        s.scalar = make_string(StrMode::kNoRef, 0);
        s.value_phase = kVObjKey;
        return StepResult::kConsumed;
      case kVObjKey: {
        auto r = scalar_step(s.scalar, c, limits_);
        if (r == StepResult::kDone) s.value_phase = kVObjColon;
        return r == StepResult::kDone ? StepResult::kConsumed : r;
      }
      case kVObjColon:
        if (c != ':') return StepResult::kReject;
        s.value_phase = kVObjValue;
        return StepResult::kConsumed;
      case kVObjValue: {
        if (c == '"') {
          s.scalar = make_string(StrMode::kNoRef, 0);
        } else if (auto n = begin_number(kNumFloat | kNumMinus, c, limits_)) {
          s.scalar = *n;
        } else if (auto w = begin_word(c, true)) {
          s.scalar = *w;
        } else {
          return StepResult::kReject;
        }
        s.value_phase = kVObjScalar;
        return StepResult::kConsumed;
      }
      case kVObjScalar: {
        auto r = scalar_step(s.scalar, c, limits_);
        if (r == StepResult::kDone) {
          s.value_phase = kVObjAfterValue;
          return StepResult::kConsumed;
        }
        if (r == StepResult::kEndedBefore) {
          s.value_phase = kVObjAfterValue;
          return value_step(s, c);
        }
        return r;
      }
      case kVObjAfterValue:
        if (c == ',') {
          s.value_phase = kVObjComma;
          return StepResult::kConsumed;
        }
        if (c == '}') {
          finish_value(s);
          return StepResult::kConsumed;
        }
        return StepResult::kReject;
      case kVDone:
        return StepResult::kEndedBefore;
      default:
        return StepResult::kReject;
    }
  }

  SchemaLimits limits_;
  std::string version_;
  std::vector<ToolSpec> tools_;
  detail::NameTrie tool_trie_;
  std::vector<detail::NameTrie> arg_tries_;
  std::vector<std::uint64_t> required_;
};

// Accepts `[{"id":N,"thought":"...","tool_name":"<enum>"},...]`, the
// decomposition format where each sub-task names exactly one tool.
class SubtaskAutomaton final : public CharAutomaton {
 public:
  SubtaskAutomaton(const std::vector<std::string>& tool_names, SchemaLimits limits, std::string version)
      : limits_(limits), version_(std::move(version)), names_(tool_names) {
    if (tool_names.empty()) throw SchemaError("cannot compile a sub-task schema without tools");
    for (std::size_t i = 0; i < names_.size(); ++i) trie_.insert(names_[i], static_cast<int>(i));
  }

  AutomatonState start() const override { return {}; }
  bool accepting(const AutomatonState& s) const override { return s.phase == kAccept; }
  const std::string& registry_version() const override { return version_; }

  std::optional<AutomatonState> step(const AutomatonState& in, char c) const override {
    AutomatonState s = in;
    if (advance(s, c)) return s;
    return std::nullopt;
  }

 private:
  enum Phase : std::uint8_t { kStart, kOpen, kLiteral, kId, kThought, kToolName, kItemClose, kAfterItem, kAccept };
  enum Literal : std::uint8_t { kHead, kThoughtKey, kToolKey };
  static constexpr std::array<std::string_view, 3> kLiterals = {R"({"id":)", R"(,"thought":")", R"(,"tool_name":")"};

  bool advance(AutomatonState& s, char c) const {
    using namespace detail;
    switch (s.phase) {
      case kStart:
        if (c != '[') return false;
        s.phase = kOpen;
        return true;
      case kOpen:
        if (c == ']') {
          s.phase = kAccept;
          return true;
        }
        if (c != '{') return false;
        s.phase = kLiteral;
        s.literal = kHead;
        s.offset = 1;
        return true;
      case kLiteral: {
        std::string_view lit = kLiterals[s.literal];
        if (c != lit[s.offset]) return false;
        if (++s.offset < lit.size()) return true;
        if (s.literal == kHead) {
          s.phase = kId;
          s.scalar = make_number(0);
        } else if (s.literal == kThoughtKey) {
          s.phase = kThought;
          s.scalar = make_string(StrMode::kFree, 0);
        } else {
          s.phase = kToolName;
          s.node = 0;
        }
        return true;
      }
      case kId: {
        auto r = number_step(s.scalar, c, limits_);
        if (r == StepResult::kConsumed) return true;
        if (r != StepResult::kEndedBefore) return false;
        if (c != ',') return false;
        s.phase = kLiteral;
        s.literal = kThoughtKey;
        s.offset = 1;
        return true;
      }
      case kThought: {
        auto r = string_step(s.scalar, c, limits_);
        if (r == StepResult::kReject) return false;
        if (r == StepResult::kDone) {
          s.phase = kLiteral;
          s.literal = kToolKey;
          s.offset = 0;
        }
        return true;
      }
      case kToolName: {
        if (c == '"') {
          if (trie_.node(s.node).terminal < 0) return false;
          s.phase = kItemClose;
          return true;
        }
        auto nxt = trie_.child(s.node, c);
        if (!nxt) return false;
        s.node = *nxt;
        return true;
      }
      case kItemClose:
        if (c != '}') return false;
        s.phase = kAfterItem;
        return true;
      case kAfterItem:
        if (c == ']') {
          s.phase = kAccept;
          return true;
        }
        if (c == ',' && s.call + 1u < limits_.max_calls) {
          ++s.call;
          s.phase = kLiteral;
          s.literal = kHead;
          s.offset = 0;
          return true;
        }
        return false;
      default:
        return false;
    }
  }

  SchemaLimits limits_;
  std::string version_;
  std::vector<std::string> names_;
  detail::NameTrie trie_;
};

inline std::shared_ptr<const PlanAutomaton> compile_schema(const Registry& registry, SchemaLimits limits = {}) {
  return std::make_shared<const PlanAutomaton>(registry, limits);
}

inline std::shared_ptr<const SubtaskAutomaton> compile_subtask_schema(const Registry& registry, SchemaLimits limits = {}) {
  if (registry.empty()) throw SchemaError("cannot compile a sub-task schema for an empty registry");
  return std::make_shared<const SubtaskAutomaton>(registry.names(), limits, registry.version());
}

struct AllowedNext {
  std::string chars;
  bool end_of_text = false;
};

class RejectError : public Error {
 public:
  RejectError(std::size_t position, char rejected, std::string allowed)
      : Error(format(position, rejected, allowed)), position_(position), allowed_(std::move(allowed)) {}

  std::size_t position() const { return position_; }
  const std::string& allowed() const { return allowed_; }

 private:
  static std::string format(std::size_t pos, char c, const std::string& allowed) {
    return "schema rejects '" + std::string(1, c) + "' at position " + std::to_string(pos) + "; allowed: \"" + allowed + "\"";
  }

  std::size_t position_;
  std::string allowed_;
};

// Incremental decode over an automaton. The emitted text is always a prefix
// of some accepted string.
class DecoderSession {
 public:
  explicit DecoderSession(std::shared_ptr<const CharAutomaton> automaton)
      : automaton_(std::move(automaton)), state_(automaton_->start()) {}

  const CharAutomaton& automaton() const { return *automaton_; }
  const std::string& text() const { return buffer_; }
  const AutomatonState& state() const { return state_; }
  bool accepting() const { return automaton_->accepting(state_); }

  AllowedNext allowed_next() const { return {automaton_->allowed(state_), accepting()}; }

  // Speculative: the session itself is never modified.
  std::vector<bool> mask_vocabulary(const std::vector<std::string>& vocabulary) const {
    std::vector<bool> mask;
    mask.reserve(vocabulary.size());
    for (const auto& tok : vocabulary) mask.push_back(!tok.empty() && automaton_->run(state_, tok).has_value());
    return mask;
  }

  // Atomic: on rejection the session is left untouched.
  DecoderSession& advance(std::string_view text) {
    AutomatonState cur = state_;
    for (std::size_t i = 0; i < text.size(); ++i) {
      auto next = automaton_->step(cur, text[i]);
      if (!next) throw RejectError(buffer_.size() + i, text[i], automaton_->allowed(cur));
      cur = *next;
    }
    state_ = cur;
    buffer_.append(text);
    return *this;
  }

 private:
  std::shared_ptr<const CharAutomaton> automaton_;
  AutomatonState state_;
  std::string buffer_;
};

struct RepairEdit {
  enum class Kind { kSkip, kInsert };
  Kind kind = Kind::kSkip;
  std::size_t candidate_offset = 0;  // where in the input the edit applies
  std::string text;

  bool operator==(const RepairEdit&) const = default;
};

struct EnforcedText {
  std::string text;
  std::vector<RepairEdit> edits;

  bool unchanged() const { return edits.empty(); }
};

inline Json to_json(const RepairEdit& e) {
  return {{"kind", e.kind == RepairEdit::Kind::kSkip ? "skip" : "insert"}, {"offset", e.candidate_offset}, {"text", e.text}};
}

namespace detail {

inline bool is_json_space(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

// Insertion preference when several characters are allowed: closers and
// separators first, then openers, then digits, then the smallest character.
inline char pick_insertion(const std::string& allowed) {
  if (allowed.size() == 1) return allowed[0];
  for (char c : std::string_view("]}\",:{[0123456789")) {
    if (allowed.find(c) != std::string::npos) return c;
  }
  return *std::min_element(allowed.begin(), allowed.end());
}

inline void log_edit(std::vector<RepairEdit>& log, RepairEdit::Kind kind, std::size_t offset, char c) {
  if (!log.empty()) {
    auto& last = log.back();
    bool contiguous = kind == RepairEdit::Kind::kSkip ? last.candidate_offset + last.text.size() == offset
                                                     : last.candidate_offset == offset;
    if (last.kind == kind && contiguous) {
      last.text += c;
      return;
    }
  }
  log.push_back({kind, offset, std::string(1, c)});
}

}  // namespace detail

struct ProjectionOptions {
  std::size_t lookahead = 16;
};

// Greedy projection of `candidate` onto the automaton's language. Accepted
// inputs come back unchanged with an empty edit log.
inline EnforcedText enforced_repair(const CharAutomaton& automaton, std::string_view candidate,
                                    ProjectionOptions options = {}) {
  using Kind = RepairEdit::Kind;
  EnforcedText out;
  AutomatonState state = automaton.start();
  std::size_t i = 0;
  const std::size_t n = candidate.size();

  // Leading prose or code fences: resume at the first '[' when the input
  // does not already open with one.
  if (!automaton.accepts(candidate)) {
    std::size_t first = 0;
    while (first < n && detail::is_json_space(candidate[first])) ++first;
    if (first < n && candidate[first] != '[') {
      std::size_t bracket = candidate.find('[', first);
      if (bracket != std::string_view::npos) first = bracket;
    }
    for (; i < first; ++i) detail::log_edit(out.edits, Kind::kSkip, i, candidate[i]);
  }

  const std::size_t insertion_cap = 1'000'000 + 64 * n;
  std::size_t insertions = 0;
  auto insert = [&](const std::string& allowed) {
    char c = detail::pick_insertion(allowed);
    state = *automaton.step(state, c);
    out.text += c;
    detail::log_edit(out.edits, Kind::kInsert, i, c);
    if (++insertions > insertion_cap) throw std::logic_error("enforced_repair: insertion cap exceeded");
  };

  while (true) {
    if (i >= n) {
      if (automaton.accepting(state)) break;
      insert(automaton.allowed(state));
      continue;
    }
    char c = candidate[i];
    if (auto next = automaton.step(state, c)) {
      if (c == ',') {
        // Trailing comma: the closer that follows is legal here but not
        // after the comma.
        std::size_t j = i + 1;
        while (j < n && detail::is_json_space(candidate[j])) ++j;
        if (j < n && (candidate[j] == ']' || candidate[j] == '}') && automaton.step(state, candidate[j]) &&
            !automaton.step(*next, candidate[j])) {
          detail::log_edit(out.edits, Kind::kSkip, i, c);
          ++i;
          continue;
        }
      }
      state = *next;
      out.text += c;
      ++i;
      continue;
    }
    std::string allowed = automaton.allowed(state);
    if (allowed.empty() || detail::is_json_space(c)) {
      // Past the end of an accepted plan, or insignificant whitespace.
      detail::log_edit(out.edits, Kind::kSkip, i, c);
      ++i;
      continue;
    }
    if (allowed.size() > 1) {
      std::size_t stop = std::min(n, i + 1 + options.lookahead);
      std::size_t j = i + 1;
      while (j < stop && !automaton.step(state, candidate[j])) ++j;
      if (j < stop) {
        for (; i < j; ++i) detail::log_edit(out.edits, Kind::kSkip, i, candidate[i]);
        continue;
      }
    }
    insert(allowed);
  }
  return out;
}

// Sub-task decomposition entries as produced under SubtaskAutomaton.
struct SubTask {
  std::size_t index = 0;
  std::string thought;
  std::string tool_name;

  bool operator==(const SubTask&) const = default;
};

inline std::vector<SubTask> parse_subtasks(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("sub-task list is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw Error("sub-task list must be a JSON array");
  std::vector<SubTask> out;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("id") || !item.contains("thought") || !item.contains("tool_name")) {
      throw Error("sub-task entries need id, thought and tool_name");
    }
    out.push_back({item.at("id").get<std::size_t>(), item.at("thought").get<std::string>(),
                   item.at("tool_name").get<std::string>()});
  }
  return out;
}

inline std::string serialize_subtasks(const std::vector<SubTask>& tasks) {
  Json arr = Json::array();
  for (const auto& t : tasks) arr.push_back({{"id", t.index}, {"thought", t.thought}, {"tool_name", t.tool_name}});
  return arr.dump();
}

}  // namespace chainplan
