#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"

namespace chainplan {

class RegistryError : public Error {
 public:
  RegistryError(std::string tool, std::string path, const std::string& what)
      : Error(format(tool, path, what)), tool_(std::move(tool)), path_(std::move(path)) {}

  const std::string& tool() const { return tool_; }
  const std::string& path() const { return path_; }

 private:
  static std::string format(const std::string& tool, const std::string& path, const std::string& what) {
    std::string msg = "registry: " + what;
    if (!tool.empty()) msg += " (tool '" + tool + "')";
    if (!path.empty()) msg += " at " + path;
    return msg;
  }

  std::string tool_;
  std::string path_;
};

// Type of an argument or a tool result. Lists nest at most two deep.
class ValueType {
 public:
  enum class Kind { kString, kInteger, kFloat, kBoolean, kList, kObject };

  static constexpr int kMaxListDepth = 2;

  ValueType() = default;

  static ValueType string() { return ValueType(Kind::kString); }
  static ValueType integer() { return ValueType(Kind::kInteger); }
  static ValueType floating() { return ValueType(Kind::kFloat); }
  static ValueType boolean() { return ValueType(Kind::kBoolean); }
  static ValueType object(std::string type_name) {
    if (!is_identifier(type_name)) throw Error("object type name must be a nonempty identifier: '" + type_name + "'");
    ValueType t(Kind::kObject);
    t.type_name_ = std::move(type_name);
    return t;
  }
  static ValueType list(ValueType element) {
    if (element.list_depth() >= kMaxListDepth) throw Error("list nesting deeper than 2 is not supported");
    ValueType t(Kind::kList);
    t.element_ = std::make_shared<const ValueType>(std::move(element));
    return t;
  }

  // Parses the file keyword grammar: "string", "integer", "float", "boolean",
  // "array of <T>", "object:<TypeName>".
  static std::optional<ValueType> parse(std::string_view keyword) {
    if (keyword == "string") return string();
    if (keyword == "integer") return integer();
    if (keyword == "float") return floating();
    if (keyword == "boolean") return boolean();
    constexpr std::string_view kArray = "array of ";
    constexpr std::string_view kObject = "object:";
    if (keyword.substr(0, kArray.size()) == kArray) {
      auto inner = parse(keyword.substr(kArray.size()));
      if (!inner || inner->list_depth() >= kMaxListDepth) return std::nullopt;
      return list(std::move(*inner));
    }
    if (keyword.substr(0, kObject.size()) == kObject) {
      std::string name(keyword.substr(kObject.size()));
      if (!is_identifier(name)) return std::nullopt;
      return object(std::move(name));
    }
    return std::nullopt;
  }

  Kind kind() const { return kind_; }
  bool is_list() const { return kind_ == Kind::kList; }
  bool is_scalar() const { return kind_ != Kind::kList && kind_ != Kind::kObject; }
  const std::string& type_name() const { return type_name_; }
  const ValueType& element() const {
    if (!element_) throw Error("element() called on a non-list type");
    return *element_;
  }

  int list_depth() const { return is_list() ? 1 + element_->list_depth() : 0; }

  std::string keyword() const {
    switch (kind_) {
      case Kind::kString: return "string";
      case Kind::kInteger: return "integer";
      case Kind::kFloat: return "float";
      case Kind::kBoolean: return "boolean";
      case Kind::kList: return "array of " + element_->keyword();
      case Kind::kObject: return "object:" + type_name_;
    }
    return {};
  }

  friend bool operator==(const ValueType& a, const ValueType& b) {
    if (a.kind_ != b.kind_) return false;
    if (a.kind_ == Kind::kObject) return a.type_name_ == b.type_name_;
    if (a.kind_ == Kind::kList) return *a.element_ == *b.element_;
    return true;
  }

 private:
  explicit ValueType(Kind k) : kind_(k) {}

  Kind kind_ = Kind::kString;
  std::string type_name_;
  std::shared_ptr<const ValueType> element_;
};

struct ArgSpec {
  std::string name;
  std::string description;
  ValueType value_type;
  bool required = true;

  bool operator==(const ArgSpec&) const = default;
};

struct ToolSpec {
  std::string name;
  std::string description;
  std::vector<ArgSpec> arguments;
  ValueType returns;

  const ArgSpec* find_argument(std::string_view arg) const {
    for (const auto& a : arguments) {
      if (a.name == arg) return &a;
    }
    return nullptr;
  }

  bool operator==(const ToolSpec&) const = default;
};

nlohmann::ordered_json to_json(const ToolSpec& tool);

// Immutable, ordered set of tools. Deriving a registry with more or fewer
// tools yields a new version string; indexes keyed on the version can never
// silently go stale.
class Registry {
 public:
  Registry() : version_(compute_version({})) {}

  explicit Registry(std::vector<ToolSpec> tools) : tools_(std::move(tools)) {
    for (std::size_t i = 0; i < tools_.size(); ++i) {
      if (!index_.emplace(tools_[i].name, i).second) {
        throw RegistryError(tools_[i].name, pointer_join("", i) + "/tool_name", "duplicate tool name");
      }
    }
    version_ = compute_version(tools_);
  }

  const std::vector<ToolSpec>& tools() const { return tools_; }
  const std::string& version() const { return version_; }
  std::size_t size() const { return tools_.size(); }
  bool empty() const { return tools_.empty(); }

  // Exact, case-sensitive lookup. nullptr means the tool does not exist.
  const ToolSpec* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &tools_[it->second];
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(tools_.size());
    for (const auto& t : tools_) out.push_back(t.name);
    return out;
  }

  Registry with_tools(const std::vector<ToolSpec>& extra) const {
    std::vector<ToolSpec> all = tools_;
    all.insert(all.end(), extra.begin(), extra.end());
    return Registry(std::move(all));
  }

  // Tools named in `names`, kept in registry order. Unknown names are ignored.
  Registry subset(const std::vector<std::string>& names) const {
    std::unordered_set<std::string> wanted(names.begin(), names.end());
    std::vector<ToolSpec> picked;
    for (const auto& t : tools_) {
      if (wanted.count(t.name)) picked.push_back(t);
    }
    return Registry(std::move(picked));
  }

 private:
  static std::string compute_version(const std::vector<ToolSpec>& tools) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& t : tools) arr.push_back(to_json(t));
    return hex64(fnv1a64(arr.dump()));
  }

  std::vector<ToolSpec> tools_;
  std::unordered_map<std::string, std::size_t> index_;
  std::string version_;
};

inline const ToolSpec* get_tool(const Registry& registry, std::string_view name) { return registry.find(name); }

inline nlohmann::ordered_json to_json(const ToolSpec& tool) {
  nlohmann::ordered_json args = nlohmann::ordered_json::array();
  for (const auto& a : tool.arguments) {
    args.push_back({{"argument_name", a.name},
                    {"argument_description", a.description},
                    {"argument_type", a.value_type.keyword()},
                    {"required", a.required}});
  }
  return {{"tool_name", tool.name},
          {"tool_description", tool.description},
          {"arguments", std::move(args)},
          {"return_type", tool.returns.keyword()}};
}

inline std::string serialize_registry(const Registry& registry) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& t : registry.tools()) arr.push_back(to_json(t));
  return arr.dump(2);
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, const std::string& tool,
                                           const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw RegistryError(tool, path, std::string("missing required field '") + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key, const std::string& tool,
                                  const std::string& path) {
  const auto& v = require_field(obj, key, tool, path);
  if (!v.is_string()) throw RegistryError(tool, pointer_join(path, key), std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline ValueType require_type(const nlohmann::json& obj, const char* key, const std::string& tool,
                              const std::string& path, const std::string& what) {
  std::string keyword = require_string(obj, key, tool, path);
  auto t = ValueType::parse(keyword);
  if (!t) throw RegistryError(tool, pointer_join(path, key), "unknown type '" + keyword + "' for " + what);
  return *t;
}

}  // namespace detail

inline Registry registry_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw RegistryError("", "", "tool file must be a JSON array of tool objects");
  std::vector<ToolSpec> tools;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    std::string path = pointer_join("", i);
    if (!entry.is_object()) throw RegistryError("", path, "tool entry must be an object");
    ToolSpec tool;
    tool.name = detail::require_string(entry, "tool_name", "", path);
    tool.description = detail::require_string(entry, "tool_description", tool.name, path);
    tool.returns = detail::require_type(entry, "return_type", tool.name, path, "return type");
    const auto& args = detail::require_field(entry, "arguments", tool.name, path);
    if (!args.is_array()) throw RegistryError(tool.name, pointer_join(path, "arguments"), "'arguments' must be an array");
    for (std::size_t j = 0; j < args.size(); ++j) {
      std::string apath = pointer_join(pointer_join(path, "arguments"), j);
      const auto& a = args[j];
      if (!a.is_object()) throw RegistryError(tool.name, apath, "argument entry must be an object");
      ArgSpec spec;
      spec.name = detail::require_string(a, "argument_name", tool.name, apath);
      spec.description = detail::require_string(a, "argument_description", tool.name, apath);
      spec.value_type = detail::require_type(a, "argument_type", tool.name, apath, "argument '" + spec.name + "'");
      if (auto r = a.find("required"); r != a.end()) {
        if (!r->is_boolean()) throw RegistryError(tool.name, pointer_join(apath, "required"), "'required' must be a boolean");
        spec.required = r->get<bool>();
      }
      tool.arguments.push_back(std::move(spec));
    }
    if (!seen.insert(tool.name).second) {
      throw RegistryError(tool.name, pointer_join(path, "tool_name"), "duplicate tool name");
    }
    tools.push_back(std::move(tool));
  }
  return Registry(std::move(tools));
}

inline Registry load_registry(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw RegistryError("", "", std::string("parse failure: ") + e.what());
  }
  return registry_from_json(doc);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Registry load_registry_file(const std::filesystem::path& path) { return load_registry(read_text_file(path)); }

inline std::vector<Diagnostic> validate_registry(const Registry& registry) {
  std::vector<Diagnostic> out;
  const auto& tools = registry.tools();
  for (std::size_t i = 0; i < tools.size(); ++i) {
    const auto& t = tools[i];
    std::string path = pointer_join("", i);
    if (!is_identifier(t.name)) {
      out.push_back({Severity::kError, pointer_join(path, "tool_name"),
                     "tool name '" + t.name + "' must match [a-zA-Z0-9_]+"});
    }
    if (t.description.empty()) {
      out.push_back({Severity::kWarning, pointer_join(path, "tool_description"),
                     "tool '" + t.name + "' has an empty description"});
    }
    std::unordered_set<std::string> arg_names;
    for (std::size_t j = 0; j < t.arguments.size(); ++j) {
      const auto& a = t.arguments[j];
      std::string apath = pointer_join(pointer_join(path, "arguments"), j);
      if (!is_identifier(a.name)) {
        out.push_back({Severity::kError, pointer_join(apath, "argument_name"),
                       "argument name '" + a.name + "' of tool '" + t.name + "' must match [a-zA-Z0-9_]+"});
      }
      if (!arg_names.insert(a.name).second) {
        out.push_back({Severity::kError, pointer_join(apath, "argument_name"),
                       "duplicate argument '" + a.name + "' in tool '" + t.name + "'"});
      }
      if (a.description.empty()) {
        out.push_back({Severity::kWarning, pointer_join(apath, "argument_description"),
                       "argument '" + a.name + "' of tool '" + t.name + "' has an empty description"});
      }
    }
  }
  return out;
}

}  // namespace chainplan
