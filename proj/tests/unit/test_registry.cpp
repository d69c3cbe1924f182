#include <gtest/gtest.h>

#include "chainplan/chainplan.hpp"
#include "generators.hpp"

using namespace chainplan;

namespace {

const std::filesystem::path kTools = std::filesystem::path(CHAINPLAN_DATA_DIR) / "tools";

std::string tool_json(const std::string& name, const std::string& arg_type = "string") {
  return R"({"tool_name":")" + name + R"(","tool_description":"d","return_type":"string","arguments":[)" +
         R"({"argument_name":"a","argument_description":"x","argument_type":")" + arg_type + R"(","required":true}]})";
}

}  // namespace

TEST(Registry, LoadsNineFixtureTools) {
  Registry reg = load_registry_file(kTools / "devrev_tools.json");
  EXPECT_EQ(reg.size(), 9u);
  EXPECT_TRUE(reg.contains("works_list"));
  EXPECT_TRUE(reg.contains("who_am_i"));
  EXPECT_TRUE(validate_registry(reg).empty());
}

TEST(Registry, ExtendedFixtureIsValid) {
  Registry reg = load_registry_file(kTools / "extended_tools.json");
  EXPECT_EQ(reg.size(), 17u);
  EXPECT_TRUE(validate_registry(reg).empty());
}

TEST(Registry, FixtureTypesFollowToolDescriptions) {
  Registry reg = load_registry_file(kTools / "devrev_tools.json");
  const ArgSpec* owned = reg.find("works_list")->find_argument("owned_by");
  ASSERT_NE(owned, nullptr);
  EXPECT_EQ(owned->value_type, ValueType::list(ValueType::string()));
  const ArgSpec* objects = reg.find("prioritize_objects")->find_argument("objects");
  ASSERT_NE(objects, nullptr);
  EXPECT_EQ(objects->value_type, ValueType::list(ValueType::object("WorkItem")));
  EXPECT_EQ(reg.find("who_am_i")->returns, ValueType::string());
}

TEST(Registry, DuplicateToolNameRejected) {
  std::string text = "[" + tool_json("works_list") + "," + tool_json("works_list") + "]";
  try {
    load_registry(text);
    FAIL() << "expected an error";
  } catch (const RegistryError& e) {
    EXPECT_EQ(e.tool(), "works_list");
    EXPECT_NE(std::string(e.what()).find("duplicate"), std::string::npos);
  }
}

TEST(Registry, UnknownTypeKeywordNamesToolAndArgument) {
  try {
    load_registry("[" + tool_json("t1", "listt_of_strings") + "]");
    FAIL() << "expected an error";
  } catch (const RegistryError& e) {
    std::string msg = e.what();
    EXPECT_EQ(e.tool(), "t1");
    EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("listt_of_strings"), std::string::npos) << msg;
  }
}

TEST(Registry, MalformedJsonAndMissingFields) {
  EXPECT_THROW(load_registry("[{"), RegistryError);
  EXPECT_THROW(load_registry(R"([{"tool_name":"x"}])"), RegistryError);
  EXPECT_THROW(load_registry(R"({"tool_name":"x"})"), RegistryError);
}

TEST(Registry, LookupIsExactAndCaseSensitive) {
  Registry reg = load_registry_file(kTools / "devrev_tools.json");
  ASSERT_NE(get_tool(reg, "who_am_i"), nullptr);
  EXPECT_EQ(get_tool(reg, "who_am_i")->name, "who_am_i");
  EXPECT_EQ(get_tool(reg, "WHO_AM_I"), nullptr);
  EXPECT_EQ(get_tool(reg, "nonexistent_tool"), nullptr);
}

TEST(Registry, EmptyDescriptionIsOneWarning) {
  Registry reg = load_registry(R"([{"tool_name":"t","tool_description":"","return_type":"string","arguments":[]}])");
  auto d = validate_registry(reg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].severity, Severity::kWarning);
  EXPECT_FALSE(has_errors(d));
}

TEST(Registry, DuplicateArgumentIsOneError) {
  Registry reg = load_registry(R"([{"tool_name":"t","tool_description":"d","return_type":"string","arguments":[
    {"argument_name":"a","argument_description":"x","argument_type":"string"},
    {"argument_name":"a","argument_description":"y","argument_type":"integer"}]}])");
  auto d = validate_registry(reg);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].severity, Severity::kError);
}

TEST(Registry, TypeGrammarRoundTrips) {
  for (std::string kw : {"string", "integer", "float", "boolean", "object:WorkItem", "array of string",
                         "array of array of object:User"}) {
    auto t = ValueType::parse(kw);
    ASSERT_TRUE(t.has_value()) << kw;
    EXPECT_EQ(t->keyword(), kw);
  }
  EXPECT_FALSE(ValueType::parse("array of array of array of string").has_value());
  EXPECT_FALSE(ValueType::parse("object:").has_value());
  EXPECT_FALSE(ValueType::parse("object:bad name").has_value());
}

TEST(Registry, SerializeRoundTripIsIdentity) {
  testgen::Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    Registry reg = testgen::random_registry(rng);
    Registry back = load_registry(serialize_registry(reg));
    EXPECT_EQ(back.tools(), reg.tools());
    EXPECT_EQ(back.version(), reg.version());
  }
}

TEST(Registry, AddingToolsChangesVersion) {
  Registry reg = load_registry_file(kTools / "devrev_tools.json");
  Registry more = reg.with_tools({ToolSpec{"extra", "d", {}, ValueType::string()}});
  EXPECT_NE(reg.version(), more.version());
  EXPECT_EQ(reg.size(), 9u);
  EXPECT_EQ(reg.subset({"who_am_i", "works_list"}).names(), (std::vector<std::string>{"works_list", "who_am_i"}));
}
