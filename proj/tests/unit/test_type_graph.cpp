#include <gtest/gtest.h>

#include "chainplan/chainplan.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace chainplan;

namespace {

const Registry& fixture() {
  static const Registry reg = load_registry_file(std::filesystem::path(CHAINPLAN_DATA_DIR) / "tools" / "devrev_tools.json");
  return reg;
}

Plan two_calls(const std::string& first, const std::string& second, const std::string& arg, ArgValue v) {
  Plan p;
  p.calls.push_back({first, {}});
  p.calls.push_back({second, {{arg, std::move(v)}}});
  return p;
}

}  // namespace

TEST(TypeGraph, FixtureEdges) {
  TypeGraph g = build_graph(fixture());
  EXPECT_EQ(g.weight("works_list", "prioritize_objects", "objects"), 1);
  EXPECT_EQ(g.weight("who_am_i", "works_list", "owned_by"), 2);
  EXPECT_FALSE(g.weight("get_sprint_id", "prioritize_objects", "objects").has_value());
  EXPECT_EQ(g.registry_version(), fixture().version());
}

TEST(TypeGraph, MatchesTripleEnumeration) {
  testgen::Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    Registry reg = testgen::random_registry(rng);
    std::vector<std::tuple<std::string, std::string, std::string, int>> got;
    TypeGraph g = build_graph(reg);
    for (const auto& e : g.edges()) got.emplace_back(e.from_tool, e.to_tool, e.to_argument, e.weight);
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, oracle::edges(reg));
  }
}

TEST(TypeGraph, DumpHasOneEntryPerEdge) {
  TypeGraph g = build_graph(fixture());
  Json dump = g.to_json();
  ASSERT_EQ(dump.size(), g.edges().size());
  for (const auto& e : dump) {
    EXPECT_TRUE(e.contains("from") && e.contains("to") && e.contains("argument") && e.contains("weight"));
  }
}

TEST(CheckRef, WrappedWeightTwoIsClean) {
  auto r = check_ref(build_graph(fixture()), two_calls("who_am_i", "works_list", "owned_by", ArgValue::list({ArgValue::ref(0)})), 1,
                     "owned_by");
  EXPECT_TRUE(r.clean());
  EXPECT_EQ(r.weight, 2);
}

TEST(CheckRef, BareWeightTwoIsWrappingMismatch) {
  auto r = check_ref(build_graph(fixture()), two_calls("who_am_i", "works_list", "owned_by", ArgValue::ref(0)), 1, "owned_by");
  EXPECT_TRUE(r.compatible());
  EXPECT_TRUE(r.wrapping_mismatch);
  EXPECT_EQ(r.weight, 2);
  EXPECT_NE(r.reason.find("array"), std::string::npos);
}

TEST(CheckRef, NoEdgeIsIncompatible) {
  auto r = check_ref(build_graph(fixture()), two_calls("get_sprint_id", "prioritize_objects", "objects", ArgValue::ref(0)), 1,
                     "objects");
  EXPECT_EQ(r.kind, CheckResult::Kind::kIncompatible);
}

TEST(CheckRef, UnknownToolAndLiterals) {
  TypeGraph g = build_graph(fixture());
  auto unknown = check_ref(g, two_calls("fetch_everything", "works_list", "owned_by", ArgValue::ref(0)), 1, "owned_by");
  EXPECT_EQ(unknown.kind, CheckResult::Kind::kIncompatible);
  EXPECT_EQ(unknown.reason, "unknown tool");
  auto lit = check_ref(g, two_calls("who_am_i", "works_list", "owned_by", ArgValue::literal("USER-1")), 1, "owned_by");
  EXPECT_EQ(lit.kind, CheckResult::Kind::kNotAPrevRef);
  EXPECT_THROW(check_ref(g, two_calls("who_am_i", "works_list", "owned_by", ArgValue::ref(0)), 1, "type"), std::invalid_argument);
}

TEST(RepairPlan, WrapsBareReference) {
  TypeGraph g = build_graph(fixture());
  auto r = repair_plan(g, two_calls("who_am_i", "works_list", "owned_by", ArgValue::ref(0)));
  EXPECT_EQ(r.plan.calls[1].arguments[0].value, ArgValue::list({ArgValue::ref(0)}));
  ASSERT_EQ(r.applied_count(), 1u);
  EXPECT_EQ(r.repairs[0].position, 1u);
  EXPECT_EQ(r.repairs[0].argument, "owned_by");
  EXPECT_EQ(r.repairs[0].action, Repair::Action::kWrapped);
}

TEST(RepairPlan, UnwrapsSingletonForWeightOne) {
  TypeGraph g = build_graph(fixture());
  auto r = repair_plan(g, two_calls("works_list", "prioritize_objects", "objects", ArgValue::list({ArgValue::ref(0)})));
  EXPECT_EQ(r.plan.calls[1].arguments[0].value, ArgValue::ref(0));
  EXPECT_EQ(r.repairs.at(0).action, Repair::Action::kUnwrapped);
}

TEST(RepairPlan, CorrectPlanIsFixedPoint) {
  TypeGraph g = build_graph(fixture());
  Plan p = two_calls("who_am_i", "works_list", "owned_by", ArgValue::list({ArgValue::ref(0)}));
  auto r = repair_plan(g, p);
  EXPECT_EQ(r.plan, p);
  EXPECT_TRUE(r.repairs.empty());
}

TEST(RepairPlan, SiblingsAreNeverDropped) {
  TypeGraph g = build_graph(fixture());
  Plan p = two_calls("works_list", "prioritize_objects", "objects", ArgValue::list({ArgValue::ref(0), ArgValue::literal("x")}));
  auto r = repair_plan(g, p);
  EXPECT_EQ(r.plan, p);
  ASSERT_EQ(r.repairs.size(), 1u);
  EXPECT_EQ(r.repairs[0].action, Repair::Action::kUnrepaired);
}

TEST(RepairPlan, IncompatibleLeftInPlaceAndReported) {
  TypeGraph g = build_graph(fixture());
  Plan p = two_calls("get_sprint_id", "prioritize_objects", "objects", ArgValue::ref(0));
  auto r = repair_plan(g, p);
  EXPECT_EQ(r.plan, p);
  ASSERT_EQ(r.repairs.size(), 1u);
  EXPECT_FALSE(r.repairs[0].applied());
}

TEST(RepairPlan, IdempotentOnRandomPlans) {
  testgen::Rng rng(23);
  for (int i = 0; i < 200; ++i) {
    Registry reg = testgen::random_registry(rng);
    TypeGraph g = build_graph(reg);
    Plan p = testgen::random_plan(rng, reg);
    auto once = repair_plan(g, p);
    auto twice = repair_plan(g, once.plan);
    EXPECT_EQ(twice.plan, once.plan);
    EXPECT_EQ(twice.applied_count(), 0u);
    EXPECT_EQ(once.plan.tool_names(), p.tool_names());
  }
}

TEST(CheckPlan, ReportsEachProblemOnce) {
  TypeGraph g = build_graph(fixture());
  Plan p;
  p.calls.push_back({"who_am_i", {}});
  p.calls.push_back({"works_list", {{"owned_by", ArgValue::ref(0)}, {"colour", ArgValue::literal("red")}}});
  p.calls.push_back({"no_such_tool", {}});
  p.calls.push_back({"works_list", {{"owned_by", ArgValue::list({ArgValue::ref(5)})}}});
  auto d = check_plan(p, fixture(), g);
  ASSERT_EQ(d.size(), 4u);
  EXPECT_TRUE(has_errors(d));
  std::vector<std::string> locations;
  for (const auto& x : d) locations.push_back(x.location);
  std::sort(locations.begin(), locations.end());
  EXPECT_EQ(locations, (std::vector<std::string>{"/1/arguments/colour", "/1/arguments/owned_by", "/2/tool_name",
                                                  "/3/arguments/owned_by"}));
}

TEST(CheckPlan, MissingRequiredArgument) {
  TypeGraph g = build_graph(fixture());
  Plan p;
  p.calls.push_back({"prioritize_objects", {}});
  auto d = check_plan(p, fixture(), g);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_NE(d[0].message.find("objects"), std::string::npos);
}
