#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "domlearn/pddl.hpp"
#include "domlearn/scripted.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;

namespace {

OperatorDef load_plane() {
  return parse_operator(R"((:action load_plane
    :parameters (?pkg - package ?plane - airplane ?loc - airport)
    :precondition (and (at ?plane ?loc) (at ?pkg ?loc))
    :effect (and (in ?pkg ?plane))))");
}

EffectSet effects(std::vector<std::string> add, std::vector<std::string> del) {
  EffectSet e;
  for (const auto& a : add) e.add.insert(parse_ground_atom(a));
  for (const auto& d : del) e.del.insert(parse_ground_atom(d));
  return e;
}

const std::vector<TypedVar> kObjects{{"p0", "package"}, {"pl", "airplane"}, {"l0", "airport"}, {"t1", "truck"}};

}  // namespace

TEST(GenericFix, LiftsMissingDelete) {
  Action a{"load_plane", {"p0", "pl", "l0"}};
  OperatorDef fixed = generic_fix(load_plane(), a, effects({"(in p0 pl)"}, {}),
                                  effects({"(in p0 pl)"}, {"(at p0 l0)"}), kObjects);
  ASSERT_EQ(fixed.del.size(), 1u);
  EXPECT_EQ(fixed.del[0], (AtomPattern{"at", {"?pkg", "?loc"}}));
  EXPECT_EQ(fixed.params.size(), 3u);
}

TEST(GenericFix, UnboundObjectBecomesTypedParameter) {
  Action a{"load_plane", {"p0", "pl", "l0"}};
  OperatorDef fixed = generic_fix(load_plane(), a, effects({"(in p0 pl)"}, {}),
                                  effects({"(in p0 pl)"}, {"(at t1 l0)"}), kObjects);
  ASSERT_EQ(fixed.params.size(), 4u);
  EXPECT_EQ(fixed.params[3], (TypedVar{"?truck1", "truck"}));
  EXPECT_EQ(fixed.del[0], (AtomPattern{"at", {"?truck1", "?loc"}}));
}

TEST(GenericFix, DropsEffectsThatDidNotHappen) {
  Action a{"load_plane", {"p0", "pl", "l0"}};
  OperatorDef fixed = generic_fix(load_plane(), a, effects({"(in p0 pl)"}, {}), effects({}, {}), kObjects);
  EXPECT_TRUE(fixed.add.empty());
  EXPECT_EQ(fixed.precondition.size(), 2u);
}

TEST(ChangeLines, ReadsBothDirections) {
  EffectSet e = parse_change_lines(
      "- (gripper_around arm lamp_bulb): False -> True\n"
      "- (hovering_above arm lamp_bulb): True -> False\n"
      "not a change line\n");
  EXPECT_EQ(e.add.size(), 1u);
  EXPECT_TRUE(e.add.contains(parse_ground_atom("(gripper_around arm lamp_bulb)")));
  EXPECT_TRUE(e.del.contains(parse_ground_atom("(hovering_above arm lamp_bulb)")));
}

TEST(Knowledge, LoadsFixtures) {
  auto lamp = ScriptedKnowledge::load(domlearn::testing::fixture_path("lamp/script.json"));
  EXPECT_EQ(lamp.actions.size(), 4u);
  EXPECT_EQ(lamp.decompositions.size(), 2u);
  EXPECT_EQ(lamp.classifiers.size(), 8u);
  EXPECT_EQ(lamp.translations.at("grasp-part").size(), 4u);
  EXPECT_EQ(lamp.predicates[0].name, "on_table");

  auto logistics = ScriptedKnowledge::load(domlearn::testing::fixture_path("logistics/script.json"));
  EXPECT_EQ(logistics.actions.size(), 6u);
  EXPECT_EQ(logistics.predicates[2].kind, PredicateKind::StateIndependent);
}

TEST(Knowledge, RejectsUnknownFixType) {
  auto j = nlohmann::json::parse(R"({"decisions": {"x": {"type_of_fix": "guess", "operators": []}}})");
  EXPECT_THROW(ScriptedKnowledge::from_json(j), Error);
}
