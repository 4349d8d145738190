#include <gtest/gtest.h>

#include <random>

#include "domlearn/error.hpp"
#include "domlearn/pddl.hpp"
#include "domlearn/symbolic.hpp"
#include "support/brute_force.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;
using domlearn::testing::read_fixture;

namespace {

GroundAtom atom(std::string p, std::vector<std::string> args = {}) { return {std::move(p), std::move(args)}; }

Action act(std::string op, std::vector<std::string> args) { return {std::move(op), std::move(args)}; }

}  // namespace

TEST(GroundAtom, TextForms) {
  EXPECT_EQ(atom("at", {"package_0", "location_2"}).str(), "(at package_0 location_2)");
  EXPECT_EQ(atom("hand_empty").str(), "(hand_empty)");
  EXPECT_EQ(parse_ground_atom("holding('Robot', hood)"), atom("holding", {"robot", "hood"}));
  EXPECT_EQ(parse_ground_atom("(on apple_2 side_table_2)"), atom("on", {"apple_2", "side_table_2"}));
  EXPECT_EQ(parse_ground_atom("gripper_closed()"), atom("gripper_closed"));
  EXPECT_THROW(parse_ground_atom("(on apple"), SyntaxError);
}

TEST(StateDiff, AddAndDelete) {
  SymbolicState a{atom("p"), atom("q")};
  SymbolicState b{atom("q"), atom("r")};
  EffectSet e = state_diff(a, b);
  EXPECT_EQ(e.add, SymbolicState{atom("r")});
  EXPECT_EQ(e.del, SymbolicState{atom("p")});
  EXPECT_TRUE(state_diff(a, a).empty());
}

TEST(StateDiff, InvertsExhaustivelyOverSixAtoms) {
  std::vector<GroundAtom> universe;
  for (int i = 0; i < 6; ++i) universe.push_back(atom("a" + std::to_string(i)));
  auto subset = [&](unsigned mask) {
    SymbolicState s;
    for (unsigned i = 0; i < 6; ++i) {
      if (mask & (1u << i)) s.insert(universe[i]);
    }
    return s;
  };
  for (unsigned i = 0; i < 64; ++i) {
    for (unsigned j = 0; j < 64; ++j) {
      SymbolicState si = subset(i), sj = subset(j);
      EffectSet e = state_diff(si, sj);
      ASSERT_EQ(apply_diff(si, e), sj);
      ASSERT_TRUE((e.add & e.del).empty());
      ASSERT_TRUE((e.add & si).empty());
      ASSERT_TRUE(e.del.is_subset_of(si));
    }
  }
}

TEST(Goal, PositiveAndNegative) {
  SymbolicState s{atom("p"), atom("q")};
  EXPECT_TRUE(goal_satisfied(s, {}));
  EXPECT_TRUE(goal_satisfied(s, {{atom("p")}, {atom("r")}}));
  EXPECT_FALSE(goal_satisfied(s, {{atom("r")}, {}}));
  EXPECT_FALSE(goal_satisfied(s, {{atom("p")}, {atom("q")}}));
}

TEST(CanonicalName, LowercaseUnderscore) {
  EXPECT_EQ(canonical_name("Load-Truck"), "load_truck");
  EXPECT_EQ(canonical_name("at"), "at");
}

class LogisticsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    domain = parse_domain(read_fixture("logistics/domain.pddl"));
    task1 = parse_problem(read_fixture("logistics/tasks/task1.pddl"), domain);
  }
  DomainModel domain;
  Problem task1;
};

TEST_F(LogisticsTest, InstantiateChecksArityAndTypes) {
  EXPECT_THROW(instantiate(domain, act("teleport", {"truck_0"})), UnknownOperator);
  EXPECT_THROW(instantiate(domain, act("load_truck", {"package_0"})), ArityMismatch);
  EXPECT_THROW(instantiate(domain, act("load_truck", {"package_0", "plane_0", "location_0"}), &task1.objects),
               TypeMismatch);
  EXPECT_THROW(instantiate(domain, act("load_truck", {"package_9", "truck_0", "location_0"}), &task1.objects),
               UnknownObject);
  GroundOperator g = instantiate(domain, act("load_truck", {"package_0", "truck_1", "location_0"}), &task1.objects);
  EXPECT_TRUE(g.pre_pos.contains(atom("at", {"package_0", "location_0"})));
  EXPECT_TRUE(g.add.contains(atom("in", {"package_0", "truck_1"})));
  EXPECT_TRUE(g.del.contains(atom("at", {"package_0", "location_0"})));
}

TEST_F(LogisticsTest, ApplyRejectsUnmetPrecondition) {
  try {
    apply(domain, task1.init, act("load_truck", {"package_0", "truck_0", "location_0"}));
    FAIL() << "expected PreconditionViolation";
  } catch (const PreconditionViolation& e) {
    ASSERT_EQ(e.missing().size(), 1u);
    EXPECT_EQ(e.missing()[0], "(at truck_0 location_0)");
  }
}

TEST_F(LogisticsTest, EqualityConstraint) {
  // Flying to the current airport violates (not (= ?from ?to)).
  EXPECT_THROW(apply(domain, task1.init, act("fly_plane", {"plane_0", "location_1", "location_1"})),
               PreconditionViolation);
}

TEST_F(LogisticsTest, PublishedTaskOnePlanReachesGoal) {
  std::vector<Action> plan = {
      act("load_truck", {"package_0", "truck_1", "location_0"}),
      act("fly_plane", {"plane_0", "location_1", "location_0"}),
      act("unload_truck", {"package_0", "truck_1", "location_0"}),
      act("load_plane", {"package_0", "plane_0", "location_0"}),
      act("fly_plane", {"plane_0", "location_0", "location_1"}),
      act("unload_plane", {"package_0", "plane_0", "location_1"}),
      act("drive_truck", {"truck_0", "location_2", "location_1", "city_1"}),
      act("load_truck", {"package_0", "truck_0", "location_1"}),
      act("drive_truck", {"truck_0", "location_1", "location_2", "city_1"}),
      act("unload_truck", {"package_0", "truck_0", "location_2"}),
  };
  SymbolicState s = task1.init;
  for (const auto& a : plan) s = apply(domain, s, a);
  EXPECT_TRUE(goal_satisfied(s, task1.goal));
}

TEST_F(LogisticsTest, ApplicableAgreesWithApply) {
  auto objs = task1.objects;
  auto acts = applicable(domain, task1.init, objs);
  ASSERT_FALSE(acts.empty());
  EXPECT_TRUE(std::is_sorted(acts.begin(), acts.end(), [](const Action& a, const Action& b) {
    return a.op < b.op;
  }));
  for (const auto& a : all_bindings(domain, objs)) {
    bool listed = std::find(acts.begin(), acts.end(), a) != acts.end();
    bool ok = true;
    try {
      apply(domain, task1.init, a);
    } catch (const PreconditionViolation&) {
      ok = false;
    }
    EXPECT_EQ(listed, ok) << a.str();
  }
}

TEST(Apply, MatchesBruteForceOnRandomDomains) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    auto inst = domlearn::testing::random_instance(rng);
    SymbolicState s = domlearn::testing::random_state(rng, inst.universe);
    for (const auto& a : all_bindings(inst.domain, {})) {
      auto ref = domlearn::testing::brute_simulate(inst.domain, domlearn::testing::to_atom_set(s), {a});
      bool ok = true;
      SymbolicState next;
      try {
        next = apply(inst.domain, s, a);
      } catch (const PreconditionViolation&) {
        ok = false;
      }
      ASSERT_EQ(ok, ref.executable) << a.str();
      if (ok) ASSERT_EQ(domlearn::testing::to_atom_set(next), ref.final_state) << a.str();
    }
  }
}

TEST(Apply, DeleteThenAdd) {
  DomainModel d;
  d.name = "t";
  d.predicates = {{"p", {}, PredicateKind::StateBased, ""}};
  OperatorDef op;
  op.name = "toggle";
  op.add = {{"p", {}}};
  op.del = {{"p", {}}};
  d.operators = {op};
  d.validate();
  // Add wins when an atom is both added and deleted.
  EXPECT_TRUE(apply(d, {}, act("toggle", {})).contains(atom("p")));
}

TEST(TypeTree, Subtyping) {
  TypeTree t;
  t.add("vehicle");
  t.add("truck", "vehicle");
  EXPECT_TRUE(t.is_subtype("truck", "vehicle"));
  EXPECT_TRUE(t.is_subtype("truck", "object"));
  EXPECT_FALSE(t.is_subtype("vehicle", "truck"));
  EXPECT_TRUE(t.contains("object"));
}
