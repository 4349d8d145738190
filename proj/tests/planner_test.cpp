#include <gtest/gtest.h>

#include <random>

#include "domlearn/error.hpp"
#include "domlearn/pddl.hpp"
#include "domlearn/planner.hpp"
#include "support/brute_force.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;
using domlearn::testing::read_fixture;

namespace {

Plan plan_of(std::vector<Action> actions) { return Plan{std::move(actions), PlanProvenance::Search}; }

struct Loaded {
  DomainModel d;
  Problem p;
};

Loaded load(const std::string& dom, const std::string& task) {
  Loaded l;
  l.d = parse_domain(read_fixture(dom + "/domain.pddl"));
  l.p = parse_problem(read_fixture(dom + "/tasks/" + task + ".pddl"), l.d);
  return l;
}

const char* kSwitchDomain = R"((define (domain switch)
  (:requirements :strips)
  (:predicates (on) (off))
  (:action turn_off :parameters () :precondition (and (on)) :effect (and (off) (not (on)))))
)";

}  // namespace

TEST(PlanText, ParseAndPrint) {
  auto plan = parse_plan("; comment\n(load_truck package_0 truck_1 location_0)\n\nfly_plane('plane_0', location_1, location_0)\n");
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[1].op, "fly_plane");
  EXPECT_EQ(plan[1].args, (std::vector<std::string>{"plane_0", "location_1", "location_0"}));
  EXPECT_EQ(print_plan(plan), "(load_truck package_0 truck_1 location_0)\n(fly_plane plane_0 location_1 location_0)\n");
  EXPECT_EQ(parse_plan(print_plan(plan)), plan);
}

TEST(Search, TrivialGoalGivesEmptyPlan) {
  DomainModel d = parse_domain(kSwitchDomain);
  Problem p;
  p.init = {{"on", {}}};
  p.goal.positive = {{"on", {}}};
  auto r = search_plan(d, p);
  EXPECT_EQ(r.status, SearchStatus::Solved);
  EXPECT_TRUE(r.plan.empty());
}

TEST(Search, OnlyOperatorDeletesGoal) {
  DomainModel d = parse_domain(kSwitchDomain);
  Problem p;
  p.init = {{"on", {}}};
  p.goal.positive = {{"on", {}}, {"off", {}}};
  EXPECT_EQ(search_plan(d, p).status, SearchStatus::Unsolvable);
}

TEST(Search, LogisticsTaskOne) {
  auto [d, p] = load("logistics", "task1");
  auto r = search_plan(d, p);
  ASSERT_EQ(r.status, SearchStatus::Solved);
  EXPECT_LE(r.plan.size(), 10u);
  EXPECT_GE(r.plan.size(), 8u);  // shortest solution has 8 steps
  auto trace = validate_plan(d, p, r.plan);
  EXPECT_TRUE(trace.valid());
  EXPECT_TRUE(trace.final_state.contains({"at", {"package_0", "location_2"}}));
}

TEST(Search, CorpusTasksSoundAndDeterministic) {
  for (const char* dom : {"logistics", "household"}) {
    for (const char* task : {"task1", "task2"}) {
      auto [d, p] = load(dom, task);
      auto a = search_plan(d, p);
      ASSERT_EQ(a.status, SearchStatus::Solved) << dom << "/" << task;
      EXPECT_TRUE(validate_plan(d, p, a.plan).valid());
      auto b = search_plan(d, p);
      EXPECT_EQ(a.plan, b.plan);
      EXPECT_EQ(a.expanded, b.expanded);
    }
  }
}

TEST(Search, BudgetExhaustedIsDistinct) {
  auto [d, p] = load("logistics", "task1");
  SearchOptions opts;
  opts.node_budget = 2;
  EXPECT_EQ(search_plan(d, p, opts).status, SearchStatus::BudgetExhausted);
}

TEST(Search, PlateauFallsBackToBreadthFirst) {
  auto [d, p] = load("logistics", "task1");
  SearchOptions opts;
  opts.plateau_limit = 1;
  auto r = search_plan(d, p, opts);
  ASSERT_EQ(r.status, SearchStatus::Solved);
  EXPECT_TRUE(validate_plan(d, p, r.plan).valid());
}

TEST(Search, RandomInstancesSound) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    auto inst = domlearn::testing::random_instance(rng);
    Problem p;
    p.init = domlearn::testing::random_state(rng, inst.universe);
    auto target = domlearn::testing::random_state(rng, inst.universe);
    for (const auto& a : target) p.goal.positive.insert(a);
    auto r = search_plan(inst.domain, p);
    if (r.status == SearchStatus::Solved) {
      ASSERT_TRUE(validate_plan(inst.domain, p, r.plan).valid());
    } else {
      // The goal must then be unreachable by any plan of bounded length.
      ASSERT_EQ(r.status, SearchStatus::Unsolvable);
      bool reachable = false;
      domlearn::testing::for_each_plan(all_bindings(inst.domain, {}), 3, [&](const std::vector<Action>& plan) {
        if (reachable) return;
        auto out = domlearn::testing::brute_simulate(inst.domain, domlearn::testing::to_atom_set(p.init), plan);
        bool goal = true;
        for (const auto& g : p.goal.positive) goal = goal && out.final_state.count(g.str());
        reachable = out.executable && goal;
      });
      ASSERT_FALSE(reachable);
    }
  }
}

TEST(Validate, StopsAtFirstFailureNamingLiteral) {
  auto [d, p] = load("logistics", "task1");
  Plan plan = plan_of({
      {"fly_plane", {"plane_0", "location_1", "location_0"}},
      {"load_truck", {"package_0", "truck_0", "location_0"}},
      {"fly_plane", {"plane_0", "location_0", "location_1"}},
  });
  auto t = validate_plan(d, p, plan);
  EXPECT_EQ(t.ok_steps(), 1u);
  ASSERT_EQ(t.first_failure(), std::optional<std::size_t>(1));
  EXPECT_EQ(t.steps.size(), 2u);
  EXPECT_EQ(t.steps[1].status, StepStatus::PreconditionFailure);
  EXPECT_EQ(t.steps[1].missing, (std::vector<std::string>{"(at truck_0 location_0)"}));
  EXPECT_TRUE(t.final_state.contains({"at", {"plane_0", "location_0"}}));
  EXPECT_FALSE(t.valid());
}

TEST(Validate, EmptyPlanUnsatisfiedGoal) {
  auto [d, p] = load("logistics", "task1");
  auto t = validate_plan(d, p, {});
  EXPECT_EQ(t.ok_steps(), 0u);
  EXPECT_FALSE(t.goal_achieved);
  EXPECT_TRUE(t.executable());
}

TEST(Validate, InvalidActionIsData) {
  auto [d, p] = load("logistics", "task1");
  auto t = validate_plan(d, p, plan_of({{"teleport", {"package_0"}}}));
  ASSERT_EQ(t.steps.size(), 1u);
  EXPECT_EQ(t.steps[0].status, StepStatus::InvalidAction);
  t = validate_plan(d, p, plan_of({{"load_truck", {"package_0"}}}));
  EXPECT_EQ(t.steps[0].status, StepStatus::InvalidAction);
}

TEST(Validate, MatchesBruteForceSimulator) {
  std::mt19937_64 rng(5);
  domlearn::testing::RandomDomainSpec spec;
  spec.max_bindings = 6;
  for (int trial = 0; trial < 40; ++trial) {
    auto inst = domlearn::testing::random_instance(rng, spec);
    Problem p;
    p.init = domlearn::testing::random_state(rng, inst.universe);
    p.goal.positive = domlearn::testing::random_state(rng, inst.universe);
    auto actions = all_bindings(inst.domain, {});
    domlearn::testing::for_each_plan(actions, 3, [&](const std::vector<Action>& plan) {
      auto t = validate_plan(inst.domain, p, plan_of(plan));
      auto ref = domlearn::testing::brute_simulate(inst.domain, domlearn::testing::to_atom_set(p.init), plan);
      ASSERT_EQ(t.executable(), ref.executable);
      if (!ref.executable) ASSERT_EQ(*t.first_failure(), ref.failed_step);
      ASSERT_EQ(domlearn::testing::to_atom_set(t.final_state), ref.final_state);
    });
  }
}

TEST(JointEffects, SingleActionMinusTrueAtoms) {
  auto [d, p] = load("logistics", "task1");
  p.init.insert({"in", {"package_0", "truck_1"}});
  auto e = joint_effects(d, p.init, plan_of({{"load_truck", {"package_0", "truck_1", "location_0"}}}));
  EXPECT_TRUE(e.add.empty());
  EXPECT_EQ(e.del, (SymbolicState{{"at", {"package_0", "location_0"}}}));
}

TEST(JointEffects, AddThenDeleteCancels) {
  // Exhaustive over two-step plans on three atoms.
  DomainModel d;
  d.name = "atoms";
  std::vector<std::string> names{"a", "b", "c"};
  for (const auto& n : names) {
    d.predicates.push_back({n, {}, PredicateKind::StateBased, ""});
    OperatorDef add_op{"add_" + n, {}, {}, {{n, {}}}, {}, ""};
    OperatorDef del_op{"del_" + n, {}, {}, {}, {{n, {}}}, ""};
    d.operators.push_back(add_op);
    d.operators.push_back(del_op);
  }
  d.validate();
  auto actions = all_bindings(d, {});
  for (unsigned mask = 0; mask < 8; ++mask) {
    SymbolicState init;
    for (unsigned i = 0; i < 3; ++i) {
      if (mask & (1u << i)) init.insert({names[i], {}});
    }
    for (const auto& x : actions) {
      for (const auto& y : actions) {
        auto e = joint_effects(d, init, plan_of({x, y}));
        auto ref = domlearn::testing::brute_simulate(d, domlearn::testing::to_atom_set(init), {x, y});
        ASSERT_EQ(domlearn::testing::to_atom_set(apply_diff(init, e)), ref.final_state);
        GroundAtom q{x.op.substr(4), {}};
        if (x.op.rfind("add_", 0) == 0 && y.op == "del_" + x.op.substr(4) && !init.contains(q)) {
          EXPECT_FALSE(e.add.contains(q));
          EXPECT_FALSE(e.del.contains(q));
        }
      }
    }
  }
}

TEST(JointEffects, PickUpSubplanIntroducesExtraAtoms) {
  DomainModel d = parse_domain(R"((define (domain kitchen)
  (:requirements :strips :typing)
  (:types obj drawer)
  (:predicates (grasps ?o - obj) (door_open ?d - drawer) (closed_gripper) (in ?o - obj ?d - drawer))
  (:action open_drawer :parameters (?d - drawer) :precondition () :effect (and (door_open ?d)))
  (:action reach :parameters (?o - obj ?d - drawer) :precondition (and (in ?o ?d) (door_open ?d)) :effect (and (grasps ?o)))
  (:action close_gripper :parameters () :precondition () :effect (and (closed_gripper)))
)
)");
  SymbolicState init{{"in", {"apple", "drawer"}}};
  Plan sub = plan_of({{"open_drawer", {"drawer"}}, {"reach", {"apple", "drawer"}}, {"close_gripper", {}}});
  auto e = joint_effects(d, init, sub);
  EXPECT_EQ(e.add, (SymbolicState{{"grasps", {"apple"}}, {"door_open", {"drawer"}}, {"closed_gripper", {}}}));
  EXPECT_TRUE(e.del.empty());
  EXPECT_THROW(joint_effects(d, init, plan_of({{"reach", {"apple", "drawer"}}})), PreconditionViolation);
}

TEST(GroundedTask, EncodeDecodeAndStaticPruning) {
  auto [d, p] = load("logistics", "task1");
  GroundedTask task(d, p.objects, &p.init);
  EXPECT_EQ(task.decode(task.encode(p.init)), p.init);
  for (const auto& op : task.ops()) {
    if (op.action.op == "drive_truck") {
      // in_city is static; cross-city drives are pruned.
      const auto& a = op.action.args;
      EXPECT_TRUE(p.init.contains({"in_city", {a[1], a[3]}})) << op.action.str();
    }
  }
}
