#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "domlearn/hierarchy.hpp"
#include "domlearn/pddl.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;

namespace {

GroundAtom atom(std::string p, std::vector<std::string> args = {}) { return {std::move(p), std::move(args)}; }

DomainModel kitchen() {
  return parse_domain(R"((define (domain kitchen)
  (:requirements :strips :typing)
  (:types fruit container robot - object)
  (:predicates (holding ?f - fruit) (closed-gripper) (door-open ?c - container) (inside ?f - fruit ?c - container))
  (:action pick-up :parameters (?f - fruit) :precondition (and) :effect (holding ?f))))");
}

std::vector<TypedVar> kitchen_objects() { return {{"apple", "fruit"}, {"drawer", "container"}}; }

}  // namespace

TEST(Subproblem, GoalIsTheStateDifference) {
  SymbolicState a{atom("on_table", {"b"})}, b{atom("holding", {"b"})};
  Problem p = make_subproblem(a, b, {{"b", "part"}});
  EXPECT_EQ(p.init, a);
  EXPECT_EQ(p.goal.positive, b);
  EXPECT_EQ(p.goal.negative, a);
  EXPECT_EQ(p.objects.size(), 1u);
  EXPECT_THROW(make_subproblem(a, a, {}), DegenerateSubproblem);
}

TEST(Subproblem, GraspPartGoal) {
  SymbolicState init{atom("on_table", {"lamp_hood", "table"}), atom("on_table", {"lamp_base", "table"}),
                     atom("on_table", {"lamp_bulb", "table"})};
  SymbolicState next = init;
  next.erase(atom("on_table", {"lamp_bulb", "table"}));
  next.insert(atom("holding", {"arm", "lamp_bulb"}));
  Problem p = make_subproblem(init, next, {});
  std::vector<Literal> lits;
  for (const auto& a : p.goal.negative) lits.push_back({{a.predicate, a.args}, true});
  for (const auto& a : p.goal.positive) lits.push_back({{a.predicate, a.args}, false});
  EXPECT_EQ(print_conjunction(lits), "(and (not (on_table lamp_bulb table)) (holding arm lamp_bulb))");
}

TEST(Mismatch, WorkedExample) {
  Action pick{"pick-up", {"apple"}};
  EXPECT_EQ(classify_mismatch(atom("closed-gripper"), pick), MismatchKind::Overshoot);
  EXPECT_EQ(classify_mismatch(atom("door-open", {"drawer"}), pick), MismatchKind::SideEffect);
  EXPECT_EQ(classify_mismatch(atom("p", {"apple", "apple"}), pick), MismatchKind::Overshoot);
}

TEST(Mismatch, ExhaustivePartition) {
  const std::vector<std::string> objs{"o0", "o1", "o2", "o3"};
  std::vector<std::vector<std::string>> tuples{{}};
  for (int arity = 1; arity <= 3; ++arity) {
    std::vector<std::vector<std::string>> next;
    for (const auto& t : tuples) {
      if (static_cast<int>(t.size()) != arity - 1) continue;
      for (const auto& o : objs) {
        auto u = t;
        u.push_back(o);
        next.push_back(u);
      }
    }
    tuples.insert(tuples.end(), next.begin(), next.end());
  }
  std::size_t checked = 0;
  for (const auto& binding : tuples) {
    Action a{"act", binding};
    std::set<std::string> bound(binding.begin(), binding.end());
    for (const auto& args : tuples) {
      GroundAtom x{"p", args};
      bool all_bound = true;
      for (const auto& o : args) all_bound = all_bound && bound.count(o);
      MismatchKind k = classify_mismatch(x, a);
      EXPECT_EQ(k == MismatchKind::Overshoot, all_bound);
      EXPECT_NE(k == MismatchKind::Overshoot, k == MismatchKind::SideEffect);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 85u * 85u);
}

TEST(Alignment, AlignedWhenEffectsMatch) {
  Action a{"pick-up", {"apple"}};
  EffectSet e{{atom("holding", {"apple"})}, {}};
  EXPECT_FALSE(check_alignment(a, e, e, {"holding"}));
  // Atoms outside the upper vocabulary are ignored.
  EffectSet sub{{atom("holding", {"apple"}), atom("lowlevel", {"x"})}, {}};
  EXPECT_FALSE(check_alignment(a, e, sub, {"holding"}));
}

TEST(Alignment, PickUpExample) {
  Action a{"pick-up", {"apple"}};
  EffectSet expected{{atom("holding", {"apple"})}, {}};
  EffectSet sub{{atom("holding", {"apple"}), atom("closed-gripper"), atom("door-open", {"drawer"})}, {}};
  auto r = check_alignment(a, expected, sub, {"holding", "closed-gripper", "door-open"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->overshoots, (std::set<GroundAtom>{atom("closed-gripper")}));
  EXPECT_EQ(r->side_effects, (std::set<GroundAtom>{atom("door-open", {"drawer"})}));
  EXPECT_TRUE(r->underachieved.empty());
  nlohmann::json j = *r;
  EXPECT_EQ(j["side_effects"][0], "(door-open drawer)");
}

TEST(Alignment, RandomInstancesMatchSetArithmetic) {
  std::mt19937_64 rng(7);
  std::vector<GroundAtom> universe{atom("p", {"a"}), atom("p", {"b"}), atom("q", {"a", "c"}),
                                   atom("q", {"c", "a"}), atom("r"),        atom("s", {"b"})};
  std::set<std::string> upper{"p", "q", "r", "s"};
  Action act{"op", {"a", "b"}};
  for (int trial = 0; trial < 2000; ++trial) {
    EffectSet exp, obs;
    for (const auto& u : universe) {
      int e = static_cast<int>(rng() % 3), o = static_cast<int>(rng() % 3);
      if (e == 1) exp.add.insert(u);
      if (e == 2) exp.del.insert(u);
      if (o == 1) obs.add.insert(u);
      if (o == 2) obs.del.insert(u);
    }
    auto r = check_alignment(act, exp, obs, upper);
    if (exp == obs) {
      EXPECT_FALSE(r);
      continue;
    }
    ASSERT_TRUE(r);
    std::set<GroundAtom> extra, under_add, under_del, all;
    for (const auto& u : universe) {
      if ((obs.add.contains(u) && !exp.add.contains(u)) || (obs.del.contains(u) && !exp.del.contains(u))) extra.insert(u);
      if (exp.add.contains(u) && !obs.add.contains(u)) under_add.insert(u);
      if (exp.del.contains(u) && !obs.del.contains(u)) under_del.insert(u);
    }
    all.insert(r->overshoots.begin(), r->overshoots.end());
    all.insert(r->side_effects.begin(), r->side_effects.end());
    EXPECT_EQ(all, extra);
    EXPECT_EQ(r->overshoots.size() + r->side_effects.size(), extra.size());
    EXPECT_EQ(r->underachieved.add.atoms(), under_add);
    EXPECT_EQ(r->underachieved.del.atoms(), under_del);
    for (const auto& x : r->side_effects) {
      EXPECT_TRUE(std::find(x.args.begin(), x.args.end(), "c") != x.args.end()) << x.str();
    }
  }
}

TEST(Realign, OvershootIsMechanical) {
  DomainModel d = kitchen();
  const OperatorDef& op = *d.find_operator("pick-up");
  Action a{"pick-up", {"apple"}};
  auto r = check_alignment(a, {{atom("holding", {"apple"})}, {}},
                           {{atom("holding", {"apple"}), atom("closed-gripper")}, {}}, d.predicate_names());
  ASSERT_TRUE(r);
  OperatorDef fixed = realign_operator(op, *r, d, kitchen_objects());
  EXPECT_EQ(fixed.add.size(), 2u);
  EXPECT_EQ(fixed.add[1], (AtomPattern{"closed-gripper", {}}));
  EXPECT_EQ(fixed.params, op.params);
}

TEST(Realign, DeleteOvershootUsesBoundVariables) {
  OperatorDef op = parse_operator(
      "(:action set-gripper :parameters (?r - robot ?p - part) :precondition (hovering ?r ?p) :effect (around ?r ?p))");
  Action a{"set-gripper", {"arm", "bulb"}};
  MisalignmentReport r;
  r.action = a;
  r.expected.add = {atom("around", {"arm", "bulb"})};
  r.observed = r.expected;
  r.observed.del = {atom("hovering", {"arm", "bulb"})};
  r.overshoots = {atom("hovering", {"arm", "bulb"})};
  DomainModel d = parse_domain(
      "(define (domain g) (:types robot part) (:predicates (hovering ?r - robot ?p - part) (around ?r - robot ?p - "
      "part)))");
  OperatorDef fixed = realign_operator(op, r, d, {});
  EXPECT_EQ(fixed.del, (std::vector<AtomPattern>{{"hovering", {"?r", "?p"}}}));
}

TEST(Realign, SideEffectNeedsNewParameter) {
  DomainModel d = kitchen();
  const OperatorDef& op = *d.find_operator("pick-up");
  Action a{"pick-up", {"apple"}};
  auto r = check_alignment(a, {{atom("holding", {"apple"})}, {}},
                           {{atom("holding", {"apple"}), atom("door-open", {"drawer"})}, {}}, d.predicate_names());
  ASSERT_TRUE(r);
  EXPECT_THROW(realign_operator(op, *r, d, kitchen_objects()), OracleRejection);

  std::vector<std::string> feedback;
  auto good = [&](const OperatorDef& cur, const MisalignmentReport&, const std::string& fb) {
    feedback.push_back(fb);
    OperatorDef o = cur;
    o.params.push_back({"?c", "container"});
    o.add.push_back({"door-open", {"?c"}});
    return o;
  };
  OperatorDef fixed = realign_operator(op, *r, d, kitchen_objects(), good);
  ASSERT_EQ(fixed.params.size(), 2u);
  EXPECT_EQ(fixed.params[1].type, "container");
  EXPECT_EQ(feedback, std::vector<std::string>{""});

  int calls = 0;
  auto bad = [&](const OperatorDef& cur, const MisalignmentReport&, const std::string&) {
    ++calls;
    return cur;
  };
  EXPECT_THROW(realign_operator(op, *r, d, kitchen_objects(), bad), OracleRejection);
  EXPECT_EQ(calls, 2);

  calls = 0;
  auto second_try = [&](const OperatorDef& cur, const MisalignmentReport& rep, const std::string& fb) {
    if (calls++ == 0) {
      OperatorDef o = cur;
      o.params.push_back({"?c", "fruit"});
      return o;
    }
    EXPECT_NE(fb.find("drawer"), std::string::npos);
    return good(cur, rep, "");
  };
  EXPECT_EQ(realign_operator(op, *r, d, kitchen_objects(), second_try).params[1].type, "container");
}

TEST(Realign, EmptyReportIsIdentity) {
  DomainModel d = kitchen();
  MisalignmentReport r;
  r.action = {"pick-up", {"apple"}};
  EXPECT_EQ(realign_operator(*d.find_operator("pick-up"), r, d, kitchen_objects()), *d.find_operator("pick-up"));
}

TEST(Key, IgnoresBinding) {
  OperatorDef op = parse_operator("(:action grasp-part :parameters (?r - robot ?p - part ?t - table) :effect (h ?p))");
  DecompositionKey k = decomposition_key(op);
  EXPECT_EQ(k.str(), "grasp-part(robot, part, table)");
  OperatorDef renamed = op;
  renamed.params[1].name = "?x";
  EXPECT_EQ(decomposition_key(renamed), k);
  renamed.params[1].type = "table";
  EXPECT_NE(decomposition_key(renamed), k);
}

TEST(Lift, MapsObjectsToParameters) {
  OperatorDef op = parse_operator("(:action m :parameters (?a - t ?b - t) :effect (p ?a))");
  EXPECT_EQ(*lift_atom(atom("q", {"y", "x"}), op, {"m", {"x", "y"}}), (AtomPattern{"q", {"?b", "?a"}}));
  EXPECT_FALSE(lift_atom(atom("q", {"z"}), op, {"m", {"x", "y"}}));
}

TEST(HierarchyNode, InvariantsAndRoundTrip) {
  DomainModel top = parse_domain(domlearn::testing::read_fixture("logistics/domain.pddl"));
  Problem prob = parse_problem(domlearn::testing::read_fixture("logistics/tasks/task1.pddl"), top);
  HierarchyNode root;
  root.domain = top;
  root.problem = prob;
  root.plan.actions = {{"load_truck", {"package_0", "truck_1", "location_0"}},
                       {"drive_truck", {"truck_1", "location_0", "location_1", "city_0"}}};
  root.leaf_bindings[0] = {"load_truck", {"package_0", "truck_1", "location_0"}};
  auto child = std::make_unique<HierarchyNode>();
  child->level = 1;
  child->domain = top;
  child->domain.name = "logistics-1";
  child->domain.predicates.push_back({"low", {}, PredicateKind::StateBased, "low level"});
  child->problem = prob;
  child->plan.actions = {{"drive_truck", {"truck_1", "location_0", "location_1", "city_0"}}};
  child->leaf_bindings[0] = {"drive_truck", {"truck_1", "location_0", "location_1", "city_0"}};
  root.children[1] = std::move(child);
  EXPECT_NO_THROW(root.check_invariants());
  EXPECT_EQ(root.depth(), 2u);
  EXPECT_EQ(root.node_count(), 2u);

  auto dir = std::filesystem::temp_directory_path() / "domlearn_hierarchy_test";
  std::filesystem::remove_all(dir);
  save_hierarchy(root, dir.string());
  EXPECT_TRUE(std::filesystem::exists(dir / "level-0" / "domain.pddl"));
  EXPECT_TRUE(std::filesystem::exists(dir / "level-0" / "plan.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "level-0" / "children" / "1" / "domain.pddl"));
  HierarchyNode back = load_hierarchy(dir.string());
  EXPECT_EQ(back.plan, root.plan);
  EXPECT_EQ(back.leaf_bindings.at(0), root.leaf_bindings.at(0));
  ASSERT_EQ(back.children.count(1), 1u);
  EXPECT_EQ(back.children.at(1)->level, 1u);
  EXPECT_TRUE(back.children.at(1)->domain.find_predicate("low"));
  EXPECT_EQ(back.problem.init, root.problem.init);
  EXPECT_NO_THROW(back.check_invariants());

  root.leaf_bindings[1] = {"x", {}};
  EXPECT_THROW(root.check_invariants(), Error);
  root.leaf_bindings.erase(1);
  root.children.at(1)->domain.predicates.erase(root.children.at(1)->domain.predicates.begin());
  EXPECT_THROW(root.check_invariants(), Error);
}
