#include <gtest/gtest.h>

#include <random>

#include "domlearn/error.hpp"
#include "domlearn/pddl.hpp"
#include "support/brute_force.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;
using domlearn::testing::read_fixture;

namespace {

const char* kGraspPart = R"((:action grasp_part
    :parameters (?r - robot ?p - part ?t - table)
    :precondition (and (not (assembled ?p ?_)) ; part is free to grasp (not already assembled, simplified)
                        )
    :effect (and (holding ?r ?p)
                    (not (on_table ?p ?t))
                    )
))";

const char* kNoop = R"((define (domain noop)
  (:requirements :strips)
  (:predicates (p))
  (:action noop :parameters () :precondition () :effect ()))
)";

std::string with_action(const std::string& action) {
  return "(define (domain d) (:requirements :strips :typing :negative-preconditions)\n"
         "  (:types block)\n"
         "  (:predicates (on ?a - block ?b - block) (clear ?a - block))\n" +
         action + ")\n";
}

}  // namespace

TEST(ParseDomain, Noop) {
  DomainModel d = parse_domain(kNoop);
  EXPECT_EQ(d.name, "noop");
  ASSERT_EQ(d.operators.size(), 1u);
  EXPECT_EQ(d.operators[0].name, "noop");
  EXPECT_TRUE(d.operators[0].params.empty());
  EXPECT_TRUE(d.operators[0].precondition.empty());
  EXPECT_TRUE(d.operators[0].add.empty());
  EXPECT_TRUE(d.operators[0].del.empty());
}

TEST(ParseOperator, GraspPartWithWildcard) {
  OperatorDef op = parse_operator(kGraspPart);
  EXPECT_EQ(op.name, "grasp_part");
  ASSERT_EQ(op.params.size(), 3u);
  EXPECT_EQ(op.params[0].name, "?r");
  EXPECT_EQ(op.params[0].type, "robot");
  EXPECT_EQ(op.params[2].type, "table");
  ASSERT_EQ(op.add.size(), 1u);
  EXPECT_EQ(op.add[0].str(), "(holding ?r ?p)");
  ASSERT_EQ(op.del.size(), 1u);
  EXPECT_EQ(op.del[0].str(), "(on_table ?p ?t)");
  ASSERT_EQ(op.precondition.size(), 1u);
  EXPECT_TRUE(op.precondition[0].negated);
  EXPECT_EQ(op.precondition[0].atom.args[1], "?_");
}

TEST(ParseDomain, WildcardBlocksAnyBinding) {
  DomainModel d = parse_domain(with_action(
      "(:action pick :parameters (?a - block) :precondition (and (not (on ?_ ?a))) :effect (and (clear ?a)))"));
  std::vector<TypedVar> objs{{"x", "block"}, {"y", "block"}};
  SymbolicState s{{"on", {"y", "x"}}};
  EXPECT_THROW(apply(d, s, {"pick", {"x"}}), PreconditionViolation);
  EXPECT_NO_THROW(apply(d, s, {"pick", {"y"}}));
}

TEST(ParseDomain, UnboundEffectVariableNamed) {
  try {
    parse_domain(with_action("(:action a :parameters (?x - block) :precondition () :effect (and (on ?x ?y)))"));
    FAIL() << "expected SyntaxError";
  } catch (const SyntaxError& e) {
    EXPECT_NE(std::string(e.what()).find("?y"), std::string::npos) << e.what();
    EXPECT_GT(e.line(), 0u);
  }
}

TEST(ParseDomain, WildcardOutsideNegativePreconditionRejected) {
  EXPECT_THROW(parse_domain(with_action(
                   "(:action a :parameters (?x - block) :precondition () :effect (and (on ?x ?_)))")),
               SyntaxError);
  EXPECT_THROW(parse_domain(with_action(
                   "(:action a :parameters (?x - block) :precondition (and (on ?x ?_)) :effect ())")),
               SyntaxError);
}

TEST(ParseDomain, UnsupportedFeatures) {
  EXPECT_THROW(parse_domain("(define (domain d) (:requirements :durative-actions))"), UnsupportedFeature);
  EXPECT_THROW(parse_domain("(define (domain d) (:predicates (p)) (:durative-action a :parameters ()))"),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with_action(
                   "(:action a :parameters (?x - block) :precondition () :effect (when (clear ?x) (on ?x ?x)))")),
               UnsupportedFeature);
  EXPECT_THROW(parse_domain(with_action(
                   "(:action a :parameters (?x - block) :precondition (or (clear ?x)) :effect ())")),
               UnsupportedFeature);
}

TEST(ParseDomain, SyntaxErrorsCarryLocation) {
  try {
    parse_domain("(define (domain d)\n  (:predicates (p)\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_GE(e.line(), 1u);
  }
  EXPECT_THROW(parse_domain(with_action("(:action a :parameters (?x - block) :precondition (and (bogus ?x)) :effect ())")),
               UnknownPredicate);
  EXPECT_THROW(parse_domain(with_action("(:action a :parameters (?x - block) :precondition (and (clear ?x ?x)) :effect ())")),
               ArityMismatch);
  EXPECT_THROW(parse_domain(with_action("(:action a :parameters (?x - ghost) :precondition () :effect ())")),
               UnknownObjectType);
}

TEST(ParseDomain, PredicateKindComments) {
  DomainModel d = parse_domain(read_fixture("logistics/domain.pddl"));
  const PredicateSchema* in_city = d.find_predicate("in_city");
  ASSERT_NE(in_city, nullptr);
  EXPECT_EQ(in_city->kind, PredicateKind::StateIndependent);
  EXPECT_EQ(d.find_predicate("at")->kind, PredicateKind::StateBased);
  EXPECT_EQ(d.state_based_predicates(), (std::set<std::string>{"at", "in"}));
}

class CorpusRoundTrip : public ::testing::TestWithParam<std::string> {};

TEST_P(CorpusRoundTrip, PrintParseIsIdentityAndBitStable) {
  DomainModel d = parse_domain(read_fixture(GetParam() + "/domain.pddl"));
  std::string once = print_domain(d);
  DomainModel again = parse_domain(once);
  EXPECT_EQ(again, d);
  for (std::size_t i = 0; i < d.operators.size(); ++i) {
    EXPECT_EQ(again.operators[i].description, d.operators[i].description);
  }
  for (const auto& p : d.predicates) {
    EXPECT_EQ(again.find_predicate(p.name)->description, p.description);
  }
  EXPECT_EQ(print_domain(again), once);

  for (const char* task : {"/tasks/task1.pddl", "/tasks/task2.pddl"}) {
    Problem p = parse_problem(read_fixture(GetParam() + task), d);
    std::string text = print_problem(p);
    Problem q = parse_problem(text, d);
    EXPECT_EQ(q, p);
    EXPECT_EQ(print_problem(q), text);
  }
}

INSTANTIATE_TEST_SUITE_P(Fixtures, CorpusRoundTrip, ::testing::Values("logistics", "household"));

TEST(PrintDomain, RandomDomainsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto inst = domlearn::testing::random_instance(rng);
    inst.domain.requirements = {":strips", ":negative-preconditions", ":equality"};
    inst.domain.validate();
    std::string text = print_domain(inst.domain);
    DomainModel back = parse_domain(text);
    ASSERT_EQ(back, inst.domain) << text;
    ASSERT_EQ(print_domain(back), text);
  }
}

TEST(ParseProblem, Errors) {
  DomainModel d = parse_domain(read_fixture("logistics/domain.pddl"));
  auto problem = [](const std::string& init, const std::string& goal) {
    return "(define (problem p) (:domain logistics)\n (:objects package_0 - package location_0 - location truck_0 - truck)\n"
           " (:init " + init + ")\n (:goal (and " + goal + ")))";
  };
  EXPECT_NO_THROW(parse_problem(problem("(at package_0 location_0)", "(in package_0 truck_0)"), d));
  EXPECT_THROW(parse_problem(problem("(at package_9 location_0)", ""), d), UnknownObject);
  EXPECT_THROW(parse_problem(problem("(parked package_0)", ""), d), UnknownPredicate);
  EXPECT_THROW(parse_problem(problem("(at package_0)", ""), d), ArityMismatch);
  EXPECT_THROW(parse_problem(problem("(in location_0 truck_0)", ""), d), TypeMismatch);
  EXPECT_THROW(parse_problem(problem("", "(at package_0 location_0) (not (at package_0 location_0))"), d),
               SyntaxError);
  EXPECT_THROW(parse_problem("(define (problem p) (:domain logistics) (:objects x - spaceship) (:init) (:goal (and)))", d),
               UnknownObjectType);

  std::vector<std::string> warnings;
  Problem p = parse_problem(problem("(not (at package_0 location_0))", ""), d, &warnings);
  EXPECT_TRUE(p.init.empty());
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(ParseProblem, GoalPolarity) {
  DomainModel d = parse_domain(read_fixture("logistics/domain.pddl"));
  Problem p = parse_problem(
      "(define (problem p) (:domain logistics) (:objects package_0 - package l0 l1 - location)"
      " (:init (at package_0 l0)) (:goal (and (at package_0 l1) (not (at package_0 l0)))))",
      d);
  EXPECT_EQ(p.goal.positive.size(), 1u);
  EXPECT_EQ(p.goal.negative.size(), 1u);
  EXPECT_TRUE(p.goal.negative.contains({"at", {"package_0", "l0"}}));
}

TEST(PrintOperator, CanonicalLayout) {
  OperatorDef op = parse_operator(kGraspPart);
  std::string text = print_operator(op);
  EXPECT_EQ(text.rfind("(:action grasp_part\n", 0), 0u) << text;
  OperatorDef back = parse_operator(text);
  EXPECT_EQ(back, op);
}
