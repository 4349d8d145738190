#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "domlearn/classifier.hpp"
#include "support/scenes.hpp"

using namespace domlearn;
using domlearn::testing::box;
using domlearn::testing::scene;

namespace {

const char* kAligned =
    "aligned(p1,p2){pos_tol=0.01, angle_tol=0.1} := dist_xy(p1,p2) <= pos_tol && "
    "|angle_diff(roll(p1),roll(p2))| <= angle_tol && |angle_diff(pitch(p1),pitch(p2))| <= angle_tol";

const char* kGripperAroundOld =
    "# The gripper is open and positioned around the part.\n"
    "gripper_around(p: part){xy_tolerance=0.05, z_tolerance=0.05, angle_tolerance=0.3} :=\n"
    "  !gripper_closed(robot())\n"
    "  && dist_xy(robot(), p) <= xy_tolerance\n"
    "  && |z(gripper_center(robot())) - top(p)| <= z_tolerance\n"
    "  && |angle_diff(0, roll(p))| <= angle_tolerance && |angle_diff(0, pitch(p))| <= angle_tolerance\n";

const char* kGripperAroundFixed =
    "gripper_around(p: part){xy_tolerance=0.05, z_tolerance=0.05} :=\n"
    "  !gripper_closed(robot())\n"
    "  && dist_xy(robot(), p) <= xy_tolerance\n"
    "  && |z(gripper_center(robot())) - top(p)| <= z_tolerance\n";

// Pose listing of the refinement example.
WorldState refinement_scene() {
  WorldState w = scene({}, {0.456, 0.183, 0.014}, false);
  auto part = [](std::string n, std::array<double, 6> bb, Vec3 c, Vec3 o) {
    Part p;
    p.name = std::move(n);
    p.bbox = bb;
    p.center = c;
    p.orientation = o;
    return p;
  };
  w.parts.push_back(part("lamp_base", {0.405, 0.002, -0.015, 0.505, 0.101, 0.048}, {0.455, 0.052, 0.017},
                         {3.14, -0.0, -1.38}));
  w.parts.push_back(part("lamp_bulb", {0.37, 0.149, -0.015, 0.49, 0.209, 0.045}, {0.43, 0.179, 0.015},
                         {-1.75, 0.54, 1.5}));
  w.parts.push_back(part("lamp_hood", {0.415, -0.154, -0.015, 0.503, -0.066, 0.085}, {0.459, -0.11, 0.035},
                         {-3.14, -0.0, 1.54}));
  return w;
}

}  // namespace

TEST(ClassifierParse, AlignedProgram) {
  ClassifierProgram c = parse_classifier(kAligned);
  EXPECT_EQ(c.predicate, "aligned");
  ASSERT_EQ(c.params.size(), 2u);
  ASSERT_EQ(c.hypers.size(), 2u);
  EXPECT_EQ(c.hypers[0].name, "pos_tol");
  EXPECT_DOUBLE_EQ(c.hypers[0].default_value, 0.01);
  EXPECT_DOUBLE_EQ(c.hypers[1].default_value, 0.1);
  EXPECT_TRUE(c.dependencies.empty());
}

TEST(ClassifierParse, ConstantProgram) {
  ClassifierProgram c = parse_classifier("always() := true");
  EXPECT_TRUE(c.params.empty());
  EXPECT_TRUE(c.hypers.empty());
  EXPECT_TRUE(eval_classifier(c, {"always", {}}, scene({}), {}));
}

TEST(ClassifierParse, SelfReferenceIsCyclic) {
  EXPECT_THROW(parse_classifier("loop(p) := loop(p)"), CyclicReference);
}

TEST(ClassifierParse, IndirectCycleIsRejected) {
  ClassifierRegistry reg;
  reg.put(parse_classifier("a(p: part) := top(p) > 0", &reg));
  reg.put(parse_classifier("b(p: part) := a(p)", &reg));
  EXPECT_THROW(parse_classifier("a(p: part) := b(p)", &reg), CyclicReference);
  ClassifierProgram sneaky = parse_classifier("c(p: part) := top(p) > 0");
  sneaky.predicate = "a";
  sneaky.dependencies = {"b"};
  EXPECT_THROW(reg.put(sneaky), CyclicReference);
}

TEST(ClassifierParse, Errors) {
  EXPECT_THROW(parse_classifier("p(a) := volume(a) > 1"), UnknownAccessor);
  EXPECT_THROW(parse_classifier("p(a) := top(b) > 1"), UnknownAccessor);
  EXPECT_THROW(parse_classifier("p(a) := holding(a)"), UnknownAccessor);
  EXPECT_THROW(parse_classifier("p(a) := top(a) +"), SyntaxError);
  EXPECT_THROW(parse_classifier("p(a) := top(a)"), SyntaxError);          // not boolean
  EXPECT_THROW(parse_classifier("p(a) := top(a) && true"), SyntaxError);  // number && bool
  EXPECT_THROW(parse_classifier("p(a, a) := true"), SyntaxError);
  EXPECT_THROW(parse_classifier("p(a){a=1} := true"), SyntaxError);
  EXPECT_THROW(parse_classifier("p(a) := center(a)[3] > 0"), SyntaxError);
  EXPECT_THROW(parse_classifier("p(a) := true true"), SyntaxError);
  try {
    parse_classifier("p(a) :=\n  top(a) > $");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 12u);
  }
}

TEST(ClassifierParse, WordOperatorsAndUnits) {
  ClassifierProgram c = parse_classifier("on(p: part, t: table){tol=0.001 m} := not (bottom(p) > top(t) + tol) and true");
  EXPECT_EQ(c.hypers[0].unit, "m");
  EXPECT_EQ(print_classifier(c), "on(p: part, t: table){tol=0.001 m} := !(bottom(p) > top(t) + tol) && true\n");
}

TEST(ClassifierPrint, RoundTrip) {
  ClassifierRegistry reg;
  reg.put(parse_classifier(kGripperAroundFixed, &reg));
  std::vector<std::string> corpus = {
      kAligned,
      kGripperAroundOld,
      "always() := true",
      "f(a){k=-2.5} := -(x(center(a)) - 1) * 2 / 4 >= k || (1 < 2) == (3 > 4)",
      "g(a, b) := dist(center(a) - center(b), [0, 0, 0]) < norm(bbox(a) * 2) && a_holds(a)",
      "h(p: part) := gripper_around(p) && !(gripper_closed() || surface_z() > 1)",
      "v(p) := max(min(1, 2), abs(-3)) - sqrt(4) != bbox(p)[5] - -1",
  };
  reg.put(parse_classifier("a_holds(a) := true", &reg));
  for (const auto& src : corpus) {
    ClassifierProgram c = parse_classifier(src, &reg);
    std::string once = print_classifier(c);
    EXPECT_EQ(print_classifier(parse_classifier(once, &reg)), once) << src;
  }
}

TEST(ClassifierPrint, RandomExpressionsRoundTripAndEvaluateAlike) {
  // Random arithmetic/boolean trees over one part; printing must preserve
  // both structure and value.
  std::mt19937_64 rng(5);
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<unsigned>(n)); };
  std::function<std::string(int)> num = [&](int depth) -> std::string {
    if (depth == 0) {
      switch (pick(4)) {
        case 0: return "top(p)";
        case 1: return "k";
        case 2: return std::to_string(pick(9) + 1);
        default: return "x(center(p))";
      }
    }
    switch (pick(5)) {
      case 0: return num(depth - 1) + " + " + num(depth - 1);
      case 1: return num(depth - 1) + " - (" + num(depth - 1) + ")";
      case 2: return "(" + num(depth - 1) + ") * " + num(depth - 1);
      case 3: return "-" + num(depth - 1);
      default: return "|" + num(depth - 1) + "|";
    }
  };
  std::function<std::string(int)> cond = [&](int depth) -> std::string {
    if (depth == 0) return num(2) + (pick(2) ? " < " : " >= ") + num(2);
    switch (pick(3)) {
      case 0: return cond(depth - 1) + " && " + cond(depth - 1);
      case 1: return "(" + cond(depth - 1) + " || " + cond(depth - 1) + ")";
      default: return "!(" + cond(depth - 1) + ")";
    }
  };
  WorldState w = scene({box("q", {0.3, 0.1, 0.02}, {0.05, 0.05, 0.04})});
  for (int i = 0; i < 300; ++i) {
    std::string src = "r(p){k=0.7} := " + cond(2);
    ClassifierProgram c = parse_classifier(src);
    std::string printed = print_classifier(c);
    ClassifierProgram again = parse_classifier(printed);
    EXPECT_EQ(print_classifier(again), printed);
    for (double k : {-1.0, 0.0, 0.7, 3.0}) {
      EXPECT_EQ(eval_classifier(c, {"r", {"q"}}, w, {{"k", k}}), eval_classifier(again, {"r", {"q"}}, w, {{"k", k}}))
          << src;
    }
  }
}

TEST(ClassifierEval, AlignedIdenticalPoses) {
  ClassifierProgram c = parse_classifier(kAligned);
  WorldState w = scene({box("a", {0.4, 0.1, 0.05}, {0.1, 0.1, 0.1}, {0.3, -0.2, 1.0}),
                        box("b", {0.4, 0.1, 0.05}, {0.1, 0.1, 0.1}, {0.3, -0.2, 1.0})});
  EXPECT_TRUE(eval_classifier(c, {"aligned", {"a", "b"}}, w, c.defaults()));
}

TEST(ClassifierEval, FarApartIsFalse) {
  ClassifierProgram c = parse_classifier(kAligned);
  WorldState w = scene({box("a", {0.0, 0.0, 0.05}, {0.1, 0.1, 0.1}), box("b", {1.0, 0.0, 0.05}, {0.1, 0.1, 0.1})});
  EXPECT_FALSE(eval_classifier(c, {"aligned", {"a", "b"}}, w, c.defaults()));
}

TEST(ClassifierEval, AngleWrapAroundCountsAsAligned) {
  ClassifierProgram c = parse_classifier(kAligned);
  WorldState w = scene({box("a", {0.4, 0.1, 0.05}, {0.1, 0.1, 0.1}, {3.14, 0, 0}),
                        box("b", {0.4, 0.1, 0.05}, {0.1, 0.1, 0.1}, {-3.14, 0, 0})});
  EXPECT_TRUE(eval_classifier(c, {"aligned", {"a", "b"}}, w, c.defaults()));
}

TEST(ClassifierEval, GripperAroundRefinementExample) {
  WorldState w = refinement_scene();
  ClassifierProgram old_c = parse_classifier(kGripperAroundOld);
  ClassifierProgram fixed = parse_classifier(kGripperAroundFixed);
  GroundAtom atom{"gripper_around", {"lamp_bulb"}};
  EXPECT_FALSE(eval_classifier(old_c, atom, w, old_c.defaults()));
  EXPECT_TRUE(eval_classifier(fixed, atom, w, fixed.defaults()));
  ClassifierProgram dxy = parse_classifier("d(p: part){t=0} := dist_xy(robot(), p) > t");
  double expected = std::hypot(0.456 - 0.43, 0.183 - 0.179);
  EXPECT_TRUE(eval_classifier(dxy, {"d", {"lamp_bulb"}}, w, {{"t", expected - 1e-12}}));
  EXPECT_FALSE(eval_classifier(dxy, {"d", {"lamp_bulb"}}, w, {{"t", expected}}));
  EXPECT_NEAR(expected, 0.026, 0.0005);
}

TEST(ClassifierEval, HyperparametersChangeOutcome) {
  ClassifierProgram c = parse_classifier(kAligned);
  WorldState w = scene({box("a", {0.40, 0.1, 0.05}, {0.1, 0.1, 0.1}), box("b", {0.42, 0.1, 0.05}, {0.1, 0.1, 0.1})});
  GroundAtom atom{"aligned", {"a", "b"}};
  EXPECT_FALSE(eval_classifier(c, atom, w, c.defaults()));
  EXPECT_TRUE(eval_classifier(c, atom, w, {{"pos_tol", 0.03}, {"angle_tol", 0.1}}));
  EXPECT_TRUE(eval_classifier(c, atom, w, {{"pos_tol", 0.03}}));  // missing entries use defaults
}

TEST(ClassifierEval, SubClassifiersUseRegisteredTheta) {
  ClassifierRegistry reg;
  reg.put(parse_classifier("near(p: part){tol=0.01} := dist_xy(robot(), p) <= tol", &reg));
  ClassifierProgram outer = parse_classifier("grip(p: part) := near(p) && !gripper_closed()", &reg);
  EXPECT_EQ(outer.dependencies, std::set<std::string>{"near"});
  reg.put(outer);
  WorldState w = scene({box("a", {0.52, 0.055, 0.02}, {0.04, 0.04, 0.04})});
  GroundAtom atom{"grip", {"a"}};
  EXPECT_FALSE(reg.evaluate(atom, w));
  reg.set_theta("near", {{"tol", 0.1}});
  EXPECT_TRUE(reg.evaluate(atom, w));
  EXPECT_THROW(reg.set_theta("near", {{"tolerance", 0.1}}), Error);
  EXPECT_FALSE(reg.erase("near"));
  EXPECT_TRUE(reg.erase("grip"));
  EXPECT_TRUE(reg.erase("near"));
}

TEST(ClassifierEval, RuntimeErrors) {
  ClassifierProgram c = parse_classifier("o(p) := roll(p) > 0");
  WorldState w = scene({box("a", {0, 0, 0}, {1, 1, 1})});
  EXPECT_THROW(eval_classifier(c, {"o", {"ghost"}}, w, {}), MissingObject);
  EXPECT_THROW(eval_classifier(c, {"o", {"arm"}}, w, {}), NumericDomainError);
  EXPECT_THROW(eval_classifier(c, {"o", {"a", "a"}}, w, {}), ArityMismatch);
  ClassifierProgram s = parse_classifier("s(p) := sqrt(x(center(p)) - 1) > 0");
  EXPECT_THROW(eval_classifier(s, {"s", {"a"}}, w, {}), NumericDomainError);
  ClassifierProgram d = parse_classifier("d(p) := 1 / x(center(p)) > 0");
  EXPECT_THROW(eval_classifier(d, {"d", {"a"}}, w, {}), NumericDomainError);
}

TEST(ClassifierEval, Deterministic) {
  ClassifierProgram c = parse_classifier(kGripperAroundFixed);
  WorldState w = refinement_scene();
  bool first = eval_classifier(c, {"gripper_around", {"lamp_bulb"}}, w, c.defaults());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(eval_classifier(c, {"gripper_around", {"lamp_bulb"}}, w, c.defaults()), first);
}

TEST(ClassifierEval, AngleDiffMatchesAtan2) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 10000; ++i) {
    double a = u(rng), b = u(rng);
    double ref = std::atan2(std::sin(a - b), std::cos(a - b));
    double got = angle_diff(a, b);
    EXPECT_GE(got, -M_PI);
    EXPECT_LT(got, M_PI);
    if (std::abs(std::abs(ref) - M_PI) > 1e-9) EXPECT_NEAR(got, ref, 1e-9);
  }
}

TEST(ClassifierRegistry, CandidatesGroundAndPersist) {
  ClassifierRegistry reg;
  reg.put(parse_classifier("holding(r: robot, p: part){xy=0.03} := gripper_closed(r) && dist_xy(r, p) <= xy", &reg));
  reg.put(parse_classifier("touching(p1: part, p2: part){eps=0.005} := |bottom(p1) - top(p2)| <= eps && "
                           "dist_xy(p1, p2) <= 0.01", &reg));
  WorldState w = scene({box("a", {0.5, 0.0, 0.05}, {0.1, 0.1, 0.1}), box("b", {0.5, 0.0, 0.15}, {0.1, 0.1, 0.1})},
                       {0.5, 0.0, 0.19}, true);
  auto cands = candidate_atoms(reg.find("touching")->program, w);
  EXPECT_EQ(cands.size(), 2u);  // distinct objects only
  SymbolicState g = reg.ground(w);
  EXPECT_EQ(g, (SymbolicState{{"holding", {"arm", "a"}}, {"holding", {"arm", "b"}}, {"touching", {"b", "a"}}}));
  EXPECT_EQ(reg.ground(w, {"touching"}), (SymbolicState{{"touching", {"b", "a"}}}));

  reg.set_theta("holding", {{"xy", 0.02}});
  auto dir = std::filesystem::temp_directory_path() / "domlearn_registry_test";
  std::filesystem::remove_all(dir);
  reg.save(dir.string());
  ClassifierRegistry back = ClassifierRegistry::load(dir.string());
  EXPECT_EQ(back.order(), reg.order());
  EXPECT_EQ(back.find("holding")->theta, reg.find("holding")->theta);
  EXPECT_EQ(print_classifier(back.find("touching")->program), print_classifier(reg.find("touching")->program));
  EXPECT_EQ(back.ground(w), g);
  std::filesystem::remove_all(dir);
}
