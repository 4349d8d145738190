#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "domlearn/envs.hpp"
#include "domlearn/pddl.hpp"
#include "support/fixtures.hpp"

using namespace domlearn;
using domlearn::testing::read_fixture;

namespace {

DiscreteEnv logistics_env() {
  DomainModel d = parse_domain(read_fixture("logistics/domain.pddl"));
  Problem p = parse_problem(read_fixture("logistics/tasks/task1.pddl"), d);
  std::vector<SkillSignature> skills = {
      {"load_truck", {{"package", ""}, {"truck", ""}}},
      {"unload_truck", {{"package", ""}, {"truck", ""}}},
      {"load_plane", {{"package", ""}, {"airplane", ""}}},
      {"unload_plane", {{"package", ""}, {"airplane", ""}}},
      {"drive_truck", {{"truck", ""}, {"from", ""}, {"to", ""}}},
      {"fly_plane", {{"airplane", ""}, {"from", ""}, {"to", ""}}},
  };
  return DiscreteEnv("logistics", d, p, skills);
}

SkillCall call(std::string name, std::vector<std::string> args = {}) { return {std::move(name), std::move(args)}; }

const std::vector<SkillCall> kGraspBulb = {
    call("hover_above_part", {"lamp_bulb"}),
    call("set_gripper_around_part", {"lamp_bulb"}),
    call("close_gripper"),
    call("move_linear_up"),
};

}  // namespace

TEST(DiscreteEnv, LoadTruckWithCoLocatedObjects) {
  auto env = logistics_env();
  auto r = env.execute(call("load_truck", {"package_0", "truck_1"}));
  ASSERT_TRUE(r.ok()) << *r.error;
  EXPECT_TRUE(env.ground_truth_atoms().contains({"in", {"package_0", "truck_1"}}));
  EXPECT_FALSE(env.ground_truth_atoms().contains({"at", {"package_0", "location_0"}}));
  EXPECT_EQ(env.interactions(), 1u);
}

TEST(DiscreteEnv, FailuresCountUnknownSkillsDoNot) {
  auto env = logistics_env();
  auto r = env.execute(call("load_truck", {"package_0", "truck_0"}));
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.error->find("(at truck_0 location_0)"), std::string::npos) << *r.error;
  EXPECT_EQ(env.interactions(), 1u);
  EXPECT_THROW(env.execute(call("teleport", {"package_0"})), UnknownSkill);
  EXPECT_EQ(env.interactions(), 1u);
  r = env.execute(call("load_truck", {"package_9", "truck_1"}));
  EXPECT_NE(r.error->find("invalid parameterization"), std::string::npos);
  r = env.execute(call("load_truck", {"package_0"}));
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(env.interactions(), 3u);
}

TEST(DiscreteEnv, PublishedTaskOneSkillsReachGoal) {
  auto env = logistics_env();
  std::vector<SkillCall> skills = {
      call("load_truck", {"package_0", "truck_1"}),
      call("fly_plane", {"plane_0", "location_1", "location_0"}),
      call("unload_truck", {"package_0", "truck_1"}),
      call("load_plane", {"package_0", "plane_0"}),
      call("fly_plane", {"plane_0", "location_0", "location_1"}),
      call("unload_plane", {"package_0", "plane_0"}),
      call("drive_truck", {"truck_0", "location_2", "location_1"}),
      call("load_truck", {"package_0", "truck_0"}),
      call("drive_truck", {"truck_0", "location_1", "location_2"}),
      call("unload_truck", {"package_0", "truck_0"}),
  };
  for (const auto& s : skills) ASSERT_TRUE(env.execute(s).ok()) << s.str();
  EXPECT_TRUE(goal_satisfied(env.ground_truth_atoms(), env.problem().goal));
}

TEST(DiscreteEnv, SkillParamsCanBindNamedVariables) {
  DomainModel d = parse_domain(read_fixture("household/domain.pddl"));
  Problem p = parse_problem(read_fixture("household/tasks/task1.pddl"), d);
  DiscreteEnv env("household", d, p, {{"go_to", {{"furniture", "?to"}}}});
  ASSERT_TRUE(env.execute(call("go_to", {"side_table_2"})).ok());
  EXPECT_TRUE(env.ground_truth_atoms().contains({"robot_at", {"side_table_2"}}));
  EXPECT_FALSE(env.ground_truth_atoms().contains({"robot_at", {"countertop_2"}}));
}

TEST(DiscreteEnv, SnapshotRestoresExactly) {
  auto env = logistics_env();
  env.push_snapshot();
  auto before = env.true_state();
  env.execute(call("load_truck", {"package_0", "truck_1"}));
  env.restore_snapshot();
  EXPECT_EQ(env.true_state(), before);
  EXPECT_EQ(env.interactions(), 1u);
  EXPECT_EQ(env.observe(42), env.true_state());
}

TEST(Tabletop, InitialSceneGroundTruth) {
  TabletopEnv env(lamp_scene());
  EXPECT_EQ(env.ground_truth_atoms(), (SymbolicState{{"on_table", {"lamp_base", "table"}},
                                                     {"on_table", {"lamp_bulb", "table"}},
                                                     {"on_table", {"lamp_hood", "table"}}}));
}

TEST(Tabletop, EmptySceneHasNoAtoms) {
  TabletopScene s;
  TabletopEnv env(s);
  EXPECT_TRUE(env.ground_truth_atoms().empty());
}

TEST(Tabletop, GraspSequence) {
  TabletopEnv env(lamp_scene());
  auto r = env.execute(kGraspBulb[0]);
  ASSERT_TRUE(r.ok());
  EXPECT_TRUE(env.ground_truth_atoms().contains({"hovering_above", {"arm", "lamp_bulb"}}));
  ASSERT_TRUE(env.execute(kGraspBulb[1]).ok());
  auto s = env.ground_truth_atoms();
  EXPECT_TRUE(s.contains({"gripper_around", {"arm", "lamp_bulb"}}));
  EXPECT_FALSE(s.contains({"hovering_above", {"arm", "lamp_bulb"}}));
  ASSERT_TRUE(env.execute(kGraspBulb[2]).ok());
  s = env.ground_truth_atoms();
  EXPECT_TRUE(s.contains({"holding", {"arm", "lamp_bulb"}}));
  EXPECT_TRUE(s.contains({"gripper_closed", {"arm"}}));
  EXPECT_FALSE(s.contains({"gripper_around", {"arm", "lamp_bulb"}}));
  EXPECT_TRUE(s.contains({"on_table", {"lamp_bulb", "table"}}));
  auto grip_before = env.true_state().robot->gripper_center;
  auto bulb_before = env.true_state().find_part("lamp_bulb")->center;
  ASSERT_TRUE(env.execute(kGraspBulb[3]).ok());
  s = env.ground_truth_atoms();
  EXPECT_TRUE(s.contains({"holding", {"arm", "lamp_bulb"}}));
  EXPECT_FALSE(s.contains({"on_table", {"lamp_bulb", "table"}}));
  // Held part tracks the gripper.
  auto w = env.true_state();
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(w.find_part("lamp_bulb")->center[i] - bulb_before[i],
                     w.robot->gripper_center[i] - grip_before[i]);
  }
}

TEST(Tabletop, CloseGripperOnNothing) {
  TabletopEnv env(lamp_scene());
  ASSERT_TRUE(env.execute(call("close_gripper")).ok());
  auto s = env.ground_truth_atoms();
  EXPECT_TRUE(s.contains({"gripper_closed", {"arm"}}));
  for (const auto& a : s) EXPECT_NE(a.predicate, "holding");
}

TEST(Tabletop, SkillErrors) {
  TabletopEnv env(lamp_scene());
  auto r = env.execute(call("hover_above_part", {"lamp_shade"}));
  EXPECT_FALSE(r.ok());
  r = env.execute(call("set_gripper_around_part", {"lamp_bulb"}));
  EXPECT_FALSE(r.ok());
  EXPECT_NE(r.error->find("hover"), std::string::npos);
  r = env.execute(call("screw_touching_parts_together", {"lamp_bulb", "lamp_base"}));
  EXPECT_FALSE(r.ok());
  EXPECT_EQ(env.interactions(), 3u);
  EXPECT_EQ(env.true_state(), TabletopEnv(lamp_scene()).true_state());
}

TEST(Tabletop, FullLampAssembly) {
  TabletopEnv env(lamp_scene());
  auto assemble = [&](const std::string& part) {
    std::vector<SkillCall> seq = {
        call("hover_above_part", {part}),
        call("set_gripper_around_part", {part}),
        call("close_gripper"),
        call("move_linear_up"),
        call("align_orientation_for_assembly", {part, "lamp_base"}),
        call("move_linear_down_until_touching", {part, "lamp_base"}),
        call("screw_touching_parts_together", {part, "lamp_base"}),
    };
    for (const auto& s : seq) {
      auto r = env.execute(s);
      ASSERT_TRUE(r.ok()) << s.str() << ": " << *r.error;
      if (s.name == "align_orientation_for_assembly") {
        EXPECT_TRUE(env.ground_truth_atoms().contains({"aligned", {part, "lamp_base"}}));
      }
      if (s.name == "move_linear_down_until_touching") {
        EXPECT_TRUE(env.ground_truth_atoms().contains({"touching", {part, "lamp_base"}}));
      }
    }
  };
  assemble("lamp_bulb");
  auto mid = env.ground_truth_atoms();
  EXPECT_TRUE(mid.contains({"assembled", {"lamp_bulb", "lamp_base"}}));
  EXPECT_FALSE(mid.contains({"gripper_around", {"arm", "lamp_bulb"}}));
  EXPECT_FALSE(mid.contains({"aligned", {"lamp_bulb", "lamp_base"}}));
  assemble("lamp_hood");
  auto end = env.ground_truth_atoms();
  EXPECT_TRUE(end.contains({"assembled", {"lamp_bulb", "lamp_base"}}));
  EXPECT_TRUE(end.contains({"assembled", {"lamp_hood", "lamp_base"}}));
  EXPECT_FALSE(end.contains({"aligned", {"lamp_hood", "lamp_bulb"}}));
  EXPECT_FALSE(end.contains({"touching", {"lamp_hood", "lamp_bulb"}}));
  EXPECT_EQ(env.interactions(), 14u);
}

TEST(Tabletop, DeterministicAndSnapshotFaithful) {
  TabletopEnv a(lamp_scene()), b(lamp_scene());
  a.push_snapshot();
  for (const auto& s : kGraspBulb) {
    a.execute(s);
    b.execute(s);
  }
  EXPECT_EQ(a.true_state(), b.true_state());
  auto end = a.true_state();
  a.restore_snapshot();
  EXPECT_EQ(a.true_state(), TabletopEnv(lamp_scene()).true_state());
  for (const auto& s : kGraspBulb) a.execute(s);
  EXPECT_EQ(a.true_state(), end);
}

TEST(Tabletop, ObservationNoise) {
  TabletopEnv exact(lamp_scene(), NoiseConfig{0.0, 0.0});
  EXPECT_EQ(exact.observe(1), exact.true_state());
  TabletopEnv noisy(lamp_scene());
  EXPECT_EQ(noisy.observe(7), noisy.observe(7));
  EXPECT_NE(noisy.observe(7), noisy.observe(8));
  EXPECT_NE(noisy.observe(7), noisy.true_state());
  auto before = noisy.observe(7);
  noisy.execute(call("close_gripper"));
  noisy.execute(call("open_gripper"));
  EXPECT_EQ(noisy.true_state(), TabletopEnv(lamp_scene()).true_state());
  EXPECT_NE(noisy.observe(7), before);  // counter advanced
}

TEST(Tabletop, NoiseStatistics) {
  TabletopEnv env(lamp_scene(), NoiseConfig{0.01, 0.0});
  double sum = 0, sq = 0;
  const int n = 2000;
  double x0 = env.true_state().find_part("lamp_base")->center[0];
  for (int i = 0; i < n; ++i) {
    double d = env.observe(static_cast<std::uint64_t>(i)).find_part("lamp_base")->center[0] - x0;
    sum += d;
    sq += d * d;
  }
  double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  EXPECT_NEAR(mean, 0.0, 4 * 0.01 / std::sqrt(n));
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(World, SceneDumpFormat) {
  TabletopEnv env(lamp_scene());
  std::string dump = dump_scene(env.true_state());
  EXPECT_NE(dump.find("arm\n- gripper_center: [0.567, 0.055, 0.124]\n- gripper_closed: False\n"), std::string::npos)
      << dump;
  EXPECT_NE(dump.find("table\n- surface_z: -0.016\n"), std::string::npos);
  EXPECT_NE(dump.find("lamp_base\n- center: [0.455, 0.050, 0.017]\n- orientation: [3.140, -0.000, -1.380]\n"),
            std::string::npos);
  std::string vars = dump_variables(env.true_state());
  EXPECT_NE(vars.find("-arm: Robot(gripper_center=[0.567, 0.055, 0.124], gripper_closed=False)"), std::string::npos);
  EXPECT_NE(vars.find("-table: Table(surface_z=-0.016)"), std::string::npos);
}

TEST(World, JsonRoundTripAndDistance) {
  TabletopEnv env(lamp_scene());
  WorldState w = env.observe(3);
  nlohmann::json j = w;
  EXPECT_EQ(j.get<WorldState>(), w);
  EXPECT_DOUBLE_EQ(state_distance(w, w), 0.0);
  WorldState moved = w;
  moved.parts[1].center[0] += 0.02;
  EXPECT_NEAR(state_distance(w, moved), 0.02, 1e-12);
  auto d = logistics_env().true_state();
  nlohmann::json jd = d;
  EXPECT_EQ(jd.get<WorldState>(), d);
}

TEST(World, SkillCallText) {
  EXPECT_EQ(call("set_gripper_around_part", {"lamp_bulb"}).str(), "set_gripper_around_part('lamp_bulb')");
  EXPECT_EQ(call("close_gripper").str(), "close_gripper()");
  EXPECT_EQ(parse_skill_call("hover_above_part('lamp_bulb')"), call("hover_above_part", {"lamp_bulb"}));
  EXPECT_EQ(TabletopEnv::lamp_skills()[0].python_signature(), "def hover_above_part(part: str):");
}
