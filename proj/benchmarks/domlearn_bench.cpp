#include <benchmark/benchmark.h>

#include <fstream>
#include <random>
#include <sstream>

#include "domlearn/classifier.hpp"
#include "domlearn/envs.hpp"
#include "domlearn/eval.hpp"
#include "domlearn/grounding.hpp"
#include "domlearn/pddl.hpp"
#include "domlearn/planner.hpp"

using namespace domlearn;

namespace {

std::string read(const std::string& rel) {
  std::ifstream in(std::string(DOMLEARN_FIXTURE_DIR) + "/" + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Task {
  DomainModel domain;
  Problem problem;
};

Task load(const std::string& dir, const std::string& task) {
  Task t;
  t.domain = parse_domain(read(dir + "/domain.pddl"));
  t.problem = parse_problem(read(dir + "/tasks/" + task + ".pddl"), t.domain);
  return t;
}

void BM_SearchPlan(benchmark::State& state, std::string dir, std::string task) {
  Task t = load(dir, task);
  for (auto _ : state) {
    auto r = search_plan(t.domain, t.problem);
    benchmark::DoNotOptimize(r.plan);
    state.counters["expanded"] = static_cast<double>(r.expanded);
  }
}
BENCHMARK_CAPTURE(BM_SearchPlan, logistics_task1, "logistics", "task1");
BENCHMARK_CAPTURE(BM_SearchPlan, logistics_task2, "logistics", "task2");
BENCHMARK_CAPTURE(BM_SearchPlan, household_task1, "household", "task1");
BENCHMARK_CAPTURE(BM_SearchPlan, household_task2, "household", "task2");

void BM_Ground(benchmark::State& state) {
  Task t = load("logistics", "task1");
  for (auto _ : state) {
    GroundedTask g(t.domain, t.problem.objects, &t.problem.init);
    benchmark::DoNotOptimize(g.ops().size());
  }
}
BENCHMARK(BM_Ground);

void BM_SampleWalk(benchmark::State& state) {
  Task t = load("logistics", "task1");
  GroundedTask g(t.domain, t.problem.objects, &t.problem.init);
  StateBits init = g.encode(t.problem.init);
  std::mt19937_64 rng(1);
  auto len = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample_walk(g, init, len, rng));
}
BENCHMARK(BM_SampleWalk)->Arg(8)->Arg(32);

void BM_EWIdentity(benchmark::State& state) {
  Task t = load("logistics", "task1");
  EWConfig cfg;
  cfg.walks = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ew_score(t.domain, t.domain, {t.problem}, cfg).aggregate);
}
BENCHMARK(BM_EWIdentity)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

const char* kAligned =
    "aligned(p1: part, p2: part){pos_tol=0.01 m, angle_tol=0.1 rad} := dist_xy(p1, p2) <= pos_tol"
    " && |angle_diff(roll(p1), roll(p2))| <= angle_tol && |angle_diff(pitch(p1), pitch(p2))| <= angle_tol";

void BM_ClassifierEval(benchmark::State& state) {
  ClassifierProgram c = parse_classifier(kAligned);
  TabletopEnv env(lamp_scene(), NoiseConfig{0.01, 0.02});
  WorldState w = env.observe(3);
  auto atoms = candidate_atoms(c, w);
  HyperAssignment theta = c.defaults();
  for (auto _ : state) {
    std::size_t n = 0;
    for (const auto& a : atoms) n += eval_classifier(c, a, w, theta);
    benchmark::DoNotOptimize(n);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(atoms.size()));
}
BENCHMARK(BM_ClassifierEval);

void BM_OptimizeHypers(benchmark::State& state) {
  ClassifierProgram c =
      parse_classifier("on_table(p: part, t: table){tol=0.001 m} := bottom(p) - surface_z(t) <= tol");
  TabletopEnv env(lamp_scene(), NoiseConfig{0.01, 0.02});
  std::vector<Transition> data;
  for (std::string part : {"lamp_bulb", "lamp_hood"}) {
    for (SkillCall s : {SkillCall{"hover_above_part", {part}}, SkillCall{"set_gripper_around_part", {part}},
                        SkillCall{"close_gripper", {}}, SkillCall{"move_linear_up", {}},
                        SkillCall{"align_orientation_for_assembly", {part, "lamp_base"}},
                        SkillCall{"move_linear_down_until_touching", {part, "lamp_base"}},
                        SkillCall{"screw_touching_parts_together", {part, "lamp_base"}}}) {
      Transition t;
      t.x = env.observe(2);
      t.skill = s;
      env.execute(s);
      t.x_next = env.observe(2);
      t.labels = env.ground_truth_atoms().restricted_to({"on_table"});
      data.push_back(std::move(t));
    }
  }
  SearchConfig cfg;
  cfg.samples = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(optimize_hypers(c, data, cfg).score);
}
BENCHMARK(BM_OptimizeHypers)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
