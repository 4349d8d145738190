#include "domlearn/planner.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <limits>
#include <queue>
#include <set>
#include <sstream>
#include <tuple>

namespace domlearn {

std::vector<Action> parse_plan(std::string_view text) {
  std::vector<Action> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto semi = line.find(';');
    if (semi != std::string::npos) line.erase(semi);
    bool blank = std::all_of(line.begin(), line.end(),
                             [](unsigned char c) { return std::isspace(c); });
    if (blank) continue;
    GroundAtom atom = parse_ground_atom(line);
    out.push_back({atom.predicate, atom.args});
  }
  return out;
}

std::string print_plan(const std::vector<Action>& actions) {
  std::string out;
  for (const auto& a : actions) out += a.str() + "\n";
  return out;
}

std::size_t StateBitsHash::operator()(const StateBits& bits) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (std::uint64_t w : bits) {
    h ^= w + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return static_cast<std::size_t>(h);
}

GroundedTask::GroundedTask(const DomainModel& d, const std::vector<TypedVar>& objects,
                           const SymbolicState* init) {
  std::vector<TypedVar> pool = all_objects(d, objects);
  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.name < b.name; });

  std::vector<const PredicateSchema*> preds;
  for (const auto& p : d.predicates) preds.push_back(&p);
  std::sort(preds.begin(), preds.end(), [](auto* a, auto* b) { return a->name < b->name; });
  for (const PredicateSchema* p : preds) {
    std::vector<std::vector<const std::string*>> cands(p->arity());
    bool feasible = true;
    for (std::size_t i = 0; i < p->arity(); ++i) {
      for (const auto& o : pool) {
        if (d.types.is_subtype(o.type, p->params[i].type)) cands[i].push_back(&o.name);
      }
      feasible = feasible && !cands[i].empty();
    }
    if (!feasible) continue;
    std::vector<std::size_t> idx(p->arity(), 0);
    while (true) {
      GroundAtom a{p->name, {}};
      for (std::size_t i = 0; i < idx.size(); ++i) a.args.push_back(*cands[i][idx[i]]);
      atom_index_.emplace(a.str(), static_cast<std::uint32_t>(atoms_.size()));
      atoms_.push_back(std::move(a));
      std::size_t k = idx.size();
      bool carry = true;
      while (carry && k > 0) {
        --k;
        if (++idx[k] < cands[k].size()) {
          carry = false;
        } else {
          idx[k] = 0;
        }
      }
      if (carry) break;
    }
  }

  std::set<std::string> fluent;
  for (const auto& op : d.operators) {
    for (const auto& a : op.add) fluent.insert(a.predicate);
    for (const auto& a : op.del) fluent.insert(a.predicate);
  }

  auto ids_of = [&](const SymbolicState& s, std::vector<std::uint32_t>& out) {
    for (const auto& a : s) {
      auto id = atom_id(a);
      if (!id) return false;
      out.push_back(*id);
    }
    return true;
  };

  for (auto& action : all_bindings(d, objects)) {
    GroundOperator g = instantiate(d, action);
    if (!g.equality_ok) continue;
    if (!(g.pre_pos & g.pre_neg).empty()) continue;
    Op op;
    op.action = std::move(action);
    // A positive precondition outside the universe can never hold.
    if (!ids_of(g.pre_pos, op.pre_pos)) continue;
    if (init) {
      bool static_false = std::any_of(g.pre_pos.begin(), g.pre_pos.end(), [&](const GroundAtom& a) {
        return !fluent.count(a.predicate) && !init->contains(a);
      });
      bool static_true_neg = std::any_of(g.pre_neg.begin(), g.pre_neg.end(), [&](const GroundAtom& a) {
        return !fluent.count(a.predicate) && init->contains(a);
      });
      if (static_false || static_true_neg) continue;
    }
    for (const auto& a : g.pre_neg) {
      if (auto id = atom_id(a)) op.pre_neg.push_back(*id);
    }
    for (const auto& pat : g.pre_neg_wildcard) {
      for (std::uint32_t id = 0; id < atoms_.size(); ++id) {
        const GroundAtom& a = atoms_[id];
        if (a.predicate != pat.predicate || a.args.size() != pat.args.size()) continue;
        bool match = true;
        for (std::size_t k = 0; k < a.args.size() && match; ++k) {
          match = pat.args[k] == kWildcard || pat.args[k] == a.args[k];
        }
        if (match) op.pre_neg.push_back(id);
      }
    }
    if (!ids_of(g.add, op.add)) continue;
    for (const auto& a : g.del) {
      if (auto id = atom_id(a)) op.del.push_back(*id);
    }
    ops_.push_back(std::move(op));
  }

  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const std::string& name = ops_[i].action.op;
    if (op_names_.empty() || op_names_.back() != name) {
      op_names_.push_back(name);
      ops_by_operator_.emplace_back();
    }
    ops_by_operator_.back().push_back(i);
  }
}

std::optional<std::uint32_t> GroundedTask::atom_id(const GroundAtom& atom) const {
  auto it = atom_index_.find(atom.str());
  if (it == atom_index_.end()) return std::nullopt;
  return it->second;
}

StateBits GroundedTask::encode(const SymbolicState& s) const {
  StateBits bits((atoms_.size() + 63) / 64, 0);
  for (const auto& a : s) {
    if (auto id = atom_id(a)) set(bits, *id);
  }
  return bits;
}

SymbolicState GroundedTask::decode(const StateBits& bits) const {
  SymbolicState s;
  for (std::uint32_t id = 0; id < atoms_.size(); ++id) {
    if (test(bits, id)) s.insert(atoms_[id]);
  }
  return s;
}

bool GroundedTask::applicable(const Op& op, const StateBits& s) const {
  for (auto id : op.pre_pos) {
    if (!test(s, id)) return false;
  }
  for (auto id : op.pre_neg) {
    if (test(s, id)) return false;
  }
  return true;
}

void GroundedTask::apply(const Op& op, StateBits& s) const {
  for (auto id : op.del) reset(s, id);
  for (auto id : op.add) set(s, id);
}

std::string_view to_string(SearchStatus status) {
  switch (status) {
    case SearchStatus::Solved: return "solved";
    case SearchStatus::Unsolvable: return "unsolvable";
    case SearchStatus::BudgetExhausted: return "budget-exhausted";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Additive relaxed-goal heuristic.
class AdditiveHeuristic {
 public:
  AdditiveHeuristic(const GroundedTask& task, const std::vector<std::uint32_t>& goal_pos,
                    const std::vector<std::uint32_t>& goal_neg)
      : task_(task), goal_pos_(goal_pos), goal_neg_(goal_neg), by_pre_(task.atom_count()) {
    for (std::size_t i = 0; i < task.ops().size(); ++i) {
      for (auto id : task.ops()[i].pre_pos) by_pre_[id].push_back(i);
      if (task.ops()[i].pre_pos.empty()) no_pre_.push_back(i);
    }
    deletable_.assign(task.atom_count(), false);
    for (const auto& op : task.ops()) {
      for (auto id : op.del) deletable_[id] = true;
    }
  }

  double operator()(const StateBits& s) {
    const auto& ops = task_.ops();
    cost_.assign(task_.atom_count(), kInf);
    remaining_.resize(ops.size());
    op_cost_.assign(ops.size(), 0.0);
    for (std::size_t i = 0; i < ops.size(); ++i) remaining_[i] = ops[i].pre_pos.size();
    using Entry = std::pair<double, std::uint32_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
    for (std::uint32_t id = 0; id < task_.atom_count(); ++id) {
      if (GroundedTask::test(s, id)) {
        cost_[id] = 0;
        queue.push({0.0, id});
      }
    }
    auto fire = [&](std::size_t op_index) {
      double c = op_cost_[op_index] + 1.0;
      for (auto b : ops[op_index].add) {
        if (c < cost_[b]) {
          cost_[b] = c;
          queue.push({c, b});
        }
      }
    };
    for (auto i : no_pre_) fire(i);
    while (!queue.empty()) {
      auto [c, id] = queue.top();
      queue.pop();
      if (c > cost_[id]) continue;
      for (auto i : by_pre_[id]) {
        op_cost_[i] += c;
        if (--remaining_[i] == 0) fire(i);
      }
    }
    double h = 0;
    for (auto id : goal_pos_) h += cost_[id];
    for (auto id : goal_neg_) {
      if (GroundedTask::test(s, id)) h += deletable_[id] ? 1.0 : kInf;
    }
    return h;
  }

 private:
  const GroundedTask& task_;
  std::vector<std::uint32_t> goal_pos_;
  std::vector<std::uint32_t> goal_neg_;
  std::vector<std::vector<std::size_t>> by_pre_;
  std::vector<std::size_t> no_pre_;
  std::vector<bool> deletable_;
  std::vector<double> cost_;
  std::vector<std::size_t> remaining_;
  std::vector<double> op_cost_;
};

struct Node {
  std::size_t parent;
  std::size_t op;
  std::size_t g;
};

}  // namespace

SearchResult search_plan(const DomainModel& d, const Problem& p, const SearchOptions& options) {
  SearchResult result;
  if (goal_satisfied(p.init, p.goal)) {
    result.status = SearchStatus::Solved;
    return result;
  }
  GroundedTask task(d, p.objects, &p.init);
  std::vector<std::uint32_t> goal_pos, goal_neg;
  for (const auto& a : p.goal.positive) {
    auto id = task.atom_id(a);
    if (!id) return result;  // unreachable goal atom
    goal_pos.push_back(*id);
  }
  for (const auto& a : p.goal.negative) {
    if (auto id = task.atom_id(a)) goal_neg.push_back(*id);
  }
  auto is_goal = [&](const StateBits& s) {
    for (auto id : goal_pos) {
      if (!GroundedTask::test(s, id)) return false;
    }
    for (auto id : goal_neg) {
      if (GroundedTask::test(s, id)) return false;
    }
    return true;
  };

  AdditiveHeuristic heuristic(task, goal_pos, goal_neg);
  std::vector<StateBits> states;
  std::vector<Node> nodes;
  std::unordered_map<StateBits, std::size_t, StateBitsHash> seen;

  StateBits init = task.encode(p.init);
  double h0 = heuristic(init);
  if (h0 == kInf) return result;
  states.push_back(init);
  nodes.push_back({0, 0, 0});
  seen.emplace(init, 0);

  using Key = std::tuple<double, std::size_t, std::size_t>;  // h, g, node id
  std::priority_queue<Key, std::vector<Key>, std::greater<>> open;
  std::deque<std::size_t> fifo;
  std::vector<double> h_of{h0};
  open.push({h0, 0, 0});
  bool breadth_first = false;
  double best_h = h0;
  std::size_t since_improvement = 0;

  auto extract = [&](std::size_t id) {
    std::vector<Action> actions;
    while (id != 0) {
      actions.push_back(task.ops()[nodes[id].op].action);
      id = nodes[id].parent;
    }
    std::reverse(actions.begin(), actions.end());
    return actions;
  };

  while (breadth_first ? !fifo.empty() : !open.empty()) {
    std::size_t id;
    if (breadth_first) {
      id = fifo.front();
      fifo.pop_front();
    } else {
      id = std::get<2>(open.top());
      open.pop();
    }
    if (result.expanded >= options.node_budget) {
      result.status = SearchStatus::BudgetExhausted;
      return result;
    }
    ++result.expanded;
    if (!breadth_first) {
      if (h_of[id] < best_h) {
        best_h = h_of[id];
        since_improvement = 0;
      } else if (++since_improvement > options.plateau_limit) {
        breadth_first = true;
        result.fell_back_to_breadth_first = true;
        std::vector<std::size_t> rest{id};
        while (!open.empty()) {
          rest.push_back(std::get<2>(open.top()));
          open.pop();
        }
        std::sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
          return std::tie(nodes[a].g, a) < std::tie(nodes[b].g, b);
        });
        fifo.assign(rest.begin() + 1, rest.end());
        fifo.push_front(rest.front());
        // Re-expand from the frontier in breadth-first order.
        --result.expanded;
        continue;
      }
    }
    for (std::size_t i = 0; i < task.ops().size(); ++i) {
      const auto& op = task.ops()[i];
      if (!task.applicable(op, states[id])) continue;
      StateBits next = states[id];
      task.apply(op, next);
      if (seen.count(next)) continue;
      ++result.generated;
      std::size_t nid = nodes.size();
      nodes.push_back({id, i, nodes[id].g + 1});
      seen.emplace(next, nid);
      if (is_goal(next)) {
        result.status = SearchStatus::Solved;
        result.plan.actions = extract(nid);
        return result;
      }
      double h = heuristic(next);
      h_of.push_back(h);
      states.push_back(std::move(next));
      if (h == kInf) continue;
      if (breadth_first) {
        fifo.push_back(nid);
      } else {
        open.push({h, nodes[nid].g, nid});
      }
    }
  }
  result.status = SearchStatus::Unsolvable;
  return result;
}

std::size_t ValidationTrace::ok_steps() const {
  return static_cast<std::size_t>(std::count_if(
      steps.begin(), steps.end(), [](const TraceStep& s) { return s.status == StepStatus::Ok; }));
}

bool ValidationTrace::executable() const { return !first_failure().has_value(); }

std::optional<std::size_t> ValidationTrace::first_failure() const {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i].status != StepStatus::Ok) return i;
  }
  return std::nullopt;
}

ValidationTrace validate_plan(const DomainModel& d, const Problem& p, const Plan& plan) {
  ValidationTrace trace;
  SymbolicState s = p.init;
  std::vector<TypedVar> objects = all_objects(d, p.objects);
  for (const auto& a : plan.actions) {
    TraceStep step{s, a, StepStatus::Ok, {}};
    try {
      GroundOperator g = instantiate(d, a, &objects);
      step.missing = unsatisfied(g, s);
      if (!step.missing.empty()) {
        step.status = StepStatus::PreconditionFailure;
      } else {
        s = apply_effects(s, g);
      }
    } catch (const Error& err) {
      step.status = StepStatus::InvalidAction;
      step.missing = {err.what()};
    }
    bool failed = step.status != StepStatus::Ok;
    trace.steps.push_back(std::move(step));
    if (failed) break;
  }
  trace.final_state = s;
  trace.goal_achieved = trace.executable() && goal_satisfied(s, p.goal);
  return trace;
}

EffectSet joint_effects(const DomainModel& d, const SymbolicState& init, const Plan& plan) {
  SymbolicState s = init;
  for (const auto& a : plan.actions) s = apply(d, s, a);
  return state_diff(init, s);
}

}  // namespace domlearn
