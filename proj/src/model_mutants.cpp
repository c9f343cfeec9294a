#include <algorithm>
#include <deque>

#include "asb/model.hpp"

namespace asb::model {

std::string to_string(MutOp op) {
  switch (op) {
    case MutOp::CTT: return "CTT";
    case MutOp::CTO: return "CTO";
    case MutOp::DTR: return "DTR";
    case MutOp::ATR: return "ATR";
  }
  return "?";
}

std::optional<MutOp> mut_op_from(std::string_view name) {
  if (name == "CTT") return MutOp::CTT;
  if (name == "CTO") return MutOp::CTO;
  if (name == "DTR") return MutOp::DTR;
  if (name == "ATR") return MutOp::ATR;
  return std::nullopt;
}

namespace {

std::string output_repr(const std::string& o) { return o.empty() ? "-" : o; }

// Output alphabet including null, in the lexicographic order of its text
// representation ("-" sorts before alphanumerics).
std::vector<std::string> output_choices(const StateMachine& m) {
  std::vector<std::string> out;
  out.push_back("");
  for (const auto& o : m.outputs) out.push_back(o);
  return out;
}

}  // namespace

std::vector<Mutant> enumerate_mutants(const StateMachine& m, const std::set<MutOp>& ops) {
  std::vector<Mutant> result;
  auto choices = output_choices(m);

  auto emit = [&](MutOp op, const std::string& s, const std::string& i, std::string change,
                  StateMachine machine) {
    machine.name = m.name + "-" + to_string(op) + "-" + std::to_string(result.size());
    result.push_back({op, s, i, std::move(change), std::move(machine)});
  };

  if (ops.count(MutOp::CTT)) {
    for (const auto& [key, val] : m.transitions) {
      for (const auto& target : m.states) {
        if (target == val.second) continue;
        StateMachine mut = m;
        mut.transitions[key] = {val.first, target};
        emit(MutOp::CTT, key.first, key.second, "target->" + target, std::move(mut));
      }
    }
  }
  if (ops.count(MutOp::CTO)) {
    for (const auto& [key, val] : m.transitions) {
      for (const auto& output : choices) {
        if (output == val.first) continue;
        StateMachine mut = m;
        mut.transitions[key] = {output, val.second};
        emit(MutOp::CTO, key.first, key.second, "output->" + output_repr(output), std::move(mut));
      }
    }
  }
  if (ops.count(MutOp::DTR)) {
    for (const auto& [key, val] : m.transitions) {
      StateMachine mut = m;
      mut.transitions.erase(key);
      emit(MutOp::DTR, key.first, key.second, "deleted", std::move(mut));
    }
  }
  if (ops.count(MutOp::ATR)) {
    for (const auto& state : m.states) {
      for (const auto& input : m.inputs) {
        if (m.transitions.count({state, input})) continue;
        for (const auto& output : choices) {
          for (const auto& target : m.states) {
            StateMachine mut = m;
            mut.transitions[{state, input}] = {output, target};
            emit(MutOp::ATR, state, input, "add->" + output_repr(output) + "/" + target,
                 std::move(mut));
          }
        }
      }
    }
  }
  return result;
}

std::optional<std::vector<std::string>> distinguishing_test(const StateMachine& m,
                                                            const StateMachine& mutant) {
  // BFS over the product machine with the completeness convention applied to
  // both sides; the first difference found is shortest and lexicographically
  // least because inputs are explored in order.
  std::set<std::string> alphabet = m.inputs;
  alphabet.insert(mutant.inputs.begin(), mutant.inputs.end());

  using Pair = std::pair<std::string, std::string>;
  std::map<Pair, std::vector<std::string>> path;
  std::deque<Pair> queue;
  Pair start{m.initial, mutant.initial};
  path[start] = {};
  queue.push_back(start);
  while (!queue.empty()) {
    Pair cur = queue.front();
    queue.pop_front();
    for (const auto& input : alphabet) {
      auto [o1, n1] = m.step(cur.first, input);
      auto [o2, n2] = mutant.step(cur.second, input);
      std::vector<std::string> trace = path[cur];
      trace.push_back(input);
      if (o1 != o2) return trace;
      Pair next{n1, n2};
      if (!path.count(next)) {
        path[next] = trace;
        queue.push_back(next);
      }
    }
  }
  return std::nullopt;
}

std::uint64_t interface_distance(const StateMachine& m, const std::string& state) {
  std::map<std::string, std::uint64_t> dist;
  std::deque<std::string> queue;
  dist[m.initial] = 0;
  queue.push_back(m.initial);
  while (!queue.empty()) {
    auto cur = queue.front();
    queue.pop_front();
    for (const auto& [key, val] : m.transitions) {
      if (key.first != cur) continue;
      if (!dist.count(val.second)) {
        dist[val.second] = dist[cur] + 1;
        queue.push_back(val.second);
      }
    }
  }
  auto it = dist.find(state);
  return it == dist.end() ? kUnreachable : it->second;
}

std::uint64_t interface_distance(const StateMachine& m, const std::string& state,
                                 const std::string& input) {
  auto d = interface_distance(m, state);
  return d == kUnreachable ? kUnreachable : d + 1;
}

std::vector<Mutant> rank_mutants(std::vector<Mutant> mutants, const StateMachine& m) {
  std::vector<std::pair<std::uint64_t, size_t>> keyed;
  keyed.reserve(mutants.size());
  for (size_t i = 0; i < mutants.size(); ++i)
    keyed.emplace_back(interface_distance(m, mutants[i].state, mutants[i].input), i);
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Mutant> out;
  out.reserve(mutants.size());
  for (const auto& [d, i] : keyed) out.push_back(std::move(mutants[i]));
  return out;
}

}  // namespace asb::model
