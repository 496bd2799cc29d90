#pragma once

// Second-opinion explorer: plain depth-first search with no state
// memoization, using the same small-step semantics. Only usable on programs
// with a modest interleaving count.

#include <optional>
#include <set>
#include <string>

#include "minirace/oracle.hpp"

namespace minirace::testing {

struct NaiveResult {
  bool race = false;
  bool exhausted = true;  // false when the step budget ran out
  long long steps = 0;
};

inline std::string full_key(const ConcreteMachine& m, const concrete::State& s) {
  std::string key = m.serialize(s);
  for (const auto& [k, v] : m.counter_vector(s))
    key += "|" + std::to_string(std::get<0>(k)) + "." + std::to_string(std::get<1>(k)) + "." +
           std::to_string(std::get<2>(k)) + "=" + std::to_string(v);
  return key;
}

inline void naive_dfs(const ConcreteMachine& m, const concrete::State& s, NaiveResult& res,
                      long long budget, std::set<std::string>& path) {
  if (res.race || !res.exhausted) return;
  if (++res.steps > budget) {
    res.exhausted = false;
    return;
  }
  struct En {
    int tid;
    std::vector<concrete::FootprintEntry> fp;
  };
  std::vector<En> enabled;
  for (int tid = 0; tid < int(s.threads.size()); ++tid) {
    auto ni = m.peek(s, tid);
    if (!ni || !ni->enabled) continue;
    enabled.push_back({tid, m.footprint(s, tid)});
  }
  for (size_t i = 0; i < enabled.size() && !res.race; ++i)
    for (size_t j = i + 1; j < enabled.size() && !res.race; ++j)
      for (const auto& fa : enabled[i].fp)
        for (const auto& fb : enabled[j].fp)
          if (fa.overlaps(fb) && (fa.write || fb.write) && !fa.atomic && !fb.atomic) {
            res.race = true;
            return;
          }
  for (const auto& en : enabled) {
    auto sr = m.step(s, en.tid);
    if (sr.bound_hit) res.exhausted = false;
    if (!sr.next) continue;
    std::string key = full_key(m, *sr.next);
    if (path.count(key)) continue;  // cycle on the current path
    path.insert(key);
    naive_dfs(m, *sr.next, res, budget, path);
    path.erase(key);
    if (res.race || !res.exhausted) return;
  }
}

inline NaiveResult naive_explore(const Program& prog, const std::map<std::string, Cfg>& cfgs,
                                 const OracleBounds& bounds = {}, long long budget = 2000000) {
  ConcreteMachine m(prog, cfgs, bounds);
  NaiveResult res;
  std::set<std::string> path;
  concrete::State init = m.initial_state();
  path.insert(full_key(m, init));
  naive_dfs(m, init, res, budget, path);
  return res;
}

}  // namespace minirace::testing
