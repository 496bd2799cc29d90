#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "minirace/ast.hpp"

namespace minirace {

struct CfgEdge {
  int src = 0;
  int dst = 0;
  const Stmt* stmt = nullptr;  // statement edge when non-null
  ExprPtr guard;               // guard edge otherwise
  bool polarity = false;
  int owner_stmt = 0;          // guard edges: id of the owning if/while

  bool is_guard() const { return stmt == nullptr; }
};

struct CfgLoop {
  int head = 0;        // guard node of the while
  int owner_stmt = 0;  // the while statement id
  ExprPtr cond;
  std::set<int> nodes;  // head plus all body nodes
};

struct Cfg {
  int entry = 0;
  int exit = 0;
  int num_nodes = 0;
  std::vector<CfgEdge> edges;
  std::vector<CfgLoop> loops;
  std::map<int, int> stmt_edge;  // stmt id -> index into edges

  std::vector<std::vector<int>> out_edges;  // node -> edge indices

  void finalize() {
    out_edges.assign(num_nodes, {});
    for (size_t i = 0; i < edges.size(); ++i) out_edges[edges[i].src].push_back(int(i));
  }
};

namespace detail {

class CfgBuilder {
public:
  explicit CfgBuilder(Cfg& cfg) : cfg_(cfg) {}

  void build(const std::vector<StmtPtr>& body) {
    cfg_.entry = new_node();
    cfg_.exit = new_node();
    int end = build_list(body, cfg_.entry);
    // the frontend guarantees the body ends with an explicit return, so
    // `end` is only reachable through dead code
    (void)end;
    cfg_.num_nodes = next_node_;
    cfg_.finalize();
  }

private:
  int new_node() { return next_node_++; }

  void add_stmt_edge(int src, const Stmt* s, int dst) {
    cfg_.stmt_edge[s->id] = int(cfg_.edges.size());
    cfg_.edges.push_back({src, dst, s, nullptr, false, 0});
  }
  void add_guard_edge(int src, ExprPtr cond, bool pol, int owner, int dst) {
    cfg_.edges.push_back({src, dst, nullptr, std::move(cond), pol, owner});
  }

  int build_list(const std::vector<StmtPtr>& list, int cur) {
    for (const auto& s : list) cur = build_stmt(s, cur);
    return cur;
  }

  int build_stmt(const StmtPtr& s, int cur) {
    switch (s->kind) {
      case StmtKind::If: {
        int g = new_node();
        add_stmt_edge(cur, s.get(), g);
        int t = new_node();
        int f = new_node();
        add_guard_edge(g, s->expr, true, s->id, t);
        add_guard_edge(g, s->expr, false, s->id, f);
        int tend = build_list(s->body, t);
        int fend = build_list(s->else_body, f);
        // join: reuse tend as the merge node
        int join = tend;
        if (fend != join) redirect(fend, join);
        return join;
      }
      case StmtKind::While: {
        int g = new_node();
        add_stmt_edge(cur, s.get(), g);
        size_t first_edge = cfg_.edges.size();
        int after = new_node();
        add_guard_edge(g, s->expr, false, s->id, after);
        if (s->body.empty()) {
          add_guard_edge(g, s->expr, true, s->id, g);  // empty body: spin in place
        } else {
          int b = new_node();
          add_guard_edge(g, s->expr, true, s->id, b);
          int bend = build_list(s->body, b);
          redirect(bend, g);  // back edge
        }
        CfgLoop loop;
        loop.head = g;
        loop.owner_stmt = s->id;
        loop.cond = s->expr;
        loop.nodes.insert(g);
        for (size_t i = first_edge; i < cfg_.edges.size(); ++i) {
          const CfgEdge& e = cfg_.edges[i];
          if (e.dst != after) loop.nodes.insert(e.dst);
          if (e.src != g) loop.nodes.insert(e.src);
        }
        cfg_.loops.push_back(std::move(loop));
        return after;
      }
      case StmtKind::Return: {
        add_stmt_edge(cur, s.get(), cfg_.exit);
        // code after a return is unreachable; give it a fresh node
        return new_node();
      }
      default: {
        int n = new_node();
        add_stmt_edge(cur, s.get(), n);
        return n;
      }
    }
  }

  // Replace node `from` with `to` in all edges (used to merge block ends).
  void redirect(int from, int to) {
    if (from == to) return;
    for (auto& e : cfg_.edges) {
      if (e.src == from) e.src = to;
      if (e.dst == from) e.dst = to;
    }
  }

  Cfg& cfg_;
  int next_node_ = 0;
};

}  // namespace detail

inline std::map<std::string, Cfg> build_cfg(const Program& program) {
  std::map<std::string, Cfg> out;
  for (const auto& [name, fn] : program.functions) {
    Cfg cfg;
    detail::CfgBuilder(cfg).build(fn.body);
    out[name] = std::move(cfg);
  }
  return out;
}

// Nodes reachable from the entry along any edges.
inline std::set<int> reachable_nodes(const Cfg& cfg) {
  std::set<int> seen{cfg.entry};
  std::vector<int> work{cfg.entry};
  while (!work.empty()) {
    int n = work.back();
    work.pop_back();
    for (int ei : cfg.out_edges[n]) {
      int d = cfg.edges[ei].dst;
      if (seen.insert(d).second) work.push_back(d);
    }
  }
  return seen;
}

}  // namespace minirace
