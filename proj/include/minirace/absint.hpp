#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "minirace/cfg.hpp"
#include "minirace/domain.hpp"

namespace minirace {

enum class UpdateMode { Strong, Weak };

struct AnalyzeConfig {
  int K = 2;
  UpdateMode mode = UpdateMode::Strong;
  bool multi_instance_thread = false;
  // bases treated like shared memory under weak updates (escaped locals)
  std::set<Base> extra_weak;
};

constexpr int kWidenDelay = 3;

struct EvalCtx {
  const Program* prog = nullptr;
  std::string fn;
  CallString cs;

  DomainCtx dom() const { return {prog}; }
  MachineModel model() const { return prog->model; }
  long long sizeof_type(const CType& t) const { return size_of(t, prog->model, prog->records); }
};

// A resolved lvalue target: base plus the interval of possible start bytes.
struct Target {
  Base base;
  Interval starts;
  long long width = 0;
  bool atomic = false;

  Interval range() const {
    if (starts.empty() || width <= 0) return Interval::bottom();
    return {starts.lo, detail::bound_add(starts.hi, width - 1)};
  }
};

namespace detail {

inline Interval clamp_starts(const Base& b, Interval starts, long long width) {
  long long lo = 0;
  long long hi = Interval::kPosInf;
  if (b.declared_size >= 0) hi = std::max<long long>(0, b.declared_size - width);
  return starts.meet({lo, hi});
}

}  // namespace detail

inline Base base_for_var(const EvalCtx& ctx, const std::string& name) {
  const Function* f = ctx.prog->function(ctx.fn);
  if (f) {
    for (const auto& [n, t] : f->locals)
      if (n == name) return Base::local(ctx.fn, name, ctx.cs, ctx.sizeof_type(t));
    for (const auto& [n, t] : f->formals)
      if (n == name) return Base::formal(ctx.fn, name, ctx.cs, ctx.sizeof_type(t));
  }
  if (const Global* g = ctx.prog->global(name))
    return Base::global(name, ctx.sizeof_type(g->type));
  return Base::function(name);
}

inline AbsVal eval_expr(const EvalCtx& ctx, const AbsState& state, const ExprPtr& e);

inline std::vector<Target> resolve_lvalue(const EvalCtx& ctx, const AbsState& state,
                                          const ExprPtr& e) {
  std::vector<Target> out;
  switch (e->kind) {
    case ExprKind::Var: {
      Base b = base_for_var(ctx, e->name);
      if (b.kind == Base::Kind::Function) return {};
      long long w = ctx.sizeof_type(e->type);
      out.push_back({b, detail::clamp_starts(b, Interval::constant(0), w), w,
                     e->type.kind == TypeKind::AtomicInt});
      break;
    }
    case ExprKind::Deref: {
      AbsVal p = eval_expr(ctx, state, e->a);
      long long w = ctx.sizeof_type(e->type);
      for (const auto& [base, starts] : p.pts) {
        if (base.kind == Base::Kind::Function) continue;
        Interval s = detail::clamp_starts(base, starts, w);
        if (!s.empty()) out.push_back({base, s, w, e->type.kind == TypeKind::AtomicInt});
      }
      break;
    }
    case ExprKind::Index: {
      long long esz = ctx.sizeof_type(e->type);
      Interval idx = eval_expr(ctx, state, e->b).iv;
      Interval delta = iv_mul(idx, Interval::constant(esz));
      std::vector<Target> bases;
      if (e->a->type.is_array()) {
        bases = resolve_lvalue(ctx, state, e->a);
      } else {
        AbsVal p = eval_expr(ctx, state, e->a);
        for (const auto& [base, starts] : p.pts)
          if (base.kind != Base::Kind::Function)
            bases.push_back({base, starts, esz, false});
      }
      for (const auto& t : bases) {
        Interval s = detail::clamp_starts(t.base, iv_add(t.starts, delta), esz);
        if (!s.empty()) out.push_back({t.base, s, esz, e->type.kind == TypeKind::AtomicInt});
      }
      break;
    }
    case ExprKind::Field: {
      long long w = ctx.sizeof_type(e->type);
      long long off = field_offset(ctx.prog->records, e->a->type.record_name, e->name,
                                   ctx.model());
      if (off < 0) return {};
      for (const auto& t : resolve_lvalue(ctx, state, e->a)) {
        Interval s = detail::clamp_starts(t.base, iv_add(t.starts, Interval::constant(off)), w);
        if (!s.empty()) out.push_back({t.base, s, w, e->type.kind == TypeKind::AtomicInt});
      }
      break;
    }
    case ExprKind::Cast:
      return resolve_lvalue(ctx, state, e->a);
    default:
      break;
  }
  return out;
}

namespace detail {

// Truth of a value: [0,0] definitely false, [1,1] definitely true, else [0,1].
inline Interval truth_of(const AbsVal& v) {
  if (v.is_bottom()) return Interval::bottom();
  bool may_zero = v.iv.contains(0) || (v.iv.empty() && v.pts.empty());
  bool may_nonzero = !v.pts.empty() || (!v.iv.empty() && !(v.iv.singleton() && v.iv.lo == 0));
  if (may_zero && may_nonzero) return {0, 1};
  if (may_nonzero) return Interval::constant(1);
  return Interval::constant(0);
}

inline bool definitely_null(const AbsVal& v) {
  return v.pts.empty() && v.iv.singleton() && v.iv.lo == 0;
}
inline bool definitely_nonnull(const AbsVal& v) {
  return !v.pts.empty() && (v.iv.empty() || !v.iv.contains(0));
}

}  // namespace detail

inline AbsVal eval_expr(const EvalCtx& ctx, const AbsState& state, const ExprPtr& e) {
  if (!state.reachable) return AbsVal::bottom();
  switch (e->kind) {
    case ExprKind::IntLit:
      return AbsVal::of(Interval::constant(e->int_value));
    case ExprKind::Var: {
      Base b = base_for_var(ctx, e->name);
      if (b.kind == Base::Kind::Function) return AbsVal::of_pts(b, Interval::constant(0));
      if (e->type.is_array()) {
        // arrays decay to a pointer to their first element
        return AbsVal::of_pts(b, Interval::constant(0));
      }
      long long w = ctx.sizeof_type(e->type);
      return state.read(ctx.dom(), b, {0, w - 1});
    }
    case ExprKind::Unary: {
      AbsVal v = eval_expr(ctx, state, e->a);
      if (e->un_op == UnOp::Neg) return AbsVal::of(iv_neg(v.iv));
      return AbsVal::of(iv_logic_not(detail::truth_of(v)));
    }
    case ExprKind::Binary: {
      AbsVal va = eval_expr(ctx, state, e->a);
      AbsVal vb = eval_expr(ctx, state, e->b);
      bool ptr = !va.pts.empty() || !vb.pts.empty();
      switch (e->bin_op) {
        case BinOp::Add: return AbsVal::of(iv_add(va.iv, vb.iv));
        case BinOp::Sub: return AbsVal::of(iv_sub(va.iv, vb.iv));
        case BinOp::Mul: return AbsVal::of(iv_mul(va.iv, vb.iv));
        case BinOp::Div: return AbsVal::of(iv_div(va.iv, vb.iv));
        case BinOp::Mod: return AbsVal::of(iv_mod(va.iv, vb.iv));
        case BinOp::Lt: return ptr ? AbsVal::of({0, 1}) : AbsVal::of(iv_cmp_lt(va.iv, vb.iv));
        case BinOp::Le: return ptr ? AbsVal::of({0, 1}) : AbsVal::of(iv_cmp_le(va.iv, vb.iv));
        case BinOp::Gt: return ptr ? AbsVal::of({0, 1}) : AbsVal::of(iv_cmp_lt(vb.iv, va.iv));
        case BinOp::Ge: return ptr ? AbsVal::of({0, 1}) : AbsVal::of(iv_cmp_le(vb.iv, va.iv));
        case BinOp::Eq:
        case BinOp::Ne: {
          Interval eq;
          if (!ptr) {
            eq = iv_cmp_eq(va.iv, vb.iv);
          } else if (detail::definitely_nonnull(va) && detail::definitely_null(vb)) {
            eq = Interval::constant(0);
          } else if (detail::definitely_nonnull(vb) && detail::definitely_null(va)) {
            eq = Interval::constant(0);
          } else {
            eq = {0, 1};
          }
          return e->bin_op == BinOp::Eq ? AbsVal::of(eq) : AbsVal::of(iv_logic_not(eq));
        }
        case BinOp::And: {
          Interval ta = detail::truth_of(va);
          Interval tb = detail::truth_of(vb);
          if (ta == Interval::constant(0) || tb == Interval::constant(0))
            return AbsVal::of(Interval::constant(0));
          if (ta == Interval::constant(1) && tb == Interval::constant(1))
            return AbsVal::of(Interval::constant(1));
          return AbsVal::of({0, 1});
        }
        case BinOp::Or: {
          Interval ta = detail::truth_of(va);
          Interval tb = detail::truth_of(vb);
          if (ta == Interval::constant(1) || tb == Interval::constant(1))
            return AbsVal::of(Interval::constant(1));
          if (ta == Interval::constant(0) && tb == Interval::constant(0))
            return AbsVal::of(Interval::constant(0));
          return AbsVal::of({0, 1});
        }
      }
      return AbsVal::top_scalar();
    }
    case ExprKind::Deref:
    case ExprKind::Index:
    case ExprKind::Field: {
      std::vector<Target> ts = resolve_lvalue(ctx, state, e);
      if (ts.empty()) return AbsVal::top_scalar();
      AbsVal acc;
      for (const auto& t : ts) acc = acc.join(state.read(ctx.dom(), t.base, t.range()));
      return acc;
    }
    case ExprKind::AddrOf: {
      if (e->a->kind == ExprKind::Var && ctx.prog->function(e->a->name))
        return AbsVal::of_pts(Base::function(e->a->name), Interval::constant(0));
      AbsVal acc;
      for (const auto& t : resolve_lvalue(ctx, state, e->a))
        acc.pts = AbsVal::merge_pts(acc.pts, {{t.base, t.starts}});
      return acc;
    }
    case ExprKind::Cast:
      return eval_expr(ctx, state, e->a);
    case ExprKind::Call:
      return AbsVal::top_scalar();
  }
  return AbsVal::top_scalar();
}

// ---------------------------------------------------------------------------
// Guard refinement
// ---------------------------------------------------------------------------

namespace detail {

inline Interval refine_against(BinOp op, const Interval& rhs) {
  switch (op) {
    case BinOp::Lt: return {Interval::kNegInf, bound_add(rhs.hi, -1)};
    case BinOp::Le: return {Interval::kNegInf, rhs.hi};
    case BinOp::Gt: return {bound_add(rhs.lo, 1), Interval::kPosInf};
    case BinOp::Ge: return {rhs.lo, Interval::kPosInf};
    case BinOp::Eq: return rhs;
    default: return Interval::top();
  }
}

inline BinOp negate_cmp(BinOp op) {
  switch (op) {
    case BinOp::Lt: return BinOp::Ge;
    case BinOp::Le: return BinOp::Gt;
    case BinOp::Gt: return BinOp::Le;
    case BinOp::Ge: return BinOp::Lt;
    case BinOp::Eq: return BinOp::Ne;
    case BinOp::Ne: return BinOp::Eq;
    default: return op;
  }
}

inline BinOp swap_cmp(BinOp op) {
  switch (op) {
    case BinOp::Lt: return BinOp::Gt;
    case BinOp::Le: return BinOp::Ge;
    case BinOp::Gt: return BinOp::Lt;
    case BinOp::Ge: return BinOp::Le;
    default: return op;
  }
}

}  // namespace detail

// Refines `state` along a guard edge; result is unreachable when the branch
// is infeasible. Only `v (cmp) const`, `v (cmp) v'`, bare `v`, `!c` and
// top-level `&&`/`||` shapes refine anything.
inline AbsState refine_guard(const EvalCtx& ctx, const AbsState& state, const ExprPtr& cond,
                             bool polarity) {
  if (!state.reachable) return state;
  AbsState out = state;

  AbsVal cv = eval_expr(ctx, state, cond);
  Interval t = detail::truth_of(cv);
  if (polarity && t == Interval::constant(0)) return AbsState::bottom();
  if (!polarity && t == Interval::constant(1)) return AbsState::bottom();

  // structural refinement
  struct Refiner {
    const EvalCtx& ctx;

    void set_var(AbsState& s, const std::string& name, const AbsVal& nv, const CType& ty) {
      Base b = base_for_var(ctx, name);
      if (b.kind == Base::Kind::Function) return;
      long long w = ctx.sizeof_type(ty);
      s.env[b][{0, w - 1}] = nv;
    }

    bool refine(AbsState& s, const ExprPtr& cond, bool pol) {
      ExprPtr c = cond;
      while (c->kind == ExprKind::Unary && c->un_op == UnOp::Not) {
        c = c->a;
        pol = !pol;
      }
      if (c->kind == ExprKind::Binary &&
          ((pol && c->bin_op == BinOp::And) || (!pol && c->bin_op == BinOp::Or))) {
        // both conjuncts hold (resp. both disjuncts fail)
        if (!refine(s, c->a, pol)) return false;
        return refine(s, c->b, pol);
      }
      if (c->kind == ExprKind::Var) {
        // bare scalar: v != 0 on the true edge
        AbsVal v = eval_expr(ctx, s, c);
        AbsVal nv = v;
        if (pol) {
          if (v.iv.singleton() && v.iv.lo == 0 && !v.pts.empty()) {
            nv.iv = Interval::bottom();
          } else if (!v.iv.empty()) {
            if (v.iv.lo == 0) nv.iv.lo = 1;
            if (v.iv.hi == 0) nv.iv.hi = -1;
            if (v.iv.lo == 0 && v.iv.hi == 0) nv.iv = Interval::bottom();
          }
          if (nv.is_bottom()) return false;
        } else {
          nv.iv = v.iv.meet(Interval::constant(0));
          nv.pts.clear();
          if (nv.is_bottom()) return false;
        }
        set_var(s, c->name, nv, c->type);
        return true;
      }
      if (c->kind != ExprKind::Binary) return true;
      BinOp op = c->bin_op;
      if (op == BinOp::And || op == BinOp::Or) return true;
      if (!pol) op = detail::negate_cmp(op);

      ExprPtr lhs = c->a;
      ExprPtr rhs = c->b;
      if (lhs->kind != ExprKind::Var && rhs->kind == ExprKind::Var) {
        std::swap(lhs, rhs);
        op = detail::swap_cmp(op);
      }
      if (lhs->kind != ExprKind::Var) return true;

      AbsVal lv = eval_expr(ctx, s, lhs);
      AbsVal rv = eval_expr(ctx, s, rhs);

      bool pointer_test = !lv.pts.empty() || lhs->type.is_pointer();
      if (pointer_test && (op == BinOp::Eq || op == BinOp::Ne) && detail::definitely_null(rv)) {
        AbsVal nv = lv;
        if (op == BinOp::Eq) {
          nv.iv = lv.iv.meet(Interval::constant(0));
          nv.pts.clear();
        } else {
          if (!nv.iv.empty()) {
            if (nv.iv.lo == 0) nv.iv.lo = nv.iv.singleton() ? 1 : 1;
            if (nv.iv.hi == 0) nv.iv.hi = -1;
          }
          if (nv.iv.empty() && nv.pts.empty()) return false;
        }
        if (nv.is_bottom()) return false;
        set_var(s, lhs->name, nv, lhs->type);
        return true;
      }
      if (!lv.pts.empty() || !rv.pts.empty()) return true;

      if (op == BinOp::Ne) {
        Interval ni = lv.iv;
        if (rv.iv.singleton() && !ni.empty()) {
          if (ni.lo == rv.iv.lo) ni.lo = detail::bound_add(ni.lo, 1);
          if (ni.hi == rv.iv.lo) ni.hi = detail::bound_add(ni.hi, -1);
        }
        if (ni.empty()) return false;
        AbsVal nv = lv;
        nv.iv = ni;
        set_var(s, lhs->name, nv, lhs->type);
        // v != v' also trims v' when v is a singleton
        if (rhs->kind == ExprKind::Var && lv.iv.singleton()) {
          Interval ri = rv.iv;
          if (!ri.empty()) {
            if (ri.lo == lv.iv.lo) ri.lo = detail::bound_add(ri.lo, 1);
            if (ri.hi == lv.iv.lo) ri.hi = detail::bound_add(ri.hi, -1);
          }
          if (ri.empty()) return false;
          AbsVal nrv = rv;
          nrv.iv = ri;
          set_var(s, rhs->name, nrv, rhs->type);
        }
        return true;
      }

      Interval li = lv.iv.meet(detail::refine_against(op, rv.iv));
      if (li.empty()) return false;
      AbsVal nv = lv;
      nv.iv = li;
      set_var(s, lhs->name, nv, lhs->type);
      if (rhs->kind == ExprKind::Var) {
        Interval ri = rv.iv.meet(detail::refine_against(detail::swap_cmp(op), lv.iv));
        if (ri.empty()) return false;
        AbsVal nrv = rv;
        nrv.iv = ri;
        set_var(s, rhs->name, nrv, rhs->type);
      }
      return true;
    }
  };

  Refiner r{ctx};
  if (!r.refine(out, cond, polarity)) return AbsState::bottom();
  return out;
}

// ---------------------------------------------------------------------------
// Thread analysis result
// ---------------------------------------------------------------------------

struct Instance {
  std::string fn;
  CallString cs;
};

enum class SuperEdgeKind { Stmt, Guard, Enter, Ret };

struct SuperEdge {
  int src_inst = 0, src_node = 0;
  int dst_inst = 0, dst_node = 0;
  SuperEdgeKind kind = SuperEdgeKind::Stmt;
  const Stmt* stmt = nullptr;  // Stmt / Enter / Ret edges
  ExprPtr guard;
  bool polarity = false;
  int owner_stmt = 0;
  bool feasible = false;
};

struct WidenStats {
  int merges = 0;
  int widen_changed = 0;
};

struct ThreadAnalysis {
  int thread_id = 0;
  std::string entry;
  int K = 2;

  std::vector<Instance> instances;
  std::map<std::pair<std::string, CallString>, int> instance_index;
  std::vector<std::vector<AbsState>> node_states;  // [instance][cfg node]
  std::map<Context, AbsState> contexts;            // pre-state of each statement
  std::vector<SuperEdge> edges;
  std::map<std::pair<int, int>, WidenStats> head_stats;  // (instance, head node)
  std::map<int, int> stmt_mult;                          // stmt id -> 1 | 2 ("many")
  std::map<int, bool> alloc_weak;
  AbsState entry_exit_state;  // exit state of the entry instance

  const AbsState& state_at(int inst, int node) const { return node_states[inst][node]; }

  const AbsState* context_state(const Context& c) const {
    auto it = contexts.find(c);
    return it == contexts.end() ? nullptr : &it->second;
  }
};

// ---------------------------------------------------------------------------
// The sequential engine
// ---------------------------------------------------------------------------

namespace detail {

// node -> nodes it can reach (per function CFG)
inline std::vector<std::set<int>> reachability(const Cfg& cfg) {
  std::vector<std::set<int>> r(cfg.num_nodes);
  for (int n = 0; n < cfg.num_nodes; ++n) {
    std::vector<int> work{n};
    while (!work.empty()) {
      int u = work.back();
      work.pop_back();
      for (int ei : cfg.out_edges[u]) {
        int d = cfg.edges[ei].dst;
        if (r[n].insert(d).second) work.push_back(d);
      }
    }
  }
  return r;
}

inline void collect_call_stmts(const std::vector<StmtPtr>& list, std::vector<const Stmt*>& out) {
  for (const auto& s : list) {
    if (s->kind == StmtKind::Call) out.push_back(s.get());
    collect_call_stmts(s->body, out);
    collect_call_stmts(s->else_body, out);
  }
}

}  // namespace detail

class ThreadAnalyzer {
public:
  ThreadAnalyzer(const Program& prog, const std::map<std::string, Cfg>& cfgs,
                 const std::string& entry, int thread_id, const AnalyzeConfig& cfg)
      : prog_(prog), cfgs_(cfgs), entry_(entry), config_(cfg) {
    result_.thread_id = thread_id;
    result_.entry = entry;
    result_.K = cfg.K;
  }

  ThreadAnalysis run(const AbsState& init) {
    check_recursion();
    compute_multiplicities();

    int root = intern_instance(entry_, CallString{});
    // chaotic interprocedural iteration: repeat whole-thread passes until
    // entries and exits stop changing
    for (int pass = 0;; ++pass) {
      changed_ = false;
      ++pass_;
      analyze_instance(root, init);
      if (!changed_) break;
      if (pass > 256) throw UnsupportedFeature("analysis failed to converge");
    }
    descending_sweep();
    record_contexts();
    build_supergraph();
    result_.entry_exit_state = data_[root].node_states[cfgs_.at(entry_).exit];
    return std::move(result_);
  }

private:
  struct InstanceData {
    AbsState entry_state;
    std::vector<AbsState> node_states;
    AbsState exit_state;
    AbsVal ret_val;
    bool analyzed = false;
    int last_pass = -1;
    std::map<int, int> head_visits;
  };

  void check_recursion() {
    // DFS over the syntactic call graph reachable from the entry
    std::map<std::string, int> mark;  // 0 fresh, 1 on stack, 2 done
    std::vector<std::pair<std::string, size_t>> stack;
    std::map<std::string, std::vector<std::string>> callees;
    auto get_callees = [&](const std::string& fn) -> const std::vector<std::string>& {
      auto it = callees.find(fn);
      if (it != callees.end()) return it->second;
      std::vector<const Stmt*> calls;
      if (const Function* f = prog_.function(fn)) detail::collect_call_stmts(f->body, calls);
      std::vector<std::string> cs;
      for (const Stmt* c : calls) cs.push_back(c->callee);
      return callees.emplace(fn, std::move(cs)).first->second;
    };
    std::function<void(const std::string&)> dfs = [&](const std::string& fn) {
      mark[fn] = 1;
      for (const std::string& g : get_callees(fn)) {
        if (!prog_.function(g)) continue;
        int m = mark[g];
        if (m == 1) throw RecursionUnsupported(g);
        if (m == 0) dfs(g);
      }
      mark[fn] = 2;
    };
    dfs(entry_);
  }

  // Syntactic execution-count bound per statement: 1 or "many" (2).
  void compute_multiplicities() {
    std::map<std::string, int> fn_mult;
    fn_mult[entry_] = 1;
    // propagate in DFS order (call graph is acyclic here)
    std::vector<std::string> order;
    std::set<std::string> seen;
    std::function<void(const std::string&)> dfs = [&](const std::string& fn) {
      if (!seen.insert(fn).second) return;
      std::vector<const Stmt*> calls;
      if (const Function* f = prog_.function(fn)) detail::collect_call_stmts(f->body, calls);
      for (const Stmt* c : calls)
        if (prog_.function(c->callee)) dfs(c->callee);
      order.push_back(fn);
    };
    dfs(entry_);
    std::reverse(order.begin(), order.end());  // callers before callees
    for (const std::string& fn : order) {
      if (!fn_mult.count(fn)) continue;
      const auto& cfg = cfgs_.at(fn);
      auto reach = detail::reachability(cfg);
      auto edge_on_cycle = [&](int stmt_id) {
        auto it = cfg.stmt_edge.find(stmt_id);
        if (it == cfg.stmt_edge.end()) return false;
        const CfgEdge& e = cfg.edges[it->second];
        return reach[e.dst].count(e.src) > 0;
      };
      std::vector<const Stmt*> calls;
      detail::collect_call_stmts(prog_.function(fn)->body, calls);
      for (const Stmt* c : calls) {
        if (!prog_.function(c->callee)) continue;
        int add = fn_mult[fn] * (edge_on_cycle(c->id) ? 2 : 1);
        int& m = fn_mult[c->callee];
        m = std::min(2, m + add);
      }
      // statement multiplicities for this function
      std::function<void(const std::vector<StmtPtr>&)> walk = [&](const std::vector<StmtPtr>& l) {
        for (const auto& s : l) {
          int mult = fn_mult[fn] >= 2 || edge_on_cycle(s->id) ? 2 : 1;
          result_.stmt_mult[s->id] = mult;
          if (s->kind == StmtKind::Alloc)
            result_.alloc_weak[s->id] = mult > 1 || config_.multi_instance_thread;
          walk(s->body);
          walk(s->else_body);
        }
      };
      walk(prog_.function(fn)->body);
    }
  }

  int intern_instance(const std::string& fn, const CallString& cs) {
    auto key = std::make_pair(fn, cs);
    auto it = result_.instance_index.find(key);
    if (it != result_.instance_index.end()) return it->second;
    int idx = int(result_.instances.size());
    result_.instances.push_back({fn, cs});
    result_.instance_index[key] = idx;
    data_.push_back({});
    data_[idx].node_states.assign(cfgs_.at(fn).num_nodes, AbsState::bottom());
    return idx;
  }

  EvalCtx ctx_for(int inst) const {
    return {&prog_, result_.instances[inst].fn, result_.instances[inst].cs};
  }

  bool allow_strong(const Base& b) const {
    if (b.kind == Base::Kind::Dynamic && b.weak) return false;
    if (config_.mode == UpdateMode::Weak &&
        (b.is_shared_kind() || config_.extra_weak.count(b)))
      return false;
    return true;
  }

  void write_targets(const EvalCtx& ctx, AbsState& s, const std::vector<Target>& ts,
                     const AbsVal& val) {
    bool single = ts.size() == 1;
    for (const auto& t : ts) {
      bool strong = single && t.starts.singleton() && allow_strong(t.base);
      s.write(ctx.dom(), t.base, t.range(), val, strong);
    }
  }

  AbsVal thread_token(const std::string& entry, int stmt_id) const {
    return AbsVal::of_pts(Base::function(entry), Interval::constant(stmt_id));
  }

  // Transfer for non-call statement edges.
  AbsState transfer(int inst, const Stmt* s, const AbsState& in) {
    if (!in.reachable) return in;
    EvalCtx ctx = ctx_for(inst);
    AbsState out = in;
    switch (s->kind) {
      case StmtKind::Assign: {
        AbsVal v = eval_expr(ctx, in, s->expr);
        if (v.is_bottom()) return AbsState::bottom();
        write_targets(ctx, out, resolve_lvalue(ctx, in, s->lhs), v);
        return out;
      }
      case StmtKind::Alloc: {
        AbsVal sz = eval_expr(ctx, in, s->expr);
        long long size = sz.iv.singleton() ? sz.iv.lo : -1;
        bool weak = true;
        auto it = result_.alloc_weak.find(s->id);
        if (it != result_.alloc_weak.end()) weak = it->second;
        Base dyn = Base::dynamic(s->id, weak, size);
        write_targets(ctx, out, resolve_lvalue(ctx, in, s->lhs),
                      AbsVal::of_pts(dyn, Interval::constant(0)));
        return out;
      }
      case StmtKind::Trylock: {
        if (s->lhs)
          write_targets(ctx, out, resolve_lvalue(ctx, in, s->lhs),
                        AbsVal::of({0, Interval::kPosInf}));
        return out;
      }
      case StmtKind::Create: {
        std::vector<Target> hs = resolve_lvalue(ctx, in, s->lhs);
        AbsVal token;
        if (!s->callee.empty()) {
          token = thread_token(s->callee, s->id);
        } else {
          AbsVal f = eval_expr(ctx, in, s->entry_expr);
          for (const auto& [base, off] : f.pts)
            if (base.kind == Base::Kind::Function)
              token = token.join(thread_token(base.name, s->id));
        }
        if (!token.is_bottom()) write_targets(ctx, out, hs, token);
        return out;
      }
      case StmtKind::Join:
      case StmtKind::Lock:
      case StmtKind::Unlock:
      case StmtKind::Rdlock:
      case StmtKind::Wrlock:
      case StmtKind::RwUnlock:
      case StmtKind::AssertNonRacing:
      case StmtKind::If:
      case StmtKind::While:
        return out;  // no effect on values
      case StmtKind::Return:
        return out;
      case StmtKind::Call:
        return out;  // handled by transfer_call
    }
    return out;
  }

  // Call edges: bind formals, analyze the callee instance, splice its exit.
  AbsState transfer_call(int inst, const Stmt* s, const AbsState& in) {
    if (!in.reachable) return in;
    EvalCtx ctx = ctx_for(inst);
    const Function* callee = prog_.function(s->callee);
    CallString cs2 = result_.instances[inst].cs.push(s->id, s->callee, config_.K);
    int cidx = intern_instance(s->callee, cs2);

    AbsState centry = in;
    strip_frame(centry, s->callee, cs2);
    EvalCtx cctx{&prog_, s->callee, cs2};
    for (size_t i = 0; i < callee->formals.size(); ++i) {
      AbsVal av = eval_expr(ctx, in, s->args[i]);
      const auto& [fname, ftype] = callee->formals[i];
      long long w = cctx.sizeof_type(ftype);
      Base fb = Base::formal(s->callee, fname, cs2, w);
      centry.env[fb].clear();
      centry.env[fb][{0, w - 1}] = av;
    }
    analyze_instance(cidx, centry);

    AbsState out = data_[cidx].exit_state;
    if (!out.reachable) return out;
    strip_frame(out, s->callee, cs2);
    if (s->lhs) {
      AbsVal rv = data_[cidx].ret_val;
      if (rv.is_bottom()) rv = AbsVal::top_scalar();
      write_targets(ctx, out, resolve_lvalue(ctx, out, s->lhs), rv);
    }
    return out;
  }

  static void strip_frame(AbsState& s, const std::string& fn, const CallString& cs) {
    for (auto it = s.env.begin(); it != s.env.end();) {
      const Base& b = it->first;
      if ((b.kind == Base::Kind::Local || b.kind == Base::Kind::Formal) && b.func == fn &&
          b.cs == cs)
        it = s.env.erase(it);
      else
        ++it;
    }
  }

  void analyze_instance(int idx, const AbsState& incoming_entry) {
    InstanceData& d = data_[idx];
    DomainCtx dom{&prog_};
    AbsState new_entry =
        d.analyzed ? join_states(dom, d.entry_state, incoming_entry) : incoming_entry;
    bool entry_grew = !d.analyzed || !(new_entry == d.entry_state);
    if (!entry_grew && d.last_pass == pass_) return;
    if (on_stack_.count(idx)) return;  // converges via the outer passes

    d.entry_state = new_entry;
    d.analyzed = true;
    d.last_pass = pass_;
    on_stack_.insert(idx);

    const std::string& fn = result_.instances[idx].fn;
    const Cfg& cfg = cfgs_.at(fn);
    std::set<int> heads;
    for (const auto& l : cfg.loops) heads.insert(l.head);

    d.node_states[cfg.entry] = d.entry_state;
    std::set<int> work{cfg.entry};
    AbsVal ret_acc = d.ret_val;
    int iter_guard = 0;
    while (!work.empty()) {
      if (++iter_guard > 100000) throw UnsupportedFeature("analysis failed to converge");
      int n = *work.begin();
      work.erase(work.begin());
      AbsState src = d.node_states[n];
      if (!src.reachable) continue;
      for (int ei : cfg.out_edges[n]) {
        const CfgEdge& e = cfg.edges[ei];
        AbsState out;
        if (e.is_guard()) {
          out = refine_guard(ctx_for(idx), src, e.guard, e.polarity);
        } else if (e.stmt->kind == StmtKind::Call) {
          out = transfer_call(idx, e.stmt, src);
        } else {
          out = transfer(idx, e.stmt, src);
          if (e.stmt->kind == StmtKind::Return && e.stmt->expr && src.reachable) {
            AbsVal rv = eval_expr(ctx_for(idx), src, e.stmt->expr);
            ret_acc = ret_acc.join(rv);
          }
        }
        if (!out.reachable) continue;
        AbsState& dst = d.node_states[e.dst];
        AbsState merged = join_states(dom, dst, out);
        bool is_head = heads.count(e.dst) > 0;
        if (is_head) {
          auto& stats = result_.head_stats[{idx, e.dst}];
          int& visits = d.head_visits[e.dst];
          ++visits;
          if (visits > kWidenDelay) {
            AbsState widened = widen_states(dom, dst, merged);
            if (!(widened == dst)) ++stats.widen_changed;
            merged = std::move(widened);
          } else if (!(merged == dst)) {
            ++stats.merges;
          }
        }
        if (!(merged == dst)) {
          dst = std::move(merged);
          work.insert(e.dst);
        }
      }
    }

    AbsState new_exit = d.node_states[cfg.exit];
    if (!(new_exit == d.exit_state) || !(ret_acc == d.ret_val)) changed_ = true;
    d.exit_state = new_exit;
    d.ret_val = ret_acc;
    on_stack_.erase(idx);
  }

  // One decreasing pass per instance, callees first, in reverse postorder.
  void descending_sweep() {
    // order instances callee-first (call DAG)
    std::vector<int> order;
    std::set<int> seen;
    std::function<void(int)> dfs = [&](int idx) {
      if (!seen.insert(idx).second) return;
      const std::string& fn = result_.instances[idx].fn;
      const Cfg& cfg = cfgs_.at(fn);
      for (const auto& e : cfg.edges) {
        if (e.is_guard() || e.stmt->kind != StmtKind::Call) continue;
        CallString cs2 = result_.instances[idx].cs.push(e.stmt->id, e.stmt->callee, config_.K);
        auto it = result_.instance_index.find({e.stmt->callee, cs2});
        if (it != result_.instance_index.end()) dfs(it->second);
      }
      order.push_back(idx);
    };
    auto root_it = result_.instance_index.find({entry_, CallString{}});
    if (root_it == result_.instance_index.end()) return;
    dfs(root_it->second);

    DomainCtx dom{&prog_};
    for (int idx : order) {
      InstanceData& d = data_[idx];
      if (!d.analyzed) continue;
      const std::string& fn = result_.instances[idx].fn;
      const Cfg& cfg = cfgs_.at(fn);

      // reverse postorder from entry
      std::vector<int> rpo;
      std::set<int> visited;
      std::function<void(int)> po = [&](int n) {
        if (!visited.insert(n).second) return;
        for (int ei : cfg.out_edges[n]) po(cfg.edges[ei].dst);
        rpo.push_back(n);
      };
      po(cfg.entry);
      std::reverse(rpo.begin(), rpo.end());

      std::vector<std::vector<std::pair<int, int>>> in_edges(cfg.num_nodes);
      for (size_t ei = 0; ei < cfg.edges.size(); ++ei)
        in_edges[cfg.edges[ei].dst].push_back({cfg.edges[ei].src, int(ei)});

      std::vector<AbsState> next = d.node_states;
      std::set<int> done;
      AbsVal ret_acc;
      for (int n : rpo) {
        if (n == cfg.entry) {
          next[n] = d.entry_state;
          done.insert(n);
          continue;
        }
        AbsState acc = AbsState::bottom();
        for (const auto& [src, ei] : in_edges[n]) {
          const CfgEdge& e = cfg.edges[ei];
          const AbsState& s = done.count(src) ? next[src] : d.node_states[src];
          AbsState out;
          if (e.is_guard())
            out = refine_guard(ctx_for(idx), s, e.guard, e.polarity);
          else if (e.stmt->kind == StmtKind::Call)
            out = transfer_call_cached(idx, e.stmt, s);
          else
            out = transfer(idx, e.stmt, s);
          acc = join_states(dom, acc, out);
        }
        next[n] = std::move(acc);
        done.insert(n);
      }
      // recompute the return value from the narrowed states
      for (size_t ei = 0; ei < cfg.edges.size(); ++ei) {
        const CfgEdge& e = cfg.edges[ei];
        if (e.is_guard() || e.stmt->kind != StmtKind::Return || !e.stmt->expr) continue;
        const AbsState& s = next[e.src];
        if (!s.reachable) continue;
        ret_acc = ret_acc.join(eval_expr(ctx_for(idx), s, e.stmt->expr));
      }
      d.node_states = std::move(next);
      d.exit_state = d.node_states[cfg.exit];
      if (!ret_acc.is_bottom()) d.ret_val = ret_acc;
    }
  }

  // Call transfer that reuses the callee's final states (descending pass).
  AbsState transfer_call_cached(int inst, const Stmt* s, const AbsState& in) {
    if (!in.reachable) return in;
    EvalCtx ctx = ctx_for(inst);
    CallString cs2 = result_.instances[inst].cs.push(s->id, s->callee, config_.K);
    auto it = result_.instance_index.find({s->callee, cs2});
    if (it == result_.instance_index.end()) return AbsState::bottom();
    const InstanceData& cd = data_[it->second];
    AbsState out = cd.exit_state;
    if (!out.reachable) return out;
    strip_frame(out, s->callee, cs2);
    if (s->lhs) {
      AbsVal rv = cd.ret_val;
      if (rv.is_bottom()) rv = AbsVal::top_scalar();
      write_targets(ctx, out, resolve_lvalue(ctx, out, s->lhs), rv);
    }
    return out;
  }

  void record_contexts() {
    for (size_t idx = 0; idx < result_.instances.size(); ++idx) {
      const Instance& inst = result_.instances[idx];
      const Cfg& cfg = cfgs_.at(inst.fn);
      for (const auto& e : cfg.edges) {
        if (e.is_guard()) continue;
        Context c{result_.thread_id, inst.cs, e.stmt->id};
        const AbsState& pre = data_[idx].node_states[e.src];
        auto it = result_.contexts.find(c);
        if (it == result_.contexts.end())
          result_.contexts[c] = pre;
        else
          it->second = join_states(DomainCtx{&prog_}, it->second, pre);
      }
    }
  }

  void build_supergraph() {
    for (size_t idx = 0; idx < result_.instances.size(); ++idx) {
      const Instance& inst = result_.instances[idx];
      const Cfg& cfg = cfgs_.at(inst.fn);
      for (const auto& e : cfg.edges) {
        const AbsState& src_state = data_[idx].node_states[e.src];
        if (e.is_guard()) {
          bool feas = src_state.reachable &&
                      refine_guard(ctx_for(int(idx)), src_state, e.guard, e.polarity).reachable;
          result_.edges.push_back({int(idx), e.src, int(idx), e.dst, SuperEdgeKind::Guard,
                                   nullptr, e.guard, e.polarity, e.owner_stmt, feas});
          continue;
        }
        if (e.stmt->kind == StmtKind::Call) {
          CallString cs2 = inst.cs.push(e.stmt->id, e.stmt->callee, config_.K);
          auto it = result_.instance_index.find({e.stmt->callee, cs2});
          if (it != result_.instance_index.end()) {
            const Cfg& ccfg = cfgs_.at(e.stmt->callee);
            bool feas = src_state.reachable;
            result_.edges.push_back({int(idx), e.src, it->second, ccfg.entry,
                                     SuperEdgeKind::Enter, e.stmt, nullptr, false, 0, feas});
            bool rfeas = data_[it->second].node_states[ccfg.exit].reachable;
            result_.edges.push_back({it->second, ccfg.exit, int(idx), e.dst, SuperEdgeKind::Ret,
                                     e.stmt, nullptr, false, 0, rfeas});
          } else {
            // callee never analyzed (unreachable call)
            result_.edges.push_back({int(idx), e.src, int(idx), e.dst, SuperEdgeKind::Stmt,
                                     e.stmt, nullptr, false, 0, false});
          }
          continue;
        }
        result_.edges.push_back({int(idx), e.src, int(idx), e.dst, SuperEdgeKind::Stmt, e.stmt,
                                 nullptr, false, 0, src_state.reachable});
      }
    }
    // publish node states
    result_.node_states.clear();
    for (size_t idx = 0; idx < result_.instances.size(); ++idx)
      result_.node_states.push_back(data_[idx].node_states);
  }

  const Program& prog_;
  const std::map<std::string, Cfg>& cfgs_;
  std::string entry_;
  AnalyzeConfig config_;
  ThreadAnalysis result_;
  std::deque<InstanceData> data_;
  std::set<int> on_stack_;
  bool changed_ = false;
  int pass_ = 0;
};

inline ThreadAnalysis analyze_thread(const Program& prog, const std::map<std::string, Cfg>& cfgs,
                                     const std::string& entry, int thread_id,
                                     const AbsState& init, const AnalyzeConfig& config) {
  return ThreadAnalyzer(prog, cfgs, entry, thread_id, config).run(init);
}

// Entry names a create statement can start, given the state before it.
// Empty result means the entry could not be resolved.
inline std::set<std::string> resolve_create_entries(const EvalCtx& ctx, const AbsState& state,
                                                    const Stmt* s, bool* unresolved) {
  *unresolved = false;
  if (!s->callee.empty()) return {s->callee};
  AbsVal v = eval_expr(ctx, state, s->entry_expr);
  std::set<std::string> out;
  for (const auto& [base, off] : v.pts) {
    if (base.kind != Base::Kind::Function) {
      *unresolved = true;
      return {};
    }
    out.insert(base.name);
  }
  if (out.empty()) *unresolved = true;
  return out;
}

// Decode thread tokens stored in a handle cell: (entry, create stmt id).
inline std::set<std::pair<std::string, int>> decode_thread_tokens(const AbsVal& v) {
  std::set<std::pair<std::string, int>> out;
  for (const auto& [base, off] : v.pts)
    if (base.kind == Base::Kind::Function && !off.empty() && off.lo >= 1)
      out.insert({base.name, int(off.lo)});  // joined tokens widen `off`; callers
                                             // treat non-singletons as ambiguous
  return out;
}

// True when the tokens identify exactly one create statement.
inline bool tokens_unique(const AbsVal& v, std::pair<std::string, int>* out) {
  std::set<std::pair<std::string, int>> toks;
  for (const auto& [base, off] : v.pts) {
    if (base.kind != Base::Kind::Function) return false;
    if (off.empty() || !off.singleton() || off.lo < 1) return false;
    toks.insert({base.name, int(off.lo)});
  }
  if (toks.size() != 1) return false;
  *out = *toks.begin();
  return true;
}

}  // namespace minirace
