#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "minirace/absint.hpp"
#include "minirace/cfg.hpp"
#include "minirace/domain.hpp"

namespace minirace {

struct OracleBounds {
  int max_loop_iters = 8;
  int max_instances = 4;
  long long max_states = 1000000;
};

enum class OracleOutcome { Race, NoRace, BoundExceeded };

struct OracleWitness {
  int stmt1 = 0, stmt2 = 0;
  SourceLoc loc1, loc2;
  std::string entry1, entry2;
};

struct OracleResult {
  OracleOutcome outcome = OracleOutcome::NoRace;
  std::optional<OracleWitness> witness;
  std::vector<std::pair<int, std::string>> traps;  // (stmt id, reason)
  std::set<std::pair<int, int>> enabled_pairs;     // stmt ids simultaneously enabled
  long long states_explored = 0;
};

// ---------------------------------------------------------------------------
// Concrete semantics
// ---------------------------------------------------------------------------

namespace concrete {

struct Value {
  enum class Kind { Int, Ptr, Func, Thread } kind = Kind::Int;
  long long i = 0;       // Int value / Ptr offset / Thread instance
  int base = -1;         // Ptr base id
  std::string fn;        // Func

  static Value of_int(long long v) { return {Kind::Int, v, -1, ""}; }
  static Value of_ptr(int base, long long off) { return {Kind::Ptr, off, base, ""}; }
  static Value of_func(std::string f) { return {Kind::Func, 0, -1, std::move(f)}; }
  static Value of_thread(long long id) { return {Kind::Thread, id, -1, ""}; }

  bool truthy() const {
    switch (kind) {
      case Kind::Int: return i != 0;
      default: return true;  // addresses, functions and handles are non-zero
    }
  }
  bool operator==(const Value& o) const {
    return kind == o.kind && i == o.i && base == o.base && fn == o.fn;
  }
  std::string str() const {
    switch (kind) {
      case Kind::Int: return "i" + std::to_string(i);
      case Kind::Ptr: return "p" + std::to_string(base) + ":" + std::to_string(i);
      case Kind::Func: return "f" + fn;
      case Kind::Thread: return "t" + std::to_string(i);
    }
    return "?";
  }
};

// Concrete allocation identity. Locals and formals are per frame activation.
struct BaseInfo {
  enum class Kind { Global, Frame, Dynamic } kind = Kind::Global;
  std::string name;   // variable name
  std::string fn;     // owning function (Frame)
  int thread = -1;    // Frame
  long long frame_seq = -1;
  int alloc_stmt = 0;  // Dynamic
  long long alloc_seq = -1;
  long long size = 0;
  CType type;  // declared type (Global/Frame)

  auto key() const { return std::tie(kind, name, fn, thread, frame_seq, alloc_stmt, alloc_seq); }
  bool operator<(const BaseInfo& o) const { return key() < o.key(); }
};

struct Frame {
  std::string fn;
  int node = 0;
  long long frame_seq = 0;
  CallString cs;
  std::map<int, int> loop_counts;  // loop head node -> iterations taken
  // where to resume in the caller and what receives the return value
  int ret_node = -1;
  const Expr* result_lhs = nullptr;
};

struct Thread {
  enum class Status { Running, Finished, Joined } status = Status::Running;
  std::string entry;
  std::vector<Frame> frames;
  std::optional<Value> pending_ret;
};

struct LockState {
  int mutex_owner = -1;                 // thread instance or -1
  int rw_writer = -1;                   // writer instance or -1
  std::map<int, int> rw_readers;        // instance -> hold count

  bool free_mutex() const { return mutex_owner < 0; }
  bool idle() const { return mutex_owner < 0 && rw_writer < 0 && rw_readers.empty(); }
};

struct State {
  std::vector<Thread> threads;
  std::map<std::pair<int, long long>, Value> memory;  // (base id, byte offset) -> value
  std::map<std::pair<int, long long>, LockState> locks;
  long long next_frame_seq = 1;
  long long next_alloc_seq = 1;
  int created_instances = 1;
};

struct FootprintEntry {
  int base = -1;
  long long start = 0;
  long long width = 0;
  bool write = false;
  bool atomic = false;

  bool overlaps(const FootprintEntry& o) const {
    return base == o.base && start < o.start + o.width && o.start < start + width;
  }
};

struct Trap {
  int stmt = 0;
  std::string reason;
};

}  // namespace concrete

// Deterministic small-step machine over the program's CFGs. Exposed so that
// alternative explorers (tests) can reuse the same semantics.
class ConcreteMachine {
public:
  using Value = concrete::Value;
  using State = concrete::State;
  using FootprintEntry = concrete::FootprintEntry;

  ConcreteMachine(const Program& prog, const std::map<std::string, Cfg>& cfgs,
                  const OracleBounds& bounds)
      : prog_(prog), cfgs_(cfgs), bounds_(bounds) {}

  State initial_state() {
    State s;
    concrete::Thread main_thread;
    main_thread.entry = prog_.entry;
    main_thread.frames.push_back({prog_.entry, cfgs_.at(prog_.entry).entry, 0, CallString{}});
    s.threads.push_back(std::move(main_thread));
    for (const auto& g : prog_.globals) {
      if (g.type.is_int_like() && g.has_init && g.init != 0) {
        int b = intern_global(g);
        s.memory[{b, 0}] = Value::of_int(g.init);
      }
    }
    return s;
  }

  // What a thread would do next; nullopt when finished or mid-bookkeeping.
  struct NextInfo {
    int edge_index = -1;    // into the owning cfg
    const Cfg* cfg = nullptr;
    int witness_stmt = 0;   // stmt id (guard edges use the owning if/while)
    SourceLoc loc;
    bool enabled = true;    // false: blocked on a lock or join
  };

  std::optional<NextInfo> peek(const State& s, int tid) const {
    const concrete::Thread& t = s.threads[tid];
    if (t.status != concrete::Thread::Status::Running) return std::nullopt;
    const concrete::Frame& fr = t.frames.back();
    const Cfg& cfg = cfgs_.at(fr.fn);
    const auto& outs = cfg.out_edges[fr.node];
    if (outs.empty()) return std::nullopt;  // exit nodes are never rested on
    NextInfo info;
    info.cfg = &cfg;
    if (outs.size() == 1 && !cfg.edges[outs[0]].is_guard()) {
      info.edge_index = outs[0];
      const Stmt* st = cfg.edges[outs[0]].stmt;
      info.witness_stmt = st->id;
      info.loc = st->loc;
      info.enabled = stmt_enabled(s, tid, st);
      return info;
    }
    // guard pair: evaluate the condition to pick the edge
    const CfgEdge* chosen = nullptr;
    bool val = false;
    {
      std::vector<FootprintEntry> sink;
      Value cv = eval(s, tid, cfg.edges[outs[0]].guard, &sink);
      val = cv.truthy();
    }
    for (int ei : outs) {
      const CfgEdge& e = cfg.edges[ei];
      if (e.is_guard() && e.polarity == val) {
        chosen = &e;
        info.edge_index = ei;
        break;
      }
    }
    if (!chosen) return std::nullopt;
    info.witness_stmt = chosen->owner_stmt;
    if (const StmtInfo* si = prog_.stmt_by_id(chosen->owner_stmt)) info.loc = si->stmt->loc;
    return info;
  }

  // Reads/writes the next transition performs (empty when blocked/finished).
  std::vector<FootprintEntry> footprint(const State& s, int tid) const {
    std::vector<FootprintEntry> fp;
    try {
      footprint_inner(s, tid, fp);
    } catch (const TrapException&) {
      // the trap fires when the transition executes; keep what was collected
    }
    return fp;
  }

private:
  void footprint_inner(const State& s, int tid, std::vector<FootprintEntry>& fp) const {
    auto ni = peek(s, tid);
    if (!ni || !ni->enabled) return;
    const CfgEdge& e = ni->cfg->edges[ni->edge_index];
    const concrete::Frame& fr = s.threads[tid].frames.back();
    if (e.is_guard()) {
      eval(s, tid, e.guard, &fp);
      return;
    }
    const Stmt* st = e.stmt;
    switch (st->kind) {
      case StmtKind::Assign: {
        eval(s, tid, st->expr, &fp);
        add_write(s, tid, st->lhs, &fp);
        break;
      }
      case StmtKind::Call: {
        for (const auto& a : st->args) eval(s, tid, a, &fp);
        break;
      }
      case StmtKind::Return: {
        if (st->expr) eval(s, tid, st->expr, &fp);
        if (s.threads[tid].frames.size() > 1 && fr.result_lhs) {
          // delivering the value writes the caller's result lvalue
          // (resolved in the caller frame)
          add_write_in_frame(s, tid, int(s.threads[tid].frames.size()) - 2,
                            fr.result_lhs, &fp);
        }
        break;
      }
      case StmtKind::Create: {
        eval(s, tid, st->expr, &fp);
        add_write(s, tid, st->lhs.get(), &fp);
        break;
      }
      case StmtKind::Join: {
        eval(s, tid, st->expr, &fp);
        break;
      }
      case StmtKind::Lock:
      case StmtKind::Unlock:
      case StmtKind::Rdlock:
      case StmtKind::Wrlock:
      case StmtKind::RwUnlock: {
        // reads done to compute the lock address count; the lock object
        // itself is internally synchronized
        std::vector<FootprintEntry> tmp;
        eval(s, tid, st->expr, &tmp);
        for (const auto& f : tmp) fp.push_back(f);
        break;
      }
      case StmtKind::Trylock: {
        eval(s, tid, st->expr, &fp);
        if (st->lhs) add_write(s, tid, st->lhs.get(), &fp);
        break;
      }
      case StmtKind::Alloc: {
        eval(s, tid, st->expr, &fp);
        add_write(s, tid, st->lhs.get(), &fp);
        break;
      }
      case StmtKind::If:
      case StmtKind::While:
      case StmtKind::AssertNonRacing:
        break;
    }
  }

public:
  struct StepResult {
    std::optional<State> next;
    bool bound_hit = false;
    std::optional<concrete::Trap> trap;
  };

  StepResult step(const State& s, int tid) const {
    StepResult r;
    auto ni = peek(s, tid);
    if (!ni || !ni->enabled) return r;
    try {
      State ns = s;
      const CfgEdge& e = ni->cfg->edges[ni->edge_index];
      if (e.is_guard()) {
        concrete::Frame& fr = ns.threads[tid].frames.back();
        bool is_loop_head = false;
        for (const auto& l : ni->cfg->loops)
          if (l.head == e.src) is_loop_head = true;
        if (is_loop_head && e.polarity && e.dst != e.src) {
          int& c = fr.loop_counts[e.src];
          if (++c > bounds_.max_loop_iters) {
            r.bound_hit = true;
            return r;
          }
        }
        fr.node = e.dst;
        r.next = std::move(ns);
        return r;
      }
      if (!exec_stmt(ns, tid, e, r)) return r;  // trap or bound recorded
      r.next = std::move(ns);
      return r;
    } catch (const TrapException& t) {
      r.trap = concrete::Trap{t.stmt, t.reason};
      return r;
    }
  }

  // Canonical state key. Loop counters are excluded; revisits are pruned
  // via counter-vector dominance instead (see oracle_check).
  std::string serialize(const State& s) const {
    std::ostringstream os;
    for (const auto& t : s.threads) {
      os << "T" << int(t.status) << t.entry << "(";
      for (const auto& f : t.frames)
        os << f.fn << "@" << f.node << "#" << f.frame_seq << ";";
      os << ")";
    }
    os << "|M";
    for (const auto& [k, v] : s.memory) os << k.first << "." << k.second << "=" << v.str() << ";";
    os << "|L";
    for (const auto& [k, l] : s.locks) {
      os << k.first << "." << k.second << "=" << l.mutex_owner << "/" << l.rw_writer << "/";
      for (const auto& [r, c] : l.rw_readers) os << r << ":" << c << ",";
      os << ";";
    }
    return os.str();
  }

  // Loop counters as a canonical map; keys align between states that share a
  // serialize() key (frame sequence numbers are part of it).
  std::map<std::tuple<int, long long, int>, int> counter_vector(const State& s) const {
    std::map<std::tuple<int, long long, int>, int> out;
    for (int tid = 0; tid < int(s.threads.size()); ++tid)
      for (const auto& f : s.threads[tid].frames)
        for (const auto& [head, c] : f.loop_counts)
          if (c > 0) out[{tid, f.frame_seq, head}] = c;
    return out;
  }

  const std::vector<concrete::BaseInfo>& base_table() const { return bases_; }

  // abstract Base corresponding to a concrete base (for differential tests)
  Base abstract_base(int id, int K) const {
    const concrete::BaseInfo& b = bases_[id];
    switch (b.kind) {
      case concrete::BaseInfo::Kind::Global:
        return Base::global(b.name, b.size);
      case concrete::BaseInfo::Kind::Frame: {
        CallString cs = frame_cs_.at({b.thread, b.frame_seq});
        CallString trunc;
        for (const auto& c : cs.calls) trunc = trunc.push(c.first, c.second, K);
        const Function* f = prog_.function(b.fn);
        bool formal = false;
        for (const auto& [n, t] : f->formals)
          if (n == b.name) formal = true;
        return formal ? Base::formal(b.fn, b.name, trunc, b.size)
                      : Base::local(b.fn, b.name, trunc, b.size);
      }
      case concrete::BaseInfo::Kind::Dynamic:
        return Base::dynamic(b.alloc_stmt, false, b.size);
    }
    return Base::global("?", 0);
  }

private:
  struct TrapException {
    int stmt;
    std::string reason;
  };

  // ---- base interning ---------------------------------------------------
  int intern(const concrete::BaseInfo& b) const {
    auto it = base_ids_.find(b);
    if (it != base_ids_.end()) return it->second;
    int id = int(bases_.size());
    bases_.push_back(b);
    base_ids_[b] = id;
    return id;
  }

  int intern_global(const Global& g) const {
    concrete::BaseInfo b;
    b.kind = concrete::BaseInfo::Kind::Global;
    b.name = g.name;
    b.size = size_of(g.type, prog_.model, prog_.records);
    b.type = g.type;
    return intern(b);
  }

  int intern_frame_var(int tid, const concrete::Frame& fr, const std::string& name,
                       const CType& ty) const {
    concrete::BaseInfo b;
    b.kind = concrete::BaseInfo::Kind::Frame;
    b.name = name;
    b.fn = fr.fn;
    b.thread = tid;
    b.frame_seq = fr.frame_seq;
    b.size = size_of(ty, prog_.model, prog_.records);
    b.type = ty;
    frame_cs_[{tid, fr.frame_seq}] = fr.cs;
    return intern(b);
  }

  // ---- evaluation ---------------------------------------------------------

  struct Place {
    int base = -1;
    long long off = 0;
    long long width = 0;
    bool atomic = false;
  };

  void check_bounds(const Place& p, int stmt, const char* what) const {
    const concrete::BaseInfo& b = bases_[p.base];
    if (p.off < 0 || (b.size > 0 && p.off + p.width > b.size))
      throw TrapException{stmt, std::string("out-of-bounds ") + what};
  }

  Value read_place(const State& s, const Place& p) const {
    auto it = s.memory.find({p.base, p.off});
    if (it != s.memory.end()) return it->second;
    return Value::of_int(0);  // uninitialized cells read as zero
  }

  Place resolve_place(const State& s, int tid, const Expr* e,
                      std::vector<FootprintEntry>* fp) const {
    switch (e->kind) {
      case ExprKind::Var: {
        const concrete::Frame& fr = s.threads[tid].frames.back();
        const Function* f = prog_.function(fr.fn);
        const CType* ty = nullptr;
        bool frame_var = false;
        for (const auto& [n, t] : f->locals)
          if (n == e->name) {
            ty = &t;
            frame_var = true;
          }
        if (!ty)
          for (const auto& [n, t] : f->formals)
            if (n == e->name) {
              ty = &t;
              frame_var = true;
            }
        int base;
        if (frame_var) {
          base = intern_frame_var(tid, fr, e->name, *ty);
        } else if (const Global* g = prog_.global(e->name)) {
          base = intern_global(*g);
          ty = &g->type;
        } else {
          throw TrapException{0, "unknown variable " + e->name};
        }
        long long w = size_of(e->type, prog_.model, prog_.records);
        return {base, 0, w, e->type.kind == TypeKind::AtomicInt};
      }
      case ExprKind::Deref: {
        Value p = eval(s, tid, e->a, fp);
        if (p.kind != Value::Kind::Ptr) throw TrapException{0, "dereference of non-pointer"};
        long long w = size_of(e->type, prog_.model, prog_.records);
        return {p.base, p.i, w, e->type.kind == TypeKind::AtomicInt};
      }
      case ExprKind::Index: {
        long long esz = size_of(e->type, prog_.model, prog_.records);
        Value idx = eval(s, tid, e->b, fp);
        if (idx.kind != Value::Kind::Int) throw TrapException{0, "non-integer index"};
        Place base;
        if (e->a->type.is_array()) {
          base = resolve_place(s, tid, e->a.get(), fp);
        } else {
          Value p = eval(s, tid, e->a, fp);
          if (p.kind != Value::Kind::Ptr) throw TrapException{0, "index on non-pointer"};
          base = {p.base, p.i, esz, false};
        }
        return {base.base, base.off + idx.i * esz, esz, e->type.kind == TypeKind::AtomicInt};
      }
      case ExprKind::Field: {
        Place base = resolve_place(s, tid, e->a.get(), fp);
        long long off =
            field_offset(prog_.records, e->a->type.record_name, e->name, prog_.model);
        long long w = size_of(e->type, prog_.model, prog_.records);
        return {base.base, base.off + off, w, e->type.kind == TypeKind::AtomicInt};
      }
      case ExprKind::Cast:
        return resolve_place(s, tid, e->a.get(), fp);
      default:
        throw TrapException{0, "bad lvalue"};
    }
  }

  Value eval(const State& s, int tid, const ExprPtr& e, std::vector<FootprintEntry>* fp) const {
    return eval(s, tid, e.get(), fp);
  }

  Value eval(const State& s, int tid, const Expr* e, std::vector<FootprintEntry>* fp) const {
    switch (e->kind) {
      case ExprKind::IntLit:
        return Value::of_int(e->int_value);
      case ExprKind::Var: {
        if (prog_.function(e->name)) return Value::of_func(e->name);
        if (e->type.is_array()) {
          Place p = resolve_place(s, tid, e, fp);
          return Value::of_ptr(p.base, 0);
        }
        Place p = resolve_place(s, tid, e, fp);
        fp->push_back({p.base, p.off, p.width, false, p.atomic});
        return read_place(s, p);
      }
      case ExprKind::Unary: {
        Value v = eval(s, tid, e->a, fp);
        if (e->un_op == UnOp::Not) return Value::of_int(v.truthy() ? 0 : 1);
        if (v.kind != Value::Kind::Int) throw TrapException{0, "negation of non-integer"};
        return Value::of_int(-v.i);
      }
      case ExprKind::Binary: {
        Value a = eval(s, tid, e->a, fp);
        Value b = eval(s, tid, e->b, fp);
        auto as_int = [&](const Value& v) {
          if (v.kind != Value::Kind::Int) throw TrapException{0, "arithmetic on non-integer"};
          return v.i;
        };
        switch (e->bin_op) {
          case BinOp::Add: return Value::of_int(as_int(a) + as_int(b));
          case BinOp::Sub: return Value::of_int(as_int(a) - as_int(b));
          case BinOp::Mul: return Value::of_int(as_int(a) * as_int(b));
          case BinOp::Div:
            if (as_int(b) == 0) throw TrapException{0, "division by zero"};
            return Value::of_int(a.i / b.i);
          case BinOp::Mod:
            if (as_int(b) == 0) throw TrapException{0, "division by zero"};
            return Value::of_int(a.i % b.i);
          case BinOp::Lt: return Value::of_int(as_int(a) < as_int(b) ? 1 : 0);
          case BinOp::Le: return Value::of_int(as_int(a) <= as_int(b) ? 1 : 0);
          case BinOp::Gt: return Value::of_int(as_int(a) > as_int(b) ? 1 : 0);
          case BinOp::Ge: return Value::of_int(as_int(a) >= as_int(b) ? 1 : 0);
          case BinOp::Eq: return Value::of_int(a == b ? 1 : 0);
          case BinOp::Ne: return Value::of_int(a == b ? 0 : 1);
          case BinOp::And: return Value::of_int(a.truthy() && b.truthy() ? 1 : 0);
          case BinOp::Or: return Value::of_int(a.truthy() || b.truthy() ? 1 : 0);
        }
        return Value::of_int(0);
      }
      case ExprKind::Deref:
      case ExprKind::Index:
      case ExprKind::Field: {
        Place p = resolve_place(s, tid, e, fp);
        check_bounds(p, 0, "read");
        fp->push_back({p.base, p.off, p.width, false, p.atomic});
        return read_place(s, p);
      }
      case ExprKind::AddrOf: {
        if (e->a->kind == ExprKind::Var && prog_.function(e->a->name))
          return Value::of_func(e->a->name);
        Place p = resolve_place(s, tid, e->a.get(), fp);
        return Value::of_ptr(p.base, p.off);
      }
      case ExprKind::Cast:
        return eval(s, tid, e->a, fp);
      case ExprKind::Call:
        throw TrapException{0, "unhoisted call"};
    }
    return Value::of_int(0);
  }

  void add_write(const State& s, int tid, const ExprPtr& lv,
                 std::vector<FootprintEntry>* fp) const {
    add_write(s, tid, lv.get(), fp);
  }
  void add_write(const State& s, int tid, const Expr* lv,
                 std::vector<FootprintEntry>* fp) const {
    Place p = resolve_place(s, tid, lv, fp);
    fp->push_back({p.base, p.off, p.width, true, p.atomic});
  }
  void add_write_in_frame(const State& s, int tid, int frame_idx, const Expr* lv,
                          std::vector<FootprintEntry>* fp) const {
    // resolve against an outer frame (return-value delivery)
    State shallow = s;  // cheap logical trick: temporarily drop inner frames
    concrete::Thread& t = shallow.threads[tid];
    t.frames.resize(frame_idx + 1);
    add_write(shallow, tid, lv, fp);
  }

  // ---- enabledness --------------------------------------------------------
  std::pair<int, long long> lock_cell(const State& s, int tid, const ExprPtr& e) const {
    std::vector<FootprintEntry> sink;
    Value v = eval(s, tid, e, &sink);
    if (v.kind != Value::Kind::Ptr) throw TrapException{0, "lock on non-address"};
    return {v.base, v.i};
  }

  bool stmt_enabled(const State& s, int tid, const Stmt* st) const {
    try {
      switch (st->kind) {
        case StmtKind::Lock: {
          auto key = lock_cell(s, tid, st->expr);
          auto it = s.locks.find(key);
          return it == s.locks.end() || it->second.mutex_owner < 0;
        }
        case StmtKind::Rdlock: {
          auto key = lock_cell(s, tid, st->expr);
          auto it = s.locks.find(key);
          return it == s.locks.end() || it->second.rw_writer < 0;
        }
        case StmtKind::Wrlock: {
          auto key = lock_cell(s, tid, st->expr);
          auto it = s.locks.find(key);
          return it == s.locks.end() ||
                 (it->second.rw_writer < 0 && it->second.rw_readers.empty());
        }
        case StmtKind::Join: {
          std::vector<FootprintEntry> sink;
          Value h = eval(s, tid, st->expr, &sink);
          if (h.kind != Value::Kind::Thread) return true;  // trap on execution
          int other = int(h.i);
          return s.threads[other].status != concrete::Thread::Status::Running;
        }
        case StmtKind::Create:
          return true;
        default:
          return true;
      }
    } catch (const TrapException&) {
      return true;  // the trap fires when the step executes
    }
  }

  // Executes a statement edge. Returns false if r holds a trap/bound instead.
  bool exec_stmt(State& ns, int tid, const CfgEdge& e, StepResult& r) const {
    const Stmt* st = e.stmt;
    concrete::Thread& t = ns.threads[tid];
    concrete::Frame& fr = t.frames.back();
    std::vector<FootprintEntry> sink;
    auto trap = [&](const std::string& why) {
      r.trap = concrete::Trap{st->id, why};
      return false;
    };
    try {
      switch (st->kind) {
        case StmtKind::Assign: {
          Value v = eval(ns, tid, st->expr, &sink);
          Place p = resolve_place(ns, tid, st->lhs.get(), &sink);
          check_bounds(p, st->id, "write");
          ns.memory[{p.base, p.off}] = v;
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Alloc: {
          Value sz = eval(ns, tid, st->expr, &sink);
          if (sz.kind != Value::Kind::Int || sz.i < 0) return trap("bad malloc size");
          concrete::BaseInfo b;
          b.kind = concrete::BaseInfo::Kind::Dynamic;
          b.alloc_stmt = st->id;
          b.alloc_seq = ns.next_alloc_seq++;
          b.size = sz.i;
          int id = intern(b);
          Place p = resolve_place(ns, tid, st->lhs.get(), &sink);
          ns.memory[{p.base, p.off}] = Value::of_ptr(id, 0);
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Call: {
          const Function* callee = prog_.function(st->callee);
          concrete::Frame nf;
          nf.fn = st->callee;
          nf.node = cfgs_.at(st->callee).entry;
          nf.frame_seq = ns.next_frame_seq++;
          nf.cs = fr.cs.push(st->id, st->callee, 1000000);  // full chain; truncated on demand
          nf.ret_node = e.dst;
          nf.result_lhs = st->lhs.get();
          // bind arguments
          std::vector<Value> argv;
          for (const auto& a : st->args) argv.push_back(eval(ns, tid, a, &sink));
          for (size_t i = 0; i < callee->formals.size(); ++i) {
            int b = intern_frame_var(tid, nf, callee->formals[i].first,
                                     callee->formals[i].second);
            ns.memory[{b, 0}] = argv[i];
          }
          t.frames.push_back(std::move(nf));
          return true;
        }
        case StmtKind::Return: {
          Value rv = Value::of_int(0);
          if (st->expr) rv = eval(ns, tid, st->expr, &sink);
          // drop this frame's memory
          drop_frame_memory(ns, tid, fr.frame_seq);
          int ret_node = fr.ret_node;
          const Expr* result_lhs = fr.result_lhs;
          t.frames.pop_back();
          if (t.frames.empty()) {
            t.status = concrete::Thread::Status::Finished;
            return true;
          }
          if (result_lhs) {
            Place p = resolve_place(ns, tid, result_lhs, &sink);
            check_bounds(p, st->id, "write");
            ns.memory[{p.base, p.off}] = rv;
          }
          t.frames.back().node = ret_node;
          return true;
        }
        case StmtKind::Create: {
          if (ns.created_instances + 1 > bounds_.max_instances) {
            r.bound_hit = true;
            return false;
          }
          std::string entry;
          if (!st->callee.empty()) {
            entry = st->callee;
          } else {
            Value f = eval(ns, tid, st->entry_expr, &sink);
            if (f.kind != Value::Kind::Func) return trap("thread entry is not a function");
            entry = f.fn;
          }
          const Function* ef = prog_.function(entry);
          if (!ef) return trap("unknown thread entry");
          Value arg = eval(ns, tid, st->expr, &sink);
          concrete::Thread nt;
          nt.entry = entry;
          concrete::Frame nf;
          nf.fn = entry;
          nf.node = cfgs_.at(entry).entry;
          nf.frame_seq = ns.next_frame_seq++;
          nt.frames.push_back(nf);
          int inst = int(ns.threads.size());
          if (!ef->formals.empty()) {
            int b = intern_frame_var(inst, nf, ef->formals[0].first, ef->formals[0].second);
            ns.memory[{b, 0}] = arg;
          }
          ns.threads.push_back(std::move(nt));
          ns.created_instances++;
          Place p = resolve_place(ns, tid, st->lhs.get(), &sink);
          check_bounds(p, st->id, "write");
          ns.memory[{p.base, p.off}] = Value::of_thread(inst);
          ns.threads[tid].frames.back().node = e.dst;
          return true;
        }
        case StmtKind::Join: {
          Value h = eval(ns, tid, st->expr, &sink);
          if (h.kind != Value::Kind::Thread) return trap("join on a non-thread handle");
          concrete::Thread& other = ns.threads[h.i];
          if (other.status == concrete::Thread::Status::Joined)
            return trap("double join");
          other.status = concrete::Thread::Status::Joined;
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Lock: {
          auto key = lock_cell(ns, tid, st->expr);
          ns.locks[key].mutex_owner = tid;
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Unlock: {
          auto key = lock_cell(ns, tid, st->expr);
          auto it = ns.locks.find(key);
          if (it != ns.locks.end() && it->second.mutex_owner == tid)
            it->second.mutex_owner = -1;
          if (it != ns.locks.end() && it->second.idle()) ns.locks.erase(it);
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Trylock: {
          auto key = lock_cell(ns, tid, st->expr);
          auto it = ns.locks.find(key);
          bool free = it == ns.locks.end() || it->second.mutex_owner < 0;
          if (free) ns.locks[key].mutex_owner = tid;
          if (st->lhs) {
            Place p = resolve_place(ns, tid, st->lhs.get(), &sink);
            ns.memory[{p.base, p.off}] = Value::of_int(free ? 0 : 1);
          }
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Rdlock: {
          auto key = lock_cell(ns, tid, st->expr);
          ns.locks[key].rw_readers[tid]++;
          fr.node = e.dst;
          return true;
        }
        case StmtKind::Wrlock: {
          auto key = lock_cell(ns, tid, st->expr);
          ns.locks[key].rw_writer = tid;
          fr.node = e.dst;
          return true;
        }
        case StmtKind::RwUnlock: {
          auto key = lock_cell(ns, tid, st->expr);
          auto it = ns.locks.find(key);
          if (it != ns.locks.end()) {
            if (it->second.rw_writer == tid) {
              it->second.rw_writer = -1;
            } else {
              auto rit = it->second.rw_readers.find(tid);
              if (rit != it->second.rw_readers.end() && --rit->second == 0)
                it->second.rw_readers.erase(rit);
            }
            if (it->second.idle()) ns.locks.erase(it);
          }
          fr.node = e.dst;
          return true;
        }
        case StmtKind::If:
        case StmtKind::While:
        case StmtKind::AssertNonRacing:
          fr.node = e.dst;
          return true;
      }
    } catch (const TrapException& te) {
      r.trap = concrete::Trap{st->id, te.reason};
      return false;
    }
    return true;
  }

  void drop_frame_memory(State& s, int tid, long long frame_seq) const {
    for (auto it = s.memory.begin(); it != s.memory.end();) {
      const concrete::BaseInfo& b = bases_[it->first.first];
      if (b.kind == concrete::BaseInfo::Kind::Frame && b.thread == tid &&
          b.frame_seq == frame_seq)
        it = s.memory.erase(it);
      else
        ++it;
    }
  }

  const Program& prog_;
  const std::map<std::string, Cfg>& cfgs_;
  OracleBounds bounds_;

  mutable std::vector<concrete::BaseInfo> bases_;
  mutable std::map<concrete::BaseInfo, int> base_ids_;
  mutable std::map<std::pair<int, long long>, CallString> frame_cs_;
};

// ---------------------------------------------------------------------------
// Exhaustive interleaving exploration with state memoization
// ---------------------------------------------------------------------------

inline OracleResult oracle_check(const Program& prog, const std::map<std::string, Cfg>& cfgs,
                                 const OracleBounds& bounds = {}) {
  ConcreteMachine m(prog, cfgs, bounds);
  OracleResult res;
  bool bound_hit = false;

  using Counters = std::map<std::tuple<int, long long, int>, int>;
  auto dominates = [](const Counters& a, const Counters& b) {
    // a <= b pointwise (missing entries are zero)
    for (const auto& [k, v] : a) {
      auto it = b.find(k);
      if (it == b.end() || v > it->second) return false;
    }
    return true;
  };

  std::deque<concrete::State> queue;
  // per state key: antichain of loop-counter vectors already explored
  std::unordered_map<std::string, std::vector<Counters>> visited;
  auto try_visit = [&](const concrete::State& st) {
    std::string key = m.serialize(st);
    Counters c = m.counter_vector(st);
    auto& chain = visited[key];
    for (const auto& prev : chain)
      if (dominates(prev, c)) return false;  // explored with at least this budget
    chain.erase(std::remove_if(chain.begin(), chain.end(),
                               [&](const Counters& prev) { return dominates(c, prev); }),
                chain.end());
    chain.push_back(std::move(c));
    return true;
  };

  concrete::State init = m.initial_state();
  try_visit(init);
  queue.push_back(std::move(init));

  std::set<std::pair<int, std::string>> trap_set;

  while (!queue.empty()) {
    if (res.states_explored >= bounds.max_states) {
      bound_hit = true;
      break;
    }
    concrete::State s = std::move(queue.front());
    queue.pop_front();
    ++res.states_explored;

    // enabled transitions and their footprints
    struct En {
      int tid;
      int stmt;
      SourceLoc loc;
      std::string entry;
      std::vector<concrete::FootprintEntry> fp;
    };
    std::vector<En> enabled;
    for (int tid = 0; tid < int(s.threads.size()); ++tid) {
      auto ni = m.peek(s, tid);
      if (!ni || !ni->enabled) continue;
      enabled.push_back({tid, ni->witness_stmt, ni->loc, s.threads[tid].entry,
                         m.footprint(s, tid)});
    }
    for (size_t i = 0; i < enabled.size(); ++i) {
      for (size_t j = i + 1; j < enabled.size(); ++j) {
        int a = std::min(enabled[i].stmt, enabled[j].stmt);
        int b = std::max(enabled[i].stmt, enabled[j].stmt);
        res.enabled_pairs.insert({a, b});
        if (res.witness) continue;
        for (const auto& fa : enabled[i].fp) {
          for (const auto& fb : enabled[j].fp) {
            if (!fa.overlaps(fb)) continue;
            if (!(fa.write || fb.write)) continue;
            if (fa.atomic || fb.atomic) continue;
            OracleWitness w;
            w.stmt1 = enabled[i].stmt;
            w.stmt2 = enabled[j].stmt;
            w.loc1 = enabled[i].loc;
            w.loc2 = enabled[j].loc;
            w.entry1 = enabled[i].entry;
            w.entry2 = enabled[j].entry;
            res.witness = w;
          }
        }
      }
    }

    for (const auto& en : enabled) {
      auto sr = m.step(s, en.tid);
      if (sr.bound_hit) bound_hit = true;
      if (sr.trap) trap_set.insert({sr.trap->stmt, sr.trap->reason});
      if (!sr.next) continue;
      if (try_visit(*sr.next)) queue.push_back(std::move(*sr.next));
    }
  }

  for (const auto& [stmt, why] : trap_set) res.traps.push_back({stmt, why});
  if (res.witness)
    res.outcome = OracleOutcome::Race;
  else if (bound_hit || !queue.empty())
    res.outcome = OracleOutcome::BoundExceeded;
  else
    res.outcome = OracleOutcome::NoRace;
  return res;
}

// ---------------------------------------------------------------------------
// Deterministic single-threaded execution trace (differential testing)
// ---------------------------------------------------------------------------

struct TraceEntry {
  int stmt = 0;
  CallString cs;  // truncated
  // integer-valued named cells right before the statement executes
  std::vector<std::tuple<Base, Interval, long long>> scalars;
};

inline std::vector<TraceEntry> oracle_trace(const Program& prog,
                                            const std::map<std::string, Cfg>& cfgs, int K,
                                            long long max_steps = 200000) {
  OracleBounds bounds;
  bounds.max_loop_iters = 1 << 30;
  ConcreteMachine m(prog, cfgs, bounds);
  concrete::State s = m.initial_state();
  std::vector<TraceEntry> out;

  auto snapshot = [&](const concrete::State& st, TraceEntry& te) {
    for (const auto& [key, val] : st.memory) {
      if (val.kind != concrete::Value::Kind::Int) continue;
      Base b = m.abstract_base(key.first, K);
      long long w = 4;
      te.scalars.push_back({b, Interval{key.second, key.second + w - 1}, val.i});
    }
  };

  for (long long step = 0; step < max_steps; ++step) {
    if (s.threads.size() != 1)
      throw std::runtime_error("oracle_trace: program is not single-threaded");
    auto ni = m.peek(s, 0);
    if (!ni) break;  // finished
    if (!ni->enabled) throw std::runtime_error("oracle_trace: blocked");
    const CfgEdge& e = ni->cfg->edges[ni->edge_index];
    if (!e.is_guard()) {
      TraceEntry te;
      te.stmt = e.stmt->id;
      CallString full = s.threads[0].frames.back().cs;
      CallString trunc;
      for (const auto& c : full.calls) trunc = trunc.push(c.first, c.second, K);
      te.cs = trunc;
      snapshot(s, te);
      out.push_back(std::move(te));
    }
    auto sr = m.step(s, 0);
    if (sr.trap) throw std::runtime_error("oracle_trace: trap: " + sr.trap->reason);
    if (sr.bound_hit || !sr.next) break;
    s = std::move(*sr.next);
  }
  return out;
}

}  // namespace minirace
