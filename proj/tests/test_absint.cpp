#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "minirace/absint.hpp"
#include "minirace/cfg.hpp"
#include "minirace/oracle.hpp"
#include "minirace/parser.hpp"

using namespace minirace;

namespace {

struct Loaded {
  Program prog;
  std::map<std::string, Cfg> cfgs;
};

Loaded load(const std::string& src) {
  Loaded l{parse_program(src, MachineModel::lp64, "test.c"), {}};
  l.cfgs = build_cfg(l.prog);
  return l;
}

AbsState main_init(const Program& prog) {
  AbsState s = AbsState::empty_reachable();
  DomainCtx dom{&prog};
  for (const auto& g : prog.globals) {
    long long w = size_of(g.type, prog.model, prog.records);
    s.env[Base::global(g.name, w)][{0, w - 1}] = dom.default_value(Base::global(g.name, w));
  }
  return s;
}

ThreadAnalysis analyze_main(const Loaded& l, UpdateMode mode = UpdateMode::Strong,
                            const AbsState* init = nullptr) {
  AnalyzeConfig cfg;
  cfg.mode = mode;
  AbsState st = init ? *init : main_init(l.prog);
  return analyze_thread(l.prog, l.cfgs, "main", 0, st, cfg);
}

// interval of global `name` in the pre-state of the i-th top-level statement
Interval global_at(const Loaded& l, const ThreadAnalysis& ta, size_t stmt_index,
                   const std::string& name) {
  const Function* mainfn = l.prog.function("main");
  REQUIRE(stmt_index < mainfn->body.size());
  Context c{0, CallString{}, mainfn->body[stmt_index]->id};
  const AbsState* st = ta.context_state(c);
  REQUIRE(st != nullptr);
  const Global* g = l.prog.global(name);
  long long w = size_of(g->type, l.prog.model, l.prog.records);
  return st->read(DomainCtx{&l.prog}, Base::global(name, w), {0, w - 1}).iv;
}

}  // namespace

TEST_CASE("interval arithmetic basics") {
  Interval a{2, 3};
  CHECK(iv_add(a, Interval::constant(1)) == Interval{3, 4});
  CHECK(iv_mul(Interval{-2, 3}, Interval{4, 5}) == Interval{-10, 15});
  CHECK(iv_div(Interval{0, 10}, Interval{0, 10}).is_top());  // 0 possibly in divisor
  CHECK(iv_div(Interval{7, 7}, Interval{2, 2}) == Interval{3, 3});
  CHECK(iv_neg(Interval{1, 5}) == Interval{-5, -1});
}

TEST_CASE("widening follows the standard rules and is idempotent once stable") {
  Interval a{0, 1};
  CHECK(a.widen({0, 2}) == Interval{0, Interval::kPosInf});
  Interval b{0, 5};
  CHECK(b.widen({0, 5}) == Interval{0, 5});
  CHECK(b.widen({-1, 5}) == Interval{Interval::kNegInf, 5});
  // widen(s, s) = s on states
  Program p = parse_program("int x; int main(void) { return 0; }", MachineModel::lp64, "t.c");
  DomainCtx dom{&p};
  AbsState s = AbsState::empty_reachable();
  s.env[Base::global("x", 4)][{0, 3}] = AbsVal::of({0, 5});
  CHECK(widen_states(dom, s, s) == s);
}

TEST_CASE("join of states hulls intervals, unions points-to, keeps defaults") {
  Program p = parse_program("int x = 0; int *q; int main(void) { return 0; }",
                            MachineModel::lp64, "t.c");
  DomainCtx dom{&p};
  Base bx = Base::global("x", 4);
  Base ba = Base::global("a", 4);
  Base bb = Base::global("b", 4);
  AbsState s1 = AbsState::empty_reachable();
  s1.env[bx][{0, 3}] = AbsVal::of(Interval::constant(0));
  AbsState s2 = AbsState::empty_reachable();
  s2.env[bx][{0, 3}] = AbsVal::of(Interval::constant(5));
  AbsState j = join_states(dom, s1, s2);
  CHECK(j.read(dom, bx, {0, 3}).iv == Interval{0, 5});

  // unreachable is the identity
  CHECK(join_states(dom, AbsState::bottom(), s2) == s2);
  CHECK(join_states(dom, s2, AbsState::bottom()) == s2);

  // points-to union
  Base bq = Base::global("q", 8);
  AbsState p1 = AbsState::empty_reachable();
  p1.env[bq][{0, 7}] = AbsVal::of_pts(ba, Interval::constant(0));
  AbsState p2 = AbsState::empty_reachable();
  p2.env[bq][{0, 7}] = AbsVal::of_pts(bb, Interval::constant(0));
  AbsState pj = join_states(dom, p1, p2);
  CHECK(pj.read(dom, bq, {0, 7}).pts.size() == 2);
}

TEST_CASE("join is an upper bound (randomized)") {
  Program p = parse_program("int x; int main(void) { return 0; }", MachineModel::lp64, "t.c");
  DomainCtx dom{&p};
  std::mt19937 rng(20250809);
  std::uniform_int_distribution<int> d(-20, 20);
  for (int trial = 0; trial < 200; ++trial) {
    auto mk = [&]() {
      AbsState s = AbsState::empty_reachable();
      int lo = d(rng), len = std::abs(d(rng)) % 10;
      s.env[Base::global("x", 4)][{0, 3}] = AbsVal::of({lo, lo + len});
      return s;
    };
    AbsState a = mk(), b = mk();
    AbsState j = join_states(dom, a, b);
    CHECK(state_leq(dom, a, j));
    CHECK(state_leq(dom, b, j));
  }
}

TEST_CASE("eval: interval arithmetic, deref through points-to, conservative division") {
  Program q = parse_program(R"(
int x; int *p; int g;
int main(void) { x = x + 1; x = *p; x = x / x; return 0; }
)", MachineModel::lp64, "t.c");
  const auto& body = q.function("main")->body;
  EvalCtx qctx{&q, "main", CallString{}};
  Base bx = Base::global("x", 4);
  Base bg = Base::global("g", 4);
  Base bp = Base::global("p", 8);
  AbsState s = AbsState::empty_reachable();
  s.env[bx][{0, 3}] = AbsVal::of({2, 3});
  s.env[bg][{0, 3}] = AbsVal::of({7, 7});
  s.env[bp][{0, 7}] = AbsVal::of_pts(bg, Interval::constant(0));

  CHECK(eval_expr(qctx, s, body[0]->expr).iv == Interval{3, 4});   // x + 1
  CHECK(eval_expr(qctx, s, body[1]->expr).iv == Interval{7, 7});   // *p
  AbsState s2 = s;
  s2.env[bx][{0, 3}] = AbsVal::of({0, 10});
  CHECK(eval_expr(qctx, s2, body[2]->expr).iv.is_top());           // x / x
}

TEST_CASE("strong updates track constants through straight-line code") {
  Loaded l = load(R"(
#include <pthread.h>
int x;
int main(void) {
  x = 1;
  x = x + 1;
  return 0;
}
)");
  ThreadAnalysis ta = analyze_main(l);
  CHECK(global_at(l, ta, 1, "x") == Interval{1, 1});  // before x = x + 1
  CHECK(global_at(l, ta, 2, "x") == Interval{2, 2});  // before return
}

TEST_CASE("loop widening with one descending iteration recovers the exit bound") {
  Loaded l = load(R"(
#include <pthread.h>
int x;
int main(void) {
  while (x < 10) { x = x + 1; }
  return 0;
}
)");
  ThreadAnalysis ta = analyze_main(l);
  Interval post = global_at(l, ta, 1, "x");
  // concrete execution exits with x == 10; the abstract result must contain it
  auto trace = oracle_trace(l.prog, l.cfgs, 2);
  long long concrete_exit = -1;
  for (const auto& te : trace)
    if (te.stmt == l.prog.function("main")->body[1]->id)
      for (const auto& [b, r, v] : te.scalars)
        if (b.name == "x") concrete_exit = v;
  REQUIRE(concrete_exit == 10);
  CHECK(post.contains(concrete_exit));
  // and the guard-driven narrowing makes it exact
  CHECK(post == Interval{10, 10});
}

TEST_CASE("weak-update mode joins instead of overwriting shared cells") {
  Loaded l = load(R"(
#include <pthread.h>
int g;
int main(void) {
  g = 0;
  return 0;
}
)");
  AbsState init = main_init(l.prog);
  init.env[Base::global("g", 4)][{0, 3}] = AbsVal::of({0, 5});
  ThreadAnalysis ta = analyze_main(l, UpdateMode::Weak, &init);
  // post state of `g = 0` is [0,5] join [0,0] = [0,5]
  Context c{0, CallString{}, l.prog.function("main")->body[1]->id};
  const AbsState* st = ta.context_state(c);
  REQUIRE(st);
  CHECK(st->read(DomainCtx{&l.prog}, Base::global("g", 4), {0, 3}).iv == Interval{0, 5});
}

TEST_CASE("weak-update result contains the strong-update result per cell") {
  Loaded l = load(R"(
#include <pthread.h>
int g; int h;
int main(void) {
  g = 3;
  if (h) { g = 5; } else { g = g + 1; }
  h = g * 2;
  return 0;
}
)");
  ThreadAnalysis strong = analyze_main(l, UpdateMode::Strong);
  ThreadAnalysis weak = analyze_main(l, UpdateMode::Weak);
  DomainCtx dom{&l.prog};
  for (const auto& [c, st] : strong.contexts) {
    auto it = weak.contexts.find(c);
    REQUIRE(it != weak.contexts.end());
    CHECK(state_leq(dom, st, it->second));
  }
}

TEST_CASE("recursion is rejected") {
  Loaded l = load(R"(
int f(int n) { return f(n - 1); }
int main(void) { int r; r = f(3); return 0; }
)");
  CHECK_THROWS_AS(analyze_main(l), RecursionUnsupported);
}

TEST_CASE("call strings distinguish helper invocations up to depth K") {
  Loaded l = load(R"(
#include <pthread.h>
int g;
int set(int v) { g = v; return 0; }
int main(void) {
  int r;
  r = set(1);
  r = set(2);
  return 0;
}
)");
  ThreadAnalysis ta = analyze_main(l);
  CHECK(ta.instances.size() == 3);  // main + one instance per call site
  // after both calls, g is exactly [2,2] (strong update in the second instance)
  CHECK(global_at(l, ta, 2, "g") == Interval{2, 2});
}

TEST_CASE("guard refinement prunes infeasible branches") {
  Loaded l = load(R"(
#include <pthread.h>
int g;
int main(void) {
  int x;
  x = 3;
  if (x > 5) { g = 1; }
  return 0;
}
)");
  ThreadAnalysis ta = analyze_main(l);
  const Function* mainfn = l.prog.function("main");
  const StmtPtr& ifstmt = mainfn->body[1];
  REQUIRE(ifstmt->kind == StmtKind::If);
  Context c{0, CallString{}, ifstmt->body[0]->id};
  const AbsState* st = ta.context_state(c);
  REQUIRE(st);
  CHECK_FALSE(st->reachable);
}

TEST_CASE("widening stabilizes within the 3+1 schedule") {
  Loaded l = load(R"(
#include <pthread.h>
int x; int y;
int main(void) {
  while (x < 100) {
    x = x + 1;
    y = y + 2;
  }
  return 0;
}
)");
  ThreadAnalysis ta = analyze_main(l);
  REQUIRE_FALSE(ta.head_stats.empty());
  for (const auto& [key, stats] : ta.head_stats) {
    CHECK(stats.merges <= 3);
    CHECK(stats.widen_changed <= 1);
  }
}

TEST_CASE("abstract soundness against concrete execution (differential)") {
  const char* programs[] = {
      R"(
#include <pthread.h>
int a; int b;
int main(void) {
  int i;
  i = 0;
  while (i < 7) { a = a + i; i = i + 1; }
  if (a > 10) { b = a - 10; } else { b = 10 - a; }
  return 0;
}
)",
      R"(
#include <pthread.h>
int acc;
int twice(int v) { return v * 2; }
int add(int v) { acc = acc + v; return acc; }
int main(void) {
  int r;
  r = twice(3);
  r = add(r);
  r = add(twice(r));
  return 0;
}
)",
      R"(
#include <pthread.h>
int arr[5]; int sum;
int main(void) {
  int i;
  i = 0;
  while (i < 5) { arr[i] = i * i; i = i + 1; }
  i = 0;
  while (i < 5) { sum = sum + arr[i]; i = i + 1; }
  return 0;
}
)",
      R"(
#include <pthread.h>
struct pt { int x; int y; };
struct pt p; int d;
int main(void) {
  p.x = 4;
  p.y = 7;
  d = p.x * p.x + p.y * p.y;
  return 0;
}
)",
      R"(
#include <pthread.h>
int g; int h;
int main(void) {
  int *q;
  q = &g;
  *q = 12;
  q = &h;
  *q = g / 3;
  return 0;
}
)",
  };
  for (const char* src : programs) {
    Loaded l = load(src);
    ThreadAnalysis ta = analyze_main(l);
    auto trace = oracle_trace(l.prog, l.cfgs, 2);
    DomainCtx dom{&l.prog};
    REQUIRE_FALSE(trace.empty());
    for (const auto& te : trace) {
      Context c{0, te.cs, te.stmt};
      const AbsState* st = ta.context_state(c);
      REQUIRE(st != nullptr);
      REQUIRE(st->reachable);
      for (const auto& [base, range, val] : te.scalars) {
        Interval iv = st->read(dom, base, range).iv;
        INFO("stmt " << te.stmt << " base " << base.str() << " value " << val
                     << " interval " << iv.str());
        CHECK(iv.contains(val));
      }
    }
  }
}

TEST_CASE("analysis results are deterministic") {
  Loaded l = load(R"(
#include <pthread.h>
int g; int arr[3];
int bump(int i) { arr[i] = g; return g + i; }
int main(void) {
  int r;
  g = 2;
  r = bump(0);
  r = bump(r);
  while (g < 9) { g = g + r; }
  return 0;
}
)");
  ThreadAnalysis a = analyze_main(l);
  ThreadAnalysis b = analyze_main(l);
  REQUIRE(a.contexts.size() == b.contexts.size());
  for (const auto& [c, st] : a.contexts) {
    auto it = b.contexts.find(c);
    REQUIRE(it != b.contexts.end());
    CHECK(st == it->second);
  }
}
