#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "minirace/cfg.hpp"
#include "minirace/parser.hpp"
#include "minirace/pretty.hpp"

using namespace minirace;

namespace {

Program parse(const std::string& src, MachineModel m = MachineModel::lp64) {
  return parse_program(src, m, "test.c");
}

const char* kTiny = R"(
#include <pthread.h>
int x;
int main(void) {
  x = 1;
  return 0;
}
)";

int count_stmt_edges(const Cfg& cfg) {
  int n = 0;
  for (const auto& e : cfg.edges)
    if (!e.is_guard()) ++n;
  return n;
}

int count_guard_edges(const Cfg& cfg) {
  int n = 0;
  for (const auto& e : cfg.edges)
    if (e.is_guard()) ++n;
  return n;
}

}  // namespace

TEST_CASE("atomic declarations: both spellings produce atomic_int") {
  Program p = parse("_Atomic int x; atomic_int y; int main(void) { return 0; }");
  REQUIRE(p.global("x") != nullptr);
  CHECK(p.global("x")->type.kind == TypeKind::AtomicInt);
  CHECK(p.global("y")->type.kind == TypeKind::AtomicInt);
}

TEST_CASE("globals without initializer default to zero") {
  Program p = parse("int x; int main(void) { return 0; }");
  CHECK(p.global("x")->init == 0);
  CHECK_FALSE(p.global("x")->has_init);
  Program q = parse("int x = 42; int main(void) { return 0; }");
  CHECK(q.global("x")->init == 42);
}

TEST_CASE("semaphores are reported as unsupported") {
  CHECK_THROWS_MATCHES(
      parse("int main(void) { sem_wait(0); return 0; }"), UnsupportedFeature,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("semaphore")));
  CHECK_THROWS_AS(parse("sem_t s; int main(void) { return 0; }"), UnsupportedFeature);
}

TEST_CASE("recognized constructs outside the subset are named") {
  CHECK_THROWS_AS(parse("int main(void) { goto done; done: return 0; }"), UnsupportedFeature);
  CHECK_THROWS_AS(parse("int main(void) { int i; for (;;) {} return 0; }"), UnsupportedFeature);
  CHECK_THROWS_AS(parse("int main(void) { int n; int a[n]; return 0; }"), UnsupportedFeature);
  CHECK_THROWS_AS(parse("int main(void) { atomic_fetch_add(0, 1); return 0; }"),
                  UnsupportedFeature);
}

TEST_CASE("syntax errors carry a location") {
  try {
    parse("int main(void) { x === 1; }");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.loc().line >= 1);
  }
}

TEST_CASE("machine model selects pointer sizes only") {
  Program p32 = parse(kTiny, MachineModel::ilp32);
  Program p64 = parse(kTiny, MachineModel::lp64);
  CHECK(size_of(CType::make_int(), p32.model, p32.records) == 4);
  CHECK(size_of(CType::make_int(), p64.model, p64.records) == 4);
  CHECK(size_of(CType::pointer_to(CType::make_int()), p32.model, p32.records) == 4);
  CHECK(size_of(CType::pointer_to(CType::make_int()), p64.model, p64.records) == 8);
}

TEST_CASE("type sizes compose") {
  Program p = parse(R"(
struct pair { int a; int b; };
struct pair g;
int arr[7];
int main(void) { return 0; }
)");
  CHECK(size_of(p.global("g")->type, p.model, p.records) == 8);
  CHECK(size_of(p.global("arr")->type, p.model, p.records) == 28);
  CHECK(field_offset(p.records, "pair", "b", p.model) == 4);
}

TEST_CASE("linear body yields a linear cfg with one edge per statement") {
  Program p = parse("int x; int main(void) { x = 1; return 0; }");
  auto cfgs = build_cfg(p);
  const Cfg& cfg = cfgs.at("main");
  CHECK(count_stmt_edges(cfg) == 2);
  CHECK(count_guard_edges(cfg) == 0);
  for (int ei : cfg.out_edges[cfg.exit]) {
    (void)ei;
    FAIL("exit must have no outgoing edges");
  }
}

TEST_CASE("while loops produce two guard edges and a back edge") {
  Program p = parse("int x; int main(void) { while (x < 10) { x = x + 1; } return 0; }");
  auto cfgs = build_cfg(p);
  const Cfg& cfg = cfgs.at("main");
  REQUIRE(cfg.loops.size() == 1);
  const CfgLoop& loop = cfg.loops[0];
  int pols = 0;
  for (const auto& e : cfg.edges) {
    if (!e.is_guard()) continue;
    CHECK(e.src == loop.head);
    pols += e.polarity ? 1 : 2;
  }
  CHECK(pols == 3);  // exactly one of each polarity
  // the body statement edge returns to the loop head
  bool back = false;
  for (const auto& e : cfg.edges)
    if (!e.is_guard() && e.stmt->kind == StmtKind::Assign && e.dst == loop.head) back = true;
  CHECK(back);
}

TEST_CASE("if/else builds a diamond joining at one node") {
  Program p = parse(R"(
pthread_mutex_t m; pthread_mutex_t n; int c;
int main(void) {
  if (c) { pthread_mutex_lock(&m); } else { pthread_mutex_lock(&n); }
  return 0;
}
)");
  auto cfgs = build_cfg(p);
  const Cfg& cfg = cfgs.at("main");
  CHECK(count_guard_edges(cfg) == 2);
  std::vector<const CfgEdge*> locks;
  for (const auto& e : cfg.edges)
    if (!e.is_guard() && e.stmt->kind == StmtKind::Lock) locks.push_back(&e);
  REQUIRE(locks.size() == 2);
  CHECK(locks[0]->dst == locks[1]->dst);
}

TEST_CASE("statement ids are unique program-wide and map to sources") {
  Program p = parse(R"(
int g;
void *w(void *a) { g = 2; return 0; }
int main(void) {
  pthread_t t;
  if (g) { g = 1; } else { g = 3; }
  while (g < 5) { g = g + 1; }
  pthread_create(&t, 0, w, 0);
  pthread_join(t, 0);
  return 0;
}
)");
  std::set<int> ids;
  std::function<void(const std::vector<StmtPtr>&)> walk = [&](const std::vector<StmtPtr>& l) {
    for (const auto& s : l) {
      CHECK(ids.insert(s->id).second);
      CHECK(p.stmt_by_id(s->id) != nullptr);
      CHECK(p.stmt_by_id(s->id)->stmt->loc.line >= 1);
      walk(s->body);
      walk(s->else_body);
    }
  };
  for (const auto& [name, fn] : p.functions) walk(fn.body);

  // every statement appears on exactly one cfg edge
  auto cfgs = build_cfg(p);
  std::map<int, int> on_edges;
  for (const auto& [name, cfg] : cfgs)
    for (const auto& e : cfg.edges)
      if (!e.is_guard()) on_edges[e.stmt->id]++;
  for (int id : ids) CHECK(on_edges[id] == 1);
}

TEST_CASE("pretty-print round trip is structurally identical") {
  const char* sources[] = {
      R"(
int g; _Atomic int a; pthread_mutex_t m;
struct box { int v; int w; };
struct box bx;
int arr[4];
void *worker(void *p) {
  int *q;
  q = (int *)p;
  *q = 1;
  pthread_mutex_lock(&m);
  g = g + arr[2];
  pthread_mutex_unlock(&m);
  return 0;
}
int main(void) {
  pthread_t t;
  int r;
  bx.v = 3;
  pthread_create(&t, 0, worker, &g);
  r = pthread_mutex_trylock(&m);
  if (r == 0) { pthread_mutex_unlock(&m); }
  while (g < 3) { g = g + 1; }
  pthread_join(t, 0);
  return 0;
}
)",
      R"(
int x;
int inc(int d) { return d + 1; }
int main(void) {
  x = inc(inc(2));
  if (!(x == 4 && x > 0)) { x = -1; }
  return 0;
}
)",
  };
  for (const char* src : sources) {
    Program p1 = parse(src);
    std::string printed = pretty_print(p1);
    INFO(printed);
    Program p2 = parse(printed);
    CHECK(program_equal(p1, p2));
    // idempotence: printing again yields the same text
    CHECK(pretty_print(p2) == printed);
  }
}

TEST_CASE("create entries must be resolvable") {
  // direct name and &name both work
  CHECK_NOTHROW(parse(R"(
void *w(void *p) { return 0; }
int main(void) { pthread_t t; pthread_create(&t, 0, w, 0); pthread_create(&t, 0, &w, 0); return 0; }
)"));
  // arbitrary expressions do not
  CHECK_THROWS_AS(parse(R"(
void *w(void *p) { return 0; }
int main(void) { pthread_t t; pthread_create(&t, 0, w(0), 0); return 0; }
)"),
                  std::runtime_error);
}

TEST_CASE("trylock in a condition is hoisted, preserving per-iteration calls") {
  Program p = parse(R"(
pthread_mutex_t m; int g;
int main(void) {
  while (pthread_mutex_trylock(&m) != 0) { }
  g = 1;
  pthread_mutex_unlock(&m);
  return 0;
}
)");
  // the loop body re-evaluates the trylock
  const Function& mainfn = *p.function("main");
  REQUIRE(mainfn.body.size() >= 2);
  const StmtPtr& first = mainfn.body[0];
  CHECK(first->kind == StmtKind::Trylock);
  const StmtPtr& loop = mainfn.body[1];
  REQUIRE(loop->kind == StmtKind::While);
  REQUIRE_FALSE(loop->body.empty());
  CHECK(loop->body.back()->kind == StmtKind::Trylock);
}

TEST_CASE("duplicate mains and missing main are rejected") {
  CHECK_THROWS_AS(parse("int x;"), ParseError);
  CHECK_THROWS_AS(parse("int main(void) { return 0; } int main(void) { return 0; }"), ParseError);
}

TEST_CASE("calls to undeclared functions are unsupported") {
  CHECK_THROWS_AS(parse("int main(void) { printf(0); return 0; }"), UnsupportedFeature);
}
