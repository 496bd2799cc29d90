#include <catch2/catch_amalgamated.hpp>

#include "minirace/cfg.hpp"
#include "minirace/oracle.hpp"
#include "minirace/parser.hpp"
#include "support/naive_oracle.hpp"

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

const char* kUnprotected = R"(
#include <pthread.h>
int g;
void *t1(void *a) { g = g + 1; return 0; }
void *t2(void *a) { g = g + 1; return 0; }
int main(void) {
  pthread_t a; pthread_t b;
  pthread_create(&a, 0, t1, 0);
  pthread_create(&b, 0, t2, 0);
  pthread_join(a, 0);
  pthread_join(b, 0);
  return 0;
}
)";

const char* kProtected = R"(
#include <pthread.h>
int g;
pthread_mutex_t m;
void *t1(void *a) { pthread_mutex_lock(&m); g = g + 1; pthread_mutex_unlock(&m); return 0; }
void *t2(void *a) { pthread_mutex_lock(&m); g = g + 1; pthread_mutex_unlock(&m); return 0; }
int main(void) {
  pthread_t a; pthread_t b;
  pthread_create(&a, 0, t1, 0);
  pthread_create(&b, 0, t2, 0);
  pthread_join(a, 0);
  pthread_join(b, 0);
  return 0;
}
)";

// flag handshake over an atomic flag: the spin orders the two writes of g
const char* kHandshake = R"(
#include <pthread.h>
int g; _Atomic int f;
void *t1(void *a) { while (!f) { } g = 1; return 0; }
int main(void) {
  pthread_t t;
  pthread_create(&t, 0, t1, 0);
  g = 2;
  f = 1;
  pthread_join(t, 0);
  return 0;
}
)";

}  // namespace

TEST_CASE("unprotected double increment races, with the two writes as witness") {
  Loaded l = load(kUnprotected);
  OracleResult r = oracle_check(l.prog, l.cfgs);
  REQUIRE(r.outcome == OracleOutcome::Race);
  REQUIRE(r.witness.has_value());
  std::set<std::string> entries{r.witness->entry1, r.witness->entry2};
  CHECK(entries == std::set<std::string>{"t1", "t2"});
  // both witness statements are the increments
  const StmtInfo* s1 = l.prog.stmt_by_id(r.witness->stmt1);
  const StmtInfo* s2 = l.prog.stmt_by_id(r.witness->stmt2);
  REQUIRE(s1);
  REQUIRE(s2);
  CHECK(s1->stmt->kind == StmtKind::Assign);
  CHECK(s2->stmt->kind == StmtKind::Assign);
}

TEST_CASE("mutex-protected increments do not race") {
  Loaded l = load(kProtected);
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::NoRace);
}

TEST_CASE("busy-wait handshake has no race (flag orders the writes)") {
  Loaded l = load(kHandshake);
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::NoRace);
}

TEST_CASE("oracle runs are deterministic") {
  Loaded l = load(kUnprotected);
  OracleResult r1 = oracle_check(l.prog, l.cfgs);
  OracleResult r2 = oracle_check(l.prog, l.cfgs);
  CHECK(r1.outcome == r2.outcome);
  CHECK(r1.states_explored == r2.states_explored);
  CHECK(r1.enabled_pairs == r2.enabled_pairs);
  REQUIRE(r1.witness.has_value());
  CHECK(r1.witness->stmt1 == r2.witness->stmt1);
  CHECK(r1.witness->stmt2 == r2.witness->stmt2);
}

TEST_CASE("enlarging bounds never flips race to no-race") {
  for (const char* src : {kUnprotected, kProtected, kHandshake}) {
    Loaded l = load(src);
    OracleBounds small{2, 3, 2000};
    OracleBounds big{8, 4, 1000000};
    OracleResult rs = oracle_check(l.prog, l.cfgs, small);
    OracleResult rb = oracle_check(l.prog, l.cfgs, big);
    if (rs.outcome == OracleOutcome::Race) CHECK(rb.outcome == OracleOutcome::Race);
  }
}

TEST_CASE("agreement with the naive depth-first explorer") {
  for (const char* src : {kUnprotected, kProtected, kHandshake}) {
    Loaded l = load(src);
    OracleResult r = oracle_check(l.prog, l.cfgs);
    testing::NaiveResult n = testing::naive_explore(l.prog, l.cfgs);
    REQUIRE(n.exhausted);
    CHECK((r.outcome == OracleOutcome::Race) == n.race);
  }
}

TEST_CASE("division by zero traps but exploration continues") {
  Loaded l = load(R"(
#include <pthread.h>
int g; int z;
void *t1(void *a) { g = 1 / z; return 0; }
int main(void) {
  pthread_t t;
  pthread_create(&t, 0, t1, 0);
  pthread_join(t, 0);
  return 0;
}
)");
  OracleResult r = oracle_check(l.prog, l.cfgs);
  REQUIRE_FALSE(r.traps.empty());
  CHECK(r.traps[0].second.find("division") != std::string::npos);
}

TEST_CASE("thread instance bound reports bound_exceeded") {
  Loaded l = load(R"(
#include <pthread.h>
int g;
void *w(void *a) { g = g + 1; return 0; }
int main(void) {
  pthread_t t; int i;
  i = 0;
  while (i < 6) {
    pthread_create(&t, 0, w, 0);
    i = i + 1;
  }
  return 0;
}
)");
  OracleBounds b;
  b.max_instances = 4;
  OracleResult r = oracle_check(l.prog, l.cfgs, b);
  // a race among the first instances may be found; otherwise the bound shows
  CHECK((r.outcome == OracleOutcome::Race || r.outcome == OracleOutcome::BoundExceeded));
}

TEST_CASE("trylock spin loops serialize the increments") {
  Loaded l = load(R"(
#include <pthread.h>
pthread_mutex_t m;
int g;
void *t1(void *a) {
  while (pthread_mutex_trylock(&m) != 0) { }
  g = g + 1;
  pthread_mutex_unlock(&m);
  return 0;
}
void *t2(void *a) {
  while (pthread_mutex_trylock(&m) != 0) { }
  g = g + 1;
  pthread_mutex_unlock(&m);
  return 0;
}
int main(void) {
  pthread_t a; pthread_t b;
  pthread_create(&a, 0, t1, 0);
  pthread_create(&b, 0, t2, 0);
  pthread_join(a, 0);
  pthread_join(b, 0);
  return 0;
}
)");
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::NoRace);
}

TEST_CASE("rdlock holders coexist, so rdlock-guarded writes race") {
  Loaded l = load(R"(
#include <pthread.h>
pthread_rwlock_t rw;
int g;
void *r1(void *a) { pthread_rwlock_rdlock(&rw); g = 1; pthread_rwlock_unlock(&rw); return 0; }
void *r2(void *a) { pthread_rwlock_rdlock(&rw); g = 2; pthread_rwlock_unlock(&rw); return 0; }
int main(void) {
  pthread_t a; pthread_t b;
  pthread_create(&a, 0, r1, 0);
  pthread_create(&b, 0, r2, 0);
  pthread_join(a, 0);
  pthread_join(b, 0);
  return 0;
}
)");
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::Race);
}

TEST_CASE("wrlock-guarded writes do not race") {
  Loaded l = load(R"(
#include <pthread.h>
pthread_rwlock_t rw;
int g;
void *w1(void *a) { pthread_rwlock_wrlock(&rw); g = 1; pthread_rwlock_unlock(&rw); return 0; }
void *w2(void *a) { pthread_rwlock_wrlock(&rw); g = 2; pthread_rwlock_unlock(&rw); return 0; }
int main(void) {
  pthread_t a; pthread_t b;
  pthread_create(&a, 0, w1, 0);
  pthread_create(&b, 0, w2, 0);
  pthread_join(a, 0);
  pthread_join(b, 0);
  return 0;
}
)");
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::NoRace);
}

TEST_CASE("single-threaded trace records per-statement values") {
  Loaded l = load(R"(
#include <pthread.h>
int x;
int main(void) {
  x = 1;
  x = x + 1;
  return 0;
}
)");
  auto trace = oracle_trace(l.prog, l.cfgs, 2);
  REQUIRE(trace.size() >= 3);
  bool saw1 = false, saw2 = false;
  for (const auto& te : trace) {
    for (const auto& [base, range, val] : te.scalars) {
      if (base.name == "x" && val == 1) saw1 = true;
      if (base.name == "x" && val == 2) saw2 = true;
    }
  }
  CHECK(saw1);
  CHECK(saw2);
}

TEST_CASE("guard reads participate in races") {
  Loaded l = load(R"(
#include <pthread.h>
int g;
void *t1(void *a) { if (g) { return 0; } return 0; }
int main(void) {
  pthread_t t;
  pthread_create(&t, 0, t1, 0);
  g = 1;
  pthread_join(t, 0);
  return 0;
}
)");
  OracleResult r = oracle_check(l.prog, l.cfgs);
  CHECK(r.outcome == OracleOutcome::Race);
}
