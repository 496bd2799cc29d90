#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "minirace/ast.hpp"
#include "minirace/interval.hpp"

namespace minirace {

// Bounded call string: the K most recent (call site, callee) pairs.
struct CallString {
  std::vector<std::pair<int, std::string>> calls;

  CallString push(int site, const std::string& callee, int k) const {
    CallString out = *this;
    out.calls.emplace_back(site, callee);
    while (static_cast<int>(out.calls.size()) > k) out.calls.erase(out.calls.begin());
    return out;
  }

  bool operator<(const CallString& o) const { return calls < o.calls; }
  bool operator==(const CallString& o) const { return calls == o.calls; }

  std::string str() const {
    std::string s;
    for (const auto& [site, callee] : calls) {
      if (!s.empty()) s += ">";
      s += callee + "@" + std::to_string(site);
    }
    return s.empty() ? "-" : s;
  }
};

struct Base {
  enum class Kind { Global, Local, Formal, Dynamic, Function };

  Kind kind = Kind::Global;
  std::string name;          // variable or function name
  std::string func;          // owning function (Local/Formal)
  CallString cs;             // instance qualifier (Local/Formal)
  int alloc_stmt = 0;        // Dynamic
  bool weak = false;         // Dynamic strength
  long long declared_size = -1;  // bytes; -1 when unknown

  static Base global(std::string n, long long size) {
    Base b;
    b.kind = Kind::Global;
    b.name = std::move(n);
    b.declared_size = size;
    return b;
  }
  static Base local(std::string fn, std::string n, CallString cs, long long size) {
    Base b;
    b.kind = Kind::Local;
    b.name = std::move(n);
    b.func = std::move(fn);
    b.cs = std::move(cs);
    b.declared_size = size;
    return b;
  }
  static Base formal(std::string fn, std::string n, CallString cs, long long size) {
    Base b = local(std::move(fn), std::move(n), std::move(cs), size);
    b.kind = Kind::Formal;
    return b;
  }
  static Base dynamic(int stmt, bool weak, long long size) {
    Base b;
    b.kind = Kind::Dynamic;
    b.alloc_stmt = stmt;
    b.weak = weak;
    b.declared_size = size;
    return b;
  }
  static Base function(std::string n) {
    Base b;
    b.kind = Kind::Function;
    b.name = std::move(n);
    b.declared_size = 0;
    return b;
  }

  bool is_shared_kind() const { return kind == Kind::Global || kind == Kind::Dynamic; }

  auto key() const { return std::tie(kind, name, func, cs.calls, alloc_stmt, weak); }
  bool operator<(const Base& o) const { return key() < o.key(); }
  bool operator==(const Base& o) const { return key() == o.key(); }

  std::string str() const {
    switch (kind) {
      case Kind::Global: return name;
      case Kind::Local: return func + "::" + name + (cs.calls.empty() ? "" : "[" + cs.str() + "]");
      case Kind::Formal: return func + "::" + name + (cs.calls.empty() ? "" : "[" + cs.str() + "]");
      case Kind::Dynamic:
        return std::string("malloc#") + std::to_string(alloc_stmt) + (weak ? "(weak)" : "");
      case Kind::Function: return "&" + name;
    }
    return "?";
  }
};

// One points-to target: base plus the byte range the pointer may address.
using PtsEntry = std::pair<Base, Interval>;

struct AbsVal {
  Interval iv = Interval::bottom();
  std::set<PtsEntry> pts;

  static AbsVal bottom() { return {}; }
  static AbsVal top_scalar() { return {Interval::top(), {}}; }
  static AbsVal of(Interval i) { return {i, {}}; }
  static AbsVal of_pts(Base b, Interval off) {
    AbsVal v;
    v.pts.insert({std::move(b), off});
    return v;
  }

  bool is_bottom() const { return iv.empty() && pts.empty(); }

  // Per-base points-to hull keeps the set small.
  static std::set<PtsEntry> merge_pts(const std::set<PtsEntry>& a, const std::set<PtsEntry>& b) {
    std::map<Base, Interval> hull;
    for (const auto& [base, off] : a) {
      auto [it, fresh] = hull.emplace(base, off);
      if (!fresh) it->second = it->second.join(off);
    }
    for (const auto& [base, off] : b) {
      auto [it, fresh] = hull.emplace(base, off);
      if (!fresh) it->second = it->second.join(off);
    }
    std::set<PtsEntry> out;
    for (const auto& [base, off] : hull) out.insert({base, off});
    return out;
  }

  AbsVal join(const AbsVal& o) const {
    AbsVal out;
    out.iv = iv.join(o.iv);
    out.pts = merge_pts(pts, o.pts);
    return out;
  }

  AbsVal widen(const AbsVal& newer) const {
    AbsVal out;
    out.iv = iv.widen(newer.iv);
    out.pts = merge_pts(pts, newer.pts);
    return out;
  }

  bool leq(const AbsVal& o) const {
    if (!iv.subset_of(o.iv)) return false;
    for (const auto& [base, off] : pts) {
      bool found = false;
      for (const auto& [ob, ooff] : o.pts)
        if (base == ob && off.subset_of(ooff)) {
          found = true;
          break;
        }
      if (!found) return false;
    }
    return true;
  }

  bool operator==(const AbsVal& o) const { return iv == o.iv && pts == o.pts; }

  std::string str() const {
    std::string s = iv.str();
    if (!pts.empty()) {
      s += "{";
      bool first = true;
      for (const auto& [base, off] : pts) {
        if (!first) s += ",";
        first = false;
        s += base.str() + off.str();
      }
      s += "}";
    }
    return s;
  }
};

// Defaults for cells never written: globals read as their static initializer,
// everything else as top.
struct DomainCtx {
  const Program* prog = nullptr;

  AbsVal default_value(const Base& b) const {
    if (b.kind == Base::Kind::Global) {
      if (const Global* g = prog->global(b.name)) return AbsVal::of(Interval::constant(g->init));
      return AbsVal::of(Interval::constant(0));
    }
    return AbsVal::top_scalar();
  }
};

// Abstract memory: per base, cells keyed by byte range. Overlapping cells on
// the same base are joined on read; disjoint ranges stay independent.
struct AbsState {
  bool reachable = false;
  std::map<Base, std::map<Interval, AbsVal>> env;

  static AbsState bottom() { return {}; }
  static AbsState empty_reachable() {
    AbsState s;
    s.reachable = true;
    return s;
  }

  static long long sat_inc(long long v) { return v == Interval::kPosInf ? v : v + 1; }

  AbsVal read(const DomainCtx& ctx, const Base& base, const Interval& range) const {
    if (!reachable) return AbsVal::bottom();
    auto bit = env.find(base);
    AbsVal acc;
    bool covered = false;
    if (bit != env.end()) {
      // coverage check over the cell ranges (map is ordered by lo)
      long long need_from = range.lo;
      bool gap = false;
      for (const auto& [cell, val] : bit->second) {
        if (!cell.intersects(range)) continue;
        acc = acc.join(val);
        if (cell.lo > need_from) gap = true;
        need_from = std::max(need_from, sat_inc(cell.hi));
      }
      covered = !gap && need_from > range.hi;
    }
    if (!covered) acc = acc.join(ctx.default_value(base));
    return acc;
  }

  void write(const DomainCtx& ctx, const Base& base, const Interval& range, const AbsVal& val,
             bool strong) {
    if (!reachable) return;
    if (base.kind == Base::Kind::Function) return;
    auto& cells = env[base];
    if (strong) {
      // exact overwrite is only safe when no other cell overlaps the range
      bool clean = true;
      for (const auto& [cell, v] : cells)
        if (cell.intersects(range) && !(cell == range)) {
          clean = false;
          break;
        }
      if (clean) {
        cells[range] = val;
        return;
      }
    }
    AbsVal merged = val;
    bool covered = false;
    {
      long long need_from = range.lo;
      bool gap = false;
      for (auto& [cell, v] : cells) {
        if (!cell.intersects(range)) continue;
        v = v.join(val);
        merged = merged.join(v);
        if (cell.lo > need_from) gap = true;
        need_from = std::max(need_from, sat_inc(cell.hi));
      }
      covered = !gap && need_from > range.hi;
    }
    if (!covered) {
      auto it = cells.find(range);
      if (it == cells.end()) cells[range] = merged.join(ctx.default_value(base));
    }
  }

  bool operator==(const AbsState& o) const { return reachable == o.reachable && env == o.env; }
};

inline AbsState join_states(const DomainCtx& ctx, const AbsState& a, const AbsState& b) {
  if (!a.reachable) return b;
  if (!b.reachable) return a;
  AbsState out = AbsState::empty_reachable();
  auto add_keys = [&](const AbsState& s) {
    for (const auto& [base, cells] : s.env)
      for (const auto& [range, val] : cells)
        out.env[base][range] = AbsVal::bottom();
  };
  add_keys(a);
  add_keys(b);
  for (auto& [base, cells] : out.env)
    for (auto& [range, val] : cells)
      val = a.read(ctx, base, range).join(b.read(ctx, base, range));
  return out;
}

inline AbsState widen_states(const DomainCtx& ctx, const AbsState& older, const AbsState& newer) {
  if (!older.reachable) return newer;
  if (!newer.reachable) return older;
  AbsState out = AbsState::empty_reachable();
  auto add_keys = [&](const AbsState& s) {
    for (const auto& [base, cells] : s.env)
      for (const auto& [range, val] : cells)
        out.env[base][range] = AbsVal::bottom();
  };
  add_keys(older);
  add_keys(newer);
  for (auto& [base, cells] : out.env)
    for (auto& [range, val] : cells)
      val = older.read(ctx, base, range).widen(newer.read(ctx, base, range));
  return out;
}

inline bool state_leq(const DomainCtx& ctx, const AbsState& a, const AbsState& b) {
  if (!a.reachable) return true;
  if (!b.reachable) return false;
  std::set<std::pair<Base, Interval>> keys;
  for (const auto& [base, cells] : a.env)
    for (const auto& [range, val] : cells) keys.insert({base, range});
  for (const auto& [base, cells] : b.env)
    for (const auto& [range, val] : cells) keys.insert({base, range});
  for (const auto& [base, range] : keys)
    if (!a.read(ctx, base, range).leq(b.read(ctx, base, range))) return false;
  return true;
}

// Shared-base restriction: keep globals, dynamic bases, and any base whose
// address is reachable from them (or from the given extra roots) through
// points-to entries. Locals whose addresses escape stay visible to other
// threads this way.
inline std::set<Base> shared_base_closure(const AbsState& s, const std::vector<AbsVal>& roots) {
  std::set<Base> shared;
  std::vector<Base> work;
  auto add = [&](const Base& b) {
    if (b.kind == Base::Kind::Function) return;
    if (shared.insert(b).second) work.push_back(b);
  };
  for (const auto& [base, cells] : s.env)
    if (base.is_shared_kind()) add(base);
  for (const auto& r : roots)
    for (const auto& [base, off] : r.pts) add(base);
  while (!work.empty()) {
    Base b = work.back();
    work.pop_back();
    auto it = s.env.find(b);
    if (it == s.env.end()) continue;
    for (const auto& [range, val] : it->second)
      for (const auto& [tb, toff] : val.pts) add(tb);
  }
  return shared;
}

inline AbsState restrict_to(const AbsState& s, const std::set<Base>& keep) {
  AbsState out;
  out.reachable = s.reachable;
  for (const auto& [base, cells] : s.env)
    if (keep.count(base)) out.env[base] = cells;
  return out;
}

struct Context {
  int thread = 0;
  CallString cs;
  int stmt = 0;

  auto key() const { return std::tie(thread, cs.calls, stmt); }
  bool operator<(const Context& o) const { return key() < o.key(); }
  bool operator==(const Context& o) const { return key() == o.key(); }

  std::string str() const {
    return "t" + std::to_string(thread) + "/" + cs.str() + "/s" + std::to_string(stmt);
  }
};

}  // namespace minirace
