#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>

namespace minirace {

// Integer interval with +/- infinity sentinels. Empty is canonically {1, 0}.
struct Interval {
  static constexpr long long kNegInf = std::numeric_limits<long long>::min();
  static constexpr long long kPosInf = std::numeric_limits<long long>::max();

  long long lo = 1;
  long long hi = 0;

  static Interval top() { return {kNegInf, kPosInf}; }
  static Interval bottom() { return {1, 0}; }
  static Interval constant(long long v) { return {v, v}; }
  static Interval range(long long lo, long long hi) {
    if (lo > hi) return bottom();
    return {lo, hi};
  }

  bool empty() const { return lo > hi; }
  bool singleton() const { return !empty() && lo == hi; }
  bool is_top() const { return lo == kNegInf && hi == kPosInf; }

  bool contains(long long v) const { return !empty() && lo <= v && v <= hi; }
  bool subset_of(const Interval& o) const {
    if (empty()) return true;
    if (o.empty()) return false;
    return o.lo <= lo && hi <= o.hi;
  }
  bool intersects(const Interval& o) const {
    return !empty() && !o.empty() && lo <= o.hi && o.lo <= hi;
  }

  Interval join(const Interval& o) const {
    if (empty()) return o;
    if (o.empty()) return *this;
    return {std::min(lo, o.lo), std::max(hi, o.hi)};
  }
  Interval meet(const Interval& o) const {
    if (empty() || o.empty()) return bottom();
    return range(std::max(lo, o.lo), std::min(hi, o.hi));
  }
  // Standard interval widening: unstable bounds jump to infinity.
  Interval widen(const Interval& newer) const {
    if (empty()) return newer;
    if (newer.empty()) return *this;
    long long l = newer.lo < lo ? kNegInf : lo;
    long long h = newer.hi > hi ? kPosInf : hi;
    return {l, h};
  }

  bool operator==(const Interval& o) const {
    if (empty() && o.empty()) return true;
    return lo == o.lo && hi == o.hi;
  }
  bool operator<(const Interval& o) const {
    return std::tie(lo, hi) < std::tie(o.lo, o.hi);
  }

  std::string str() const {
    if (empty()) return "[]";
    std::string l = lo == kNegInf ? "-inf" : std::to_string(lo);
    std::string h = hi == kPosInf ? "+inf" : std::to_string(hi);
    return "[" + l + "," + h + "]";
  }
};

namespace detail {

inline bool is_inf(long long v) { return v == Interval::kNegInf || v == Interval::kPosInf; }

// Saturating bound arithmetic over the sentinel encoding.
inline long long bound_add(long long a, long long b) {
  if (a == Interval::kNegInf || b == Interval::kNegInf) return Interval::kNegInf;
  if (a == Interval::kPosInf || b == Interval::kPosInf) return Interval::kPosInf;
  __int128 r = static_cast<__int128>(a) + b;
  if (r <= Interval::kNegInf) return Interval::kNegInf;
  if (r >= Interval::kPosInf) return Interval::kPosInf;
  return static_cast<long long>(r);
}

inline long long bound_neg(long long a) {
  if (a == Interval::kNegInf) return Interval::kPosInf;
  if (a == Interval::kPosInf) return Interval::kNegInf;
  return -a;
}

inline long long bound_mul(long long a, long long b) {
  if (a == 0 || b == 0) return 0;
  bool neg = (a < 0) != (b < 0);
  if (is_inf(a) || is_inf(b)) return neg ? Interval::kNegInf : Interval::kPosInf;
  __int128 r = static_cast<__int128>(a) * b;
  if (r <= Interval::kNegInf) return Interval::kNegInf;
  if (r >= Interval::kPosInf) return Interval::kPosInf;
  return static_cast<long long>(r);
}

// C-style truncating division of bounds; callers exclude zero divisors.
inline long long bound_div(long long a, long long b) {
  if (is_inf(a)) {
    bool neg = (a < 0) != (b < 0);
    return neg ? Interval::kNegInf : Interval::kPosInf;
  }
  if (is_inf(b)) return 0;
  return a / b;
}

}  // namespace detail

inline Interval iv_add(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  return {detail::bound_add(a.lo, b.lo), detail::bound_add(a.hi, b.hi)};
}

inline Interval iv_neg(const Interval& a) {
  if (a.empty()) return a;
  return {detail::bound_neg(a.hi), detail::bound_neg(a.lo)};
}

inline Interval iv_sub(const Interval& a, const Interval& b) { return iv_add(a, iv_neg(b)); }

inline Interval iv_mul(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  long long c[4] = {detail::bound_mul(a.lo, b.lo), detail::bound_mul(a.lo, b.hi),
                    detail::bound_mul(a.hi, b.lo), detail::bound_mul(a.hi, b.hi)};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

// Division by an interval containing zero yields top.
inline Interval iv_div(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  if (b.contains(0)) return Interval::top();
  long long c[4] = {detail::bound_div(a.lo, b.lo), detail::bound_div(a.lo, b.hi),
                    detail::bound_div(a.hi, b.lo), detail::bound_div(a.hi, b.hi)};
  return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
}

inline Interval iv_mod(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  if (b.contains(0)) return Interval::top();
  long long m = std::max(std::llabs(b.lo == Interval::kNegInf ? Interval::kPosInf : b.lo),
                         std::llabs(b.hi == Interval::kPosInf ? Interval::kPosInf : b.hi));
  if (detail::is_inf(m)) m = Interval::kPosInf;
  // C remainder follows the sign of the numerator.
  long long lo = a.lo < 0 ? detail::bound_neg(detail::bound_add(m, -1)) : 0;
  long long hi = a.hi > 0 ? detail::bound_add(m, -1) : 0;
  return {lo, hi};
}

// Comparison over intervals: exact 0/1 when decidable, else [0,1].
inline Interval iv_cmp_lt(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  if (a.hi < b.lo) return Interval::constant(1);
  if (a.lo >= b.hi) return Interval::constant(0);
  return {0, 1};
}
inline Interval iv_cmp_le(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  if (a.hi <= b.lo) return Interval::constant(1);
  if (a.lo > b.hi) return Interval::constant(0);
  return {0, 1};
}
inline Interval iv_cmp_eq(const Interval& a, const Interval& b) {
  if (a.empty() || b.empty()) return Interval::bottom();
  if (a.singleton() && b.singleton() && a.lo == b.lo) return Interval::constant(1);
  if (!a.intersects(b)) return Interval::constant(0);
  return {0, 1};
}

inline Interval iv_logic_not(const Interval& a) {
  if (a.empty()) return a;
  if (a.singleton() && a.lo == 0) return Interval::constant(1);
  if (!a.contains(0)) return Interval::constant(0);
  return {0, 1};
}

}  // namespace minirace
