#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "minirace/diag.hpp"
#include "minirace/types.hpp"

namespace minirace {

enum class ExprKind {
  IntLit,
  Var,
  Unary,    // op in {Neg, Not}
  Binary,
  Deref,
  AddrOf,
  Index,
  Field,
  Cast,
  Call,     // only transient inside the parser; hoisted into statements
};

enum class BinOp { Add, Sub, Mul, Div, Mod, Lt, Le, Gt, Ge, Eq, Ne, And, Or };
enum class UnOp { Neg, Not };

struct Expr;
using ExprPtr = std::shared_ptr<Expr>;

struct Expr {
  ExprKind kind = ExprKind::IntLit;
  long long int_value = 0;          // IntLit
  std::string name;                 // Var name / Field name / Call callee
  UnOp un_op = UnOp::Neg;
  BinOp bin_op = BinOp::Add;
  ExprPtr a, b;                     // operands (a = base for Index/Field/Deref/AddrOf/Cast)
  std::vector<ExprPtr> args;        // Call
  CType type;                       // filled by the typechecker
  SourceLoc loc;

  static ExprPtr lit(long long v, SourceLoc loc = {}) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::IntLit;
    e->int_value = v;
    e->loc = std::move(loc);
    return e;
  }
  static ExprPtr var(std::string n, SourceLoc loc = {}) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Var;
    e->name = std::move(n);
    e->loc = std::move(loc);
    return e;
  }
  static ExprPtr unary(UnOp op, ExprPtr x) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Unary;
    e->un_op = op;
    e->a = std::move(x);
    e->loc = e->a->loc;
    return e;
  }
  static ExprPtr binary(BinOp op, ExprPtr x, ExprPtr y) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Binary;
    e->bin_op = op;
    e->a = std::move(x);
    e->b = std::move(y);
    e->loc = e->a->loc;
    return e;
  }
  static ExprPtr deref(ExprPtr x) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Deref;
    e->a = std::move(x);
    e->loc = e->a->loc;
    return e;
  }
  static ExprPtr addr_of(ExprPtr x) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::AddrOf;
    e->a = std::move(x);
    e->loc = e->a->loc;
    return e;
  }
  static ExprPtr index(ExprPtr base, ExprPtr idx) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Index;
    e->a = std::move(base);
    e->b = std::move(idx);
    e->loc = e->a->loc;
    return e;
  }
  static ExprPtr field(ExprPtr base, std::string f) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Field;
    e->a = std::move(base);
    e->name = std::move(f);
    e->loc = e->a->loc;
    return e;
  }
};

enum class StmtKind {
  Assign,          // lhs = expr
  Call,            // callee(args) [result = lhs, optional]
  If,              // expr cond; body / else_body
  While,           // expr cond; body
  Return,          // optional expr
  Create,          // pthread_create: lhs handle lvalue, entry (name or expr), arg expr
  Join,            // pthread_join: expr handle
  Lock,            // pthread_mutex_lock(expr)
  Unlock,
  Trylock,         // result lvalue in lhs (optional), expr lock
  Rdlock,
  Wrlock,
  RwUnlock,
  Alloc,           // lhs = malloc(expr)
  AssertNonRacing, // no-op marker
};

struct Stmt;
using StmtPtr = std::shared_ptr<Stmt>;

struct Stmt {
  int id = 0;
  SourceLoc loc;
  StmtKind kind = StmtKind::Assign;
  ExprPtr lhs;                    // assign target / call result / handle lvalue / alloc result
  ExprPtr expr;                   // rhs / cond / return value / lock expr / handle expr / size / create arg
  std::string callee;             // Call / Create with syntactically known entry
  ExprPtr entry_expr;             // Create with entry given by a variable
  std::vector<ExprPtr> args;      // Call
  std::vector<StmtPtr> body;      // If then / While body
  std::vector<StmtPtr> else_body; // If else
};

struct Global {
  std::string name;
  CType type;
  long long init = 0;
  bool has_init = false;
  SourceLoc loc;
};

struct Function {
  std::string name;
  CType ret;
  bool ret_void = false;
  std::vector<std::pair<std::string, CType>> formals;
  std::vector<std::pair<std::string, CType>> locals;  // declaration order
  std::vector<StmtPtr> body;
  SourceLoc loc;
};

struct StmtInfo {
  const Stmt* stmt = nullptr;
  std::string function;
};

struct Program {
  std::vector<Global> globals;
  RecordTable records;
  std::map<std::string, Function> functions;
  std::string entry = "main";
  MachineModel model = MachineModel::lp64;
  int next_stmt_id = 1;

  const Global* global(const std::string& n) const {
    for (const auto& g : globals)
      if (g.name == n) return &g;
    return nullptr;
  }
  const Function* function(const std::string& n) const {
    auto it = functions.find(n);
    return it == functions.end() ? nullptr : &it->second;
  }
  const CType* var_type(const std::string& fn, const std::string& n) const {
    if (const Function* f = function(fn)) {
      for (const auto& [ln, t] : f->locals)
        if (ln == n) return &t;
      for (const auto& [fn2, t] : f->formals)
        if (fn2 == n) return &t;
    }
    if (const Global* g = global(n)) return &g->type;
    return nullptr;
  }

  // Statement index: id -> (stmt, owning function). Rebuild after AST edits.
  mutable std::map<int, StmtInfo> stmt_index_;
  void reindex() const {
    stmt_index_.clear();
    for (const auto& [name, fn] : functions) index_stmts(fn.body, name);
  }
  const StmtInfo* stmt_by_id(int id) const {
    if (stmt_index_.empty()) reindex();
    auto it = stmt_index_.find(id);
    return it == stmt_index_.end() ? nullptr : &it->second;
  }

private:
  void index_stmts(const std::vector<StmtPtr>& list, const std::string& fn) const {
    for (const auto& s : list) {
      stmt_index_[s->id] = {s.get(), fn};
      index_stmts(s->body, fn);
      index_stmts(s->else_body, fn);
    }
  }
};

// --- structural equality (ignores ids, locations, inferred types) -----------

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case ExprKind::IntLit: return a->int_value == b->int_value;
    case ExprKind::Var: return a->name == b->name;
    case ExprKind::Unary: return a->un_op == b->un_op && expr_equal(a->a, b->a);
    case ExprKind::Binary:
      return a->bin_op == b->bin_op && expr_equal(a->a, b->a) && expr_equal(a->b, b->b);
    case ExprKind::Deref:
    case ExprKind::AddrOf: return expr_equal(a->a, b->a);
    case ExprKind::Index: return expr_equal(a->a, b->a) && expr_equal(a->b, b->b);
    case ExprKind::Field: return a->name == b->name && expr_equal(a->a, b->a);
    case ExprKind::Cast: return a->type == b->type && expr_equal(a->a, b->a);
    case ExprKind::Call: {
      if (a->name != b->name || a->args.size() != b->args.size()) return false;
      for (size_t i = 0; i < a->args.size(); ++i)
        if (!expr_equal(a->args[i], b->args[i])) return false;
      return true;
    }
  }
  return false;
}

inline bool stmts_equal(const std::vector<StmtPtr>& a, const std::vector<StmtPtr>& b);

inline bool stmt_equal(const StmtPtr& a, const StmtPtr& b) {
  if (a->kind != b->kind || a->callee != b->callee) return false;
  if (!expr_equal(a->lhs, b->lhs) || !expr_equal(a->expr, b->expr) ||
      !expr_equal(a->entry_expr, b->entry_expr))
    return false;
  if (a->args.size() != b->args.size()) return false;
  for (size_t i = 0; i < a->args.size(); ++i)
    if (!expr_equal(a->args[i], b->args[i])) return false;
  return stmts_equal(a->body, b->body) && stmts_equal(a->else_body, b->else_body);
}

inline bool stmts_equal(const std::vector<StmtPtr>& a, const std::vector<StmtPtr>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!stmt_equal(a[i], b[i])) return false;
  return true;
}

inline bool program_equal(const Program& a, const Program& b) {
  if (a.globals.size() != b.globals.size()) return false;
  for (size_t i = 0; i < a.globals.size(); ++i) {
    const Global& x = a.globals[i];
    const Global& y = b.globals[i];
    if (x.name != y.name || !(x.type == y.type) || x.init != y.init || x.has_init != y.has_init)
      return false;
  }
  if (a.records.size() != b.records.size() || a.functions.size() != b.functions.size())
    return false;
  for (const auto& [name, rec] : a.records) {
    auto it = b.records.find(name);
    if (it == b.records.end()) return false;
    if (rec.fields.size() != it->second.fields.size()) return false;
    for (size_t i = 0; i < rec.fields.size(); ++i)
      if (rec.fields[i].first != it->second.fields[i].first ||
          !(rec.fields[i].second == it->second.fields[i].second))
        return false;
  }
  for (const auto& [name, fa] : a.functions) {
    auto it = b.functions.find(name);
    if (it == b.functions.end()) return false;
    const Function& fb = it->second;
    if (fa.formals != fb.formals || fa.locals != fb.locals) return false;
    if (!(fa.ret == fb.ret) || fa.ret_void != fb.ret_void) return false;
    if (!stmts_equal(fa.body, fb.body)) return false;
  }
  return true;
}

// Variable names read by an expression (used for guard reads and the
// active-waiting pattern check).
inline void collect_vars(const ExprPtr& e, std::vector<std::string>& out) {
  if (!e) return;
  if (e->kind == ExprKind::Var) out.push_back(e->name);
  collect_vars(e->a, out);
  collect_vars(e->b, out);
  for (const auto& x : e->args) collect_vars(x, out);
}

}  // namespace minirace
