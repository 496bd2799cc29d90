#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "minirace/ast.hpp"
#include "minirace/lexer.hpp"

namespace minirace {

namespace detail {

inline const std::set<std::string>& unsupported_keywords() {
  static const std::set<std::string> kw = {
      "for", "do", "switch", "goto", "break", "continue", "case", "default",
      "char", "short", "long", "unsigned", "signed", "float", "double",
      "union", "enum", "typedef", "static", "extern", "const", "volatile",
  };
  return kw;
}

inline bool is_semaphore_name(const std::string& n) {
  return n == "sem_t" || n == "sem_wait" || n == "sem_post" || n == "sem_init" ||
         n == "sem_destroy" || n == "sem_trywait";
}

// Calls that name a recognized but unsupported API family.
inline std::string unsupported_call_feature(const std::string& n) {
  if (is_semaphore_name(n)) return "semaphore";
  if (n.rfind("pthread_cond_", 0) == 0) return "condition variable";
  if (n.rfind("pthread_barrier_", 0) == 0) return "barrier";
  if (n.rfind("atomic_", 0) == 0 || n.rfind("__atomic_", 0) == 0 ||
      n.rfind("__VERIFIER_atomic_", 0) == 0)
    return "atomic function";
  if (n == "pthread_exit") return "pthread_exit";
  if (n.rfind("pthread_spin_", 0) == 0) return "spinlock";
  return "";
}

}  // namespace detail

class Parser {
public:
  Parser(std::string source, MachineModel model, std::string filename)
      : model_(model), file_(std::move(filename)) {
    toks_ = Lexer(std::move(source), file_).run();
  }

  Program run() {
    prog_.model = model_;
    parse_translation_unit();
    lower_all();
    typecheck_all();
    validate();
    prog_.reindex();
    return std::move(prog_);
  }

private:
  // ---- token cursor ---------------------------------------------------
  const Token& peek(int n = 0) const { return toks_[std::min(pos_ + n, toks_.size() - 1)]; }
  const Token& cur() const { return toks_[pos_]; }
  Token eat() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(const char* p) {
    if (cur().is(p)) {
      eat();
      return true;
    }
    return false;
  }
  void expect(const char* p, const char* what = nullptr) {
    if (!accept(p))
      throw ParseError(std::string("expected '") + p + "'" + (what ? std::string(" ") + what : ""),
                       cur().loc);
  }
  std::string expect_ident(const char* what) {
    if (cur().kind != Tok::Ident) throw ParseError(std::string("expected ") + what, cur().loc);
    return eat().text;
  }

  [[noreturn]] void reject_keyword(const Token& t) {
    if (detail::is_semaphore_name(t.text)) throw UnsupportedFeature("semaphore", t.loc);
    throw UnsupportedFeature("'" + t.text + "'", t.loc);
  }

  // ---- types -----------------------------------------------------------
  bool at_type_start() const {
    const Token& t = cur();
    if (t.kind != Tok::Ident) return false;
    return t.text == "int" || t.text == "void" || t.text == "atomic_int" || t.text == "_Atomic" ||
           t.text == "struct" || t.text == "pthread_mutex_t" || t.text == "pthread_rwlock_t" ||
           t.text == "pthread_t" || t.text == "sem_t";
  }

  CType parse_base_type() {
    const Token t = eat();
    if (t.kind != Tok::Ident) throw ParseError("expected type", t.loc);
    if (t.text == "int") return CType::make_int();
    if (t.text == "void") return CType::make_void();
    if (t.text == "atomic_int") return CType::make_atomic_int();
    if (t.text == "_Atomic") {
      const Token u = eat();
      if (!u.is_ident("int")) throw ParseError("expected 'int' after '_Atomic'", u.loc);
      return CType::make_atomic_int();
    }
    if (t.text == "pthread_mutex_t") return {TypeKind::Mutex};
    if (t.text == "pthread_rwlock_t") return {TypeKind::Rwlock};
    if (t.text == "pthread_t") return {TypeKind::ThreadHandle};
    if (t.text == "sem_t") throw UnsupportedFeature("semaphore", t.loc);
    if (t.text == "struct") {
      std::string name = expect_ident("struct name");
      return CType::record(name);
    }
    if (detail::unsupported_keywords().count(t.text)) reject_keyword(t);
    throw ParseError("expected type, got '" + t.text + "'", t.loc);
  }

  CType parse_type() {
    CType t = parse_base_type();
    while (accept("*")) t = CType::pointer_to(t);
    return t;
  }

  // declarator: name, possibly with one [N] suffix
  struct Declarator {
    std::string name;
    CType type;
    SourceLoc loc;
  };

  Declarator parse_declarator(CType base) {
    SourceLoc loc = cur().loc;
    std::string name = expect_ident("identifier");
    CType t = std::move(base);
    if (accept("[")) {
      if (cur().kind == Tok::Ident)
        throw UnsupportedFeature("variable-length array", cur().loc);
      ExprPtr len = parse_expr();
      long long n = 0;
      if (!const_fold(len, n)) throw UnsupportedFeature("variable-length array", loc);
      if (n <= 0) throw ParseError("array length must be positive", loc);
      expect("]");
      if (cur().is("[")) throw ParseError("multi-dimensional arrays are not in the subset", cur().loc);
      t = CType::array_of(t, n);
    }
    return {name, t, loc};
  }

  bool const_fold(const ExprPtr& e, long long& out) const {
    if (!e) return false;
    switch (e->kind) {
      case ExprKind::IntLit:
        out = e->int_value;
        return true;
      case ExprKind::Unary: {
        long long v;
        if (e->un_op == UnOp::Neg && const_fold(e->a, v)) {
          out = -v;
          return true;
        }
        return false;
      }
      case ExprKind::Binary: {
        long long x, y;
        if (!const_fold(e->a, x) || !const_fold(e->b, y)) return false;
        switch (e->bin_op) {
          case BinOp::Add: out = x + y; return true;
          case BinOp::Sub: out = x - y; return true;
          case BinOp::Mul: out = x * y; return true;
          case BinOp::Div: if (y == 0) return false; out = x / y; return true;
          default: return false;
        }
      }
      default:
        return false;
    }
  }

  // ---- top level --------------------------------------------------------
  void parse_translation_unit() {
    while (cur().kind != Tok::Eof) {
      if (cur().is_ident("struct") && peek(1).kind == Tok::Ident && peek(2).is("{")) {
        parse_struct_def();
        continue;
      }
      if (cur().kind == Tok::Ident && detail::unsupported_keywords().count(cur().text))
        reject_keyword(cur());
      if (!at_type_start())
        throw ParseError("expected declaration, got '" + cur().text + "'", cur().loc);
      CType base = parse_type();
      Declarator d = parse_declarator(base);
      if (cur().is("(")) {
        parse_function(std::move(d));
      } else {
        parse_global_tail(std::move(d), base);
      }
    }
  }

  void parse_struct_def() {
    eat();  // struct
    std::string name = expect_ident("struct name");
    expect("{");
    RecordDef rec;
    while (!accept("}")) {
      CType ft = parse_type();
      if (ft.kind == TypeKind::Record)
        throw ParseError("nested struct fields are not in the subset", cur().loc);
      Declarator fd = parse_declarator(ft);
      rec.fields.emplace_back(fd.name, fd.type);
      expect(";");
    }
    expect(";");
    if (prog_.records.count(name))
      throw ParseError("duplicate struct '" + name + "'", cur().loc);
    prog_.records[name] = std::move(rec);
  }

  void parse_global_tail(Declarator first, const CType& base) {
    Declarator d = std::move(first);
    while (true) {
      Global g;
      g.name = d.name;
      g.type = d.type;
      g.loc = d.loc;
      if (accept("=")) {
        if (cur().is_ident("PTHREAD_MUTEX_INITIALIZER") ||
            cur().is_ident("PTHREAD_RWLOCK_INITIALIZER")) {
          eat();  // initializer macro carries no information we keep
        } else if (cur().is("{")) {
          throw ParseError("initializer lists are not in the subset", cur().loc);
        } else {
          ExprPtr init = parse_expr();
          long long v;
          if (!const_fold(init, v))
            throw ParseError("global initializer must be a constant", g.loc);
          g.init = v;
          g.has_init = true;
        }
      }
      prog_.globals.push_back(std::move(g));
      if (accept(",")) {
        d = parse_declarator(base);
        continue;
      }
      expect(";");
      return;
    }
  }

  void parse_function(Declarator d) {
    Function fn;
    fn.name = d.name;
    fn.loc = d.loc;
    if (d.type.kind == TypeKind::Void) {
      fn.ret_void = true;
      fn.ret = CType::make_int();
    } else {
      fn.ret = d.type;
    }
    expect("(");
    if (!accept(")")) {
      if (cur().is_ident("void") && peek(1).is(")")) {
        eat();
        eat();
      } else {
        while (true) {
          CType pt = parse_type();
          if (pt.kind == TypeKind::Void)
            throw ParseError("parameter of type void", cur().loc);
          std::string pname = expect_ident("parameter name");
          fn.formals.emplace_back(pname, pt);
          if (accept(",")) continue;
          expect(")");
          break;
        }
      }
    }
    cur_fn_ = &fn;
    fn.body = parse_block();
    cur_fn_ = nullptr;
    if (prog_.functions.count(fn.name))
      throw ParseError("duplicate function '" + fn.name + "'", fn.loc);
    prog_.functions[fn.name] = std::move(fn);
  }

  // ---- statements --------------------------------------------------------
  std::vector<StmtPtr> parse_block() {
    expect("{");
    std::vector<StmtPtr> out;
    while (!accept("}")) parse_stmt_into(out);
    return out;
  }

  StmtPtr make_stmt(StmtKind k, SourceLoc loc) {
    auto s = std::make_shared<Stmt>();
    s->kind = k;
    s->loc = std::move(loc);
    return s;
  }

  void parse_stmt_into(std::vector<StmtPtr>& out) {
    SourceLoc loc = cur().loc;
    if (accept(";")) return;
    if (cur().is("{")) {
      auto inner = parse_block();
      for (auto& s : inner) out.push_back(std::move(s));
      return;
    }
    if (cur().kind == Tok::Ident && detail::unsupported_keywords().count(cur().text))
      reject_keyword(cur());

    if (cur().is_ident("if")) {
      eat();
      expect("(");
      auto s = make_stmt(StmtKind::If, loc);
      s->expr = parse_expr();
      expect(")");
      s->body = parse_stmt_as_block();
      if (cur().is_ident("else")) {
        eat();
        s->else_body = parse_stmt_as_block();
      }
      out.push_back(std::move(s));
      return;
    }
    if (cur().is_ident("while")) {
      eat();
      expect("(");
      auto s = make_stmt(StmtKind::While, loc);
      s->expr = parse_expr();
      expect(")");
      s->body = parse_stmt_as_block();
      out.push_back(std::move(s));
      return;
    }
    if (cur().is_ident("return")) {
      eat();
      auto s = make_stmt(StmtKind::Return, loc);
      if (!cur().is(";")) s->expr = parse_expr();
      expect(";");
      out.push_back(std::move(s));
      return;
    }
    if (at_type_start()) {
      // local declaration(s); initializers become assignments
      CType base = parse_type();
      while (true) {
        Declarator d = parse_declarator(base);
        cur_fn_->locals.emplace_back(d.name, d.type);
        if (accept("=")) {
          if (cur().is_ident("PTHREAD_MUTEX_INITIALIZER") ||
              cur().is_ident("PTHREAD_RWLOCK_INITIALIZER")) {
            eat();
          } else {
            auto s = make_stmt(StmtKind::Assign, d.loc);
            s->lhs = Expr::var(d.name, d.loc);
            s->expr = parse_expr();
            out.push_back(std::move(s));
          }
        }
        if (accept(",")) continue;
        expect(";");
        break;
      }
      return;
    }

    // expression statement: assignment or call
    ExprPtr e = parse_expr();
    if (cur().is("=")) {
      eat();
      if (!is_lvalue(e)) throw ParseError("left side of '=' is not assignable", loc);
      auto s = make_stmt(StmtKind::Assign, loc);
      s->lhs = std::move(e);
      s->expr = parse_expr();
      if (cur().is("=")) throw ParseError("chained assignment is not in the subset", cur().loc);
      expect(";");
      out.push_back(std::move(s));
      return;
    }
    if (cur().is("++") || cur().is("--") || cur().is("+=") || cur().is("-=") || cur().is("*=") ||
        cur().is("/="))
      throw ParseError("compound assignment and increment are not in the subset; write x = x + 1",
                       cur().loc);
    if (e->kind != ExprKind::Call)
      throw ParseError("expression statement has no effect", loc);
    auto s = make_stmt(StmtKind::Call, loc);
    s->callee = e->name;
    s->args = e->args;
    expect(";");
    out.push_back(std::move(s));
  }

  std::vector<StmtPtr> parse_stmt_as_block() {
    if (cur().is("{")) return parse_block();
    std::vector<StmtPtr> out;
    if (accept(";")) return out;  // empty body, e.g. `while (c);`
    parse_stmt_into(out);
    return out;
  }

  static bool is_lvalue(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::Var:
      case ExprKind::Deref:
      case ExprKind::Index:
      case ExprKind::Field:
        return true;
      default:
        return false;
    }
  }

  // ---- expressions ---------------------------------------------------------
  ExprPtr parse_expr() { return parse_or(); }

  ExprPtr parse_or() {
    ExprPtr e = parse_and();
    while (cur().is("||")) {
      eat();
      e = Expr::binary(BinOp::Or, e, parse_and());
    }
    return e;
  }
  ExprPtr parse_and() {
    ExprPtr e = parse_eq();
    while (cur().is("&&")) {
      eat();
      e = Expr::binary(BinOp::And, e, parse_eq());
    }
    return e;
  }
  ExprPtr parse_eq() {
    ExprPtr e = parse_rel();
    while (cur().is("==") || cur().is("!=")) {
      BinOp op = cur().is("==") ? BinOp::Eq : BinOp::Ne;
      eat();
      e = Expr::binary(op, e, parse_rel());
    }
    return e;
  }
  ExprPtr parse_rel() {
    ExprPtr e = parse_add();
    while (cur().is("<") || cur().is("<=") || cur().is(">") || cur().is(">=")) {
      BinOp op = cur().is("<") ? BinOp::Lt : cur().is("<=") ? BinOp::Le
                 : cur().is(">") ? BinOp::Gt : BinOp::Ge;
      eat();
      e = Expr::binary(op, e, parse_add());
    }
    return e;
  }
  ExprPtr parse_add() {
    ExprPtr e = parse_mul();
    while (cur().is("+") || cur().is("-")) {
      BinOp op = cur().is("+") ? BinOp::Add : BinOp::Sub;
      eat();
      e = Expr::binary(op, e, parse_mul());
    }
    return e;
  }
  ExprPtr parse_mul() {
    ExprPtr e = parse_unary();
    while (cur().is("*") || cur().is("/") || cur().is("%")) {
      BinOp op = cur().is("*") ? BinOp::Mul : cur().is("/") ? BinOp::Div : BinOp::Mod;
      eat();
      e = Expr::binary(op, e, parse_unary());
    }
    return e;
  }

  bool at_cast() const {
    if (!cur().is("(")) return false;
    const Token& t = toks_[std::min(pos_ + 1, toks_.size() - 1)];
    if (t.kind != Tok::Ident) return false;
    return t.text == "int" || t.text == "void" || t.text == "atomic_int" || t.text == "_Atomic" ||
           t.text == "struct" || t.text == "pthread_mutex_t" || t.text == "pthread_rwlock_t" ||
           t.text == "pthread_t";
  }

  ExprPtr parse_unary() {
    SourceLoc loc = cur().loc;
    if (accept("!")) return Expr::unary(UnOp::Not, parse_unary());
    if (accept("-")) return Expr::unary(UnOp::Neg, parse_unary());
    if (accept("*")) return Expr::deref(parse_unary());
    if (accept("&")) {
      ExprPtr e = parse_unary();
      return Expr::addr_of(std::move(e));
    }
    if (cur().is("~") || cur().is("^"))
      throw ParseError("bitwise operators are not in the subset", loc);
    if (at_cast()) {
      eat();  // (
      CType t = parse_type();
      expect(")");
      auto e = std::make_shared<Expr>();
      e->kind = ExprKind::Cast;
      e->type = t;
      e->a = parse_unary();
      e->loc = loc;
      return e;
    }
    return parse_postfix();
  }

  ExprPtr parse_postfix() {
    ExprPtr e = parse_primary();
    while (true) {
      if (accept("[")) {
        ExprPtr idx = parse_expr();
        expect("]");
        e = Expr::index(e, idx);
      } else if (accept(".")) {
        e = Expr::field(e, expect_ident("field name"));
      } else if (accept("->")) {
        e = Expr::field(Expr::deref(e), expect_ident("field name"));
      } else if (cur().is("(")) {
        if (e->kind != ExprKind::Var)
          throw ParseError("only direct calls by name are supported", cur().loc);
        eat();
        auto call = std::make_shared<Expr>();
        call->kind = ExprKind::Call;
        call->name = e->name;
        call->loc = e->loc;
        if (!accept(")")) {
          while (true) {
            call->args.push_back(parse_expr());
            if (accept(",")) continue;
            expect(")");
            break;
          }
        }
        e = call;
      } else {
        return e;
      }
    }
  }

  ExprPtr parse_primary() {
    SourceLoc loc = cur().loc;
    if (cur().kind == Tok::Int) return Expr::lit(eat().value, loc);
    if (cur().is("(")) {
      eat();
      ExprPtr e = parse_expr();
      expect(")");
      return e;
    }
    if (cur().kind == Tok::Ident) {
      if (detail::unsupported_keywords().count(cur().text)) reject_keyword(cur());
      if (cur().text == "sizeof") {
        eat();
        expect("(");
        CType t = parse_type();
        expect(")");
        return Expr::lit(size_of(t, model_, prog_.records), loc);
      }
      if (cur().text == "NULL") {
        eat();
        return Expr::lit(0, loc);
      }
      return Expr::var(eat().text, loc);
    }
    throw ParseError("expected expression, got '" + cur().text + "'", loc);
  }

  // =======================================================================
  // Lowering: hoist calls out of expressions, classify intrinsic calls,
  // synthesize implicit returns, assign statement ids.
  // =======================================================================
  void lower_all() {
    for (auto& [name, fn] : prog_.functions) {
      lower_fn_ = &fn;
      temp_counter_ = 0;
      fn.body = lower_stmts(fn.body);
      if (fn.body.empty() || fn.body.back()->kind != StmtKind::Return) {
        auto ret = make_stmt(StmtKind::Return, fn.loc);
        assign_id(ret);
        fn.body.push_back(std::move(ret));
      }
      lower_fn_ = nullptr;
    }
  }

  void assign_id(const StmtPtr& s) { s->id = prog_.next_stmt_id++; }

  std::string fresh_temp(const CType& t) {
    std::string name = "__t" + std::to_string(temp_counter_++);
    lower_fn_->locals.emplace_back(name, t);
    return name;
  }

  CType callee_result_type(const std::string& name, const SourceLoc& loc) const {
    if (name == "pthread_mutex_trylock") return CType::make_int();
    if (const Function* f = prog_.function(name)) {
      if (f->ret_void) throw ParseError("void value used in expression", loc);
      return f->ret;
    }
    std::string feat = detail::unsupported_call_feature(name);
    if (!feat.empty()) throw UnsupportedFeature(feat, loc);
    throw UnsupportedFeature("call to undeclared function '" + name + "'", loc);
  }

  // Pull nested calls out of `e`, emitting the call statements into `pre`.
  void hoist_calls(ExprPtr& e, std::vector<StmtPtr>& pre, bool under_logical) {
    if (!e) return;
    bool logical = under_logical ||
                   (e->kind == ExprKind::Binary &&
                    (e->bin_op == BinOp::And || e->bin_op == BinOp::Or));
    hoist_calls(e->a, pre, logical);
    hoist_calls(e->b, pre, logical);
    for (auto& a : e->args) hoist_calls(a, pre, logical);
    if (e->kind != ExprKind::Call) return;
    if (under_logical)
      throw UnsupportedFeature("function call under '&&' or '||'", e->loc);
    if (e->name == "malloc")
      throw ParseError("malloc result must be assigned directly to a pointer", e->loc);
    CType rt = callee_result_type(e->name, e->loc);
    std::string tmp = fresh_temp(rt);
    auto call = make_stmt(StmtKind::Call, e->loc);
    call->callee = e->name;
    call->args = e->args;
    call->lhs = Expr::var(tmp, e->loc);
    // classify intrinsics that may appear in expressions (trylock only)
    if (e->name == "pthread_mutex_trylock") {
      call->kind = StmtKind::Trylock;
      if (call->args.size() != 1)
        throw ParseError("pthread_mutex_trylock takes one argument", e->loc);
      call->expr = call->args[0];
      call->args.clear();
    }
    assign_id(call);
    pre.push_back(std::move(call));
    ExprPtr rep = Expr::var(tmp, e->loc);
    e = rep;
  }

  bool is_const_zero(const ExprPtr& e) const {
    ExprPtr x = e;
    while (x && x->kind == ExprKind::Cast) x = x->a;
    long long v;
    return x && const_fold(x, v) && v == 0;
  }

  std::vector<StmtPtr> lower_stmts(const std::vector<StmtPtr>& in) {
    std::vector<StmtPtr> out;
    for (const auto& s : in) lower_stmt(s, out);
    return out;
  }

  void lower_stmt(const StmtPtr& s, std::vector<StmtPtr>& out) {
    switch (s->kind) {
      case StmtKind::Assign: {
        // RHS may be a direct call (trylock / malloc / user function).
        if (s->expr->kind == ExprKind::Call) {
          lower_call(s->expr, s->lhs, s->loc, out);
          return;
        }
        ExprPtr rhs = s->expr;
        ExprPtr lhs = s->lhs;
        std::vector<StmtPtr> pre;
        hoist_calls(rhs, pre, false);
        hoist_calls(lhs, pre, false);
        for (auto& p : pre) out.push_back(std::move(p));
        auto n = make_stmt(StmtKind::Assign, s->loc);
        n->lhs = lhs;
        n->expr = rhs;
        assign_id(n);
        out.push_back(std::move(n));
        return;
      }
      case StmtKind::Call:
        lower_bare_call(s, out);
        return;
      case StmtKind::If: {
        ExprPtr cond = s->expr;
        std::vector<StmtPtr> pre;
        hoist_calls(cond, pre, false);
        for (auto& p : pre) out.push_back(std::move(p));
        auto n = make_stmt(StmtKind::If, s->loc);
        n->expr = cond;
        assign_id(n);
        n->body = lower_stmts(s->body);
        n->else_body = lower_stmts(s->else_body);
        out.push_back(std::move(n));
        return;
      }
      case StmtKind::While: {
        ExprPtr cond = s->expr;
        std::vector<StmtPtr> pre;
        hoist_calls(cond, pre, false);
        auto n = make_stmt(StmtKind::While, s->loc);
        n->expr = cond;
        n->body = lower_stmts(s->body);
        // calls in the condition are re-evaluated at the end of each iteration
        for (const auto& p : pre) {
          auto again = std::make_shared<Stmt>(*p);
          assign_id(again);
          n->body.push_back(std::move(again));
        }
        for (auto& p : pre) out.push_back(std::move(p));
        assign_id(n);
        out.push_back(std::move(n));
        return;
      }
      case StmtKind::Return: {
        ExprPtr v = s->expr;
        std::vector<StmtPtr> pre;
        hoist_calls(v, pre, false);
        for (auto& p : pre) out.push_back(std::move(p));
        auto n = make_stmt(StmtKind::Return, s->loc);
        n->expr = v;
        assign_id(n);
        out.push_back(std::move(n));
        return;
      }
      default: {
        auto n = std::make_shared<Stmt>(*s);
        assign_id(n);
        out.push_back(std::move(n));
        return;
      }
    }
  }

  // `lv = call(...)` forms.
  void lower_call(const ExprPtr& call, ExprPtr lv, const SourceLoc& loc,
                  std::vector<StmtPtr>& out) {
    std::vector<ExprPtr> args = call->args;
    std::vector<StmtPtr> pre;
    for (auto& a : args) hoist_calls(a, pre, false);
    hoist_calls(lv, pre, false);
    for (auto& p : pre) out.push_back(std::move(p));
    const std::string& name = call->name;
    if (name == "malloc") {
      if (args.size() != 1) throw ParseError("malloc takes one argument", loc);
      auto n = make_stmt(StmtKind::Alloc, loc);
      n->lhs = std::move(lv);
      n->expr = args[0];
      assign_id(n);
      out.push_back(std::move(n));
      return;
    }
    if (name == "pthread_mutex_trylock") {
      if (args.size() != 1) throw ParseError("pthread_mutex_trylock takes one argument", loc);
      auto n = make_stmt(StmtKind::Trylock, loc);
      n->lhs = std::move(lv);
      n->expr = args[0];
      assign_id(n);
      out.push_back(std::move(n));
      return;
    }
    std::string feat = detail::unsupported_call_feature(name);
    if (!feat.empty()) throw UnsupportedFeature(feat, loc);
    if (name.rfind("pthread_", 0) == 0)
      throw UnsupportedFeature("result of '" + name + "'", loc);
    if (!prog_.function(name))
      throw UnsupportedFeature("call to undeclared function '" + name + "'", loc);
    auto n = make_stmt(StmtKind::Call, loc);
    n->callee = name;
    n->args = std::move(args);
    n->lhs = std::move(lv);
    assign_id(n);
    out.push_back(std::move(n));
  }

  void lower_bare_call(const StmtPtr& s, std::vector<StmtPtr>& out) {
    const std::string& name = s->callee;
    std::vector<ExprPtr> args = s->args;
    std::vector<StmtPtr> pre;
    for (size_t i = 0; i < args.size(); ++i) {
      if (name == "pthread_create" && i == 2) {
        if (args[i]->kind == ExprKind::Call)
          throw UnsupportedFeature("thread entry expression", s->loc);
        continue;  // the entry argument is matched syntactically below
      }
      hoist_calls(args[i], pre, false);
    }
    for (auto& p : pre) out.push_back(std::move(p));
    const SourceLoc& loc = s->loc;

    auto expect_args = [&](size_t n) {
      if (args.size() != n)
        throw ParseError(name + " takes " + std::to_string(n) + " argument(s)", loc);
    };
    auto single_lock_stmt = [&](StmtKind k) {
      expect_args(1);
      auto n = make_stmt(k, loc);
      n->expr = args[0];
      assign_id(n);
      out.push_back(std::move(n));
    };

    if (name == "pthread_mutex_lock") return single_lock_stmt(StmtKind::Lock);
    if (name == "pthread_mutex_unlock") return single_lock_stmt(StmtKind::Unlock);
    if (name == "pthread_mutex_trylock") return single_lock_stmt(StmtKind::Trylock);
    if (name == "pthread_rwlock_rdlock") return single_lock_stmt(StmtKind::Rdlock);
    if (name == "pthread_rwlock_wrlock") return single_lock_stmt(StmtKind::Wrlock);
    if (name == "pthread_rwlock_unlock") return single_lock_stmt(StmtKind::RwUnlock);
    if (name == "pthread_mutex_init" || name == "pthread_mutex_destroy" ||
        name == "pthread_rwlock_init" || name == "pthread_rwlock_destroy" || name == "free")
      return;  // no-ops for the analyses
    if (name == "assert_nonracing") {
      auto n = make_stmt(StmtKind::AssertNonRacing, loc);
      assign_id(n);
      out.push_back(std::move(n));
      return;
    }
    if (name == "pthread_create") {
      expect_args(4);
      auto n = make_stmt(StmtKind::Create, loc);
      if (args[0]->kind == ExprKind::AddrOf)
        n->lhs = args[0]->a;
      else
        n->lhs = Expr::deref(args[0]);
      if (!is_const_zero(args[1]))
        throw UnsupportedFeature("thread attributes", loc);
      ExprPtr entry = args[2];
      while (entry->kind == ExprKind::Cast) entry = entry->a;
      if (entry->kind == ExprKind::AddrOf && entry->a->kind == ExprKind::Var)
        entry = entry->a;
      if (entry->kind == ExprKind::Var && prog_.function(entry->name))
        n->callee = entry->name;
      else if (entry->kind == ExprKind::Var)
        n->entry_expr = entry;
      else
        throw UnsupportedFeature("thread entry expression", loc);
      n->expr = args[3];
      assign_id(n);
      out.push_back(std::move(n));
      return;
    }
    if (name == "pthread_join") {
      expect_args(2);
      if (!is_const_zero(args[1]))
        throw UnsupportedFeature("pthread_join result argument", loc);
      auto n = make_stmt(StmtKind::Join, loc);
      n->expr = args[0];
      assign_id(n);
      out.push_back(std::move(n));
      return;
    }
    std::string feat = detail::unsupported_call_feature(name);
    if (!feat.empty()) throw UnsupportedFeature(feat, loc);
    if (name == "malloc")
      throw ParseError("malloc result must be assigned", loc);
    if (name.rfind("pthread_", 0) == 0)
      throw UnsupportedFeature("'" + name + "'", loc);
    if (!prog_.function(name))
      throw UnsupportedFeature("call to undeclared function '" + name + "'", loc);
    auto n = make_stmt(StmtKind::Call, loc);
    n->callee = name;
    n->args = std::move(args);
    assign_id(n);
    out.push_back(std::move(n));
  }

  // =======================================================================
  // Typechecking
  // =======================================================================
  void typecheck_all() {
    for (auto& [name, fn] : prog_.functions) {
      std::set<std::string> seen;
      for (const auto& [n, t] : fn.formals)
        if (!seen.insert(n).second)
          throw ParseError("duplicate parameter '" + n + "' in " + name, fn.loc);
      for (const auto& [n, t] : fn.locals)
        if (!seen.insert(n).second)
          throw ParseError("duplicate local '" + n + "' in " + name, fn.loc);
      check_fn_ = &fn;
      typecheck_stmts(fn.body);
      check_fn_ = nullptr;
    }
  }

  void typecheck_stmts(const std::vector<StmtPtr>& list) {
    for (const auto& s : list) typecheck_stmt(s);
  }

  const CType* lookup_var(const std::string& n) const {
    for (const auto& [ln, t] : check_fn_->locals)
      if (ln == n) return &t;
    for (const auto& [fn, t] : check_fn_->formals)
      if (fn == n) return &t;
    if (const Global* g = prog_.global(n)) return &g->type;
    return nullptr;
  }

  CType type_of(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::IntLit:
        e->type = CType::make_int();
        return e->type;
      case ExprKind::Var: {
        if (const CType* t = lookup_var(e->name)) {
          e->type = *t;
          return e->type;
        }
        if (prog_.function(e->name)) {
          e->type = CType::pointer_to(CType::make_void());  // function reference
          return e->type;
        }
        throw ParseError("undeclared identifier '" + e->name + "'", e->loc);
      }
      case ExprKind::Unary: {
        CType at = type_of(e->a);
        if (e->un_op == UnOp::Neg && !at.is_int_like())
          throw ParseError("operand of unary '-' must be integer", e->loc);
        if (e->un_op == UnOp::Not && !(at.is_int_like() || at.is_pointer()))
          throw ParseError("operand of '!' must be scalar", e->loc);
        e->type = CType::make_int();
        return e->type;
      }
      case ExprKind::Binary: {
        CType at = type_of(e->a);
        CType bt = type_of(e->b);
        bool cmp = e->bin_op == BinOp::Eq || e->bin_op == BinOp::Ne;
        if (cmp && (at.is_pointer() || bt.is_pointer())) {
          bool ok = (at.is_pointer() || at.is_int_like()) && (bt.is_pointer() || bt.is_int_like());
          if (!ok) throw ParseError("bad pointer comparison", e->loc);
        } else {
          if (!at.is_int_like() || !bt.is_int_like()) {
            if (at.is_pointer() || bt.is_pointer())
              throw ParseError("pointer arithmetic is not in the subset", e->loc);
            throw ParseError("operands must be integers", e->loc);
          }
        }
        e->type = CType::make_int();
        return e->type;
      }
      case ExprKind::Deref: {
        CType at = type_of(e->a);
        if (at.is_array()) {
          e->type = *at.inner;
          return e->type;
        }
        if (!at.is_pointer()) throw ParseError("dereference of non-pointer", e->loc);
        if (at.inner->kind == TypeKind::Void)
          throw ParseError("dereference of 'void *' (cast it first)", e->loc);
        e->type = *at.inner;
        return e->type;
      }
      case ExprKind::AddrOf: {
        if (!is_lvalue(e->a) && !(e->a->kind == ExprKind::Var && prog_.function(e->a->name)))
          throw ParseError("'&' needs an lvalue", e->loc);
        CType at = type_of(e->a);
        e->type = CType::pointer_to(at);
        return e->type;
      }
      case ExprKind::Index: {
        CType at = type_of(e->a);
        CType it = type_of(e->b);
        if (!it.is_int_like()) throw ParseError("array index must be integer", e->loc);
        if (at.is_array() || (at.is_pointer() && at.inner->kind != TypeKind::Void)) {
          e->type = *at.inner;
          return e->type;
        }
        throw ParseError("subscripted value is not an array or pointer", e->loc);
      }
      case ExprKind::Field: {
        CType at = type_of(e->a);
        if (at.kind != TypeKind::Record)
          throw ParseError("field access on non-struct", e->loc);
        const CType* ft = field_type(prog_.records, at.record_name, e->name);
        if (!ft)
          throw ParseError("no field '" + e->name + "' in struct " + at.record_name, e->loc);
        e->type = *ft;
        return e->type;
      }
      case ExprKind::Cast: {
        type_of(e->a);
        return e->type;  // set at parse time
      }
      case ExprKind::Call:
        throw ParseError("internal: unhoisted call", e->loc);
    }
    return CType::make_int();
  }

  static bool assignable(const CType& dst, const CType& src, const ExprPtr& src_expr) {
    if (dst.is_int_like()) return src.is_int_like();
    if (dst.is_pointer()) {
      if (src.is_pointer() || src.is_array()) return true;
      long long v;
      // literal 0 as null
      if (src.is_int_like() && src_expr && src_expr->kind == ExprKind::IntLit &&
          src_expr->int_value == 0)
        return true;
      (void)v;
      return false;
    }
    if (dst.kind == TypeKind::ThreadHandle) return src.kind == TypeKind::ThreadHandle;
    return false;
  }

  void typecheck_stmt(const StmtPtr& s) {
    switch (s->kind) {
      case StmtKind::Assign: {
        CType lt = type_of(s->lhs);
        CType rt = type_of(s->expr);
        if (rt.is_array()) rt = CType::pointer_to(*rt.inner);  // decay
        if (!assignable(lt, rt, s->expr))
          throw ParseError("incompatible assignment to '" + type_str(lt) + "'", s->loc);
        return;
      }
      case StmtKind::Call: {
        const Function* f = prog_.function(s->callee);
        if (!f) throw UnsupportedFeature("call to undeclared function '" + s->callee + "'", s->loc);
        if (s->args.size() != f->formals.size())
          throw ParseError("wrong number of arguments to '" + s->callee + "'", s->loc);
        for (size_t i = 0; i < s->args.size(); ++i) {
          CType at = type_of(s->args[i]);
          if (at.is_array()) at = CType::pointer_to(*at.inner);
          const CType& ft = f->formals[i].second;
          bool ok = (ft.is_int_like() && at.is_int_like()) ||
                    (ft.is_pointer() && (at.is_pointer() ||
                                         (s->args[i]->kind == ExprKind::IntLit &&
                                          s->args[i]->int_value == 0)));
          if (!ok) throw ParseError("argument " + std::to_string(i + 1) + " to '" + s->callee +
                                    "' has wrong type", s->loc);
        }
        if (s->lhs) {
          CType lt = type_of(s->lhs);
          if (f->ret_void) throw ParseError("void value assigned", s->loc);
          CType rt = f->ret;
          if (!assignable(lt, rt, nullptr))
            throw ParseError("incompatible assignment from call result", s->loc);
        }
        return;
      }
      case StmtKind::If:
      case StmtKind::While: {
        CType ct = type_of(s->expr);
        if (!ct.is_int_like() && !ct.is_pointer())
          throw ParseError("condition must be scalar", s->loc);
        typecheck_stmts(s->body);
        typecheck_stmts(s->else_body);
        return;
      }
      case StmtKind::Return: {
        if (s->expr) type_of(s->expr);
        return;
      }
      case StmtKind::Create: {
        CType ht = type_of(s->lhs);
        if (ht.kind != TypeKind::ThreadHandle)
          throw ParseError("pthread_create needs a pthread_t handle", s->loc);
        if (s->entry_expr) {
          CType et = type_of(s->entry_expr);
          if (!et.is_pointer())
            throw UnsupportedFeature("thread entry expression", s->loc);
        }
        type_of(s->expr);
        return;
      }
      case StmtKind::Join: {
        CType ht = type_of(s->expr);
        if (ht.kind != TypeKind::ThreadHandle)
          throw ParseError("pthread_join needs a pthread_t handle", s->loc);
        return;
      }
      case StmtKind::Lock:
      case StmtKind::Unlock:
      case StmtKind::Trylock: {
        CType lt = type_of(s->expr);
        bool ok = lt.is_pointer() && lt.inner->kind == TypeKind::Mutex;
        if (!ok) throw ParseError("mutex operation needs a pthread_mutex_t *", s->loc);
        if (s->lhs) {
          CType rt = type_of(s->lhs);
          if (!rt.is_int_like()) throw ParseError("trylock result must be an int", s->loc);
        }
        return;
      }
      case StmtKind::Rdlock:
      case StmtKind::Wrlock:
      case StmtKind::RwUnlock: {
        CType lt = type_of(s->expr);
        bool ok = lt.is_pointer() && lt.inner->kind == TypeKind::Rwlock;
        if (!ok) throw ParseError("rwlock operation needs a pthread_rwlock_t *", s->loc);
        return;
      }
      case StmtKind::Alloc: {
        CType lt = type_of(s->lhs);
        if (!lt.is_pointer()) throw ParseError("malloc result must go to a pointer", s->loc);
        CType st = type_of(s->expr);
        if (!st.is_int_like()) throw ParseError("malloc size must be an integer", s->loc);
        return;
      }
      case StmtKind::AssertNonRacing:
        return;
    }
  }

  // =======================================================================
  void validate() {
    const Function* mainfn = prog_.function("main");
    if (!mainfn) throw ParseError("no 'main' function", {file_, 1, 1});
    if (!mainfn->formals.empty())
      throw UnsupportedFeature("main with parameters", mainfn->loc);
    std::set<std::string> gnames;
    for (const auto& g : prog_.globals) {
      if (!gnames.insert(g.name).second)
        throw ParseError("duplicate global '" + g.name + "'", g.loc);
      if (prog_.functions.count(g.name))
        throw ParseError("'" + g.name + "' is both a global and a function", g.loc);
    }
  }

  MachineModel model_;
  std::string file_;
  std::vector<Token> toks_;
  size_t pos_ = 0;
  Program prog_;
  Function* cur_fn_ = nullptr;    // during parsing
  Function* lower_fn_ = nullptr;  // during lowering
  Function* check_fn_ = nullptr;  // during typechecking
  int temp_counter_ = 0;
};

inline Program parse_program(const std::string& source, MachineModel model,
                             const std::string& filename = "input.c") {
  return Parser(source, model, filename).run();
}

}  // namespace minirace
