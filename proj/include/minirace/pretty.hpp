#pragma once

#include <sstream>
#include <string>

#include "minirace/ast.hpp"

namespace minirace {

namespace detail {

inline void print_expr(std::ostream& os, const ExprPtr& e) {
  switch (e->kind) {
    case ExprKind::IntLit:
      os << e->int_value;
      return;
    case ExprKind::Var:
      os << e->name;
      return;
    case ExprKind::Unary:
      os << (e->un_op == UnOp::Neg ? "-" : "!") << "(";
      print_expr(os, e->a);
      os << ")";
      return;
    case ExprKind::Binary: {
      static const char* ops[] = {"+", "-", "*", "/", "%", "<", "<=", ">", ">=", "==", "!=",
                                  "&&", "||"};
      os << "(";
      print_expr(os, e->a);
      os << " " << ops[static_cast<int>(e->bin_op)] << " ";
      print_expr(os, e->b);
      os << ")";
      return;
    }
    case ExprKind::Deref:
      os << "*(";
      print_expr(os, e->a);
      os << ")";
      return;
    case ExprKind::AddrOf:
      os << "&";
      print_expr(os, e->a);
      return;
    case ExprKind::Index:
      print_expr(os, e->a);
      os << "[";
      print_expr(os, e->b);
      os << "]";
      return;
    case ExprKind::Field:
      // `a->f` was normalized to (*a).f at parse time; print that way.
      if (e->a->kind == ExprKind::Deref) {
        os << "(*(";
        print_expr(os, e->a->a);
        os << ")).";
      } else {
        print_expr(os, e->a);
        os << ".";
      }
      os << e->name;
      return;
    case ExprKind::Cast:
      os << "(" << type_str(e->type) << ")(";
      print_expr(os, e->a);
      os << ")";
      return;
    case ExprKind::Call: {
      os << e->name << "(";
      for (size_t i = 0; i < e->args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, e->args[i]);
      }
      os << ")";
      return;
    }
  }
}

inline std::string expr_str(const ExprPtr& e) {
  std::ostringstream os;
  print_expr(os, e);
  return os.str();
}

inline void print_decl(std::ostream& os, const std::string& name, const CType& t) {
  if (t.kind == TypeKind::Array) {
    os << type_str(*t.inner) << " " << name << "[" << t.array_len << "]";
  } else if (t.kind == TypeKind::Pointer) {
    // flatten pointer chains: base, stars, name
    const CType* base = &t;
    int stars = 0;
    while (base->kind == TypeKind::Pointer) {
      ++stars;
      base = base->inner.get();
    }
    os << type_str(*base) << " " << std::string(stars, '*') << name;
  } else {
    os << type_str(t) << " " << name;
  }
}

inline void print_stmts(std::ostream& os, const std::vector<StmtPtr>& list, int indent);

inline void print_stmt(std::ostream& os, const StmtPtr& s, int indent) {
  std::string pad(indent, ' ');
  switch (s->kind) {
    case StmtKind::Assign:
      os << pad;
      print_expr(os, s->lhs);
      os << " = ";
      print_expr(os, s->expr);
      os << ";\n";
      return;
    case StmtKind::Call:
      os << pad;
      if (s->lhs) {
        print_expr(os, s->lhs);
        os << " = ";
      }
      os << s->callee << "(";
      for (size_t i = 0; i < s->args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, s->args[i]);
      }
      os << ");\n";
      return;
    case StmtKind::If:
      os << pad << "if (";
      print_expr(os, s->expr);
      os << ") {\n";
      print_stmts(os, s->body, indent + 2);
      if (!s->else_body.empty()) {
        os << pad << "} else {\n";
        print_stmts(os, s->else_body, indent + 2);
      }
      os << pad << "}\n";
      return;
    case StmtKind::While:
      os << pad << "while (";
      print_expr(os, s->expr);
      os << ") {\n";
      print_stmts(os, s->body, indent + 2);
      os << pad << "}\n";
      return;
    case StmtKind::Return:
      os << pad << "return";
      if (s->expr) {
        os << " ";
        print_expr(os, s->expr);
      }
      os << ";\n";
      return;
    case StmtKind::Create:
      os << pad << "pthread_create(&";
      print_expr(os, s->lhs);
      os << ", 0, ";
      if (!s->callee.empty())
        os << s->callee;
      else
        print_expr(os, s->entry_expr);
      os << ", ";
      print_expr(os, s->expr);
      os << ");\n";
      return;
    case StmtKind::Join:
      os << pad << "pthread_join(";
      print_expr(os, s->expr);
      os << ", 0);\n";
      return;
    case StmtKind::Lock:
    case StmtKind::Unlock:
    case StmtKind::Trylock:
    case StmtKind::Rdlock:
    case StmtKind::Wrlock:
    case StmtKind::RwUnlock: {
      static const std::map<StmtKind, const char*> names = {
          {StmtKind::Lock, "pthread_mutex_lock"},
          {StmtKind::Unlock, "pthread_mutex_unlock"},
          {StmtKind::Trylock, "pthread_mutex_trylock"},
          {StmtKind::Rdlock, "pthread_rwlock_rdlock"},
          {StmtKind::Wrlock, "pthread_rwlock_wrlock"},
          {StmtKind::RwUnlock, "pthread_rwlock_unlock"},
      };
      os << pad;
      if (s->lhs) {
        print_expr(os, s->lhs);
        os << " = ";
      }
      os << names.at(s->kind) << "(";
      print_expr(os, s->expr);
      os << ");\n";
      return;
    }
    case StmtKind::Alloc:
      os << pad;
      print_expr(os, s->lhs);
      os << " = malloc(";
      print_expr(os, s->expr);
      os << ");\n";
      return;
    case StmtKind::AssertNonRacing:
      os << pad << "assert_nonracing();\n";
      return;
  }
}

inline void print_stmts(std::ostream& os, const std::vector<StmtPtr>& list, int indent) {
  for (const auto& s : list) print_stmt(os, s, indent);
}

}  // namespace detail

// Canonical source form. Parsing the output yields a structurally identical
// Program (declarations are pulled to the top of each function).
inline std::string pretty_print(const Program& p) {
  std::ostringstream os;
  os << "#include <pthread.h>\n\n";
  for (const auto& [name, rec] : p.records) {
    os << "struct " << name << " {\n";
    for (const auto& [fname, ft] : rec.fields) {
      os << "  ";
      detail::print_decl(os, fname, ft);
      os << ";\n";
    }
    os << "};\n\n";
  }
  for (const auto& g : p.globals) {
    detail::print_decl(os, g.name, g.type);
    if (g.has_init) os << " = " << g.init;
    os << ";\n";
  }
  if (!p.globals.empty()) os << "\n";
  for (const auto& [name, fn] : p.functions) {
    if (fn.ret_void)
      os << "void";
    else
      os << type_str(fn.ret);
    os << " " << name << "(";
    if (fn.formals.empty()) {
      os << "void";
    } else {
      for (size_t i = 0; i < fn.formals.size(); ++i) {
        if (i) os << ", ";
        detail::print_decl(os, fn.formals[i].first, fn.formals[i].second);
      }
    }
    os << ") {\n";
    for (const auto& [ln, lt] : fn.locals) {
      os << "  ";
      detail::print_decl(os, ln, lt);
      os << ";\n";
    }
    detail::print_stmts(os, fn.body, 2);
    os << "}\n\n";
  }
  return os.str();
}

}  // namespace minirace
