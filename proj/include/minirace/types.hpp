#pragma once

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace minirace {

enum class MachineModel { ilp32, lp64 };

inline int pointer_size(MachineModel m) { return m == MachineModel::ilp32 ? 4 : 8; }

enum class TypeKind {
  Int,
  AtomicInt,
  Mutex,
  Rwlock,
  ThreadHandle,
  Void,     // only as a pointee (void*) or function return
  Pointer,
  Array,
  Record,
};

struct CType;
using CTypePtr = std::shared_ptr<const CType>;

struct CType {
  TypeKind kind = TypeKind::Int;
  CTypePtr inner;             // Pointer pointee / Array element
  long long array_len = 0;    // Array
  std::string record_name;    // Record

  static CType make_int() { return {TypeKind::Int}; }
  static CType make_atomic_int() { return {TypeKind::AtomicInt}; }
  static CType make_void() { return {TypeKind::Void}; }
  static CType pointer_to(CType t) {
    CType p{TypeKind::Pointer};
    p.inner = std::make_shared<CType>(std::move(t));
    return p;
  }
  static CType array_of(CType t, long long n) {
    CType a{TypeKind::Array};
    a.inner = std::make_shared<CType>(std::move(t));
    a.array_len = n;
    return a;
  }
  static CType record(std::string name) {
    CType r{TypeKind::Record};
    r.record_name = std::move(name);
    return r;
  }

  bool is_int_like() const { return kind == TypeKind::Int || kind == TypeKind::AtomicInt; }
  bool is_pointer() const { return kind == TypeKind::Pointer; }
  bool is_array() const { return kind == TypeKind::Array; }

  bool operator==(const CType& o) const {
    if (kind != o.kind || array_len != o.array_len || record_name != o.record_name) return false;
    if (!inner != !o.inner) return false;
    return !inner || *inner == *o.inner;
  }
};

struct RecordDef {
  // Field order is the layout order; offsets are cumulative, no padding.
  std::vector<std::pair<std::string, CType>> fields;
};

using RecordTable = std::map<std::string, RecordDef>;

inline long long size_of(const CType& t, MachineModel model, const RecordTable& records) {
  switch (t.kind) {
    case TypeKind::Int:
    case TypeKind::AtomicInt:
      return 4;
    case TypeKind::Mutex:
    case TypeKind::Rwlock:
    case TypeKind::ThreadHandle:
      return 8;
    case TypeKind::Void:
      return 1;
    case TypeKind::Pointer:
      return pointer_size(model);
    case TypeKind::Array:
      return t.array_len * size_of(*t.inner, model, records);
    case TypeKind::Record: {
      long long total = 0;
      auto it = records.find(t.record_name);
      if (it != records.end())
        for (const auto& [name, ft] : it->second.fields) total += size_of(ft, model, records);
      return total;
    }
  }
  return 0;
}

// Byte offset of a named field; -1 if unknown.
inline long long field_offset(const RecordTable& records, const std::string& rec,
                              const std::string& field, MachineModel model) {
  auto it = records.find(rec);
  if (it == records.end()) return -1;
  long long off = 0;
  for (const auto& [name, ft] : it->second.fields) {
    if (name == field) return off;
    off += size_of(ft, model, records);
  }
  return -1;
}

inline const CType* field_type(const RecordTable& records, const std::string& rec,
                               const std::string& field) {
  auto it = records.find(rec);
  if (it == records.end()) return nullptr;
  for (const auto& [name, ft] : it->second.fields)
    if (name == field) return &ft;
  return nullptr;
}

inline std::string type_str(const CType& t) {
  switch (t.kind) {
    case TypeKind::Int: return "int";
    case TypeKind::AtomicInt: return "atomic_int";
    case TypeKind::Mutex: return "pthread_mutex_t";
    case TypeKind::Rwlock: return "pthread_rwlock_t";
    case TypeKind::ThreadHandle: return "pthread_t";
    case TypeKind::Void: return "void";
    case TypeKind::Pointer: return type_str(*t.inner) + " *";
    case TypeKind::Array: return type_str(*t.inner) + "[" + std::to_string(t.array_len) + "]";
    case TypeKind::Record: return "struct " + t.record_name;
  }
  return "?";
}

}  // namespace minirace
