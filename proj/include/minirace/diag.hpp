#pragma once

#include <stdexcept>
#include <string>

namespace minirace {

struct SourceLoc {
  std::string file;
  int line = 0;
  int column = 0;

  std::string str() const {
    return file + ":" + std::to_string(line) + ":" + std::to_string(column);
  }
};

// Syntax outside the supported grammar.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& msg, SourceLoc loc)
      : std::runtime_error(loc.str() + ": parse error: " + msg), loc_(std::move(loc)), msg_(msg) {}

  const SourceLoc& loc() const { return loc_; }
  const std::string& detail() const { return msg_; }

private:
  SourceLoc loc_;
  std::string msg_;
};

// Recognized construct that the tool deliberately does not handle
// (semaphores, VLAs, goto, ...). Carries the feature name.
class UnsupportedFeature : public std::runtime_error {
public:
  UnsupportedFeature(const std::string& feature, SourceLoc loc = {})
      : std::runtime_error((loc.line ? loc.str() + ": " : std::string())
                           + "unsupported feature: " + feature),
        feature_(feature), loc_(std::move(loc)) {}

  const std::string& feature() const { return feature_; }
  const SourceLoc& loc() const { return loc_; }

private:
  std::string feature_;
  SourceLoc loc_;
};

class RecursionUnsupported : public UnsupportedFeature {
public:
  explicit RecursionUnsupported(const std::string& fn)
      : UnsupportedFeature("recursion (function '" + fn + "')") {}
};

class EntryUnresolved : public UnsupportedFeature {
public:
  explicit EntryUnresolved(SourceLoc loc)
      : UnsupportedFeature("unresolved thread entry", std::move(loc)) {}
};

}  // namespace minirace
