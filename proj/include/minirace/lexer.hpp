#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "minirace/diag.hpp"

namespace minirace {

enum class Tok {
  Eof,
  Ident,
  Int,
  Punct,
};

struct Token {
  Tok kind = Tok::Eof;
  std::string text;
  long long value = 0;
  SourceLoc loc;

  bool is(const char* p) const { return kind == Tok::Punct && text == p; }
  bool is_ident(const char* n) const { return kind == Tok::Ident && text == n; }
};

class Lexer {
public:
  Lexer(std::string source, std::string filename)
      : src_(std::move(source)), file_(std::move(filename)) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_space_and_comments();
      SourceLoc loc = here();
      if (pos_ >= src_.size()) {
        out.push_back({Tok::Eof, "", 0, loc});
        return out;
      }
      char c = src_[pos_];
      if (c == '#') {
        lex_preprocessor(loc);
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
          advance();
        out.push_back({Tok::Ident, src_.substr(start, pos_ - start), 0, loc});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        size_t start = pos_;
        long long v = 0;
        if (c == '0' && pos_ + 1 < src_.size() && (src_[pos_ + 1] == 'x' || src_[pos_ + 1] == 'X')) {
          advance();
          advance();
          while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) {
            v = v * 16 + hex_digit(src_[pos_]);
            advance();
          }
        } else {
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            v = v * 10 + (src_[pos_] - '0');
            advance();
          }
        }
        if (pos_ < src_.size() &&
            (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
          throw ParseError("bad integer literal", loc);
        out.push_back({Tok::Int, src_.substr(start, pos_ - start), v, loc});
        continue;
      }
      if (c == '"' || c == '\'')
        throw ParseError("string and character literals are not part of the subset", loc);
      // Multi-char punctuation first.
      static const char* two[] = {"&&", "||", "==", "!=", "<=", ">=", "->", "++", "--",
                                  "+=", "-=", "*=", "/=", "<<", ">>"};
      bool matched = false;
      for (const char* p : two) {
        if (src_.compare(pos_, 2, p) == 0) {
          out.push_back({Tok::Punct, p, 0, loc});
          advance();
          advance();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      static const std::string singles = "+-*/%<>=!&|(){}[];,.^~?:";
      if (singles.find(c) == std::string::npos)
        throw ParseError(std::string("unexpected character '") + c + "'", loc);
      out.push_back({Tok::Punct, std::string(1, c), 0, loc});
      advance();
    }
  }

private:
  SourceLoc here() const { return {file_, line_, col_}; }

  int hex_digit(char c) const {
    if (c >= '0' && c <= '9') return c - '0';
    return std::tolower(static_cast<unsigned char>(c)) - 'a' + 10;
  }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else if (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '*') {
        SourceLoc loc = here();
        advance();
        advance();
        while (pos_ + 1 < src_.size() && !(src_[pos_] == '*' && src_[pos_ + 1] == '/')) advance();
        if (pos_ + 1 >= src_.size()) throw ParseError("unterminated comment", loc);
        advance();
        advance();
      } else {
        return;
      }
    }
  }

  // The only accepted directive is `#include <pthread.h>`, which is ignored.
  void lex_preprocessor(const SourceLoc& loc) {
    size_t start = pos_;
    while (pos_ < src_.size() && src_[pos_] != '\n') advance();
    std::string line = src_.substr(start, pos_ - start);
    std::string squeezed;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) squeezed += c;
    if (squeezed != "#include<pthread.h>")
      throw UnsupportedFeature("preprocessor directive", loc);
  }

  std::string src_;
  std::string file_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

}  // namespace minirace
