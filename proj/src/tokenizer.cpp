#include "sapp/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "sapp/util.hpp"

namespace sapp {

namespace {

constexpr std::array<std::string_view, 5> kOps3 = {"**=", "//=", ">>=", "<<=", "..."};
constexpr std::array<std::string_view, 20> kOps2 = {"==", "!=", "<=", ">=", "**", "//", "<<", ">>", "+=", "-=",
                                                    "*=", "/=", "%=", "&=", "|=", "^=", "@=", "->", ":=", "<>"};
constexpr std::string_view kOps1 = "+-*/%@&|^~<>=.!?$`\\";
constexpr std::string_view kDelims = "()[]{},:;";

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view word) {
  if (word.empty() || word.size() > 2) return false;
  const std::string lower = to_lower(word);
  static constexpr std::array<std::string_view, 10> kPrefixes = {"r", "b", "u", "f", "rb", "br",
                                                                 "fr", "rf", "ur", "ru"};
  return std::find(kPrefixes.begin(), kPrefixes.end(), lower) != kPrefixes.end();
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : s_(src) {}

  LexResult run() {
    while (pos_ < s_.size()) {
      if (at_line_start_) {
        begin_physical_line();
        if (pos_ >= s_.size()) break;
      }
      const unsigned char c = static_cast<unsigned char>(s_[pos_]);
      if (c == '\n') {
        newline();
        continue;
      }
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\\' && next_is_newline(pos_ + 1)) {
        // Explicit line join.
        pos_ = s_.find('\n', pos_) + 1;
        ++line_;
        continue;
      }
      if (std::isspace(c) || c < 0x20) {
        ++pos_;
        continue;
      }
      if (is_ident_start(c)) {
        lex_word();
      } else if (std::isdigit(c) || (c == '.' && pos_ + 1 < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])))) {
        lex_number();
      } else if (c == '"' || c == '\'') {
        lex_string(pos_);
      } else {
        lex_punct();
      }
    }
    close_logical_line();
    if (depth_ > 0) fail("unclosed bracket at end of input");
    out_.line_count = count_lines(s_);
    return std::move(out_);
  }

 private:
  bool next_is_newline(std::size_t p) const {
    while (p < s_.size() && s_[p] == '\r') ++p;
    return p < s_.size() && s_[p] == '\n';
  }

  void fail(std::string what) {
    if (out_.error.empty()) out_.error = std::move(what) + " (line " + std::to_string(line_) + ")";
  }

  void newline() {
    ++pos_;
    ++line_;
    if (depth_ == 0) {
      close_logical_line();
      at_line_start_ = true;
    }
  }

  // Measures indentation of a fresh physical line outside brackets.
  void begin_physical_line() {
    at_line_start_ = false;
    std::uint32_t col = 0;
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\f' || s_[pos_] == '\r')) {
      if (s_[pos_] == '\t') col = (col / 8 + 1) * 8;
      else if (s_[pos_] == ' ') ++col;
      ++pos_;
    }
    pending_indent_ = col;
  }

  void emit(std::string text, LexKind kind, std::uint32_t start_line) {
    if (!in_logical_) {
      in_logical_ = true;
      LogicalLine ll{start_line, line_, pending_indent_, out_.lexemes.size(), out_.lexemes.size()};
      check_indent(pending_indent_);
      out_.lines.push_back(ll);
    }
    out_.lexemes.push_back(Lexeme{std::move(text), kind, start_line, line_});
    auto& ll = out_.lines.back();
    ll.last_line = line_;
    ll.end_lexeme = out_.lexemes.size();
  }

  void close_logical_line() { in_logical_ = false; }

  void check_indent(std::uint32_t indent) {
    if (indents_.empty()) {
      // The first statement fixes the base level; snippets are often uniformly indented.
      indents_.push_back(indent);
      return;
    }
    if (indent > indents_.back()) {
      indents_.push_back(indent);
      return;
    }
    while (indents_.size() > 1 && indent < indents_.back()) indents_.pop_back();
    if (indent != indents_.back()) fail("inconsistent dedent");
  }

  void lex_word() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && is_ident_char(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::string_view word = s_.substr(start, pos_ - start);
    if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'') && is_string_prefix(word)) {
      lex_string(start);
      return;
    }
    emit(std::string(word), LexKind::name, line_);
  }

  void lex_number() {
    const std::size_t start = pos_;
    const bool hex = s_[pos_] == '0' && pos_ + 1 < s_.size() && (s_[pos_ + 1] == 'x' || s_[pos_ + 1] == 'X');
    while (pos_ < s_.size()) {
      const unsigned char c = static_cast<unsigned char>(s_[pos_]);
      if (std::isalnum(c) || c == '_' || c == '.') {
        ++pos_;
      } else if ((c == '+' || c == '-') && !hex && pos_ > start && (s_[pos_ - 1] == 'e' || s_[pos_ - 1] == 'E')) {
        ++pos_;
      } else {
        break;
      }
    }
    emit(std::string(s_.substr(start, pos_ - start)), LexKind::number, line_);
  }

  // start points at the prefix (if any); pos_ at the opening quote.
  void lex_string(std::size_t start) {
    const std::uint32_t start_line = line_;
    const char quote = s_[pos_];
    const bool triple = pos_ + 2 < s_.size() && s_[pos_ + 1] == quote && s_[pos_ + 2] == quote;
    pos_ += triple ? 3 : 1;
    bool closed = false;
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '\\') {
        if (pos_ + 1 < s_.size() && s_[pos_ + 1] == '\n') ++line_;
        pos_ += 2;
        continue;
      }
      if (c == '\n') {
        if (!triple) break;
        ++line_;
        ++pos_;
        continue;
      }
      if (c == quote) {
        if (!triple) {
          ++pos_;
          closed = true;
          break;
        }
        if (pos_ + 2 < s_.size() && s_[pos_ + 1] == quote && s_[pos_ + 2] == quote) {
          pos_ += 3;
          closed = true;
          break;
        }
      }
      ++pos_;
    }
    pos_ = std::min(pos_, s_.size());
    if (!closed) fail("unterminated string literal");
    emit(std::string(s_.substr(start, pos_ - start)), LexKind::string, start_line);
  }

  void lex_punct() {
    const std::string_view rest = s_.substr(pos_);
    for (auto op : kOps3) {
      if (rest.starts_with(op)) {
        pos_ += 3;
        emit(std::string(op), LexKind::op, line_);
        return;
      }
    }
    for (auto op : kOps2) {
      if (rest.starts_with(op)) {
        pos_ += 2;
        emit(std::string(op), LexKind::op, line_);
        return;
      }
    }
    const char c = s_[pos_++];
    if (kDelims.find(c) != std::string_view::npos) {
      if (c == '(' || c == '[' || c == '{') {
        ++depth_;
      } else if (c == ')' || c == ']' || c == '}') {
        if (depth_ == 0) fail("unbalanced closing bracket");
        else --depth_;
      }
      emit(std::string(1, c), LexKind::delimiter, line_);
      return;
    }
    if (kOps1.find(c) != std::string_view::npos) {
      emit(std::string(1, c), LexKind::op, line_);
    }
    // Anything else (stray control or unknown ASCII punctuation) is dropped.
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  std::uint32_t line_ = 1;
  int depth_ = 0;
  bool at_line_start_ = true;
  bool in_logical_ = false;
  std::uint32_t pending_indent_ = 0;
  std::vector<std::uint32_t> indents_;
  LexResult out_;
};

}  // namespace

std::uint32_t count_lines(std::string_view text) {
  if (text.empty()) return 0;
  auto n = static_cast<std::uint32_t>(std::count(text.begin(), text.end(), '\n'));
  if (text.back() != '\n') ++n;
  return n;
}

LexResult lex(std::string_view text) { return Lexer(text).run(); }

TokenBag tokenize(std::string_view text) {
  const std::string clean = is_valid_utf8(text) ? std::string(text) : sanitize_utf8(text);
  const LexResult r = lex(clean);
  TokenBag bag;
  for (const auto& lx : r.lexemes) {
    if (counts_as_token(lx.kind)) bag.add(lx.text);
  }
  return bag;
}

}  // namespace sapp
