#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sapp/token_bag.hpp"

namespace sapp {

/// Bumped whenever tokenization output can change; part of every index fingerprint.
inline constexpr std::string_view kTokenizerVersion = "pylex-1";

enum class LexKind { name, number, string, op, delimiter };

struct Lexeme {
  std::string text;
  LexKind kind;
  std::uint32_t line;      // 1-based line of the first character
  std::uint32_t end_line;  // line of the last character (differs for multi-line strings)
};

/// A Python logical line: one statement header or simple statement, possibly
/// spanning several physical lines through brackets, strings or backslashes.
struct LogicalLine {
  std::uint32_t first_line;
  std::uint32_t last_line;
  std::uint32_t indent;
  std::size_t first_lexeme;
  std::size_t end_lexeme;
};

struct LexResult {
  std::vector<Lexeme> lexemes;
  std::vector<LogicalLine> lines;
  std::uint32_t line_count = 0;
  /// Empty when the source is structurally sound.
  std::string error;
};

/// Position-aware Python lexer. Never throws; structural problems (unbalanced
/// brackets, unterminated strings, inconsistent dedent) are reported in error.
LexResult lex(std::string_view text);

/// Tokens that count toward a bag: identifiers, keywords, literals, operators.
constexpr bool counts_as_token(LexKind kind) { return kind != LexKind::delimiter; }

/// Bag of identifiers, keywords, literals and operators. Comments, whitespace
/// and delimiters ( ) [ ] { } , : ; are dropped; string literals stay whole.
TokenBag tokenize(std::string_view text);

/// Physical line count: a trailing newline does not open a new line.
std::uint32_t count_lines(std::string_view text);

}  // namespace sapp
