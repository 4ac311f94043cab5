#include "sapp/block_extractor.hpp"

#include <algorithm>

#include "sapp/error.hpp"
#include "sapp/tokenizer.hpp"
#include "sapp/util.hpp"

namespace sapp {

namespace {

struct LineRange {
  std::uint32_t first;
  std::uint32_t last;
};

bool starts_def(const LexResult& lx, const LogicalLine& ll) {
  const auto& first = lx.lexemes[ll.first_lexeme];
  if (first.kind != LexKind::name) return false;
  if (first.text == "def") return true;
  return first.text == "async" && ll.first_lexeme + 1 < ll.end_lexeme &&
         lx.lexemes[ll.first_lexeme + 1].text == "def";
}

bool starts_decorator(const LexResult& lx, const LogicalLine& ll) {
  const auto& first = lx.lexemes[ll.first_lexeme];
  return first.kind == LexKind::op && first.text == "@";
}

// Each function's line range, in order of appearance, with decorators attached.
std::vector<LineRange> function_ranges(const LexResult& lx) {
  std::vector<LineRange> out;
  const auto& lines = lx.lines;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!starts_def(lx, lines[i])) continue;
    const std::uint32_t indent = lines[i].indent;
    std::size_t head = i;
    while (head > 0 && lines[head - 1].indent == indent && starts_decorator(lx, lines[head - 1])) --head;
    std::uint32_t last = lines[i].last_line;
    for (std::size_t j = i + 1; j < lines.size() && lines[j].indent > indent; ++j) last = lines[j].last_line;
    out.push_back({lines[head].first_line, last});
  }
  return out;
}

std::vector<LineRange> outermost(const std::vector<LineRange>& ranges) {
  std::vector<LineRange> out;
  for (const auto& r : ranges) {
    if (!out.empty() && r.first <= out.back().last) continue;  // nested in the previous one
    out.push_back(r);
  }
  return out;
}

// Byte offset of the start of each line (1-based index; [n+1] = size).
std::vector<std::size_t> line_offsets(std::string_view text) {
  std::vector<std::size_t> off{0, 0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n' && i + 1 < text.size()) off.push_back(i + 1);
  }
  off.push_back(text.size());
  return off;
}

std::string_view slice_lines(std::string_view text, const std::vector<std::size_t>& off, std::uint32_t first,
                             std::uint32_t last) {
  return text.substr(off[first], off[last + 1] - off[first]);
}

}  // namespace

ExtractResult extract_blocks(std::string_view file_text, const SourceLocator& base,
                             const GranularitySet& granularities, std::uint64_t min_tokens) {
  if (granularities.empty()) throw Error(ErrorKind::config, "extract_blocks: no granularity requested");

  ExtractResult result;
  const std::string clean = is_valid_utf8(file_text) ? std::string(file_text) : sanitize_utf8(file_text);
  const LexResult lx = lex(clean);
  if (lx.line_count == 0) return result;

  const auto off = line_offsets(clean);
  const std::uint32_t shift = base.start_line - 1;

  auto emit = [&](Granularity g, std::uint32_t first, std::uint32_t last, std::string text, TokenBag bag) {
    if (bag.empty() || bag.total() < min_tokens) return;
    CodeBlock b;
    b.locator = base;
    b.locator.start_line = first + shift;
    b.locator.end_line = last + shift;
    b.granularity = g;
    b.raw_text = std::move(text);
    b.tokens = std::move(bag);
    result.blocks.push_back(std::move(b));
  };

  auto bag_of_lines = [&](auto&& keep_line) {
    TokenBag bag;
    for (const auto& l : lx.lexemes) {
      if (counts_as_token(l.kind) && keep_line(l.line)) bag.add(l.text);
    }
    return bag;
  };

  if (!lx.error.empty()) {
    result.degraded = true;
    result.error = lx.error;
    emit(Granularity::file, 1, lx.line_count, clean, bag_of_lines([](std::uint32_t) { return true; }));
    return result;
  }

  if (granularities.contains(Granularity::file)) {
    emit(Granularity::file, 1, lx.line_count, clean, bag_of_lines([](std::uint32_t) { return true; }));
  }

  const auto functions = function_ranges(lx);

  if (granularities.contains(Granularity::module)) {
    const auto outer = outermost(functions);
    auto in_function = [&](std::uint32_t line) {
      return std::any_of(outer.begin(), outer.end(), [&](const LineRange& r) { return line >= r.first && line <= r.last; });
    };
    std::uint32_t first = 0, last = 0;
    for (const auto& ll : lx.lines) {
      if (in_function(ll.first_line)) continue;
      if (first == 0) first = ll.first_line;
      last = ll.last_line;
    }
    if (first != 0) {
      std::string text;
      for (std::uint32_t line = first; line <= last; ++line) {
        if (!in_function(line)) text.append(slice_lines(clean, off, line, line));
      }
      emit(Granularity::module, first, last, std::move(text),
           bag_of_lines([&](std::uint32_t line) { return !in_function(line); }));
    }
  }

  if (granularities.contains(Granularity::function)) {
    for (const auto& r : functions) {
      emit(Granularity::function, r.first, r.last, std::string(slice_lines(clean, off, r.first, r.last)),
           bag_of_lines([&](std::uint32_t line) { return line >= r.first && line <= r.last; }));
    }
  }
  return result;
}

}  // namespace sapp
