#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sapp/code_block.hpp"

namespace sapp {

using GranularitySet = std::set<Granularity>;

struct ExtractResult {
  std::vector<CodeBlock> blocks;
  /// Source did not lex cleanly; only the file-level block was emitted.
  bool degraded = false;
  std::string error;
};

/// Splits one source text into blocks.
///
/// - file: the whole text.
/// - function: one block per `def` (decorators included), nested ones too.
/// - module: every line outside outermost function definitions, so module and
///   outermost function blocks partition the file's tokens.
///
/// Blocks with fewer than min_tokens tokens, or none at all, are dropped. Block
/// ids, corpus ids and licenses are left for the caller to assign. Lines in the
/// returned locators are offset by base.start_line - 1.
ExtractResult extract_blocks(std::string_view file_text, const SourceLocator& base,
                             const GranularitySet& granularities, std::uint64_t min_tokens);

}  // namespace sapp
