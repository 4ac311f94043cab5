#include "sapp/code_block.hpp"

#include "sapp/error.hpp"

namespace sapp {

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::filesystem: return "filesystem";
    case SourceKind::stackexchange_post: return "stackexchange-post";
    case SourceKind::doc_file: return "doc-file";
  }
  return "filesystem";
}

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::file: return "file";
    case Granularity::module: return "module";
    case Granularity::function: return "function";
  }
  return "file";
}

std::string_view to_string(LicenseProvenance p) {
  switch (p) {
    case LicenseProvenance::header: return "header";
    case LicenseProvenance::package_file: return "package-file";
    case LicenseProvenance::inherited: return "inherited";
    case LicenseProvenance::corpus_default: return "corpus-default";
  }
  return "header";
}

SourceKind parse_source_kind(std::string_view text) {
  if (text == "filesystem") return SourceKind::filesystem;
  if (text == "stackexchange-post") return SourceKind::stackexchange_post;
  if (text == "doc-file") return SourceKind::doc_file;
  throw Error(ErrorKind::parse, "unknown source kind '" + std::string(text) + "'");
}

Granularity parse_granularity(std::string_view text) {
  if (text == "file") return Granularity::file;
  if (text == "module") return Granularity::module;
  if (text == "function") return Granularity::function;
  throw Error(ErrorKind::parse, "unknown granularity '" + std::string(text) + "'");
}

LicenseProvenance parse_provenance(std::string_view text) {
  if (text == "header") return LicenseProvenance::header;
  if (text == "package-file") return LicenseProvenance::package_file;
  if (text == "inherited") return LicenseProvenance::inherited;
  if (text == "corpus-default") return LicenseProvenance::corpus_default;
  throw Error(ErrorKind::parse, "unknown license provenance '" + std::string(text) + "'");
}

}  // namespace sapp
