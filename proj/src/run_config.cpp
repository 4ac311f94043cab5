#include "sapp/run_config.hpp"

#include "sapp/error.hpp"

namespace sapp {

using nlohmann::json;

namespace {

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_str(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

}  // namespace

GranularitySet parse_granularity_list(const std::string& text) {
  GranularitySet out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    if (!item.empty()) {
      try {
        out.insert(parse_granularity(item));
      } catch (const Error&) {
        throw Error(ErrorKind::config, "unknown granularity '" + item + "' (expected file, module, function)");
      }
    }
    pos = comma + 1;
  }
  if (out.empty()) throw Error(ErrorKind::config, "no granularity given");
  return out;
}

void RunConfig::validate() const {
  detection().validate();
  if (granularities.empty()) throw Error(ErrorKind::config, "no granularity given");
  if (default_license && default_license->empty()) throw Error(ErrorKind::config, "empty default license");
}

DetectionConfig RunConfig::detection() const {
  DetectionConfig d;
  d.theta = theta;
  d.min_tokens = min_tokens;
  d.exclude_self_pairs = exclude_self_pairs;
  d.denominator = denominator;
  return d;
}

json RunConfig::to_json() const {
  json g = json::array();
  for (auto x : granularities) g.push_back(to_string(x));
  return {{"theta", theta},
          {"min_tokens", min_tokens},
          {"exclude_self_pairs", exclude_self_pairs},
          {"denominator", denominator == Denominator::max_size ? "max" : "query"},
          {"granularities", g},
          {"default_license", opt(default_license)},
          {"rules_path", opt(rules_path)},
          {"matrix_path", opt(matrix_path)},
          {"store_path", opt(store_path)},
          {"apprentice_urls", apprentice_urls},
          {"manager_url", opt(manager_url)},
          {"seed", seed ? json(*seed) : json(nullptr)}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    const auto d = DetectionConfig::from_json(j);
    c.theta = d.theta;
    c.min_tokens = d.min_tokens;
    c.exclude_self_pairs = d.exclude_self_pairs;
    c.denominator = d.denominator;
    if (j.contains("granularities")) {
      c.granularities.clear();
      for (const auto& g : j.at("granularities")) c.granularities.insert(parse_granularity(g.get<std::string>()));
    }
    c.default_license = opt_str(j, "default_license");
    c.rules_path = opt_str(j, "rules_path");
    c.matrix_path = opt_str(j, "matrix_path");
    c.store_path = opt_str(j, "store_path");
    c.apprentice_urls = j.value("apprentice_urls", std::vector<std::string>{});
    c.manager_url = opt_str(j, "manager_url");
    if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed run config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace sapp
