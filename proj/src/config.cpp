#include "dishforge/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <set>

#include "dishforge/error.hpp"
#include "dishforge/text.hpp"

namespace dishforge {
namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"pipeline", {"workspace", "input", "seed", "mock"}},
      {"providers",
       {"chat", "vision", "embed", "tools", "generation", "finetune", "timeout_ms", "max_retries", "concurrency",
        "embed_dims"}},
      {"curation", {"threshold"}},
      {"captioning", {"library_quality", "quality_annotations"}},
      {"schedule", {"dish_ratio", "batch_size"}},
      {"editset",
       {"concept", "prompts", "n_target", "source_fraction", "source_prompt", "target_prompt", "instruction",
        "rho_grid", "seeds", "preference_prompts"}},
      {"eval", {"samples", "human_scores"}},
      {"review", {"bind", "port", "lease_minutes", "ui_dir"}},
  };
  return keys;
}

template <typename T>
T parse_value(const std::string& key, const std::string& raw) {
  try {
    std::size_t used = 0;
    T value{};
    if constexpr (std::is_same_v<T, double>) value = std::stod(raw, &used);
    else if constexpr (std::is_same_v<T, int>) value = std::stoi(raw, &used);
    else value = static_cast<T>(std::stoull(raw, &used));
    if (used != raw.size()) throw std::invalid_argument("trailing characters");
    if constexpr (std::is_unsigned_v<T>) {
      if (!raw.empty() && raw.front() == '-') throw std::invalid_argument("negative");
    }
    return value;
  } catch (const std::exception&) {
    fail(Errc::ConfigInvalid, key + ": cannot parse '" + raw + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& raw) {
  auto v = text::lower_ascii(raw);
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  fail(Errc::ConfigInvalid, key + ": expected a boolean, got '" + raw + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (auto& part : text::split(raw, ",")) {
    auto item = text::trim(part);
    if (!item.empty()) out.push_back(parse_value<T>(key, item));
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& raw) {
  std::filesystem::path p(raw);
  return p.is_absolute() || raw.empty() ? p : base / p;
}

}  // namespace

void PipelineConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(Errc::ConfigInvalid, msg); };
  if (workspace.empty()) bad("workspace must be set");
  if (!(threshold >= -1.0 && threshold <= 1.0)) bad("curation.threshold must lie in [-1, 1]");
  if (!(dish_ratio > 0.0 && dish_ratio <= 1.0)) bad("schedule.dish_ratio must lie in (0, 1]");
  if (batch_size == 0) bad("schedule.batch_size must be positive");
  if (library_quality != "any" && library_quality != "ultra") bad("captioning.library_quality must be any or ultra");
  if (timeout_ms <= 0) bad("providers.timeout_ms must be positive");
  if (max_retries < 0) bad("providers.max_retries must be >= 0");
  if (concurrency < 1) bad("providers.concurrency must be >= 1");
  if (embed_dims == 0) bad("providers.embed_dims must be positive");
  if (n_target == 0) bad("editset.n_target must be positive");
  if (!(source_fraction >= 0.0 && source_fraction < 1.0)) bad("editset.source_fraction must lie in [0, 1)");
  if (rho_grid.empty()) bad("editset.rho_grid must be non-empty");
  for (double r : rho_grid) {
    if (!(r >= 0.0 && r <= 1.0)) bad("editset.rho_grid values must lie in [0, 1]");
  }
  if (seeds.empty()) bad("editset.seeds must be non-empty");
  if (eval_samples < 2) bad("eval.samples must be at least 2");
  if (port < 0 || port > 65535) bad("review.port must lie in [0, 65535]");
  if (lease_minutes < 1) bad("review.lease_minutes must be >= 1");
  if (!mock) {
    for (auto role : kProviderRoles) {
      auto it = endpoints.find(std::string(role));
      if (it == endpoints.end() || it->second.empty()) {
        bad("providers." + std::string(role) + " has no endpoint and the config is not marked mock");
      }
    }
  }
}

Json PipelineConfig::section(std::string_view stage) const {
  Json providers = Json{{"mock", mock}, {"seed", seed}, {"embed_dims", embed_dims}};
  if (!mock) providers["endpoints"] = endpoints;
  Json j{{"stage", stage}, {"providers", providers}};
  if (stage == "curate") {
    j["threshold"] = threshold;
  } else if (stage == "library") {
    j["library_quality"] = library_quality;
  } else if (stage == "schedule") {
    j["dish_ratio"] = dish_ratio;
    j["batch_size"] = batch_size;
  } else if (stage == "editset") {
    j["concept"] = concept_name;
    j["prompts"] = concept_prompts;
    j["n_target"] = n_target;
    j["source_fraction"] = source_fraction;
    j["source_prompt"] = source_prompt;
    j["target_prompt"] = target_prompt;
    j["instruction"] = instruction;
    j["rho_grid"] = rho_grid;
    j["seeds"] = seeds;
    j["preference_prompts"] = preference_prompts;
  } else if (stage == "eval") {
    j["samples"] = eval_samples;
  }
  return j;
}

providers::ProviderEndpoint PipelineConfig::endpoint_for(std::string_view role) const {
  auto it = endpoints.find(std::string(role));
  if (it == endpoints.end()) fail(Errc::ConfigInvalid, "no endpoint for provider role " + std::string(role));
  providers::ProviderEndpoint ep{std::string(role), it->second, std::chrono::milliseconds(timeout_ms), max_retries};
  ep.validate();
  return ep;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) fail(Errc::IoFailure, "cannot read config " + path.string());
    fail(Errc::ConfigInvalid, e.what());
  }
  const auto base = path.parent_path();
  PipelineConfig c;
  for (const auto& [section, body] : tree) {
    auto known = known_keys().find(section);
    if (known == known_keys().end() || body.empty()) fail(Errc::ConfigInvalid, "unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      if (!known->second.contains(key)) fail(Errc::ConfigInvalid, "unknown key " + section + "." + key);
      const std::string raw = text::trim(node.get_value<std::string>());
      const std::string name = section + "." + key;
      if (section == "pipeline") {
        if (key == "workspace") c.workspace = resolve(base, raw);
        else if (key == "input") c.input = resolve(base, raw);
        else if (key == "seed") c.seed = parse_value<std::uint64_t>(name, raw);
        else c.mock = parse_bool(name, raw);
      } else if (section == "providers") {
        if (key == "timeout_ms") c.timeout_ms = parse_value<int>(name, raw);
        else if (key == "max_retries") c.max_retries = parse_value<int>(name, raw);
        else if (key == "concurrency") c.concurrency = parse_value<int>(name, raw);
        else if (key == "embed_dims") c.embed_dims = parse_value<std::size_t>(name, raw);
        else c.endpoints[key] = raw;
      } else if (section == "curation") {
        c.threshold = parse_value<double>(name, raw);
      } else if (section == "captioning") {
        if (key == "library_quality") c.library_quality = raw;
        else c.quality_annotations = resolve(base, raw);
      } else if (section == "schedule") {
        if (key == "dish_ratio") c.dish_ratio = parse_value<double>(name, raw);
        else c.batch_size = parse_value<std::size_t>(name, raw);
      } else if (section == "editset") {
        if (key == "concept") c.concept_name = raw;
        else if (key == "prompts") {
          c.concept_prompts.clear();
          for (auto& p : text::split(raw, "|")) {
            if (auto t = text::trim(p); !t.empty()) c.concept_prompts.push_back(t);
          }
        } else if (key == "n_target") c.n_target = parse_value<std::size_t>(name, raw);
        else if (key == "source_fraction") c.source_fraction = parse_value<double>(name, raw);
        else if (key == "source_prompt") c.source_prompt = raw;
        else if (key == "target_prompt") c.target_prompt = raw;
        else if (key == "instruction") c.instruction = raw;
        else if (key == "rho_grid") c.rho_grid = parse_list<double>(name, raw);
        else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(name, raw);
        else c.preference_prompts = parse_value<std::size_t>(name, raw);
      } else if (section == "eval") {
        if (key == "samples") c.eval_samples = parse_value<std::size_t>(name, raw);
        else c.human_scores = resolve(base, raw);
      } else {
        if (key == "bind") c.bind_address = raw;
        else if (key == "port") c.port = parse_value<int>(name, raw);
        else if (key == "lease_minutes") c.lease_minutes = parse_value<int>(name, raw);
        else c.ui_dir = resolve(base, raw);
      }
    }
  }
  c.validate();
  return c;
}

PipelineConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return load_config(*explicit_path);
  if (const char* env = std::getenv(std::string(kConfigEnvVar).c_str()); env && *env) return load_config(env);
  return PipelineConfig{};
}

}  // namespace dishforge
