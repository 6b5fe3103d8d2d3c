#pragma once

#include "cgrpo/eval.hpp"
#include "cgrpo/grpo.hpp"
#include "cgrpo/policy.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace cgrpo {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct PolicyConfig {
  ContextMode context_mode = ContextMode::unigram;
  std::size_t content_tokens = 6;
  std::size_t max_len = 16;
  std::vector<std::string> variants{"A", "B"};
  // Unset: taken from the corpus records' "bias" field (0 if absent).
  std::optional<double> asymmetry;
  double stop_logit = -2.5;
  double repeat_scale = 4.0;
};

// Everything a run needs. Serialized as nested sections
// grpo / reward / entropy / policy / eval; unknown keys are rejected.
struct RunConfig {
  GrpoConfig grpo;
  PolicyConfig policy;
  EvalOptions eval;
  std::size_t checkpoint_every = 50;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);

// Hash over the settings that fix the policy's shape and how completions are
// tokenized. A checkpoint is only valid under a config with the same hash.
std::string config_hash(const RunConfig& c);

DemoPolicyOptions demo_policy_options(const PolicyConfig& p, double asymmetry);

// Mean of the "bias" extra field over all records, 0 when no record has one.
double corpus_bias(const std::vector<VariantGroup>& corpus);

} // namespace cgrpo
