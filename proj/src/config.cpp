#include "cgrpo/config.hpp"

#include "cgrpo/digest.hpp"

#include <fstream>
#include <set>

namespace cgrpo {

namespace {

// Reads known keys of one section and rejects the rest.
class Section {
public:
  Section(const nlohmann::json& root, std::string name) : name_(std::move(name)) {
    auto it = root.find(name_);
    if (it == root.end()) return;
    if (!it->is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
    obj_ = &*it;
  }

  template <class T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    if (!obj_) return;
    auto it = obj_->find(key);
    if (it == obj_->end()) return;
    try {
      if constexpr (requires { typename T::value_type; dst.has_value(); }) {
        if (it->is_null()) {
          dst.reset();
        } else {
          dst = it->template get<typename T::value_type>();
        }
      } else {
        dst = it->template get<T>();
      }
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <class T, class Parse>
  void read_enum(const char* key, T& dst, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!obj_) return;
    auto it = obj_->find(key);
    if (it == obj_->end()) return;
    if (!it->is_string()) throw ConfigError("config key '" + name_ + "." + key + "' must be a string");
    try {
      dst = parse(it->get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config key '" + name_ + "." + key + "': " + e.what());
    }
  }

  void finish() const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError("unknown config key '" + name_ + "." + it.key() + "'");
      }
    }
  }

private:
  std::string name_;
  const nlohmann::json* obj_ = nullptr;
  std::set<std::string> seen_;
};

} // namespace

void RunConfig::validate() const {
  try {
    grpo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (policy.content_tokens < 1) throw ConfigError("policy.content_tokens must be at least 1");
  if (policy.max_len < 1) throw ConfigError("policy.max_len must be at least 1");
  if (policy.variants.size() < 2) throw ConfigError("policy.variants needs at least two labels");
  if (policy.asymmetry && !(*policy.asymmetry >= 0.0 && *policy.asymmetry <= 1.0)) {
    throw ConfigError("policy.asymmetry must lie in [0, 1]");
  }
  if (eval.samples_per_variant < 2) throw ConfigError("eval.samples_per_variant must be at least 2");
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kSections{"grpo", "reward", "entropy", "policy", "eval", "run"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kSections.count(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  }

  RunConfig c;
  Section grpo(j, "grpo");
  grpo.read("group_generations", c.grpo.group_generations);
  grpo.read("clip_epsilon", c.grpo.clip_epsilon);
  grpo.read("kl_coeff", c.grpo.kl_coeff);
  grpo.read("learning_rate", c.grpo.learning_rate);
  grpo.read("max_steps", c.grpo.max_steps);
  grpo.read("grad_accum", c.grpo.grad_accum);
  grpo.read("seed", c.grpo.seed);
  grpo.read("std_floor", c.grpo.std_floor);
  grpo.read("ppo_epochs", c.grpo.ppo_epochs);
  grpo.read("max_resample", c.grpo.max_resample);
  grpo.finish();

  Section reward(j, "reward");
  reward.read("alpha", c.grpo.reward.weights.alpha);
  reward.read("beta", c.grpo.reward.weights.beta);
  reward.read_enum("normalization_scope", c.grpo.reward.scope, normalization_scope_from_string);
  reward.read_enum("divisor", c.grpo.reward.divisor, gap_divisor_from_string);
  reward.finish();

  Section entropy(j, "entropy");
  entropy.read_enum("tokenization", c.grpo.tokenization, tokenization_from_string);
  entropy.finish();
  c.eval.tokenization = c.grpo.tokenization;

  Section policy(j, "policy");
  policy.read_enum("context_mode", c.policy.context_mode, context_mode_from_string);
  policy.read("content_tokens", c.policy.content_tokens);
  policy.read("max_len", c.policy.max_len);
  policy.read("variants", c.policy.variants);
  policy.read("asymmetry", c.policy.asymmetry);
  policy.read("stop_logit", c.policy.stop_logit);
  policy.read("repeat_scale", c.policy.repeat_scale);
  policy.finish();

  Section eval(j, "eval");
  eval.read("samples_per_variant", c.eval.samples_per_variant);
  eval.read("seed", c.eval.seed);
  eval.read_enum("test", c.eval.test, test_kind_from_string);
  eval.read_enum("category_unit", c.eval.category_unit, category_unit_from_string);
  eval.read("max_resample", c.eval.max_resample);
  eval.read("keep_completions", c.eval.keep_completions);
  eval.read("shared_streams", c.eval.shared_streams);
  eval.finish();

  Section run(j, "run");
  run.read("checkpoint_every", c.checkpoint_every);
  run.finish();

  c.validate();
  return c;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["grpo"] = {{"group_generations", c.grpo.group_generations},
               {"clip_epsilon", c.grpo.clip_epsilon},
               {"kl_coeff", c.grpo.kl_coeff},
               {"learning_rate", c.grpo.learning_rate},
               {"max_steps", c.grpo.max_steps},
               {"grad_accum", c.grpo.grad_accum},
               {"seed", c.grpo.seed},
               {"std_floor", c.grpo.std_floor},
               {"ppo_epochs", c.grpo.ppo_epochs},
               {"max_resample", c.grpo.max_resample}};
  j["reward"] = {{"alpha", c.grpo.reward.weights.alpha},
                 {"beta", c.grpo.reward.weights.beta},
                 {"normalization_scope", to_string(c.grpo.reward.scope)},
                 {"divisor", to_string(c.grpo.reward.divisor)}};
  j["entropy"] = {{"tokenization", to_string(c.grpo.tokenization)}};
  nlohmann::ordered_json p;
  p["context_mode"] = to_string(c.policy.context_mode);
  p["content_tokens"] = c.policy.content_tokens;
  p["max_len"] = c.policy.max_len;
  p["variants"] = c.policy.variants;
  p["asymmetry"] = c.policy.asymmetry ? nlohmann::ordered_json(*c.policy.asymmetry)
                                      : nlohmann::ordered_json(nullptr);
  p["stop_logit"] = c.policy.stop_logit;
  p["repeat_scale"] = c.policy.repeat_scale;
  j["policy"] = std::move(p);
  j["eval"] = {{"samples_per_variant", c.eval.samples_per_variant},
               {"seed", c.eval.seed},
               {"test", to_string(c.eval.test)},
               {"category_unit", to_string(c.eval.category_unit)},
               {"max_resample", c.eval.max_resample},
               {"keep_completions", c.eval.keep_completions},
               {"shared_streams", c.eval.shared_streams}};
  j["run"] = {{"checkpoint_every", c.checkpoint_every}};
  return j;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["tokenization"] = to_string(c.grpo.tokenization);
  j["context_mode"] = to_string(c.policy.context_mode);
  j["content_tokens"] = c.policy.content_tokens;
  j["max_len"] = c.policy.max_len;
  j["variants"] = c.policy.variants;
  return sha256_hex(j.dump()).substr(0, 16);
}

DemoPolicyOptions demo_policy_options(const PolicyConfig& p, double asymmetry) {
  DemoPolicyOptions o;
  o.context_mode = p.context_mode;
  o.content_tokens = p.content_tokens;
  o.max_len = p.max_len;
  o.variants = p.variants;
  o.asymmetry = asymmetry;
  o.stop_logit = p.stop_logit;
  o.repeat_scale = p.repeat_scale;
  return o;
}

double corpus_bias(const std::vector<VariantGroup>& corpus) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& g : corpus) {
    for (const auto& m : g.members) {
      auto it = m.extra.find("bias");
      if (it != m.extra.end() && it->is_number()) {
        sum += it->get<double>();
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

} // namespace cgrpo
