#include "cgrpo/grpo.hpp"

#include "cgrpo/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace cgrpo {

void GrpoConfig::validate() const {
  if (group_generations < 2) {
    throw std::invalid_argument("grpo.group_generations must be at least 2");
  }
  if (!(clip_epsilon > 0.0)) throw std::invalid_argument("grpo.clip_epsilon must be > 0");
  if (!(kl_coeff >= 0.0)) throw std::invalid_argument("grpo.kl_coeff must be >= 0");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("grpo.learning_rate must be finite and >= 0");
  }
  if (grad_accum < 1) throw std::invalid_argument("grpo.grad_accum must be at least 1");
  if (!(std_floor >= 0.0)) throw std::invalid_argument("grpo.std_floor must be >= 0");
  if (ppo_epochs < 1) throw std::invalid_argument("grpo.ppo_epochs must be at least 1");
  reward.weights.validate();
}

double completion_entropy(const PolicyParams& params, const Completion& c,
                          Tokenization mode) {
  std::string text;
  for (int t : c.tokens) {
    if (!text.empty()) text.push_back(' ');
    text += params.vocab.at(static_cast<std::size_t>(t));
  }
  return text_entropy(text, mode);
}

std::vector<double> group_advantages(std::span<const double> rewards, double std_floor) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("group_advantages needs at least two rewards");
  }
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - mean) * (r - mean);
  const double sd = std::sqrt(ss / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd > std_floor) {
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  }
  return adv;
}

void score_rollout(GroupRollout& r, const PolicyParams& policy, const GrpoConfig& config) {
  r.entropies.clear();
  for (const auto& c : r.completions) {
    r.entropies.push_back(completion_entropy(policy, c, config.tokenization));
  }
  const std::size_t n = config.group_generations;
  r.rewards = reward_breakdown(r.entropies, r.pairing, n, config.reward);
  std::vector<double> combined;
  combined.reserve(r.rewards.size());
  for (const auto& b : r.rewards) combined.push_back(b.combined);
  r.advantages = group_advantages(combined, config.std_floor);
}

GroupRollout generate_rollout(const PolicyParams& policy, const VariantGroup& group,
                              const GrpoConfig& config, std::uint64_t step) {
  const std::size_t n = config.group_generations;
  GroupRollout r;
  r.group = group;
  for (std::size_t m = 0; m < group.members.size(); ++m) {
    for (std::size_t g = 0; g < n; ++g) {
      bool ok = false;
      for (std::size_t attempt = 0; attempt <= config.max_resample; ++attempt) {
        auto c = sample(policy, group.members[m],
                        derive_seed(config.seed, "train", {step, g, attempt}));
        if (!c.tokens.empty()) {
          r.completions.push_back(std::move(c));
          r.member.push_back(m);
          ok = true;
          break;
        }
      }
      if (!ok) {
        throw TrainingError("empty completion for '" + group.members[m].question_id +
                            "' after " + std::to_string(config.max_resample) +
                            " resamples");
      }
    }
  }
  for (auto [i, j] : group.pairing) {
    for (std::size_t g = 0; g < n; ++g) r.pairing.emplace_back(i * n + g, j * n + g);
  }
  score_rollout(r, policy, config);
  return r;
}

void accumulate_surrogate(const GroupRollout& rollout, std::span<const std::size_t> subset,
                          const PolicyParams& params_new, const PolicyParams& params_old,
                          const PolicyParams& params_ref, const GrpoConfig& config,
                          SurrogateResult& acc) {
  if (acc.grad.rows() != params_new.logits.rows() ||
      acc.grad.cols() != params_new.logits.cols()) {
    acc.grad = Table(params_new.logits.rows(), params_new.logits.cols());
  }
  const double n_completions = static_cast<double>(rollout.completions.size());
  const double lo = 1.0 - config.clip_epsilon;
  const double hi = 1.0 + config.clip_epsilon;
  std::vector<double> kl_grad(params_new.vocab_size());

  for (std::size_t k : subset) {
    const auto& comp = rollout.completions.at(k);
    const auto& prompt = rollout.prompt(k);
    const double adv = rollout.advantages.at(k);
    const auto steps = decisions(params_new, prompt, comp);
    const auto chosen = std::count_if(steps.begin(), steps.end(),
                                      [](const Decision& d) { return !d.forced; });
    if (chosen == 0) continue;
    const double w = 1.0 / (n_completions * static_cast<double>(chosen));

    for (const auto& d : steps) {
      if (d.forced) continue;
      const auto tok = static_cast<std::size_t>(d.token);
      const auto lp_new = log_softmax(params_new.logits.row(d.context));
      const double lp_old = log_softmax(params_old.logits.row(d.context))[tok];
      const double ratio = std::exp(lp_new[tok] - lp_old);
      if (!std::isfinite(ratio)) {
        throw TrainingError("non-finite likelihood ratio; the update diverged");
      }
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, lo, hi) * adv;
      auto g = acc.grad.row(d.context);
      ++acc.tokens;
      if (unclipped <= clipped) {
        acc.surrogate += w * unclipped;
        // d(ratio * adv)/dz = adv * ratio * (onehot - softmax); loss is negated.
        const double s = w * adv * ratio;
        for (std::size_t v = 0; v < g.size(); ++v) g[v] += s * std::exp(lp_new[v]);
        g[tok] -= s;
      } else {
        acc.surrogate += w * clipped;
        ++acc.clipped_tokens;
      }
      const double kl = row_kl(params_new.logits.row(d.context),
                               params_ref.logits.row(d.context));
      acc.kl += w * kl;
      if (config.kl_coeff > 0.0) {
        row_kl_grad(params_new.logits.row(d.context), params_ref.logits.row(d.context),
                    kl_grad);
        for (std::size_t v = 0; v < g.size(); ++v) g[v] += w * config.kl_coeff * kl_grad[v];
      }
    }
  }
  acc.loss = -(acc.surrogate - config.kl_coeff * acc.kl);
}

SurrogateResult surrogate_loss(const GroupRollout& rollout, const PolicyParams& params_new,
                               const PolicyParams& params_old,
                               const PolicyParams& params_ref, const GrpoConfig& config) {
  std::vector<std::size_t> all(rollout.completions.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  SurrogateResult r;
  accumulate_surrogate(rollout, all, params_new, params_old, params_ref, config, r);
  return r;
}

nlohmann::ordered_json to_json(const StepMetrics& m, bool include_wall_time) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["mean_helpfulness"] = m.mean_helpfulness;
  j["mean_consistency"] = m.mean_consistency;
  j["mean_abs_advantage"] = m.mean_abs_advantage;
  j["kl"] = m.kl;
  j["mean_entropy_gap"] = m.mean_entropy_gap;
  if (include_wall_time) j["wall_ms"] = m.wall_ms;
  return j;
}

StepMetrics step_metrics_from_json(const nlohmann::json& j) {
  StepMetrics m;
  m.step = j.at("step").get<std::uint64_t>();
  m.mean_reward = j.at("mean_reward").get<double>();
  m.mean_helpfulness = j.at("mean_helpfulness").get<double>();
  m.mean_consistency = j.at("mean_consistency").get<double>();
  m.mean_abs_advantage = j.at("mean_abs_advantage").get<double>();
  m.kl = j.at("kl").get<double>();
  m.mean_entropy_gap = j.at("mean_entropy_gap").get<double>();
  m.wall_ms = j.value("wall_ms", 0.0);
  return m;
}

void write_training_log(std::ostream& out, const TrainingLog& log, bool include_wall_time) {
  for (const auto& m : log) out << to_json(m, include_wall_time).dump() << '\n';
}

TrainingLog read_training_log(std::istream& in) {
  TrainingLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    log.push_back(step_metrics_from_json(nlohmann::json::parse(line)));
  }
  return log;
}

StepResult train_step(const PolicyParams& params, const VariantGroup& group,
                      const GrpoConfig& config, const PolicyParams& params_ref,
                      std::uint64_t step) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();

  const PolicyParams params_old = snapshot(params);
  StepResult out{params, {}, generate_rollout(params_old, group, config, step)};
  const auto& rollout = out.rollout;

  // Micro-batches partition the rollout; their gradients are summed before
  // a single update per epoch.
  const std::size_t total = rollout.completions.size();
  const std::size_t chunks = std::min(config.grad_accum, total);
  double kl_before = 0.0;
  for (std::size_t epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    SurrogateResult acc;
    for (std::size_t c = 0; c < chunks; ++c) {
      std::vector<std::size_t> subset;
      for (std::size_t k = c * total / chunks; k < (c + 1) * total / chunks; ++k) {
        subset.push_back(k);
      }
      accumulate_surrogate(rollout, subset, out.params, params_old, params_ref, config, acc);
    }
    if (epoch == 0) kl_before = acc.kl;
    if (config.learning_rate > 0.0) out.params.logits.axpy(-config.learning_rate, acc.grad);
  }

  auto& m = out.metrics;
  m.step = step;
  const double n = static_cast<double>(total);
  for (std::size_t k = 0; k < total; ++k) {
    m.mean_reward += rollout.rewards[k].combined / n;
    m.mean_helpfulness += rollout.rewards[k].helpfulness / n;
    m.mean_consistency += rollout.rewards[k].consistency / n;
    m.mean_abs_advantage += std::abs(rollout.advantages[k]) / n;
  }
  m.kl = kl_before;
  for (auto [i, j] : rollout.pairing) {
    m.mean_entropy_gap += entropy_gap(rollout.entropies[i], rollout.entropies[j]) /
                          static_cast<double>(rollout.pairing.size());
  }
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                  .count();
  return out;
}

TrainResult train(const PolicyParams& params, const std::vector<VariantGroup>& corpus,
                  const GrpoConfig& config, const TrainHooks& hooks,
                  std::uint64_t start_step, const std::optional<PolicyParams>& params_ref) {
  config.validate();
  if (corpus.empty()) {
    throw std::invalid_argument("training corpus is empty");
  }
  const PolicyParams ref = params_ref ? *params_ref : snapshot(params);
  TrainResult out{params, {}};
  for (std::uint64_t step = start_step; step < config.max_steps; ++step) {
    const auto& group = corpus[step % corpus.size()];
    auto r = train_step(out.params, group, config, ref, step);
    out.params = std::move(r.params);
    out.log.push_back(r.metrics);
    if (hooks.on_step) hooks.on_step(r.metrics, out.params);
  }
  return out;
}

} // namespace cgrpo
