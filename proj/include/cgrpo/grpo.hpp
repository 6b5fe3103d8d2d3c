#pragma once

#include "cgrpo/dataset.hpp"
#include "cgrpo/entropy.hpp"
#include "cgrpo/policy.hpp"
#include "cgrpo/rewards.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace cgrpo {

struct GrpoConfig {
  std::size_t group_generations = 6; // completions per variant member
  double clip_epsilon = 0.2;
  double kl_coeff = 0.05;
  // Plain gradient ascent. 5e-6 suits AdamW on a 1B-parameter model; the
  // token-averaged loss of a tabular policy needs a far larger step.
  double learning_rate = 0.5;
  std::size_t max_steps = 250;
  std::size_t grad_accum = 4;
  std::uint64_t seed = 0;
  double std_floor = 1e-8;
  std::size_t ppo_epochs = 1; // updates per rollout
  std::size_t max_resample = 8;
  RewardOptions reward;
  Tokenization tokenization = Tokenization::whitespace;

  void validate() const;
};

class TrainingError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Entropy of a completion's rendered text under the configured tokenization.
double completion_entropy(const PolicyParams& params, const Completion& c,
                          Tokenization mode);

// Population-std standardization; all zeros when std <= std_floor.
std::vector<double> group_advantages(std::span<const double> rewards, double std_floor);

struct GroupRollout {
  VariantGroup group;
  // Member-major: completion k belongs to member k / n, generation k % n.
  std::vector<Completion> completions;
  std::vector<std::size_t> member;
  std::vector<double> entropies;
  // Generation g of member i is paired with generation g of member j for
  // every (i, j) in the group's pairing.
  std::vector<IndexPair> pairing;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;

  const PromptRecord& prompt(std::size_t k) const { return group.members[member[k]]; }
};

// Samples group_generations completions per member from `policy`, scores them
// and computes advantages. Generation g of every member draws from the same
// random stream, so paired completions differ only through the prompt.
GroupRollout generate_rollout(const PolicyParams& policy, const VariantGroup& group,
                              const GrpoConfig& config, std::uint64_t step);

// Fills entropies, rewards and advantages from the completions.
void score_rollout(GroupRollout& rollout, const PolicyParams& policy,
                   const GrpoConfig& config);

struct SurrogateResult {
  double loss = 0.0;      // -(surrogate - kl_coeff * kl)
  double surrogate = 0.0; // clipped term, token-averaged then completion-averaged
  double kl = 0.0;        // same weighting as the surrogate
  Table grad;             // d loss / d logits of params_new
  std::size_t tokens = 0;
  std::size_t clipped_tokens = 0;
};

// Adds the contribution of completions `subset` to `acc`. Contributions are
// weighted by 1 / rollout size, so accumulating over a partition of the
// rollout equals a single pass over all of it.
void accumulate_surrogate(const GroupRollout& rollout, std::span<const std::size_t> subset,
                          const PolicyParams& params_new, const PolicyParams& params_old,
                          const PolicyParams& params_ref, const GrpoConfig& config,
                          SurrogateResult& acc);

SurrogateResult surrogate_loss(const GroupRollout& rollout, const PolicyParams& params_new,
                               const PolicyParams& params_old,
                               const PolicyParams& params_ref, const GrpoConfig& config);

struct StepMetrics {
  std::uint64_t step = 0;
  double mean_reward = 0.0;
  double mean_helpfulness = 0.0;
  double mean_consistency = 0.0;
  double mean_abs_advantage = 0.0;
  double kl = 0.0;
  double mean_entropy_gap = 0.0;
  double wall_ms = 0.0;

  bool operator==(const StepMetrics&) const = default;
};

nlohmann::ordered_json to_json(const StepMetrics& m, bool include_wall_time = true);
StepMetrics step_metrics_from_json(const nlohmann::json& j);

struct StepResult {
  PolicyParams params;
  StepMetrics metrics;
  GroupRollout rollout;
};

StepResult train_step(const PolicyParams& params, const VariantGroup& group,
                      const GrpoConfig& config, const PolicyParams& params_ref,
                      std::uint64_t step);

using TrainingLog = std::vector<StepMetrics>;

void write_training_log(std::ostream& out, const TrainingLog& log,
                        bool include_wall_time = true);
TrainingLog read_training_log(std::istream& in);

struct TrainResult {
  PolicyParams params;
  TrainingLog log;
};

struct TrainHooks {
  // Called after every completed step with the updated parameters.
  std::function<void(const StepMetrics&, const PolicyParams&)> on_step;
};

// Runs train_step over the corpus cyclically for steps [start_step, max_steps).
// The reference policy defaults to `params`; pass it explicitly when resuming.
TrainResult train(const PolicyParams& params, const std::vector<VariantGroup>& corpus,
                  const GrpoConfig& config, const TrainHooks& hooks = {},
                  std::uint64_t start_step = 0,
                  const std::optional<PolicyParams>& params_ref = std::nullopt);

} // namespace cgrpo
