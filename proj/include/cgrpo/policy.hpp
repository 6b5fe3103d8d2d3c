#pragma once

#include "cgrpo/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cgrpo {

inline constexpr const char* kStopToken = "<stop>";

// Dense row-major table of reals.
class Table {
public:
  Table() = default;
  Table(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  // this += scale * other
  void axpy(double scale, const Table& other);

  bool operator==(const Table&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Gradient rows keyed by context id; rows never visited are absent.
using SparseGrad = std::map<std::size_t, std::vector<double>>;

void add_sparse(Table& dst, const SparseGrad& g, double scale = 1.0);

// What a context remembers about the generated prefix besides the variant.
//   bigram:  the last generated token (or "nothing yet")
//   unigram: only whether anything has been generated yet
enum class ContextMode { bigram, unigram };

std::string to_string(ContextMode m);
ContextMode context_mode_from_string(const std::string& s);

// Tabular softmax policy: each context (variant label plus a summary of the
// prefix) owns a row of logits over the vocabulary. The vocabulary holds the
// content tokens followed by a single stop token.
struct PolicyParams {
  std::vector<std::string> vocab;
  std::vector<std::string> variants;
  std::size_t max_len = 0;
  ContextMode context_mode = ContextMode::bigram;
  Table logits;

  // All-zero (uniform) logits.
  static PolicyParams uniform(std::vector<std::string> content_tokens,
                              std::vector<std::string> variants, std::size_t max_len,
                              ContextMode mode = ContextMode::bigram);

  std::size_t vocab_size() const { return vocab.size(); }
  int stop_id() const { return static_cast<int>(vocab.size()) - 1; }
  // Start slot plus one slot per content token (bigram) or one shared slot.
  std::size_t slots_per_variant() const {
    return context_mode == ContextMode::bigram ? vocab.size() : 2;
  }
  std::size_t n_contexts() const { return variants.size() * slots_per_variant(); }

  std::size_t variant_index(const std::string& variant) const;
  // last < 0 means nothing generated yet.
  std::size_t context_id(std::size_t variant_idx, int last) const;
  std::size_t context_of(const PromptRecord& prompt, std::span<const int> prefix) const;

  int token_id(const std::string& token) const;

  void validate() const;

  bool operator==(const PolicyParams&) const = default;
};

struct Completion {
  std::vector<int> tokens; // stop excluded
  // One entry per token plus the terminating decision. A completion that hit
  // max_len was cut off rather than stopped; its last entry is 0.
  std::vector<double> logprobs;
  std::string prompt_ref;

  bool operator==(const Completion&) const = default;
};

struct Decision {
  std::size_t context = 0;
  int token = 0;
  // True for the termination imposed at max_len, which the policy did not choose.
  bool forced = false;
};

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

std::vector<Decision> decisions(const PolicyParams& params, const PromptRecord& prompt,
                                const Completion& completion);

// Ancestral sampling at temperature 1 by inverse CDF, one uniform per step.
Completion sample(const PolicyParams& params, const PromptRecord& prompt,
                  std::uint64_t rng_seed);

std::vector<double> log_prob(const PolicyParams& params, const PromptRecord& prompt,
                             const Completion& completion);

// Sum over chosen decisions of d log pi(token | ctx) / d logits(ctx, .),
// i.e. onehot(token) - softmax(row).
SparseGrad grad_log_prob(const PolicyParams& params, const PromptRecord& prompt,
                         const Completion& completion);

double row_kl(std::span<const double> logits_p, std::span<const double> logits_q);

// Mean over the listed contexts (repeats count) of KL(p row || q row).
double kl_divergence(const PolicyParams& p, const PolicyParams& q,
                     std::span<const std::size_t> visited_contexts);

// d/d logits_p of row_kl, written into out.
void row_kl_grad(std::span<const double> logits_p, std::span<const double> logits_q,
                 std::span<double> out);

inline PolicyParams snapshot(const PolicyParams& params) { return params; }

std::vector<std::string> token_strings(const PolicyParams& params, const Completion& c);

// Initial policy with a controllable asymmetry between the first two variants.
// Variant rows are identical at asymmetry 0. As asymmetry grows, the second
// variant's rows favour repeating the previous token (bigram) or a single
// token (unigram), which lowers the entropy of its completions.
struct DemoPolicyOptions {
  ContextMode context_mode = ContextMode::unigram;
  std::size_t content_tokens = 6;
  std::size_t max_len = 16;
  std::vector<std::string> variants{"A", "B"};
  double asymmetry = 0.5;
  double stop_logit = -2.5;
  double repeat_scale = 4.0;
};

PolicyParams make_demo_policy(const DemoPolicyOptions& opts);

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  PolicyParams params;
  std::string config_hash;
  nlohmann::json meta = nlohmann::json::object();
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Rejects a checkpoint whose config hash differs from expected_hash, if given.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_hash = std::nullopt);

} // namespace cgrpo
