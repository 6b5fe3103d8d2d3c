#pragma once

#include "cgrpo/dataset.hpp"
#include "cgrpo/grpo.hpp"
#include "cgrpo/policy.hpp"
#include "cgrpo/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace cgrpo::testing {

inline PromptRecord prompt(const std::string& group, const std::string& variant,
                           const std::string& category = "jobs") {
  PromptRecord r;
  r.group_id = group;
  r.question_id = group + "-" + variant;
  r.variant = variant;
  r.category = category;
  r.text = "how do i ask for a raise " + variant_marker(variant);
  return r;
}

inline VariantGroup ab_group(const std::string& id = "g0",
                             const std::string& category = "jobs") {
  return make_group({prompt(id, "A", category), prompt(id, "B", category)});
}

// Normal(0, sd) via Box-Muller on the portable uniform.
inline double normal(Rng& rng, double sd = 1.0) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline PolicyParams random_policy(Rng& rng, ContextMode mode, std::size_t content = 4,
                                  std::size_t max_len = 6, double sd = 1.0) {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < content; ++i) toks.push_back("t" + std::to_string(i));
  auto p = PolicyParams::uniform(toks, {"A", "B"}, max_len, mode);
  for (double& x : p.logits.flat()) x = normal(rng, sd);
  return p;
}

inline PolicyParams perturbed(const PolicyParams& p, Rng& rng, double sd) {
  PolicyParams q = p;
  for (double& x : q.logits.flat()) x += normal(rng, sd);
  return q;
}

struct SurrogateFixture {
  GroupRollout rollout;
  PolicyParams params_new, params_old, params_ref;
  GrpoConfig config;
};

// True when some chosen token's ratio sits within `margin` of a clip edge,
// where the objective has a kink and central differences are meaningless.
inline bool near_clip_edge(const SurrogateFixture& f, double margin = 1e-4) {
  const double lo = 1 - f.config.clip_epsilon, hi = 1 + f.config.clip_epsilon;
  for (std::size_t k = 0; k < f.rollout.completions.size(); ++k) {
    for (const auto& d : decisions(f.params_new, f.rollout.prompt(k), f.rollout.completions[k])) {
      if (d.forced) continue;
      const auto tok = static_cast<std::size_t>(d.token);
      const double r = std::exp(log_softmax(f.params_new.logits.row(d.context))[tok] -
                                log_softmax(f.params_old.logits.row(d.context))[tok]);
      if (std::abs(r - lo) < margin || std::abs(r - hi) < margin) return true;
    }
  }
  return false;
}

// Random rollout with random advantages. `spread` is the sd of the gap
// between new and old logits: small keeps ratios inside the clip range.
inline SurrogateFixture surrogate_fixture(Rng& rng, double kl_coeff, double spread) {
  while (true) {
    SurrogateFixture f;
    const auto mode = rng.below(2) ? ContextMode::bigram : ContextMode::unigram;
    f.params_old = random_policy(rng, mode, 2 + rng.below(3), 3 + rng.below(4));
    f.params_new = perturbed(f.params_old, rng, spread);
    f.params_ref = perturbed(f.params_old, rng, 0.5);
    f.config.group_generations = 2 + rng.below(3);
    f.config.kl_coeff = kl_coeff;
    f.config.seed = rng.next();
    VariantGroup g = make_group({prompt("g", "A"), prompt("g", "B")});
    try {
      f.rollout = generate_rollout(f.params_old, g, f.config, 0);
    } catch (const TrainingError&) {
      continue; // a policy that almost always stops at once
    }
    for (double& a : f.rollout.advantages) a = normal(rng);
    if (!near_clip_edge(f)) return f;
  }
}

struct GradCheck {
  double rel_error = 0;
  std::size_t clipped_tokens = 0;
  std::size_t tokens = 0;
};

// Central differences of the loss against the analytic gradient,
// max-norm error relative to the max-norm gradient.
inline GradCheck check_surrogate_gradient(const SurrogateFixture& f, double h = 1e-6) {
  const auto base = surrogate_loss(f.rollout, f.params_new, f.params_old, f.params_ref, f.config);
  double max_err = 0, max_mag = 1e-6;
  auto probe = f.params_new;
  for (std::size_t i = 0; i < probe.logits.flat().size(); ++i) {
    const double x = probe.logits.flat()[i];
    probe.logits.flat()[i] = x + h;
    const double up = surrogate_loss(f.rollout, probe, f.params_old, f.params_ref, f.config).loss;
    probe.logits.flat()[i] = x - h;
    const double down = surrogate_loss(f.rollout, probe, f.params_old, f.params_ref, f.config).loss;
    probe.logits.flat()[i] = x;
    const double fd = (up - down) / (2 * h);
    const double an = base.grad.flat()[i];
    max_err = std::max(max_err, std::abs(fd - an));
    max_mag = std::max({max_mag, std::abs(fd), std::abs(an)});
  }
  return {max_err / max_mag, base.clipped_tokens, base.tokens};
}

} // namespace cgrpo::testing
