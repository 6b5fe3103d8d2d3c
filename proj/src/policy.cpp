#include "cgrpo/policy.hpp"

#include "cgrpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cgrpo {

void Table::axpy(double scale, const Table& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw std::invalid_argument("table shape mismatch");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void add_sparse(Table& dst, const SparseGrad& g, double scale) {
  for (const auto& [r, row] : g) {
    auto d = dst.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) d[c] += scale * row[c];
  }
}

std::string to_string(ContextMode m) {
  return m == ContextMode::bigram ? "bigram" : "unigram";
}

ContextMode context_mode_from_string(const std::string& s) {
  if (s == "bigram") return ContextMode::bigram;
  if (s == "unigram") return ContextMode::unigram;
  throw std::invalid_argument("unknown context mode '" + s + "'");
}

PolicyParams PolicyParams::uniform(std::vector<std::string> content_tokens,
                                   std::vector<std::string> variants,
                                   std::size_t max_len, ContextMode mode) {
  PolicyParams p;
  p.context_mode = mode;
  p.vocab = std::move(content_tokens);
  p.vocab.emplace_back(kStopToken);
  p.variants = std::move(variants);
  p.max_len = max_len;
  p.logits = Table(p.n_contexts(), p.vocab.size(), 0.0);
  p.validate();
  return p;
}

std::size_t PolicyParams::variant_index(const std::string& variant) const {
  auto it = std::find(variants.begin(), variants.end(), variant);
  if (it == variants.end()) {
    throw std::invalid_argument("variant '" + variant + "' is not in the policy's context space");
  }
  return static_cast<std::size_t>(it - variants.begin());
}

std::size_t PolicyParams::context_id(std::size_t variant_idx, int last) const {
  const std::size_t slot = context_mode == ContextMode::bigram
                               ? static_cast<std::size_t>(last + 1)
                               : (last < 0 ? 0 : 1);
  return variant_idx * slots_per_variant() + slot;
}

std::size_t PolicyParams::context_of(const PromptRecord& prompt,
                                     std::span<const int> prefix) const {
  return context_id(variant_index(prompt.variant), prefix.empty() ? -1 : prefix.back());
}

int PolicyParams::token_id(const std::string& token) const {
  auto it = std::find(vocab.begin(), vocab.end(), token);
  if (it == vocab.end()) {
    throw std::invalid_argument("token '" + token + "' is out of vocabulary");
  }
  return static_cast<int>(it - vocab.begin());
}

void PolicyParams::validate() const {
  if (vocab.size() < 2) {
    throw std::invalid_argument("policy vocabulary needs a content token and the stop token");
  }
  if (std::count(vocab.begin(), vocab.end(), std::string(kStopToken)) != 1 ||
      vocab.back() != kStopToken) {
    throw std::invalid_argument("vocabulary must end with exactly one stop token");
  }
  if (variants.empty()) {
    throw std::invalid_argument("policy needs at least one variant");
  }
  if (max_len < 1) {
    throw std::invalid_argument("max_len must be at least 1");
  }
  if (logits.rows() != n_contexts() || logits.cols() != vocab.size()) {
    throw std::invalid_argument("logit table shape does not match the context space");
  }
  for (double x : logits.flat()) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite logit");
  }
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double x : logits) s += std::exp(x - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (double& x : out) x = std::exp(x);
  return out;
}

std::vector<Decision> decisions(const PolicyParams& params, const PromptRecord& prompt,
                                const Completion& completion) {
  if (completion.tokens.size() > params.max_len) {
    throw std::invalid_argument("completion longer than max_len");
  }
  const std::size_t v = params.variant_index(prompt.variant);
  std::vector<Decision> out;
  out.reserve(completion.tokens.size() + 1);
  int last = -1;
  for (int tok : completion.tokens) {
    if (tok < 0 || tok >= params.stop_id()) {
      throw std::invalid_argument("completion token id " + std::to_string(tok) +
                                  " is out of vocabulary");
    }
    out.push_back({params.context_id(v, last), tok, false});
    last = tok;
  }
  out.push_back({params.context_id(v, last), params.stop_id(),
                 completion.tokens.size() == params.max_len});
  return out;
}

Completion sample(const PolicyParams& params, const PromptRecord& prompt,
                  std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  const std::size_t v = params.variant_index(prompt.variant);
  Completion c;
  c.prompt_ref = prompt.question_id;
  int last = -1;
  while (true) {
    if (c.tokens.size() == params.max_len) {
      c.logprobs.push_back(0.0);
      break;
    }
    const auto lp = log_softmax(params.logits.row(params.context_id(v, last)));
    const double u = rng.uniform();
    double cum = 0.0;
    int tok = static_cast<int>(lp.size()) - 1;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      cum += std::exp(lp[i]);
      if (u < cum) {
        tok = static_cast<int>(i);
        break;
      }
    }
    c.logprobs.push_back(lp[static_cast<std::size_t>(tok)]);
    if (tok == params.stop_id()) break;
    c.tokens.push_back(tok);
    last = tok;
  }
  return c;
}

std::vector<double> log_prob(const PolicyParams& params, const PromptRecord& prompt,
                             const Completion& completion) {
  std::vector<double> out;
  for (const auto& d : decisions(params, prompt, completion)) {
    if (d.forced) {
      out.push_back(0.0);
      continue;
    }
    out.push_back(log_softmax(params.logits.row(d.context))[static_cast<std::size_t>(d.token)]);
  }
  return out;
}

SparseGrad grad_log_prob(const PolicyParams& params, const PromptRecord& prompt,
                         const Completion& completion) {
  SparseGrad g;
  for (const auto& d : decisions(params, prompt, completion)) {
    if (d.forced) continue;
    const auto p = softmax(params.logits.row(d.context));
    auto& row = g[d.context];
    row.resize(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) row[i] -= p[i];
    row[static_cast<std::size_t>(d.token)] += 1.0;
  }
  return g;
}

double row_kl(std::span<const double> logits_p, std::span<const double> logits_q) {
  const auto lp = log_softmax(logits_p);
  const auto lq = log_softmax(logits_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return std::max(kl, 0.0);
}

void row_kl_grad(std::span<const double> logits_p, std::span<const double> logits_q,
                 std::span<double> out) {
  // d/dz_v sum_u p_u (log p_u - log q_u) = p_v (log p_v - log q_v - KL)
  const auto lp = log_softmax(logits_p);
  const auto lq = log_softmax(logits_q);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  for (std::size_t i = 0; i < lp.size(); ++i) {
    out[i] = std::exp(lp[i]) * (lp[i] - lq[i] - kl);
  }
}

double kl_divergence(const PolicyParams& p, const PolicyParams& q,
                     std::span<const std::size_t> visited_contexts) {
  if (p.vocab != q.vocab || p.logits.rows() != q.logits.rows()) {
    throw std::invalid_argument("kl_divergence needs a shared vocabulary and context space");
  }
  if (visited_contexts.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t c : visited_contexts) sum += row_kl(p.logits.row(c), q.logits.row(c));
  return sum / static_cast<double>(visited_contexts.size());
}

std::vector<std::string> token_strings(const PolicyParams& params, const Completion& c) {
  std::vector<std::string> out;
  out.reserve(c.tokens.size());
  for (int t : c.tokens) out.push_back(params.vocab.at(static_cast<std::size_t>(t)));
  return out;
}

PolicyParams make_demo_policy(const DemoPolicyOptions& opts) {
  if (opts.content_tokens < 1) {
    throw std::invalid_argument("demo policy needs at least one content token");
  }
  if (!(opts.asymmetry >= 0.0 && opts.asymmetry <= 1.0)) {
    throw std::invalid_argument("asymmetry must lie in [0, 1]");
  }
  std::vector<std::string> content;
  for (std::size_t i = 0; i < opts.content_tokens; ++i) {
    content.push_back("t" + std::to_string(i));
  }
  auto p = PolicyParams::uniform(std::move(content), opts.variants, opts.max_len,
                                 opts.context_mode);
  const auto stop = static_cast<std::size_t>(p.stop_id());
  const double bonus = opts.asymmetry * opts.repeat_scale;
  for (std::size_t v = 0; v < p.variants.size(); ++v) {
    for (std::size_t slot = 0; slot < p.slots_per_variant(); ++slot) {
      auto row = p.logits.row(v * p.slots_per_variant() + slot);
      // Stopping before the first token is discouraged.
      row[stop] = slot == 0 ? -opts.repeat_scale : opts.stop_logit;
      if (v != 1) continue;
      if (p.context_mode == ContextMode::bigram) {
        if (slot > 0) row[slot - 1] += bonus; // repeat the previous token
      } else {
        row[0] += bonus; // favour one token throughout
      }
    }
  }
  return p;
}

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  nlohmann::ordered_json j;
  j["format"] = "cgrpo-checkpoint";
  j["version"] = 1;
  j["config_hash"] = ckpt.config_hash;
  j["vocab"] = p.vocab;
  j["variants"] = p.variants;
  j["max_len"] = p.max_len;
  j["context_mode"] = to_string(p.context_mode);
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < p.logits.rows(); ++r) {
    auto row = p.logits.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  j["logits"] = std::move(rows);
  j["meta"] = ckpt.meta;
  return nlohmann::json(j);
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cgrpo-checkpoint") {
      throw CheckpointError("not a cgrpo checkpoint");
    }
    if (j.at("version").get<int>() != 1) {
      throw CheckpointError("unsupported checkpoint version " + j.at("version").dump());
    }
    Checkpoint c;
    c.config_hash = j.at("config_hash").get<std::string>();
    c.params.vocab = j.at("vocab").get<std::vector<std::string>>();
    c.params.variants = j.at("variants").get<std::vector<std::string>>();
    c.params.max_len = j.at("max_len").get<std::size_t>();
    c.params.context_mode = context_mode_from_string(j.at("context_mode").get<std::string>());
    const auto& rows = j.at("logits");
    c.params.logits = Table(rows.size(), c.params.vocab.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (row.size() != c.params.vocab.size()) {
        throw CheckpointError("logit row " + std::to_string(r) + " has the wrong width");
      }
      std::copy(row.begin(), row.end(), c.params.logits.row(r).begin());
    }
    if (j.contains("meta")) c.meta = j.at("meta");
    c.params.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Write-then-rename so an interrupted save never leaves a truncated file.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path.string() + "'");
    out << checkpoint_to_json(ckpt).dump() << '\n';
    if (!out) throw CheckpointError("write failed for '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_hash) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint '" + path.string() + "': " + e.what());
  }
  auto c = checkpoint_from_json(j);
  if (expected_hash && *expected_hash != c.config_hash) {
    throw CheckpointError("config hash mismatch: checkpoint has " + c.config_hash +
                          ", expected " + *expected_hash);
  }
  return c;
}

} // namespace cgrpo
