#include "commands.hpp"

#include "cgrpo/config.hpp"
#include "cgrpo/dataset.hpp"
#include "cgrpo/digest.hpp"
#include "cgrpo/eval.hpp"
#include "cgrpo/grpo.hpp"
#include "cgrpo/policy.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace cgrpo::cli {

namespace {

// Input or configuration the user can fix: exit code 1.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string checkpoint_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt-%06llu.json", static_cast<unsigned long long>(step));
  return buf;
}

std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> r;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      r.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("invalid ratio '" + item + "'");
    }
  }
  if (r.size() != 3) throw UsageError("--ratios needs three comma-separated fractions");
  return r;
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::size_t n_groups = 50;
  std::size_t vocab_size = 16;
  double bias = 0.5;
  std::uint64_t seed = 0;
  std::string out;
  std::string ratios = "0.8,0.1,0.1";
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  SyntheticOptions opts;
  opts.n_groups = a.n_groups;
  opts.vocab_size = a.vocab_size;
  opts.bias = a.bias;
  opts.seed = a.seed;
  const auto r = parse_ratios(a.ratios);
  auto groups = generate_synthetic(opts);
  if (r[0] < 1.0) {
    auto s = split_corpus(std::move(groups), {r[0], r[1], r[2]}, a.seed);
    groups = std::move(s.train);
    groups.insert(groups.end(), s.validation.begin(), s.validation.end());
    groups.insert(groups.end(), s.test.begin(), s.test.end());
    std::sort(groups.begin(), groups.end(),
              [](const auto& x, const auto& y) { return x.group_id < y.group_id; });
  }
  write_corpus(fs::path(a.out), groups);
  std::size_t records = 0;
  for (const auto& g : groups) records += g.members.size();
  out << "wrote " << a.out << ": " << groups.size() << " groups, 2 variants per group, "
      << records << " records\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_steps;
  bool resume = false;
};

RunConfig load_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_config(path);
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  std::optional<fs::path> best;
  if (!fs::exists(dir)) return best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("ckpt-", 0) == 0 && e.path().extension() == ".json") {
      if (!best || name > best->filename().string()) best = e.path();
    }
  }
  return best;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_or_default(a.config);
  if (a.seed) {
    cfg.grpo.seed = *a.seed;
    cfg.eval.seed = *a.seed;
  }
  if (a.max_steps) cfg.grpo.max_steps = *a.max_steps;
  cfg.validate();

  const auto corpus = load_corpus(a.data);
  const auto train_groups = select_split(corpus, Split::train);
  if (train_groups.empty()) throw UsageError("corpus '" + a.data + "' has no train split");

  const std::string corpus_digest = sha256_file(a.data);
  const auto resolved = config_to_json(cfg);
  const std::string hash = config_hash(cfg);
  const std::string run_id =
      "run-" + sha256_hex(resolved.dump() + corpus_digest).substr(0, 12);

  fs::path run_dir = a.out_dir;
  if (run_dir.empty()) {
    const char* env = std::getenv(kRunDirEnv);
    run_dir = fs::path(env ? env : "runs") / run_id;
  }
  const fs::path ckpt_dir = run_dir / "checkpoints";
  const fs::path log_path = run_dir / "training_log.jsonl";
  fs::create_directories(ckpt_dir);
  write_json(run_dir / "config.json", resolved);

  nlohmann::ordered_json manifest;
  manifest["run_id"] = run_id;
  manifest["status"] = "running";
  manifest["config"] = resolved;
  manifest["config_hash"] = hash;
  manifest["corpus"] = {{"path", a.data}, {"digest", corpus_digest},
                        {"groups", corpus.size()}, {"train_groups", train_groups.size()}};
  manifest["seed"] = cfg.grpo.seed;
  manifest["artifacts"] = {{"config", "config.json"},
                           {"checkpoints", "checkpoints"},
                           {"training_log", "training_log.jsonl"}};
  manifest["started_at"] = utc_now();
  manifest["resumed"] = a.resume;
  write_json(run_dir / "manifest.json", manifest);

  PolicyParams params;
  PolicyParams ref;
  std::uint64_t start_step = 0;
  TrainingLog kept;
  const fs::path initial = ckpt_dir / checkpoint_name(0);
  auto latest = latest_checkpoint(ckpt_dir);
  if (a.resume && latest) {
    const auto ckpt = load_checkpoint(*latest, hash);
    params = ckpt.params;
    ref = load_checkpoint(initial, hash).params;
    start_step = ckpt.meta.value("step", std::uint64_t{0});
    if (std::ifstream in(log_path); in) {
      for (const auto& m : read_training_log(in)) {
        if (m.step < start_step) kept.push_back(m);
      }
    }
    out << "resuming " << run_id << " from " << latest->filename().string() << " (step "
        << start_step << ")\n";
  } else {
    const double asym = cfg.policy.asymmetry ? *cfg.policy.asymmetry : corpus_bias(corpus);
    params = make_demo_policy(demo_policy_options(cfg.policy, asym));
    ref = params;
    save_checkpoint(initial, {params, hash, {{"step", 0}}});
  }

  std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write '" + log_path.string() + "'");
  write_training_log(log, kept);
  log.flush();

  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m, const PolicyParams& p) {
    log << to_json(m).dump() << '\n';
    log.flush();
    const std::uint64_t done = m.step + 1;
    if (cfg.checkpoint_every && done % cfg.checkpoint_every == 0) {
      save_checkpoint(ckpt_dir / checkpoint_name(done), {p, hash, {{"step", done}}});
    }
  };
  const auto result = train(params, train_groups, cfg.grpo, hooks, start_step, ref);
  const std::uint64_t final_step = std::max<std::uint64_t>(start_step, cfg.grpo.max_steps);
  const fs::path final_ckpt = ckpt_dir / checkpoint_name(final_step);
  save_checkpoint(final_ckpt, {result.params, hash, {{"step", final_step}}});

  manifest["status"] = "completed";
  manifest["finished_at"] = utc_now();
  manifest["steps"] = final_step;
  manifest["artifacts"]["initial_checkpoint"] = fs::relative(initial, run_dir).string();
  manifest["artifacts"]["final_checkpoint"] = fs::relative(final_ckpt, run_dir).string();
  write_json(run_dir / "manifest.json", manifest);

  out << "run " << run_id << ": " << (final_step - start_step) << " steps, final checkpoint "
      << final_ckpt.string() << '\n';
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    out << "last step: mean_reward " << last.mean_reward << ", mean_entropy_gap "
        << last.mean_entropy_gap << ", kl " << last.kl << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string config;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;
  std::string tag = "before";
  std::string out;
  std::string table_out;
  std::string split = "all";
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  // A checkpoint inside a run directory is evaluated under that run's config
  // unless one is given explicitly.
  std::string config_path = a.config;
  if (config_path.empty()) {
    const auto sibling = fs::path(a.checkpoint).parent_path().parent_path() / "config.json";
    if (fs::exists(sibling)) config_path = sibling.string();
  }
  RunConfig cfg = load_or_default(config_path);
  if (a.samples) cfg.eval.samples_per_variant = *a.samples;
  if (a.seed) cfg.eval.seed = *a.seed;
  cfg.validate();

  const std::string hash = config_hash(cfg);
  const auto ckpt = load_checkpoint(a.checkpoint, hash);
  auto corpus = load_corpus(a.data);
  if (a.split != "all") {
    corpus = select_split(corpus, split_from_string(a.split));
    if (corpus.empty()) throw UsageError("corpus has no '" + a.split + "' split");
  }

  const auto report = evaluate_model(ckpt.params, corpus, cfg.eval, a.tag, hash);
  save_report(a.out, report);
  if (!a.table_out.empty()) {
    std::ofstream t(a.table_out);
    if (!t) throw std::runtime_error("cannot write '" + a.table_out + "'");
    t << format_report_table(report);
  }
  out << "wrote " << a.out << " (" << report.per_question.size() << " questions, tag '"
      << a.tag << "', corpus mean entropy gap " << report.corpus_mean_gap() << ")\n";
  for (const auto& c : report.per_category) {
    out << "  " << c.question_id << ": " << report.variant_a << " " << c.mean_a << ", "
        << report.variant_b << " " << c.mean_b << ", t " << c.t_stat << ", p " << c.p_value
        << '\n';
  }
  if (report.any_degenerate()) {
    out << "degeneracy flag raised: some question has zero variance in both variants\n";
    return kDegenerate;
  }
  return kOk;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  std::string before;
  std::string after;
  std::string out;
  std::string format = "text";
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  const auto before = load_report(a.before);
  const auto after = load_report(a.after);
  ComparisonTable table;
  try {
    table = compare_reports(before, after);
  } catch (const EvalError& e) {
    throw UsageError(e.what());
  }
  const auto text = format_comparison(table, report_format_from_string(a.format));
  std::ofstream o(a.out, std::ios::binary);
  if (!o) throw std::runtime_error("cannot write '" + a.out + "'");
  o << text;
  out << "wrote " << a.out << ": " << table.rows.size() << " questions, "
      << table.n_abs_t_decreased << " with reduced |t|, " << table.n_significance_removed
      << " with significance removed\n";
  return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRPO consistency training for variant-group prompts"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic variant-group corpus");
  g->add_option("--n-groups", gen.n_groups, "Number of groups")->check(CLI::PositiveNumber);
  g->add_option("--vocab-size", gen.vocab_size, "Prompt vocabulary size (>= 2)");
  g->add_option("--bias", gen.bias, "Initial-policy asymmetry recorded in the corpus")
      ->check(CLI::Range(0.0, 1.0));
  g->add_option("--seed", gen.seed, "Root seed");
  g->add_option("--ratios", gen.ratios, "train,validation,test fractions");
  g->add_option("--out", gen.out, "Output corpus path")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Run GRPO training");
  t->add_option("--config", tr.config, "JSON config file");
  t->add_option("--data", tr.data, "Corpus path")->required();
  t->add_option("--out-dir", tr.out_dir,
                std::string("Run directory (default: $") + kRunDirEnv + "/<run id>)");
  t->add_option("--seed", tr.seed, "Override the root seed");
  t->add_option("--max-steps", tr.max_steps, "Override grpo.max_steps");
  t->add_flag("--resume", tr.resume, "Continue from the run directory's last checkpoint");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint's consistency");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Corpus path")->required();
  e->add_option("--config", ev.config, "JSON config (default: the run's config.json)");
  e->add_option("--samples", ev.samples, "Samples per variant");
  e->add_option("--seed", ev.seed, "Evaluation seed");
  e->add_option("--tag", ev.tag, "Model tag, e.g. before / after");
  e->add_option("--split", ev.split, "Corpus split to evaluate")
      ->check(CLI::IsMember({"all", "train", "validation", "test"}));
  e->add_option("--out", ev.out, "Report path (JSON)")->required();
  e->add_option("--table-out", ev.table_out, "Also write a human-readable table");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Compare a before and an after report");
  r->add_option("--before", rp.before, "Report before training")->required();
  r->add_option("--after", rp.after, "Report after training")->required();
  r->add_option("--out", rp.out, "Output path")->required();
  r->add_option("--format", rp.format, "text, json or csv")
      ->check(CLI::IsMember({"text", "json", "csv"}));

  std::vector<char*> argv;
  std::vector<std::string> storage = args;
  for (auto& s : storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(tr, out);
    if (*e) return cmd_eval(ev, out);
    if (*r) return cmd_report(rp, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const CorpusError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const CheckpointError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

} // namespace cgrpo::cli
