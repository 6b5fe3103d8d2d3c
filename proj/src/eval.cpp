#include "cgrpo/eval.hpp"

#include "cgrpo/grpo.hpp"
#include "cgrpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace cgrpo {

namespace {

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

QuestionResult test_samples(std::string id, std::string category,
                            std::span<const double> a, std::span<const double> b,
                            TestKind kind) {
  QuestionResult q;
  q.question_id = std::move(id);
  q.category = std::move(category);
  q.mean_a = mean(a);
  q.mean_b = mean(b);
  q.n_a = a.size();
  q.n_b = b.size();
  const auto t = t_test(a, b, kind);
  q.t_stat = t.t_stat;
  q.p_value = t.p_value;
  q.df = t.df;
  q.degenerate = t.degenerate;
  return q;
}

nlohmann::ordered_json result_to_json(const QuestionResult& q) {
  nlohmann::ordered_json j;
  j["question_id"] = q.question_id;
  j["category"] = q.category;
  j["mean_a"] = q.mean_a;
  j["mean_b"] = q.mean_b;
  j["t_stat"] = number_or_null(q.t_stat);
  j["p_value"] = q.p_value;
  j["df"] = number_or_null(q.df);
  j["n_a"] = q.n_a;
  j["n_b"] = q.n_b;
  j["degenerate"] = q.degenerate;
  return j;
}

QuestionResult result_from_json(const nlohmann::json& j) {
  QuestionResult q;
  q.question_id = j.at("question_id").get<std::string>();
  q.category = j.at("category").get<std::string>();
  q.mean_a = j.at("mean_a").get<double>();
  q.mean_b = j.at("mean_b").get<double>();
  q.t_stat = number_from(j.at("t_stat"));
  q.p_value = j.at("p_value").get<double>();
  q.df = number_from(j.at("df"));
  q.n_a = j.at("n_a").get<std::size_t>();
  q.n_b = j.at("n_b").get<std::size_t>();
  q.degenerate = j.at("degenerate").get<bool>();
  return q;
}

std::string fixed(double x, int prec = 4) {
  if (std::isnan(x)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty()) s.push_back(' ');
    s += t;
  }
  return s;
}

std::string truncate(const std::string& s, std::size_t width) {
  return s.size() <= width ? s : s.substr(0, width - 3) + "...";
}

} // namespace

std::string to_string(CategoryUnit u) {
  return u == CategoryUnit::responses ? "responses" : "question_means";
}

CategoryUnit category_unit_from_string(const std::string& s) {
  if (s == "responses") return CategoryUnit::responses;
  if (s == "question_means") return CategoryUnit::question_means;
  throw std::invalid_argument("unknown category unit '" + s + "'");
}

std::string to_string(TestKind k) { return k == TestKind::welch ? "welch" : "student"; }

TestKind test_kind_from_string(const std::string& s) {
  if (s == "welch") return TestKind::welch;
  if (s == "student") return TestKind::student;
  throw std::invalid_argument("unknown test '" + s + "'");
}

bool ConsistencyReport::any_degenerate() const {
  auto deg = [](const QuestionResult& q) { return q.degenerate; };
  return std::any_of(per_question.begin(), per_question.end(), deg) ||
         std::any_of(per_category.begin(), per_category.end(), deg);
}

double ConsistencyReport::corpus_mean_gap() const {
  if (per_question.empty()) return 0.0;
  double s = 0.0;
  for (const auto& q : per_question) s += q.gap();
  return s / static_cast<double>(per_question.size());
}

double ConsistencyReport::mean_entropy() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& q : samples) {
    for (double h : q.a.entropies) s += h, ++n;
    for (double h : q.b.entropies) s += h, ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

ConsistencyReport build_report(std::vector<QuestionSamples> samples, const EvalOptions& options,
                               std::string model_tag, std::string config_hash) {
  ConsistencyReport r;
  r.model_tag = std::move(model_tag);
  r.config_hash = std::move(config_hash);
  r.seed = options.seed;
  r.samples_per_variant = options.samples_per_variant;
  r.tokenization = to_string(options.tokenization);
  r.test = to_string(options.test);
  r.category_unit = to_string(options.category_unit);
  r.shared_streams = options.shared_streams;
  if (!samples.empty()) {
    r.variant_a = samples.front().a.variant;
    r.variant_b = samples.front().b.variant;
  }

  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> pooled;
  for (const auto& q : samples) {
    r.per_question.push_back(
        test_samples(q.question_id, q.category, q.a.entropies, q.b.entropies, options.test));
    auto& [pa, pb] = pooled[q.category];
    if (options.category_unit == CategoryUnit::responses) {
      pa.insert(pa.end(), q.a.entropies.begin(), q.a.entropies.end());
      pb.insert(pb.end(), q.b.entropies.begin(), q.b.entropies.end());
    } else {
      pa.push_back(r.per_question.back().mean_a);
      pb.push_back(r.per_question.back().mean_b);
    }
  }
  for (const auto& [cat, ab] : pooled) {
    if (ab.first.size() < 2 || ab.second.size() < 2) {
      throw EvalError("category '" + cat + "' has too few observations for a t-test");
    }
    r.per_category.push_back(test_samples(cat, cat, ab.first, ab.second, options.test));
  }
  r.samples = std::move(samples);
  return r;
}

ConsistencyReport evaluate_model(const PolicyParams& params,
                                 const std::vector<VariantGroup>& corpus,
                                 const EvalOptions& options, std::string model_tag,
                                 std::string config_hash) {
  if (options.samples_per_variant < 2) {
    throw std::invalid_argument("samples_per_variant must be at least 2");
  }
  if (corpus.empty()) {
    throw std::invalid_argument("evaluation corpus is empty");
  }

  std::vector<std::string> labels;
  std::vector<QuestionSamples> all;
  for (const auto& g : corpus) {
    auto glabels = g.variant_labels();
    std::sort(glabels.begin(), glabels.end());
    if (glabels.size() != 2) {
      throw EvalError("group '" + g.group_id + "' has " + std::to_string(glabels.size()) +
                      " variants; evaluation compares exactly two");
    }
    if (labels.empty()) {
      labels = glabels;
    } else if (labels != glabels) {
      throw EvalError("group '" + g.group_id + "' uses variants " + glabels[0] + "/" +
                      glabels[1] + " but the corpus uses " + labels[0] + "/" + labels[1]);
    }

    QuestionSamples qs;
    qs.question_id = g.group_id;
    qs.category = g.category();
    qs.a.variant = labels[0];
    qs.b.variant = labels[1];
    const std::uint64_t qseed = derive_seed(options.seed, "eval:" + g.group_id);

    for (const auto& member : g.members) {
      const std::string stream =
          options.shared_streams ? std::string("sample") : "sample:" + member.variant;
      VariantSamples& dst = member.variant == labels[0] ? qs.a : qs.b;
      for (std::size_t s = 0; s < options.samples_per_variant; ++s) {
        bool ok = false;
        for (std::size_t attempt = 0; attempt <= options.max_resample && !ok; ++attempt) {
          // Fresh context per sample: nothing carries over between calls.
          auto c = sample(params, member, derive_seed(qseed, stream, {s, attempt}));
          if (c.tokens.empty()) continue;
          dst.entropies.push_back(completion_entropy(params, c, options.tokenization));
          if (options.keep_completions) dst.completions.push_back(join_tokens(token_strings(params, c)));
          ok = true;
        }
        if (!ok) {
          throw EvalError("no non-empty completion for '" + member.question_id + "' after " +
                          std::to_string(options.max_resample) + " resamples");
        }
      }
    }
    all.push_back(std::move(qs));
  }
  return build_report(std::move(all), options, std::move(model_tag), std::move(config_hash));
}

nlohmann::ordered_json report_to_json(const ConsistencyReport& r) {
  nlohmann::ordered_json j;
  j["format"] = "cgrpo-report";
  j["version"] = 1;
  j["model_tag"] = r.model_tag;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.seed;
  j["samples_per_variant"] = r.samples_per_variant;
  j["tokenization"] = r.tokenization;
  j["test"] = r.test;
  j["category_unit"] = r.category_unit;
  j["shared_streams"] = r.shared_streams;
  j["variant_a"] = r.variant_a;
  j["variant_b"] = r.variant_b;
  j["degenerate"] = r.any_degenerate();
  j["corpus_mean_gap"] = r.corpus_mean_gap();
  j["mean_entropy"] = r.mean_entropy();
  auto pq = nlohmann::ordered_json::array();
  for (const auto& q : r.per_question) pq.push_back(result_to_json(q));
  j["per_question"] = std::move(pq);
  auto pc = nlohmann::ordered_json::array();
  for (const auto& q : r.per_category) pc.push_back(result_to_json(q));
  j["per_category"] = std::move(pc);
  auto ss = nlohmann::ordered_json::array();
  for (const auto& q : r.samples) {
    nlohmann::ordered_json s;
    s["question_id"] = q.question_id;
    s["category"] = q.category;
    for (const auto* v : {&q.a, &q.b}) {
      nlohmann::ordered_json vs;
      vs["variant"] = v->variant;
      vs["entropies"] = v->entropies;
      vs["completions"] = v->completions;
      s[v == &q.a ? "a" : "b"] = std::move(vs);
    }
    ss.push_back(std::move(s));
  }
  j["samples"] = std::move(ss);
  return j;
}

ConsistencyReport report_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "cgrpo-report") throw EvalError("not a cgrpo report");
    ConsistencyReport r;
    r.model_tag = j.at("model_tag").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.samples_per_variant = j.at("samples_per_variant").get<std::size_t>();
    r.tokenization = j.at("tokenization").get<std::string>();
    r.test = j.at("test").get<std::string>();
    r.category_unit = j.at("category_unit").get<std::string>();
    r.shared_streams = j.value("shared_streams", true);
    r.variant_a = j.at("variant_a").get<std::string>();
    r.variant_b = j.at("variant_b").get<std::string>();
    for (const auto& q : j.at("per_question")) r.per_question.push_back(result_from_json(q));
    for (const auto& q : j.at("per_category")) r.per_category.push_back(result_from_json(q));
    for (const auto& s : j.at("samples")) {
      QuestionSamples q;
      q.question_id = s.at("question_id").get<std::string>();
      q.category = s.at("category").get<std::string>();
      for (auto* v : {&q.a, &q.b}) {
        const auto& vs = s.at(v == &q.a ? "a" : "b");
        v->variant = vs.at("variant").get<std::string>();
        v->entropies = vs.at("entropies").get<std::vector<double>>();
        v->completions = vs.at("completions").get<std::vector<std::string>>();
      }
      r.samples.push_back(std::move(q));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw EvalError(std::string("malformed report: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const ConsistencyReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EvalError("cannot write report '" + path.string() + "'");
  out << report_to_json(r).dump(1) << '\n';
}

ConsistencyReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot open report '" + path.string() + "'");
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw EvalError("malformed report '" + path.string() + "': " + e.what());
  }
}

std::string format_report_table(const ConsistencyReport& r) {
  std::ostringstream os;
  auto emit = [&](const std::vector<QuestionResult>& rows, const char* title) {
    os << title << " (model: " << r.model_tag << ")\n";
    os << std::left << std::setw(28) << "Question" << std::right << std::setw(12)
       << (r.variant_a + " Mean") << std::setw(12) << (r.variant_b + " Mean") << std::setw(10)
       << "t-stat" << std::setw(10) << "p-val" << '\n';
    for (const auto& q : rows) {
      os << std::left << std::setw(28) << truncate(q.question_id, 27) << std::right
         << std::setw(12) << fixed(q.mean_a) << std::setw(12) << fixed(q.mean_b)
         << std::setw(10) << fixed(q.t_stat) << std::setw(10) << fixed(q.p_value)
         << (q.degenerate ? "  DEGENERATE" : "") << '\n';
    }
    os << '\n';
  };
  emit(r.per_category, "Category-level results");
  emit(r.per_question, "Question-level results");
  return os.str();
}

ComparisonTable compare_reports(const ConsistencyReport& before, const ConsistencyReport& after) {
  std::set<std::string> qb, qa;
  for (const auto& q : before.per_question) qb.insert(q.question_id);
  for (const auto& q : after.per_question) qa.insert(q.question_id);
  if (qb != qa || before.per_question.size() != after.per_question.size()) {
    std::ostringstream os;
    os << "question sets differ;";
    for (const auto& q : qb) {
      if (!qa.count(q)) os << " only in before: " << q << ";";
    }
    for (const auto& q : qa) {
      if (!qb.count(q)) os << " only in after: " << q << ";";
    }
    throw EvalError(os.str());
  }

  auto make_row = [](const QuestionResult& b, const QuestionResult& a) {
    ComparisonRow row;
    row.question_id = b.question_id;
    row.category = b.category;
    row.before = b;
    row.after = a;
    row.abs_t_decreased = std::abs(a.t_stat) < std::abs(b.t_stat);
    row.significance_removed =
        b.p_value < kSignificanceLevel && !(a.p_value < kSignificanceLevel);
    return row;
  };

  ComparisonTable t;
  t.before_tag = before.model_tag;
  t.after_tag = after.model_tag;
  t.variant_a = before.variant_a;
  t.variant_b = before.variant_b;
  std::map<std::string, const QuestionResult*> after_by_id;
  for (const auto& q : after.per_question) after_by_id[q.question_id] = &q;
  for (const auto& b : before.per_question) {
    t.rows.push_back(make_row(b, *after_by_id.at(b.question_id)));
    t.n_abs_t_decreased += t.rows.back().abs_t_decreased;
    t.n_significance_removed += t.rows.back().significance_removed;
  }
  std::map<std::string, const QuestionResult*> after_cat;
  for (const auto& q : after.per_category) after_cat[q.question_id] = &q;
  for (const auto& b : before.per_category) {
    auto it = after_cat.find(b.question_id);
    if (it != after_cat.end()) t.category_rows.push_back(make_row(b, *it->second));
  }
  t.mean_gap_before = before.corpus_mean_gap();
  t.mean_gap_after = after.corpus_mean_gap();
  return t;
}

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "text") return ReportFormat::text;
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw std::invalid_argument("unsupported report format '" + s + "'");
}

nlohmann::ordered_json comparison_to_json(const ComparisonTable& t) {
  auto rows_json = [](const std::vector<ComparisonRow>& rows) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["question_id"] = r.question_id;
      j["category"] = r.category;
      j["before"] = result_to_json(r.before);
      j["after"] = result_to_json(r.after);
      j["gap_delta"] = r.gap_delta();
      j["t_delta"] = number_or_null(r.t_delta());
      j["abs_t_decreased"] = r.abs_t_decreased;
      j["significance_removed"] = r.significance_removed;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  nlohmann::ordered_json j;
  j["format"] = "cgrpo-comparison";
  j["before_tag"] = t.before_tag;
  j["after_tag"] = t.after_tag;
  j["variant_a"] = t.variant_a;
  j["variant_b"] = t.variant_b;
  j["summary"] = {{"questions", t.rows.size()},
                  {"abs_t_decreased", t.n_abs_t_decreased},
                  {"significance_removed", t.n_significance_removed},
                  {"mean_gap_before", t.mean_gap_before},
                  {"mean_gap_after", t.mean_gap_after}};
  j["categories"] = rows_json(t.category_rows);
  j["questions"] = rows_json(t.rows);
  // Plot-ready series: entropy gap per question before and after.
  nlohmann::ordered_json series;
  std::vector<std::string> ids;
  std::vector<double> gb, ga;
  for (const auto& r : t.rows) {
    ids.push_back(r.question_id);
    gb.push_back(r.before.gap());
    ga.push_back(r.after.gap());
  }
  series["question"] = ids;
  series["gap_before"] = gb;
  series["gap_after"] = ga;
  j["series"] = std::move(series);
  return j;
}

std::string format_comparison(const ComparisonTable& t, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::json) {
    os << comparison_to_json(t).dump(1) << '\n';
    return os.str();
  }
  if (format == ReportFormat::csv) {
    os << "question,category,before_mean_" << t.variant_a << ",before_mean_" << t.variant_b
       << ",before_t,before_p,after_mean_" << t.variant_a << ",after_mean_" << t.variant_b
       << ",after_t,after_p,gap_before,gap_after,abs_t_decreased,significance_removed\n";
    for (const auto& r : t.rows) {
      os << r.question_id << ',' << r.category << ',' << fixed(r.before.mean_a, 6) << ','
         << fixed(r.before.mean_b, 6) << ',' << fixed(r.before.t_stat, 6) << ','
         << fixed(r.before.p_value, 6) << ',' << fixed(r.after.mean_a, 6) << ','
         << fixed(r.after.mean_b, 6) << ',' << fixed(r.after.t_stat, 6) << ','
         << fixed(r.after.p_value, 6) << ',' << fixed(r.before.gap(), 6) << ','
         << fixed(r.after.gap(), 6) << ',' << r.abs_t_decreased << ','
         << r.significance_removed << '\n';
    }
    return os.str();
  }

  auto emit = [&](const std::vector<ComparisonRow>& rows, const char* title) {
    os << title << '\n';
    os << std::left << std::setw(24) << "Question" << std::right << std::setw(44)
       << ("Before (" + t.before_tag + ")") << std::setw(44) << ("After (" + t.after_tag + ")")
       << '\n';
    os << std::left << std::setw(24) << "";
    for (int k = 0; k < 2; ++k) {
      os << std::right << std::setw(11) << (t.variant_a + " Mean") << std::setw(11)
         << (t.variant_b + " Mean") << std::setw(11) << "t-stat" << std::setw(11) << "p-val";
    }
    os << '\n';
    for (const auto& r : rows) {
      os << std::left << std::setw(24) << truncate(r.question_id, 23) << std::right;
      for (const auto* q : {&r.before, &r.after}) {
        os << std::setw(11) << fixed(q->mean_a) << std::setw(11) << fixed(q->mean_b)
           << std::setw(11) << fixed(q->t_stat) << std::setw(11) << fixed(q->p_value);
      }
      if (r.significance_removed) os << "  significance removed";
      os << '\n';
    }
    os << '\n';
  };
  emit(t.category_rows, "Category-level comparison");
  emit(t.rows, "Question-level comparison");
  os << "questions: " << t.rows.size() << '\n'
     << "rows with reduced |t|: " << t.n_abs_t_decreased << '\n'
     << "rows with significance removed: " << t.n_significance_removed << '\n'
     << "mean entropy gap before: " << fixed(t.mean_gap_before, 6) << '\n'
     << "mean entropy gap after: " << fixed(t.mean_gap_after, 6) << '\n';
  return os.str();
}

HelpfulnessPair mean_normalized_helpfulness(const ConsistencyReport& before,
                                            const ConsistencyReport& after) {
  std::vector<double> pooled;
  std::size_t n_before = 0;
  for (const auto* r : {&before, &after}) {
    for (const auto& q : r->samples) {
      pooled.insert(pooled.end(), q.a.entropies.begin(), q.a.entropies.end());
      pooled.insert(pooled.end(), q.b.entropies.begin(), q.b.entropies.end());
    }
    if (r == &before) n_before = pooled.size();
  }
  if (n_before == 0 || pooled.size() == n_before) {
    throw EvalError("reports carry no response entropies");
  }
  const auto norm = normalize_entropies(pooled);
  HelpfulnessPair h;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    (i < n_before ? h.before : h.after) += norm[i];
  }
  h.before /= static_cast<double>(n_before);
  h.after /= static_cast<double>(norm.size() - n_before);
  return h;
}

} // namespace cgrpo
