#pragma once

#include "cgrpo/dataset.hpp"
#include "cgrpo/entropy.hpp"
#include "cgrpo/policy.hpp"
#include "cgrpo/stats.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cgrpo {

inline constexpr double kSignificanceLevel = 0.05;

class EvalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// How responses are pooled for a category-level test.
enum class CategoryUnit { responses, question_means };

std::string to_string(CategoryUnit u);
CategoryUnit category_unit_from_string(const std::string& s);
std::string to_string(TestKind k);
TestKind test_kind_from_string(const std::string& s);

struct EvalOptions {
  std::size_t samples_per_variant = 30;
  std::uint64_t seed = 0;
  Tokenization tokenization = Tokenization::whitespace;
  TestKind test = TestKind::welch;
  CategoryUnit category_unit = CategoryUnit::responses;
  // Sample k of every variant of a question reuses one random stream.
  bool shared_streams = true;
  std::size_t max_resample = 8;
  bool keep_completions = true;
};

struct QuestionResult {
  std::string question_id; // group id, or the category name for aggregates
  std::string category;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  bool degenerate = false;

  double gap() const { return std::abs(mean_a - mean_b); }
};

struct VariantSamples {
  std::string variant;
  std::vector<double> entropies;
  std::vector<std::string> completions; // rendered text, may be empty
};

struct QuestionSamples {
  std::string question_id;
  std::string category;
  VariantSamples a;
  VariantSamples b;
};

struct ConsistencyReport {
  std::string model_tag;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t samples_per_variant = 0;
  std::string tokenization = "whitespace";
  std::string test = "welch";
  std::string category_unit = "responses";
  bool shared_streams = true;
  std::string variant_a;
  std::string variant_b;
  std::vector<QuestionResult> per_question;
  std::vector<QuestionResult> per_category;
  std::vector<QuestionSamples> samples;

  bool any_degenerate() const;
  // Mean over questions of |mean_a - mean_b|.
  double corpus_mean_gap() const;
  double mean_entropy() const;
};

// Aggregates per-question samples into a report. Category results pool
// either every response or the per-question means, per options.category_unit.
ConsistencyReport build_report(std::vector<QuestionSamples> samples, const EvalOptions& options,
                               std::string model_tag, std::string config_hash);

// Samples every question's two variants from a fresh context. The k-th
// sample of every variant of a question shares one random stream, so the
// variants differ only through the prompt.
ConsistencyReport evaluate_model(const PolicyParams& params,
                                 const std::vector<VariantGroup>& corpus,
                                 const EvalOptions& options, std::string model_tag = "before",
                                 std::string config_hash = "");

nlohmann::ordered_json report_to_json(const ConsistencyReport& r);
ConsistencyReport report_from_json(const nlohmann::json& j);
void save_report(const std::filesystem::path& path, const ConsistencyReport& r);
ConsistencyReport load_report(const std::filesystem::path& path);

// Human-readable table: question, variant-A mean, variant-B mean, t-stat, p-val.
std::string format_report_table(const ConsistencyReport& r);

struct ComparisonRow {
  std::string question_id;
  std::string category;
  QuestionResult before;
  QuestionResult after;
  bool abs_t_decreased = false;
  bool significance_removed = false;

  double gap_delta() const { return after.gap() - before.gap(); }
  double t_delta() const { return after.t_stat - before.t_stat; }
};

struct ComparisonTable {
  std::string before_tag;
  std::string after_tag;
  std::string variant_a;
  std::string variant_b;
  std::vector<ComparisonRow> rows;
  std::vector<ComparisonRow> category_rows;
  std::size_t n_abs_t_decreased = 0;
  std::size_t n_significance_removed = 0;
  double mean_gap_before = 0.0;
  double mean_gap_after = 0.0;
};

// Pairs rows by question id; both reports must cover the same questions.
ComparisonTable compare_reports(const ConsistencyReport& before, const ConsistencyReport& after);

enum class ReportFormat { text, json, csv };
ReportFormat report_format_from_string(const std::string& s);

nlohmann::ordered_json comparison_to_json(const ComparisonTable& t);
std::string format_comparison(const ComparisonTable& t, ReportFormat format);

// Mean helpfulness of two reports on a shared scale: every response entropy
// of both reports is min-max normalized together, then averaged per report.
struct HelpfulnessPair {
  double before = 0.0;
  double after = 0.0;
};
HelpfulnessPair mean_normalized_helpfulness(const ConsistencyReport& before,
                                            const ConsistencyReport& after);

} // namespace cgrpo
