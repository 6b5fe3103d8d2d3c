#include <doctest.h>

#include "cgrpo/eval.hpp"
#include "cgrpo/grpo.hpp"
#include "fixtures.hpp"

#include <filesystem>
#include <set>

using namespace cgrpo;
using namespace cgrpo::testing;

namespace {

std::vector<VariantGroup> corpus(std::size_t n = 6) {
  return generate_synthetic({.n_groups = n, .seed = 2});
}

PolicyParams demo(double asym) {
  DemoPolicyOptions o;
  o.asymmetry = asym;
  return make_demo_policy(o);
}

QuestionResult row(std::string id, double mean_a, double mean_b, double t, double p) {
  QuestionResult q;
  q.question_id = std::move(id);
  q.category = "jobs";
  q.mean_a = mean_a;
  q.mean_b = mean_b;
  q.t_stat = t;
  q.p_value = p;
  q.n_a = q.n_b = 30;
  return q;
}

ConsistencyReport crafted(std::string tag, std::vector<QuestionResult> rows) {
  ConsistencyReport r;
  r.model_tag = std::move(tag);
  r.variant_a = "A";
  r.variant_b = "B";
  r.per_question = std::move(rows);
  return r;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("every question appears once with the requested sample count") {
  EvalOptions o;
  o.samples_per_variant = 8;
  const auto c = corpus();
  const auto r = evaluate_model(demo(0.5), c, o, "before", "h");
  CHECK(r.model_tag == "before");
  CHECK(r.config_hash == "h");
  REQUIRE(r.per_question.size() == c.size());
  std::set<std::string> ids;
  for (const auto& q : r.per_question) {
    ids.insert(q.question_id);
    CHECK(q.n_a == 8);
    CHECK(q.n_b == 8);
  }
  CHECK(ids.size() == c.size());
  CHECK(r.per_category.size() == 2);
}

TEST_CASE("logged completions reproduce the reported entropies and means") {
  EvalOptions o;
  o.samples_per_variant = 10;
  const auto r = evaluate_model(demo(0.5), corpus(4), o);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& s = r.samples[i];
    REQUIRE(s.a.completions.size() == s.a.entropies.size());
    for (std::size_t k = 0; k < s.a.entropies.size(); ++k) {
      CHECK(text_entropy(s.a.completions[k], Tokenization::whitespace) == s.a.entropies[k]);
      CHECK(text_entropy(s.b.completions[k], Tokenization::whitespace) == s.b.entropies[k]);
    }
    CHECK(r.per_question[i].mean_a == doctest::Approx(mean(s.a.entropies)).epsilon(1e-14));
    const auto t = welch_t_test(s.a.entropies, s.b.entropies);
    CHECK(r.per_question[i].p_value == t.p_value);
  }
}

TEST_CASE("evaluation is deterministic per seed") {
  EvalOptions o;
  o.samples_per_variant = 5;
  const auto a = report_to_json(evaluate_model(demo(0.5), corpus(), o)).dump();
  CHECK(a == report_to_json(evaluate_model(demo(0.5), corpus(), o)).dump());
  o.seed = 1;
  CHECK(a != report_to_json(evaluate_model(demo(0.5), corpus(), o)).dump());
}

TEST_CASE("identical outputs raise the degeneracy flag") {
  auto p = demo(0.0);
  p.max_len = 3;
  for (std::size_t ctx = 0; ctx < p.n_contexts(); ++ctx) p.logits(ctx, 0) = 1e9;
  const auto r = evaluate_model(p, corpus(2), {});
  CHECK(r.any_degenerate());
  for (const auto& q : r.per_question) {
    CHECK(q.degenerate);
    CHECK(std::isnan(q.t_stat));
    CHECK(q.p_value == 1.0);
  }
}

TEST_CASE("disjoint token sets of different richness give a large |t|") {
  // Variant A spreads over five tokens, variant B only ever says t5.
  auto p = PolicyParams::uniform({"t0", "t1", "t2", "t3", "t4", "t5"}, {"A", "B"}, 12,
                                 ContextMode::unigram);
  for (std::size_t s = 0; s < 2; ++s) {
    p.logits(p.context_id(0, s ? 0 : -1), 5) = -30;
    p.logits(p.context_id(1, s ? 0 : -1), 5) = 30;
    p.logits(p.context_id(0, s ? 0 : -1), p.stop_id()) = s ? -1.0 : -30;
    p.logits(p.context_id(1, s ? 0 : -1), p.stop_id()) = s ? 29.0 : -30;
  }
  const auto r = evaluate_model(p, corpus(2), {});
  for (const auto& q : r.per_question) {
    CHECK(!q.degenerate);
    CHECK(q.t_stat > 5.0);
    CHECK(q.p_value < 1e-6);
  }
}

TEST_CASE("corpus with other than two variants is rejected") {
  auto c = corpus(2);
  auto extra = prompt(c[0].group_id, "C", c[0].category());
  extra.text = "hello [C]";
  auto members = c[0].members;
  members.push_back(extra);
  c[0] = make_group(members);
  CHECK_THROWS_AS(evaluate_model(demo(0.5), c, {}), EvalError);
  EvalOptions o;
  o.samples_per_variant = 1;
  CHECK_THROWS(evaluate_model(demo(0.5), corpus(2), o));
}

TEST_CASE("category unit changes the pooled observations") {
  EvalOptions o;
  o.samples_per_variant = 6;
  const auto pooled = evaluate_model(demo(0.5), corpus(8), o);
  for (const auto& c : pooled.per_category) CHECK(c.n_a == 6 * 4);
  o.category_unit = CategoryUnit::question_means;
  const auto means = evaluate_model(demo(0.5), corpus(8), o);
  for (const auto& c : means.per_category) CHECK(c.n_a == 4);
}

TEST_CASE("report JSON round trip, NaN included") {
  auto p = demo(0.5);
  EvalOptions o;
  o.samples_per_variant = 4;
  auto r = evaluate_model(p, corpus(3), o, "after", "abc");
  r.per_question[0].t_stat = std::numeric_limits<double>::quiet_NaN();
  const auto path = std::filesystem::temp_directory_path() / "cgrpo_eval_report.json";
  save_report(path, r);
  const auto back = load_report(path);
  CHECK(std::isnan(back.per_question[0].t_stat));
  CHECK(report_to_json(back).dump() == report_to_json(r).dump());
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_report(path), EvalError);
}

TEST_CASE("comparing a report with itself changes nothing") {
  EvalOptions o;
  o.samples_per_variant = 6;
  const auto r = evaluate_model(demo(0.5), corpus(), o);
  const auto t = compare_reports(r, r);
  CHECK(t.n_abs_t_decreased == 0);
  CHECK(t.n_significance_removed == 0);
  for (const auto& row : t.rows) {
    CHECK(row.gap_delta() == 0.0);
    CHECK(row.t_delta() == 0.0);
  }
}

TEST_CASE("a row that loses significance is flagged and counted") {
  const auto before = crafted("before", {row("q1", 1.1, 1.4, -2.0216, 0.0461),
                                         row("q2", 1.2, 1.25, -0.5, 0.61)});
  const auto after = crafted("after", {row("q1", 1.3, 1.35, -0.6505, 0.5169),
                                       row("q2", 1.2, 1.3, -0.9, 0.37)});
  const auto t = compare_reports(before, after);
  CHECK(t.n_significance_removed == 1);
  CHECK(t.n_abs_t_decreased == 1);
  CHECK(t.rows[0].significance_removed);
  CHECK(!t.rows[1].significance_removed);

  const auto json = comparison_to_json(t);
  CHECK(json["summary"]["significance_removed"] == 1);
  CHECK(format_comparison(t, ReportFormat::csv).find("q1") != std::string::npos);
  CHECK(format_comparison(t, ReportFormat::text).find("significance removed") != std::string::npos);
}

TEST_CASE("mismatched question sets are reported") {
  const auto a = crafted("before", {row("q1", 1, 1, 0, 1), row("q2", 1, 1, 0, 1)});
  const auto b = crafted("after", {row("q1", 1, 1, 0, 1), row("q3", 1, 1, 0, 1)});
  try {
    compare_reports(a, b);
    FAIL("expected EvalError");
  } catch (const EvalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("q2") != std::string::npos);
    CHECK(msg.find("q3") != std::string::npos);
  }
  CHECK_THROWS(report_format_from_string("xml"));
}

TEST_CASE("helpfulness normalized on a shared scale") {
  ConsistencyReport before, after;
  before.samples.push_back({"q", "jobs", {"A", {0.0, 1.0}, {}}, {"B", {1.0, 2.0}, {}}});
  after.samples.push_back({"q", "jobs", {"A", {2.0, 2.0}, {}}, {"B", {2.0, 2.0}, {}}});
  const auto h = mean_normalized_helpfulness(before, after);
  CHECK(h.before == doctest::Approx(0.5));
  CHECK(h.after == doctest::Approx(1.0));
  CHECK_THROWS_AS(mean_normalized_helpfulness(before, ConsistencyReport{}), EvalError);
}

TEST_CASE("human-readable table lists every question") {
  EvalOptions o;
  o.samples_per_variant = 3;
  const auto r = evaluate_model(demo(0.5), corpus(3), o);
  const auto table = format_report_table(r);
  for (const auto& q : r.per_question) CHECK(table.find(q.question_id) != std::string::npos);
}

}
