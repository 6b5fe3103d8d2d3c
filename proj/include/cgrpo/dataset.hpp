#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cgrpo {

enum class Split { train, validation, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

using IndexPair = std::pair<std::size_t, std::size_t>;

struct PromptRecord {
  std::string question_id;
  std::string group_id;
  std::string variant;
  std::string category;
  std::string text;
  Split split = Split::train;
  // Fields beyond the six known ones, carried through a load/write cycle.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const PromptRecord&) const = default;
};

// A set of semantically equivalent prompts that differ only in one attribute.
struct VariantGroup {
  std::string group_id;
  std::vector<PromptRecord> members;
  std::vector<IndexPair> pairing;

  const std::string& category() const { return members.front().category; }
  Split split() const { return members.front().split; }
  // Distinct variant labels in first-appearance order.
  std::vector<std::string> variant_labels() const;

  bool operator==(const VariantGroup&) const = default;
};

class CorpusError : public std::runtime_error {
public:
  explicit CorpusError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what
                                : what),
        line_(line) {}
  // 1-based line number, 0 when the error is not tied to a single line.
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// Pairs every member with every later member of a different variant.
std::vector<IndexPair> cross_variant_pairing(
    const std::vector<PromptRecord>& members);

// Builds a group and checks its invariants. Pairing defaults to
// cross_variant_pairing when empty.
VariantGroup make_group(std::vector<PromptRecord> members,
                        std::vector<IndexPair> pairing = {});

PromptRecord record_from_json(const nlohmann::json& j);
nlohmann::ordered_json record_to_json(const PromptRecord& r);

// Groups come back sorted by group_id; members keep file order.
std::vector<VariantGroup> parse_corpus(std::istream& in);
std::vector<VariantGroup> load_corpus(const std::filesystem::path& path);

void write_corpus(std::ostream& out, const std::vector<VariantGroup>& groups);
void write_corpus(const std::filesystem::path& path,
                  const std::vector<VariantGroup>& groups);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct CorpusSplits {
  std::vector<VariantGroup> train;
  std::vector<VariantGroup> validation;
  std::vector<VariantGroup> test;
};

// Assigns whole groups to splits; members' split field is rewritten to match.
CorpusSplits split_corpus(std::vector<VariantGroup> groups, SplitRatios ratios,
                          std::uint64_t seed);

std::vector<VariantGroup> select_split(const std::vector<VariantGroup>& groups,
                                       Split split);

struct SyntheticOptions {
  std::size_t n_groups = 50;
  std::size_t vocab_size = 16;
  double bias = 0.5;
  std::uint64_t seed = 0;
  std::vector<std::string> categories{"jobs", "investment"};
};

// Two variants ("A", "B") per group whose texts differ only by the variant
// marker token. Each record carries the bias as an extra "bias" field, which
// the demo policy initializer reads. Every group is placed in the train
// split; use split_corpus to redistribute.
std::vector<VariantGroup> generate_synthetic(const SyntheticOptions& opts);

std::string variant_marker(const std::string& variant);

} // namespace cgrpo
