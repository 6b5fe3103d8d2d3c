#include "cgrpo/dataset.hpp"

#include "cgrpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace cgrpo {

namespace {

constexpr const char* kFields[] = {"question_id", "group_id", "variant",
                                   "category",    "text",     "split"};

bool is_known_field(const std::string& key) {
  return std::find(std::begin(kFields), std::end(kFields), key) !=
         std::end(kFields);
}

std::string required_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw std::invalid_argument(std::string("missing field '") + key + "'");
  }
  if (!it->is_string()) {
    throw std::invalid_argument(std::string("field '") + key +
                                "' must be a string");
  }
  return it->get<std::string>();
}

void check_group(const VariantGroup& g) {
  if (g.members.empty()) {
    throw CorpusError("group has no members");
  }
  std::set<std::string> variants;
  std::set<std::tuple<std::string, std::string>> seen;
  for (const auto& m : g.members) {
    if (m.group_id != g.group_id) {
      throw CorpusError("group '" + g.group_id + "' contains record of group '" +
                        m.group_id + "'");
    }
    if (m.category != g.members.front().category) {
      throw CorpusError("group '" + g.group_id + "' mixes categories '" +
                        g.members.front().category + "' and '" + m.category +
                        "'");
    }
    if (m.split != g.members.front().split) {
      throw CorpusError("group '" + g.group_id + "' straddles splits");
    }
    if (!seen.emplace(m.variant, m.question_id).second) {
      throw CorpusError("duplicate record (group_id '" + g.group_id +
                        "', variant '" + m.variant + "', question_id '" +
                        m.question_id + "')");
    }
    variants.insert(m.variant);
  }
  if (variants.size() < 2) {
    throw CorpusError("group '" + g.group_id +
                      "' has a single variant; at least two are required");
  }
  std::vector<bool> covered(g.members.size(), false);
  for (auto [i, j] : g.pairing) {
    if (i >= g.members.size() || j >= g.members.size()) {
      throw CorpusError("group '" + g.group_id + "' pairing index out of range");
    }
    if (i == j) {
      throw CorpusError("group '" + g.group_id + "' pairs a member with itself");
    }
    covered[i] = covered[j] = true;
  }
  if (std::find(covered.begin(), covered.end(), false) != covered.end()) {
    throw CorpusError("group '" + g.group_id +
                      "' pairing does not cover every member");
  }
}

} // namespace

std::string to_string(Split s) {
  switch (s) {
  case Split::train: return "train";
  case Split::validation: return "validation";
  case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::vector<std::string> VariantGroup::variant_labels() const {
  std::vector<std::string> labels;
  for (const auto& m : members) {
    if (std::find(labels.begin(), labels.end(), m.variant) == labels.end()) {
      labels.push_back(m.variant);
    }
  }
  return labels;
}

std::vector<IndexPair> cross_variant_pairing(
    const std::vector<PromptRecord>& members) {
  std::vector<IndexPair> pairs;
  for (std::size_t i = 0; i < members.size(); ++i) {
    for (std::size_t j = i + 1; j < members.size(); ++j) {
      if (members[i].variant != members[j].variant) {
        pairs.emplace_back(i, j);
      }
    }
  }
  return pairs;
}

VariantGroup make_group(std::vector<PromptRecord> members,
                        std::vector<IndexPair> pairing) {
  if (members.empty()) {
    throw CorpusError("group has no members");
  }
  VariantGroup g;
  g.group_id = members.front().group_id;
  if (pairing.empty()) {
    pairing = cross_variant_pairing(members);
  }
  g.members = std::move(members);
  g.pairing = std::move(pairing);
  check_group(g);
  return g;
}

PromptRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw std::invalid_argument("record must be a JSON object");
  }
  PromptRecord r;
  r.question_id = required_string(j, "question_id");
  r.group_id = required_string(j, "group_id");
  r.variant = required_string(j, "variant");
  r.category = required_string(j, "category");
  r.text = required_string(j, "text");
  r.split = split_from_string(required_string(j, "split"));
  if (r.group_id.empty() || r.variant.empty() || r.question_id.empty()) {
    throw std::invalid_argument("question_id, group_id and variant must be non-empty");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!is_known_field(it.key())) {
      r.extra[it.key()] = it.value();
    }
  }
  return r;
}

nlohmann::ordered_json record_to_json(const PromptRecord& r) {
  nlohmann::ordered_json o;
  o["question_id"] = r.question_id;
  o["group_id"] = r.group_id;
  o["variant"] = r.variant;
  o["category"] = r.category;
  o["text"] = r.text;
  o["split"] = to_string(r.split);
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) {
    o[it.key()] = it.value();
  }
  return o;
}

std::vector<VariantGroup> parse_corpus(std::istream& in) {
  std::map<std::string, std::vector<PromptRecord>> by_group;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      auto rec = record_from_json(nlohmann::json::parse(line));
      by_group[rec.group_id].push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(std::string("malformed record: ") + e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw CorpusError(std::string("malformed record: ") + e.what(), lineno);
    }
  }
  std::vector<VariantGroup> groups;
  groups.reserve(by_group.size());
  for (auto& [id, members] : by_group) {
    groups.push_back(make_group(std::move(members)));
  }
  return groups;
}

std::vector<VariantGroup> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusError("cannot open corpus file '" + path.string() + "'");
  }
  try {
    return parse_corpus(in);
  } catch (const CorpusError& e) {
    throw CorpusError(path.string() + ": " + e.what());
  }
}

void write_corpus(std::ostream& out, const std::vector<VariantGroup>& groups) {
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      // Fixed key order keeps identical corpora byte-identical on disk.
      const auto o = record_to_json(m);
      out << o.dump() << '\n';
    }
  }
}

void write_corpus(const std::filesystem::path& path,
                  const std::vector<VariantGroup>& groups) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write corpus file '" + path.string() + "'");
  }
  write_corpus(out, groups);
  if (!out) {
    throw std::runtime_error("write failed for '" + path.string() + "'");
  }
}

CorpusSplits split_corpus(std::vector<VariantGroup> groups, SplitRatios ratios,
                          std::uint64_t seed) {
  const double r[3] = {ratios.train, ratios.validation, ratios.test};
  for (double x : r) {
    if (!(x >= 0.0)) {
      throw std::invalid_argument("split ratios must be non-negative");
    }
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
  const std::size_t nonzero = std::count_if(std::begin(r), std::end(r),
                                            [](double x) { return x > 0.0; });
  const std::size_t n = groups.size();
  if (n < nonzero) {
    throw std::invalid_argument("cannot split " + std::to_string(n) +
                                " groups into " + std::to_string(nonzero) +
                                " non-empty splits");
  }

  // Largest-remainder apportionment, then guarantee one group per non-zero
  // split by taking from the largest split.
  std::size_t count[3];
  double rem[3];
  std::size_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact = r[k] * static_cast<double>(n);
    count[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(count[k]);
    assigned += count[k];
  }
  while (assigned < n) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (rem[k] > rem[best]) best = k;
    }
    ++count[best];
    rem[best] = -1.0;
    ++assigned;
  }
  for (int k = 0; k < 3; ++k) {
    if (r[k] > 0.0 && count[k] == 0) {
      int largest = static_cast<int>(std::max_element(count, count + 3) - count);
      --count[largest];
      ++count[k];
    }
  }

  std::sort(groups.begin(), groups.end(),
            [](const VariantGroup& a, const VariantGroup& b) {
              return a.group_id < b.group_id;
            });
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(groups[i - 1], groups[rng.below(i)]);
  }

  CorpusSplits out;
  std::vector<VariantGroup>* dst[3] = {&out.train, &out.validation, &out.test};
  const Split labels[3] = {Split::train, Split::validation, Split::test};
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < count[k]; ++c, ++pos) {
      VariantGroup g = std::move(groups[pos]);
      for (auto& m : g.members) m.split = labels[k];
      dst[k]->push_back(std::move(g));
    }
    std::sort(dst[k]->begin(), dst[k]->end(),
              [](const VariantGroup& a, const VariantGroup& b) {
                return a.group_id < b.group_id;
              });
  }
  return out;
}

std::vector<VariantGroup> select_split(const std::vector<VariantGroup>& groups,
                                       Split split) {
  std::vector<VariantGroup> out;
  for (const auto& g : groups) {
    if (g.split() == split) out.push_back(g);
  }
  return out;
}

std::string variant_marker(const std::string& variant) {
  return "[" + variant + "]";
}

std::vector<VariantGroup> generate_synthetic(const SyntheticOptions& opts) {
  if (opts.n_groups < 1) {
    throw std::invalid_argument("n_groups must be at least 1");
  }
  if (opts.vocab_size < 2) {
    throw std::invalid_argument("vocab_size must be at least 2");
  }
  if (!(opts.bias >= 0.0 && opts.bias <= 1.0)) {
    throw std::invalid_argument("bias must lie in [0, 1]");
  }
  if (opts.categories.empty()) {
    throw std::invalid_argument("at least one category is required");
  }

  const int width = static_cast<int>(std::to_string(opts.n_groups - 1).size());
  Rng rng(derive_seed(opts.seed, "synthetic"));
  std::vector<VariantGroup> groups;
  groups.reserve(opts.n_groups);
  for (std::size_t g = 0; g < opts.n_groups; ++g) {
    std::string num = std::to_string(g);
    std::string gid = "g" + std::string(width - num.size(), '0') + num;

    const std::size_t len = 5 + rng.below(6);
    std::vector<std::string> words;
    for (std::size_t i = 0; i < len; ++i) {
      words.push_back("w" + std::to_string(rng.below(opts.vocab_size)));
    }
    const std::size_t marker_at = rng.below(len + 1);

    std::vector<PromptRecord> members;
    for (const char* variant : {"A", "B"}) {
      std::vector<std::string> tokens = words;
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(marker_at),
                    variant_marker(variant));
      std::ostringstream text;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        text << (i ? " " : "") << tokens[i];
      }
      PromptRecord r;
      r.question_id = gid + "-" + variant;
      r.group_id = gid;
      r.variant = variant;
      r.category = opts.categories[g % opts.categories.size()];
      r.text = text.str();
      r.split = Split::train;
      r.extra["bias"] = opts.bias;
      members.push_back(std::move(r));
    }
    groups.push_back(make_group(std::move(members)));
  }
  return groups;
}

} // namespace cgrpo
