#include "cgrpo/entropy.hpp"

#include <unicode/normalizer2.h>
#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>

namespace cgrpo {

std::string to_string(Tokenization t) {
  return t == Tokenization::whitespace ? "whitespace" : "character";
}

Tokenization tokenization_from_string(const std::string& s) {
  if (s == "whitespace") return Tokenization::whitespace;
  if (s == "character") return Tokenization::character;
  throw std::invalid_argument("unknown tokenization '" + s + "'");
}

std::vector<std::string> tokenize(std::string_view text, Tokenization mode) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString norm = nfc->normalize(src, status);
  if (U_FAILURE(status)) {
    throw std::runtime_error("NFC normalization failed");
  }
  norm.toLower(icu::Locale::getRoot());

  std::vector<std::string> tokens;
  icu::UnicodeString current;
  auto flush = [&] {
    if (!current.isEmpty()) {
      std::string utf8;
      current.toUTF8String(utf8);
      tokens.push_back(std::move(utf8));
      current.remove();
    }
  };
  for (int32_t i = 0; i < norm.length();) {
    const UChar32 c = norm.char32At(i);
    i += U16_LENGTH(c);
    if (u_isUWhiteSpace(c)) {
      flush();
      continue;
    }
    current.append(c);
    if (mode == Tokenization::character) flush();
  }
  flush();
  return tokens;
}

double text_entropy(std::string_view text, Tokenization mode) {
  return shannon_entropy(tokenize(text, mode));
}

std::vector<double> normalize_entropies(std::span<const double> raw) {
  if (raw.empty()) {
    throw std::invalid_argument("normalize_entropies of an empty list");
  }
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  const double h_min = *lo;
  const double h_max = *hi;
  std::vector<double> out(raw.size(), 0.5);
  if (h_max > h_min) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      out[i] = (raw[i] - h_min) / (h_max - h_min);
    }
  }
  return out;
}

std::string to_string(GapDivisor d) {
  return d == GapDivisor::group_size ? "K" : "pair_count";
}

GapDivisor gap_divisor_from_string(const std::string& s) {
  if (s == "K") return GapDivisor::group_size;
  if (s == "pair_count") return GapDivisor::pair_count;
  throw std::invalid_argument("unknown gap divisor '" + s + "'");
}

std::vector<IndexPair> split_half_pairing(std::size_t n) {
  std::vector<IndexPair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < n; ++k) pairs.emplace_back(k, k + n);
  return pairs;
}

double max_gap(std::span<const double> entropies, std::span<const IndexPair> pairing) {
  double m = 0.0;
  for (auto [i, j] : pairing) {
    if (i >= entropies.size() || j >= entropies.size()) {
      throw std::out_of_range("pairing index out of range");
    }
    m = std::max(m, entropy_gap(entropies[i], entropies[j]));
  }
  return m;
}

double stability_score(std::span<const double> entropies,
                       std::span<const IndexPair> pairing, std::size_t group_size,
                       GapDivisor divisor) {
  if (pairing.empty()) {
    throw std::invalid_argument("stability_score needs at least one pair");
  }
  if (group_size < 1) {
    throw std::invalid_argument("stability_score needs K >= 1");
  }
  const double mg = max_gap(entropies, pairing);
  if (mg == 0.0) {
    return 1.0;
  }
  double sum = 0.0;
  for (auto [i, j] : pairing) {
    sum += entropy_gap(entropies[i], entropies[j]) / mg;
  }
  const double k = divisor == GapDivisor::group_size
                       ? static_cast<double>(group_size)
                       : static_cast<double>(pairing.size());
  return std::clamp(1.0 - sum / k, 0.0, 1.0);
}

} // namespace cgrpo
