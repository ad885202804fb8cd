#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mplm/vocabulary.hpp"

namespace mplm {

using Ngram = std::vector<UnitId>;

struct NgramHash {
  std::size_t operator()(const Ngram& g) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the ids
    for (UnitId id : g) {
      h ^= id;
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

template <typename V>
using NgramMap = std::unordered_map<Ngram, V, NgramHash>;

/// Counts-of-counts n1..n4.
using CountsOfCounts = std::array<std::uint64_t, 4>;

/// Raw n-gram counts for orders 1..N. Every sequence is padded with N-1
/// leading <s> and one trailing </s>; an order-k table holds the k-grams
/// ending at each predicted position, so it sees len+1 tokens per sequence.
struct NgramCounts {
  int order = 0;
  UnitVocabulary vocab;
  std::vector<NgramMap<std::uint64_t>> counts;  // [k-1] -> k-grams

  CountsOfCounts counts_of_counts(int k) const;
  void add_sequence(const std::vector<UnitId>& ids);
  /// Counts are a commutative monoid: merging shards equals counting the union.
  void merge(const NgramCounts& other);
};

NgramCounts count_ngrams(const std::vector<UnitSequence>& corpus, const UnitVocabulary& vocab,
                         int order);

/// D1, D2, D3+ for one order.
struct Discounts {
  double d1 = 0.5;
  double d2 = 0.5;
  double d3plus = 0.5;
  bool fallback = false;

  double operator()(std::uint64_t count) const {
    return count == 0 ? 0.0 : count == 1 ? d1 : count == 2 ? d2 : d3plus;
  }
};

inline constexpr double kFallbackDiscount = 0.5;

/// Modified Kneser-Ney discounts from counts-of-counts, clamped to [0, k].
/// Falls back to 0.5 everywhere when n1 or n2 is zero; D3+ = D2 when n3 is zero.
Discounts modified_kn_discounts(const CountsOfCounts& n);

/// One stored n-gram. Context-only grams made entirely of <s> carry a
/// log10_prob of -inf. count is the raw training count.
struct NgramEntry {
  double log10_prob = -INFINITY;
  double log10_backoff = 0.0;
  std::uint64_t count = 0;
};

struct KnQuery {
  double log10_prob = 0;
  int matched_order = 0;  // order of the longest n-gram found
  double logprob() const { return log10_prob * std::log(10.0); }
};

/// Interpolated modified Kneser-Ney model stored in backoff form: the
/// probability of a seen n-gram already includes the interpolated lower
/// orders, and the backoff weight of a context is its interpolation weight.
struct KNModel {
  int order = 0;
  UnitKind units = UnitKind::Phrase;
  UnitVocabulary vocab;
  std::vector<Discounts> discounts;            // [k-1]
  std::vector<NgramMap<NgramEntry>> ngrams;    // [k-1]

  /// Number of units that can be predicted (everything except <s>).
  std::size_t predictable_size() const { return vocab.size() - 1; }

  /// Context longer than N-1 is truncated to its last N-1 units.
  KnQuery query(UnitId unit, std::span<const UnitId> context) const;
  double logprob(UnitId unit, std::span<const UnitId> context) const {
    return query(unit, context).logprob();
  }
  /// Unit strings; OOV units map to <unk>.
  double logprob(std::string_view unit, const UnitSequence& context) const;

  /// Raw training count of a k-gram (0 if unseen).
  std::uint64_t count(std::span<const UnitId> ngram) const;
};

KNModel estimate(const NgramCounts& counts, UnitKind units = UnitKind::Phrase);

struct KnPositionScore {
  std::size_t position = 0;  // index of the predicted unit; size() is </s>
  int matched_order = 0;
  double logprob = 0;  // natural log
};

struct KnSequenceScore {
  std::vector<KnPositionScore> positions;
  double total = 0;
};

/// Per-position scores with <s> padding, including the </s> prediction.
KnSequenceScore score_sequence(const KNModel& model, const UnitSequence& sequence);
double sequence_logprob(const KNModel& model, const UnitSequence& sequence);

struct PerplexityReport {
  double total_logprob = 0;  // natural log
  std::size_t predictions = 0;
  std::size_t words = 0;
  double per_unit = 0;
  double per_word = 0;
};

/// exp(-total / predictions). </s> is predicted once per sequence, <s> never.
/// per_word divides by the number of words plus one </s> per sequence.
PerplexityReport perplexity(const KNModel& model, const std::vector<UnitSequence>& corpus);

/// Fraction of prediction positions whose full k-gram (with <s> padding)
/// was observed in training.
double hit_rate(const KNModel& model, const std::vector<UnitSequence>& corpus, int k);

void save_kn(const KNModel& model, std::ostream& out);
std::string serialize_kn(const KNModel& model);
KNModel load_kn(std::istream& in);
KNModel load_kn(const std::filesystem::path& path);

/// ARPA text. Inner spaces of phrase units are written as '+'.
void export_arpa(const KNModel& model, std::ostream& out);

}  // namespace mplm
