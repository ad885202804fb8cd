#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mplm/corpus_io.hpp"
#include "mplm/kn_lm.hpp"
#include "mplm/neural_lm.hpp"

namespace mplm {

struct RoutedPosition {
  std::size_t position = 0;
  std::string model;  // "unigram", "mp_nn<c+1>", or "kn<order matched>"
  double logprob = 0;  // natural log
};

struct RoutedScore {
  std::vector<RoutedPosition> positions;
  double total = 0;
};

inline constexpr std::string_view kUnigramRoute = "unigram";

/// Context size used for `position` in a suite of order N; 0 means the
/// unigram table.
int routed_context_size(std::size_t position, int order);
/// mp_nn2 for context size 1, ..., mp_nnN for context size N-1.
std::string network_name(int context_size);

/// Position 0 from the unigram table, position p >= 1 from the network with
/// context min(p, N-1). Exact softmax; no end-of-sequence event.
RoutedScore score_with_suite(const NeuralSuite& suite, const UnitSequence& units);
RoutedScore score_with_suite(const NeuralSuite& suite, const PartitionedSentence& partition);

/// Delegates to the KN sequence score; the last position is </s>.
RoutedScore score_with_kn(const KNModel& model, const UnitSequence& units);
RoutedScore score_with_kn(const KNModel& model, const PartitionedSentence& partition);

/// Per-phrase and per-word perplexity over routed positions (no </s>).
PerplexityReport suite_perplexity(const NeuralSuite& suite,
                                  const std::vector<UnitSequence>& corpus);

using LanguageModel = std::variant<KNModel, NeuralSuite>;

UnitKind unit_kind(const LanguageModel& m);
RoutedScore score_units(const LanguageModel& m, const UnitSequence& units);

struct WeightedModel {
  std::string name;
  std::shared_ptr<const LanguageModel> model;
  double weight = 1.0;
};

struct CombinedScorerConfig {
  std::vector<WeightedModel> models;
};

struct ModelContribution {
  std::string name;
  double weight = 0;
  RoutedScore score;
};

struct CombinedScore {
  double total = 0;
  std::vector<ModelContribution> contributions;
};

/// Sum of weight * log P over models. Word-unit models score `sentence`,
/// phrase-unit models score `partition`, which must cover the same tokens.
CombinedScore combined_score(const CombinedScorerConfig& config, const Sentence& sentence,
                             const std::optional<PartitionedSentence>& partition);

/// "index\tmodel\tlogprob" per position, then "TOTAL\tvalue".
std::string format_score_report(const RoutedScore& score);

}  // namespace mplm
