#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "mplm/corpus_io.hpp"

namespace mplm {

/// Inclusive target-side span t_start..t_end.
struct TargetSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  auto operator<=>(const TargetSpan&) const = default;
};

/// Inclusive source-side span; std::nullopt stands for the empty span.
struct SourceRange {
  std::size_t start = 0;
  std::size_t end = 0;
};
using SourceSpan = std::optional<SourceRange>;

/// Minimal cover of all source positions linked into `span`.
SourceSpan source_cover(const AlignedSentencePair& pair, TargetSpan span);

/// True iff no link joins a source word inside the cover of `span` to a
/// target word outside `span`. Spans without incoming links are consistent.
bool is_consistent(const AlignedSentencePair& pair, TargetSpan span);

/// The unique finest partition of the target sentence into consistent
/// spans. Greedy: from position i take the shortest consistent [i, j]
/// whose remainder j+1.. still admits a consistent partition.
PartitionedSentence extract_minimal_partition(const AlignedSentencePair& pair);
std::vector<TargetSpan> minimal_spans(const AlignedSentencePair& pair);

// Oracle side. Everything below enumerates segmentations explicitly and is
// meant for verification on short sentences.

inline constexpr std::size_t kBruteForceMaxTarget = 12;

/// All segmentations of [0, n) in which every phrase is consistent.
std::vector<std::vector<TargetSpan>> enumerate_consistent_partitions(
    const AlignedSentencePair& pair);

struct OracleResult {
  PartitionedSentence partition;
  std::vector<TargetSpan> spans;
  std::size_t survivors = 0;
};

/// Enumerates all 2^(n-1) segmentations and keeps those whose phrases are
/// consistent and atomic, i.e. no phrase can itself be segmented into two
/// or more consistent pieces. Throws InvariantError unless exactly one
/// segmentation survives, and ValidationError if n > kBruteForceMaxTarget.
OracleResult brute_force_minimal_partition(const AlignedSentencePair& pair);

enum class BmesTag : unsigned char { S = 0, B = 1, M = 2, E = 3 };
inline constexpr BmesTag kAllTags[] = {BmesTag::S, BmesTag::B, BmesTag::M, BmesTag::E};

char tag_char(BmesTag t);
BmesTag tag_from_char(char c);  // throws ValidationError

/// Matches (S | B M* E)*.
bool is_valid_tag_sequence(const std::vector<BmesTag>& tags);
/// Whether `next` may follow `prev` (nullopt = sentence start).
bool tag_transition_allowed(std::optional<BmesTag> prev, BmesTag next);
bool tag_can_end(BmesTag last);

std::vector<BmesTag> partition_to_tags(const PartitionedSentence& p);
PartitionedSentence tags_to_partition(const Sentence& sentence, const std::vector<BmesTag>& tags);

std::string tags_to_string(const std::vector<BmesTag>& tags);

}  // namespace mplm
