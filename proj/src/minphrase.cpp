#include "mplm/minphrase.hpp"

#include <algorithm>
#include <string>

#include "mplm/errors.hpp"

namespace mplm {

namespace {

PartitionedSentence spans_to_partition(const Sentence& target,
                                       const std::vector<TargetSpan>& spans) {
  PartitionedSentence p;
  for (const auto& sp : spans)
    p.phrases.emplace_back(target.tokens.begin() + static_cast<std::ptrdiff_t>(sp.start),
                           target.tokens.begin() + static_cast<std::ptrdiff_t>(sp.end) + 1);
  return p;
}

// Calls f(spans) for every segmentation of [start, end]; stops if f returns false.
template <typename F>
void for_each_segmentation(std::size_t start, std::size_t end, F&& f) {
  const std::size_t cuts = end - start;
  std::vector<TargetSpan> spans;
  for (std::size_t mask = 0; mask < (std::size_t{1} << cuts); ++mask) {
    spans.clear();
    std::size_t s = start;
    for (std::size_t c = 0; c < cuts; ++c) {
      if (mask >> c & 1U) {
        spans.push_back({s, start + c});
        s = start + c + 1;
      }
    }
    spans.push_back({s, end});
    if (!f(spans)) return;
  }
}

bool all_consistent(const AlignedSentencePair& pair, const std::vector<TargetSpan>& spans) {
  return std::all_of(spans.begin(), spans.end(),
                     [&](const TargetSpan& sp) { return is_consistent(pair, sp); });
}

bool is_atomic(const AlignedSentencePair& pair, TargetSpan span) {
  bool atomic = true;
  for_each_segmentation(span.start, span.end, [&](const std::vector<TargetSpan>& pieces) {
    if (pieces.size() > 1 && all_consistent(pair, pieces)) atomic = false;
    return atomic;
  });
  return atomic;
}

}  // namespace

SourceSpan source_cover(const AlignedSentencePair& pair, TargetSpan span) {
  SourceSpan cover;
  for (const Link& l : pair.links) {
    const auto t = static_cast<std::size_t>(l.target);
    if (t < span.start || t > span.end) continue;
    const auto s = static_cast<std::size_t>(l.source);
    if (!cover) {
      cover = SourceRange{s, s};
    } else {
      cover->start = std::min(cover->start, s);
      cover->end = std::max(cover->end, s);
    }
  }
  return cover;
}

bool is_consistent(const AlignedSentencePair& pair, TargetSpan span) {
  const auto cover = source_cover(pair, span);
  if (!cover) return true;
  return std::none_of(pair.links.begin(), pair.links.end(), [&](const Link& l) {
    const auto s = static_cast<std::size_t>(l.source);
    const auto t = static_cast<std::size_t>(l.target);
    return s >= cover->start && s <= cover->end && (t < span.start || t > span.end);
  });
}

std::vector<TargetSpan> minimal_spans(const AlignedSentencePair& pair) {
  const std::size_t n = pair.target.size();
  // feasible[i]: the suffix i.. admits a partition into consistent spans.
  std::vector<char> feasible(n + 1, 0);
  feasible[n] = 1;
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i; j < n && !feasible[i]; ++j)
      if (feasible[j + 1] && is_consistent(pair, {i, j})) feasible[i] = 1;
  }
  std::vector<TargetSpan> spans;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (!(feasible[j + 1] && is_consistent(pair, {i, j}))) ++j;
    spans.push_back({i, j});
    i = j + 1;
  }
  return spans;
}

PartitionedSentence extract_minimal_partition(const AlignedSentencePair& pair) {
  return spans_to_partition(pair.target, minimal_spans(pair));
}

std::vector<std::vector<TargetSpan>> enumerate_consistent_partitions(
    const AlignedSentencePair& pair) {
  const std::size_t n = pair.target.size();
  if (n == 0) return {};
  if (n > kBruteForceMaxTarget)
    throw ValidationError("brute-force enumeration limited to " +
                          std::to_string(kBruteForceMaxTarget) + " target words");
  std::vector<std::vector<TargetSpan>> out;
  for_each_segmentation(0, n - 1, [&](const std::vector<TargetSpan>& spans) {
    if (all_consistent(pair, spans)) out.push_back(spans);
    return true;
  });
  return out;
}

OracleResult brute_force_minimal_partition(const AlignedSentencePair& pair) {
  OracleResult result;
  std::vector<TargetSpan> found;
  for (const auto& spans : enumerate_consistent_partitions(pair)) {
    const bool minimal = std::all_of(spans.begin(), spans.end(),
                                     [&](const TargetSpan& sp) { return is_atomic(pair, sp); });
    if (minimal) {
      ++result.survivors;
      found = spans;
    }
  }
  if (result.survivors != 1)
    throw InvariantError("minimal-partition oracle found " + std::to_string(result.survivors) +
                         " survivors; uniqueness violated");
  result.partition = spans_to_partition(pair.target, found);
  result.spans = std::move(found);
  return result;
}

char tag_char(BmesTag t) {
  switch (t) {
    case BmesTag::S: return 'S';
    case BmesTag::B: return 'B';
    case BmesTag::M: return 'M';
    case BmesTag::E: return 'E';
  }
  return '?';
}

BmesTag tag_from_char(char c) {
  switch (c) {
    case 'S': return BmesTag::S;
    case 'B': return BmesTag::B;
    case 'M': return BmesTag::M;
    case 'E': return BmesTag::E;
    default: throw ValidationError(std::string("unknown BMES tag '") + c + "'");
  }
}

bool tag_transition_allowed(std::optional<BmesTag> prev, BmesTag next) {
  const bool inside = prev && (*prev == BmesTag::B || *prev == BmesTag::M);
  const bool continues = next == BmesTag::M || next == BmesTag::E;
  return inside == continues;
}

bool tag_can_end(BmesTag last) { return last == BmesTag::S || last == BmesTag::E; }

bool is_valid_tag_sequence(const std::vector<BmesTag>& tags) {
  std::optional<BmesTag> prev;
  for (BmesTag t : tags) {
    if (!tag_transition_allowed(prev, t)) return false;
    prev = t;
  }
  return !prev || tag_can_end(*prev);
}

std::vector<BmesTag> partition_to_tags(const PartitionedSentence& p) {
  std::vector<BmesTag> tags;
  tags.reserve(p.token_count());
  for (const auto& ph : p.phrases) {
    if (ph.size() == 1) {
      tags.push_back(BmesTag::S);
      continue;
    }
    tags.push_back(BmesTag::B);
    tags.insert(tags.end(), ph.size() - 2, BmesTag::M);
    tags.push_back(BmesTag::E);
  }
  return tags;
}

PartitionedSentence tags_to_partition(const Sentence& sentence, const std::vector<BmesTag>& tags) {
  if (tags.size() != sentence.size())
    throw ValidationError("tag count " + std::to_string(tags.size()) + " != sentence length " +
                          std::to_string(sentence.size()));
  if (!is_valid_tag_sequence(tags))
    throw ValidationError("invalid BMES sequence " + tags_to_string(tags));
  PartitionedSentence p;
  std::vector<std::string> current;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    current.push_back(sentence.tokens[i]);
    if (tags[i] == BmesTag::S || tags[i] == BmesTag::E) {
      p.phrases.push_back(std::move(current));
      current.clear();
    }
  }
  return p;
}

std::string tags_to_string(const std::vector<BmesTag>& tags) {
  std::string s;
  for (BmesTag t : tags) s += tag_char(t);
  return s;
}

}  // namespace mplm
