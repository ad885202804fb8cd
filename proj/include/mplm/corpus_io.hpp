#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mplm {

inline constexpr std::string_view kDefaultDelimiter = "$";

struct Sentence {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

struct Link {
  int source = 0;
  int target = 0;

  auto operator<=>(const Link&) const = default;
};

// A word-aligned sentence pair. Links are kept sorted and unique; use
// make_aligned_pair to build a validated instance.
struct AlignedSentencePair {
  Sentence source;
  Sentence target;
  std::vector<Link> links;
};

// Throws ValidationError on an out-of-range link. Duplicates are merged.
AlignedSentencePair make_aligned_pair(Sentence source, Sentence target,
                                      std::vector<Link> links);

struct PartitionedSentence {
  std::vector<std::vector<std::string>> phrases;

  // The underlying token sequence.
  Sentence sentence() const;
  std::size_t token_count() const;
  // Each phrase as its space-joined surface string (the LM unit).
  std::vector<std::string> units() const;
  // Inclusive [start, end] token spans, one per phrase.
  std::vector<std::pair<std::size_t, std::size_t>> spans() const;

  bool operator==(const PartitionedSentence&) const = default;
};

// Checks the PartitionedSentence invariants; throws ValidationError.
void validate_partition(const PartitionedSentence& p);

struct TokenizedCorpus {
  std::vector<Sentence> sentences;
  std::size_t blank_lines = 0;
};

TokenizedCorpus read_tokenized_corpus(const std::filesystem::path& path);
TokenizedCorpus parse_tokenized_corpus(std::istream& in);

std::vector<AlignedSentencePair> read_alignments(
    const std::filesystem::path& path, const std::vector<Sentence>& source,
    const std::vector<Sentence>& target);
std::vector<AlignedSentencePair> parse_alignments(
    std::istream& in, const std::vector<Sentence>& source,
    const std::vector<Sentence>& target);

// One line of Pharaoh "i-j" pairs; indices validated against the lengths.
std::vector<Link> parse_alignment_line(std::string_view line,
                                       std::size_t source_len,
                                       std::size_t target_len);

std::string format_partitioned_line(const PartitionedSentence& p,
                                    std::string_view delimiter = kDefaultDelimiter);
PartitionedSentence parse_partitioned_line(std::string_view line,
                                           std::string_view delimiter = kDefaultDelimiter);

void write_partitioned_corpus(const std::vector<PartitionedSentence>& partitions,
                              const std::filesystem::path& path,
                              std::string_view delimiter = kDefaultDelimiter);
std::vector<PartitionedSentence> read_partitioned_corpus(
    const std::filesystem::path& path, std::string_view delimiter = kDefaultDelimiter);

// Writes to "<path>.tmp" and renames over path, so readers never observe a
// partially written file.
void write_text_atomically(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

bool is_valid_utf8(std::string_view bytes);
std::vector<std::string> split_whitespace(std::string_view line);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace mplm
