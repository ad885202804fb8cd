#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mplm/corpus_io.hpp"

namespace mplm {

using UnitId = std::uint32_t;
using UnitSequence = std::vector<std::string>;

inline constexpr std::string_view kBosUnit = "<s>";
inline constexpr std::string_view kEosUnit = "</s>";
inline constexpr std::string_view kUnkUnit = "<unk>";

/// Whether LM units are single words or whole minimal phrases.
enum class UnitKind { Word, Phrase };

std::string_view unit_kind_name(UnitKind k);
UnitKind parse_unit_kind(std::string_view s);

/// Words: one unit per token. Phrases: one space-joined unit per phrase.
UnitSequence to_units(const PartitionedSentence& p, UnitKind kind);
std::vector<UnitSequence> to_units(const std::vector<PartitionedSentence>& corpus, UnitKind kind);

/// Number of words in a unit (phrase units are space-joined).
std::size_t unit_word_count(std::string_view unit);

/// Dense bijection unit <-> id. With boundaries, ids 0,1,2 are <s>, </s>,
/// <unk>; otherwise only <unk> is reserved, at id 0.
class UnitVocabulary {
 public:
  explicit UnitVocabulary(bool with_boundaries = true);

  std::size_t size() const { return units_.size(); }
  bool has_boundaries() const { return with_boundaries_; }

  UnitId unk() const { return with_boundaries_ ? 2 : 0; }
  UnitId bos() const;
  UnitId eos() const;
  bool is_reserved(UnitId id) const { return id <= unk(); }

  std::optional<UnitId> find(std::string_view unit) const;
  /// Maps out-of-vocabulary units to <unk>.
  UnitId id(std::string_view unit) const;
  const std::string& unit(UnitId id) const { return units_.at(id); }
  std::uint64_t frequency(UnitId id) const { return freq_.at(id); }

  /// Appends a new unit; throws ValidationError on duplicates.
  UnitId add(std::string unit, std::uint64_t frequency);
  void set_frequency(UnitId id, std::uint64_t f) { freq_.at(id) = f; }

  std::vector<UnitId> map(const UnitSequence& units) const;

  bool operator==(const UnitVocabulary& o) const {
    return with_boundaries_ == o.with_boundaries_ && units_ == o.units_ && freq_ == o.freq_;
  }

 private:
  bool with_boundaries_;
  std::vector<std::string> units_;
  std::vector<std::uint64_t> freq_;
  std::unordered_map<std::string, UnitId> index_;
};

struct VocabularyOptions {
  std::optional<std::size_t> max_size;  // excludes reserved units; nullopt = unlimited
  std::uint64_t min_count = 1;
  bool with_boundaries = true;
};

/// Keeps the most frequent units meeting min_count, ordered by descending
/// frequency with lexicographic tie-break. The frequency of <unk> is the
/// number of dropped tokens.
UnitVocabulary build_vocabulary(const std::vector<UnitSequence>& corpus,
                                const VocabularyOptions& options = {});

}  // namespace mplm
