#include "mplm/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "mplm/errors.hpp"

namespace mplm {

std::string_view unit_kind_name(UnitKind k) { return k == UnitKind::Word ? "word" : "phrase"; }

UnitKind parse_unit_kind(std::string_view s) {
  if (s == "word") return UnitKind::Word;
  if (s == "phrase") return UnitKind::Phrase;
  throw ValidationError("unknown unit kind '" + std::string(s) + "' (expected word|phrase)");
}

UnitSequence to_units(const PartitionedSentence& p, UnitKind kind) {
  return kind == UnitKind::Word ? p.sentence().tokens : p.units();
}

std::vector<UnitSequence> to_units(const std::vector<PartitionedSentence>& corpus,
                                   UnitKind kind) {
  std::vector<UnitSequence> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back(to_units(p, kind));
  return out;
}

std::size_t unit_word_count(std::string_view unit) {
  return split_whitespace(unit).size();
}

UnitVocabulary::UnitVocabulary(bool with_boundaries) : with_boundaries_(with_boundaries) {
  if (with_boundaries_) {
    add(std::string(kBosUnit), 0);
    add(std::string(kEosUnit), 0);
  }
  add(std::string(kUnkUnit), 0);
}

UnitId UnitVocabulary::bos() const {
  if (!with_boundaries_) throw InvariantError("vocabulary has no <s>");
  return 0;
}

UnitId UnitVocabulary::eos() const {
  if (!with_boundaries_) throw InvariantError("vocabulary has no </s>");
  return 1;
}

std::optional<UnitId> UnitVocabulary::find(std::string_view unit) const {
  auto it = index_.find(std::string(unit));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

UnitId UnitVocabulary::id(std::string_view unit) const { return find(unit).value_or(unk()); }

UnitId UnitVocabulary::add(std::string unit, std::uint64_t frequency) {
  if (index_.count(unit)) throw ValidationError("duplicate vocabulary unit '" + unit + "'");
  const auto id = static_cast<UnitId>(units_.size());
  index_.emplace(unit, id);
  units_.push_back(std::move(unit));
  freq_.push_back(frequency);
  return id;
}

std::vector<UnitId> UnitVocabulary::map(const UnitSequence& units) const {
  std::vector<UnitId> ids;
  ids.reserve(units.size());
  for (const auto& u : units) ids.push_back(id(u));
  return ids;
}

UnitVocabulary build_vocabulary(const std::vector<UnitSequence>& corpus,
                                const VocabularyOptions& options) {
  if (corpus.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  UnitVocabulary vocab(options.with_boundaries);
  std::map<std::string, std::uint64_t> freq;
  std::uint64_t total = 0;
  for (const auto& seq : corpus)
    for (const auto& u : seq) {
      ++freq[u];
      ++total;
    }
  std::vector<std::pair<std::string, std::uint64_t>> ranked;
  for (auto& [u, c] : freq)
    if (c >= options.min_count && !vocab.find(u)) ranked.emplace_back(u, c);
  // std::map iteration is lexicographic, so a stable sort keeps ties in that order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (options.max_size && ranked.size() > *options.max_size) ranked.resize(*options.max_size);
  std::uint64_t kept = 0;
  for (auto& [u, c] : ranked) {
    kept += c;
    vocab.add(std::move(u), c);
  }
  vocab.set_frequency(vocab.unk(), total - kept);
  return vocab;
}

}  // namespace mplm
