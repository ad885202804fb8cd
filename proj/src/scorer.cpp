#include "mplm/scorer.hpp"

#include <cmath>

#include "mplm/detail/numbers.hpp"
#include "mplm/errors.hpp"

namespace mplm {

int routed_context_size(std::size_t position, int order) {
  return static_cast<int>(std::min<std::size_t>(position, static_cast<std::size_t>(order - 1)));
}

std::string network_name(int context_size) { return "mp_nn" + std::to_string(context_size + 1); }

RoutedScore score_with_suite(const NeuralSuite& suite, const UnitSequence& units) {
  if (units.empty()) throw ValidationError("cannot score an empty sequence");
  const auto ids = suite.vocab.map(units);
  RoutedScore out;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const int c = routed_context_size(p, suite.order);
    RoutedPosition rp{p, {}, 0};
    if (c == 0) {
      rp.model = kUnigramRoute;
      rp.logprob = suite.log_unigram.at(ids[p]);
    } else {
      rp.model = network_name(c);
      const auto ctx = std::span<const UnitId>(ids.data() + p - static_cast<std::size_t>(c),
                                               static_cast<std::size_t>(c));
      rp.logprob = suite.network(c).logprob_exact(ids[p], ctx);
    }
    out.total += rp.logprob;
    out.positions.push_back(std::move(rp));
  }
  return out;
}

RoutedScore score_with_suite(const NeuralSuite& suite, const PartitionedSentence& partition) {
  return score_with_suite(suite, to_units(partition, suite.units));
}

RoutedScore score_with_kn(const KNModel& model, const UnitSequence& units) {
  const auto s = score_sequence(model, units);
  RoutedScore out;
  for (const auto& p : s.positions)
    out.positions.push_back({p.position, "kn" + std::to_string(p.matched_order), p.logprob});
  out.total = s.total;
  return out;
}

RoutedScore score_with_kn(const KNModel& model, const PartitionedSentence& partition) {
  return score_with_kn(model, to_units(partition, model.units));
}

PerplexityReport suite_perplexity(const NeuralSuite& suite,
                                  const std::vector<UnitSequence>& corpus) {
  if (corpus.empty()) throw ValidationError("perplexity of an empty corpus");
  PerplexityReport r;
  for (const auto& seq : corpus) {
    r.total_logprob += score_with_suite(suite, seq).total;
    r.predictions += seq.size();
    for (const auto& u : seq) r.words += unit_word_count(u);
  }
  r.per_unit = std::exp(-r.total_logprob / static_cast<double>(r.predictions));
  r.per_word = std::exp(-r.total_logprob / static_cast<double>(r.words));
  return r;
}

UnitKind unit_kind(const LanguageModel& m) {
  return std::visit([](const auto& x) { return x.units; }, m);
}

RoutedScore score_units(const LanguageModel& m, const UnitSequence& units) {
  if (const auto* kn = std::get_if<KNModel>(&m)) return score_with_kn(*kn, units);
  return score_with_suite(std::get<NeuralSuite>(m), units);
}

CombinedScore combined_score(const CombinedScorerConfig& config, const Sentence& sentence,
                             const std::optional<PartitionedSentence>& partition) {
  if (config.models.empty()) throw ValidationError("combined scorer needs at least one model");
  if (partition && partition->sentence() != sentence)
    throw ValidationError("partition does not cover the scored sentence");
  CombinedScore out;
  for (const auto& wm : config.models) {
    if (!wm.model) throw ValidationError("model '" + wm.name + "' is not loaded");
    if (!std::isfinite(wm.weight)) throw ValidationError("weight of '" + wm.name + "' is not finite");
    UnitSequence units;
    if (unit_kind(*wm.model) == UnitKind::Word) {
      units = sentence.tokens;
    } else {
      if (!partition)
        throw ValidationError("phrase-unit model '" + wm.name + "' needs a partitioned sentence");
      units = partition->units();
    }
    auto s = score_units(*wm.model, units);
    out.total += wm.weight * s.total;
    out.contributions.push_back({wm.name, wm.weight, std::move(s)});
  }
  return out;
}

std::string format_score_report(const RoutedScore& score) {
  std::string out;
  for (const auto& p : score.positions) {
    out += std::to_string(p.position);
    out += '\t';
    out += p.model;
    out += '\t';
    out += detail::format_double(p.logprob);
    out += '\n';
  }
  out += "TOTAL\t" + detail::format_double(score.total) + '\n';
  return out;
}

}  // namespace mplm
