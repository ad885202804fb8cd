#include "mplm/labeller.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "mplm/detail/numbers.hpp"
#include "mplm/errors.hpp"

namespace mplm {

namespace {

constexpr std::string_view kLabellerMagic = "mplm-labeller";
constexpr int kLabellerVersion = 1;

std::string_view tag_name(std::optional<BmesTag> t) {
  if (!t) return "START";
  switch (*t) {
    case BmesTag::S: return "S";
    case BmesTag::B: return "B";
    case BmesTag::M: return "M";
    case BmesTag::E: return "E";
  }
  return "?";
}

double lookup(const FeatureWeights& w, const std::string& f) {
  auto it = w.find(f);
  return it == w.end() ? 0.0 : it->second;
}

}  // namespace

std::array<std::string, kObservationTemplates> observation_contexts(const Sentence& sentence,
                                                                    std::size_t position) {
  const auto n = static_cast<std::ptrdiff_t>(sentence.size());
  const auto at = [&](std::ptrdiff_t off) -> std::string {
    const auto i = static_cast<std::ptrdiff_t>(position) + off;
    if (i < 0) return std::string(i == -1 ? kBos1 : kBos2);
    if (i >= n) return std::string(i == n ? kEos1 : kEos2);
    return sentence.tokens[static_cast<std::size_t>(i)];
  };
  const std::string m2 = at(-2), m1 = at(-1), c0 = at(0), p1 = at(1), p2 = at(2);
  return {"U00:" + m2,
          "U01:" + m1,
          "U02:" + c0,
          "U03:" + p1,
          "U04:" + p2,
          "U05:" + m2 + "_" + m1,
          "U06:" + m1 + "_" + c0,
          "U07:" + c0 + "_" + p1,
          "U08:" + p1 + "_" + p2};
}

std::string conjoin(const std::string& context, BmesTag tag) {
  std::string f = context;
  f += '#';
  f += tag_char(tag);
  return f;
}

std::string transition_feature(std::optional<BmesTag> prev, BmesTag tag) {
  std::string f = "T:";
  f += tag_name(prev);
  f += "→";
  f += tag_name(tag);
  return f;
}

FeatureVector extract_features(const Sentence& sentence, std::size_t position, BmesTag tag,
                               std::optional<BmesTag> prev) {
  FeatureVector fv;
  for (const auto& ctx : observation_contexts(sentence, position)) ++fv[conjoin(ctx, tag)];
  ++fv[transition_feature(prev, tag)];
  return fv;
}

FeatureVector global_features(const Sentence& sentence, const std::vector<BmesTag>& tags) {
  FeatureVector total;
  std::optional<BmesTag> prev;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    for (const auto& [f, c] : extract_features(sentence, i, tags[i], prev)) total[f] += c;
    prev = tags[i];
  }
  return total;
}

double score(const FeatureWeights& w, const Sentence& sentence, const std::vector<BmesTag>& tags) {
  double s = 0;
  for (const auto& [f, c] : global_features(sentence, tags)) s += c * lookup(w, f);
  return s;
}

std::vector<BmesTag> viterbi_decode(const Sentence& sentence, const FeatureWeights& w) {
  const std::size_t n = sentence.size();
  if (n == 0) throw ValidationError("cannot decode an empty sentence");
  constexpr std::size_t kTags = 4;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  std::array<std::array<double, kTags>, kTags> trans{};
  std::array<double, kTags> start{};
  for (BmesTag t : kAllTags) {
    start[static_cast<std::size_t>(t)] = lookup(w, transition_feature(std::nullopt, t));
    for (BmesTag p : kAllTags)
      trans[static_cast<std::size_t>(p)][static_cast<std::size_t>(t)] =
          lookup(w, transition_feature(p, t));
  }

  std::vector<std::array<double, kTags>> best(n);
  std::vector<std::array<int, kTags>> back(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto contexts = observation_contexts(sentence, i);
    for (BmesTag t : kAllTags) {
      const auto ti = static_cast<std::size_t>(t);
      double emit = 0;
      for (const auto& ctx : contexts) emit += lookup(w, conjoin(ctx, t));
      if (i == 0) {
        best[0][ti] = tag_transition_allowed(std::nullopt, t) ? start[ti] + emit : kNegInf;
        back[0][ti] = -1;
        continue;
      }
      double top = kNegInf;
      int arg = -1;
      for (BmesTag p : kAllTags) {  // S < B < M < E; strict '>' keeps the earliest on ties
        const auto pi = static_cast<std::size_t>(p);
        if (!tag_transition_allowed(p, t) || best[i - 1][pi] == kNegInf) continue;
        const double cand = best[i - 1][pi] + trans[pi][ti];
        if (cand > top) {
          top = cand;
          arg = static_cast<int>(pi);
        }
      }
      best[i][ti] = arg < 0 ? kNegInf : top + emit;
      back[i][ti] = arg;
    }
  }

  double top = kNegInf;
  int arg = -1;
  for (BmesTag t : kAllTags) {
    const auto ti = static_cast<std::size_t>(t);
    if (tag_can_end(t) && best[n - 1][ti] > top) {
      top = best[n - 1][ti];
      arg = static_cast<int>(ti);
    }
  }
  std::vector<BmesTag> tags(n);
  for (std::size_t i = n; i-- > 0;) {
    tags[i] = static_cast<BmesTag>(arg);
    arg = back[i][static_cast<std::size_t>(arg)];
  }
  return tags;
}

std::vector<BmesTag> viterbi_decode(const Sentence& sentence, const LabellerModel& model) {
  return viterbi_decode(sentence, model.averaged_weights);
}

void PerceptronTrainer::train_instance(const Sentence& sentence,
                                       const std::vector<BmesTag>& gold) {
  if (gold.size() != sentence.size() || !is_valid_tag_sequence(gold))
    throw ValidationError("invalid gold tag sequence " + tags_to_string(gold));
  ++steps_;
  const auto predicted = viterbi_decode(sentence, weights_);
  if (predicted == gold) return;
  ++updates_;
  FeatureVector delta = global_features(sentence, gold);
  for (const auto& [f, c] : global_features(sentence, predicted)) delta[f] -= c;
  const auto step = static_cast<double>(steps_);
  for (const auto& [f, c] : delta) {
    if (c == 0) continue;
    weights_[f] += c;
    step_weighted_[f] += step * c;
  }
}

LabellerModel PerceptronTrainer::finalize() const {
  LabellerModel model;
  model.weights = weights_;
  model.instances_seen = steps_;
  model.updates = updates_;
  if (steps_ == 0) return model;
  // mean over steps t=1..T of w_t equals ((T+1) w_T - sum_t t*delta_t) / T
  const auto total = static_cast<double>(steps_);
  for (const auto& [f, w] : weights_) {
    const double avg = ((total + 1) * w - lookup(step_weighted_, f)) / total;
    if (avg != 0) model.averaged_weights.emplace(f, avg);
  }
  return model;
}

LabellerModel train_averaged_perceptron(const std::vector<GoldInstance>& gold, int epochs,
                                        std::uint64_t seed) {
  if (gold.empty()) throw ValidationError("empty labeller training set");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  for (const auto& [s, tags] : gold) {
    if (s.size() == 0 || tags.size() != s.size() || !is_valid_tag_sequence(tags))
      throw ValidationError("invalid gold instance");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  PerceptronTrainer trainer;
  for (int e = 0; e < epochs; ++e) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) trainer.train_instance(gold[idx].first, gold[idx].second);
  }
  return trainer.finalize();
}

std::vector<PartitionedSentence> label_corpus(const LabellerModel& model,
                                              const std::vector<Sentence>& corpus) {
  std::vector<PartitionedSentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) out.push_back(tags_to_partition(s, viterbi_decode(s, model)));
  return out;
}

PartitionScores evaluate_partition(const std::vector<PartitionedSentence>& predicted,
                                   const std::vector<PartitionedSentence>& gold) {
  if (predicted.size() != gold.size())
    throw ValidationError("predicted/gold corpus sizes differ (" +
                          std::to_string(predicted.size()) + " vs " +
                          std::to_string(gold.size()) + ")");
  PartitionScores r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i].sentence() != gold[i].sentence())
      throw ValidationError("sentence " + std::to_string(i + 1) +
                            " differs between predicted and gold");
    const auto ps = predicted[i].spans();
    auto gs = gold[i].spans();
    std::sort(gs.begin(), gs.end());
    r.predicted += ps.size();
    r.gold += gs.size();
    for (const auto& sp : ps)
      if (std::binary_search(gs.begin(), gs.end(), sp)) ++r.correct;
  }
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  r.precision = ratio(r.correct, r.predicted);
  r.recall = ratio(r.correct, r.gold);
  r.f1 = r.precision + r.recall == 0 ? 0.0
                                     : 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

void save_labeller(const LabellerModel& model, std::ostream& out) {
  std::vector<std::pair<std::string, double>> items(model.averaged_weights.begin(),
                                                    model.averaged_weights.end());
  std::sort(items.begin(), items.end());
  out << kLabellerMagic << ' ' << kLabellerVersion << '\n';
  out << "features " << items.size() << '\n';
  for (const auto& [f, w] : items) out << f << '\t' << detail::format_double(w) << '\n';
}

std::string serialize_labeller(const LabellerModel& model) {
  std::ostringstream ss;
  save_labeller(model, ss);
  return ss.str();
}

LabellerModel load_labeller(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != std::string(kLabellerMagic) + ' ' + std::to_string(kLabellerVersion))
    throw ValidationError("not a labeller model (bad header)");
  if (!std::getline(in, line) || line.rfind("features ", 0) != 0)
    throw ValidationError("labeller model: missing feature count");
  const auto count = detail::parse_int<std::size_t>(std::string_view(line).substr(9));
  LabellerModel model;
  model.averaged_weights.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ValidationError("labeller model: truncated");
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw ValidationError("labeller model: malformed line");
    const double w = detail::parse_double(std::string_view(line).substr(tab + 1));
    if (!std::isfinite(w)) throw ValidationError("labeller model: non-finite weight");
    model.averaged_weights.emplace(line.substr(0, tab), w);
  }
  return model;
}

LabellerModel load_labeller(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_labeller(in);
}

}  // namespace mplm
