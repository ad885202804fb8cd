#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mplm/corpus_io.hpp"
#include "mplm/minphrase.hpp"

namespace mplm {

// Sentinels for template offsets that fall outside the sentence.
inline constexpr std::string_view kBos1 = "BOS1";
inline constexpr std::string_view kBos2 = "BOS2";
inline constexpr std::string_view kEos1 = "EOS1";
inline constexpr std::string_view kEos2 = "EOS2";

inline constexpr std::size_t kObservationTemplates = 9;
inline constexpr std::size_t kFeaturesPerPosition = kObservationTemplates + 1;

using FeatureVector = std::map<std::string, int>;
using FeatureWeights = std::unordered_map<std::string, double>;

/// U00..U08 context strings for one position, without the tag suffix:
/// x[-2], x[-1], x[0], x[1], x[2], x[-2]x[-1], x[-1]x[0], x[0]x[1], x[1]x[2].
std::array<std::string, kObservationTemplates> observation_contexts(const Sentence& sentence,
                                                                    std::size_t position);

std::string conjoin(const std::string& context, BmesTag tag);
std::string transition_feature(std::optional<BmesTag> prev, BmesTag tag);

/// The 9 tag-conjoined observation features plus one transition feature.
FeatureVector extract_features(const Sentence& sentence, std::size_t position, BmesTag tag,
                               std::optional<BmesTag> prev);

/// Phi(t, y): sum of per-position feature vectors.
FeatureVector global_features(const Sentence& sentence, const std::vector<BmesTag>& tags);

double score(const FeatureWeights& w, const Sentence& sentence, const std::vector<BmesTag>& tags);

/// Exact argmax over valid BMES sequences. Ties resolve toward S < B < M < E.
std::vector<BmesTag> viterbi_decode(const Sentence& sentence, const FeatureWeights& w);

struct LabellerModel {
  FeatureWeights weights;           // last perceptron weights
  FeatureWeights averaged_weights;  // used for decoding
  std::uint64_t instances_seen = 0;
  std::uint64_t updates = 0;
};

std::vector<BmesTag> viterbi_decode(const Sentence& sentence, const LabellerModel& model);

using GoldInstance = std::pair<Sentence, std::vector<BmesTag>>;

/// Structured perceptron with lazy weight averaging. Drives one instance at a
/// time so callers can inspect the weights between steps.
class PerceptronTrainer {
 public:
  void train_instance(const Sentence& sentence, const std::vector<BmesTag>& gold);
  const FeatureWeights& current_weights() const { return weights_; }
  std::uint64_t steps() const { return steps_; }
  LabellerModel finalize() const;

 private:
  FeatureWeights weights_;
  FeatureWeights step_weighted_;  // sum of step * delta
  std::uint64_t steps_ = 0;
  std::uint64_t updates_ = 0;
};

LabellerModel train_averaged_perceptron(const std::vector<GoldInstance>& gold, int epochs,
                                        std::uint64_t seed);

std::vector<PartitionedSentence> label_corpus(const LabellerModel& model,
                                              const std::vector<Sentence>& corpus);

struct PartitionScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t correct = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
};

PartitionScores evaluate_partition(const std::vector<PartitionedSentence>& predicted,
                                   const std::vector<PartitionedSentence>& gold);

// Model file: "mplm-labeller 1", "features <n>", then sorted "feature\tweight".
void save_labeller(const LabellerModel& model, std::ostream& out);
std::string serialize_labeller(const LabellerModel& model);
LabellerModel load_labeller(std::istream& in);
LabellerModel load_labeller(const std::filesystem::path& path);

}  // namespace mplm
