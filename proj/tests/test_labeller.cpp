#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>
#include <sstream>

#include "mplm/errors.hpp"
#include "mplm/labeller.hpp"
#include "support/synthetic.hpp"

using namespace mplm;
using enum BmesTag;

namespace {

Sentence sent(std::initializer_list<const char*> toks) {
  Sentence s;
  for (auto* t : toks) s.tokens.emplace_back(t);
  return s;
}

// All valid BMES sequences of length n.
std::vector<std::vector<BmesTag>> all_valid_sequences(std::size_t n) {
  std::vector<std::vector<BmesTag>> out;
  std::vector<BmesTag> cur;
  std::function<void()> rec = [&] {
    if (cur.size() == n) {
      if (is_valid_tag_sequence(cur)) out.push_back(cur);
      return;
    }
    for (BmesTag t : kAllTags) {
      cur.push_back(t);
      rec();
      cur.pop_back();
    }
  };
  rec();
  return out;
}

FeatureWeights random_weights(const Sentence& s, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  FeatureWeights w;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (const auto& ctx : observation_contexts(s, i))
      for (BmesTag t : kAllTags) w[conjoin(ctx, t)] = g(rng);
  for (BmesTag t : kAllTags) {
    w[transition_feature(std::nullopt, t)] = g(rng);
    for (BmesTag p : kAllTags) w[transition_feature(p, t)] = g(rng);
  }
  return w;
}

std::vector<GoldInstance> gold_from_bitext(std::size_t n, std::uint64_t seed) {
  std::vector<GoldInstance> gold;
  for (const auto& p : mplm::testing::make_phrase_bitext(n, seed).pairs) {
    const auto part = extract_minimal_partition(p);
    gold.emplace_back(part.sentence(), partition_to_tags(part));
  }
  return gold;
}

}  // namespace

TEST_CASE("feature extraction instantiates the nine templates plus a transition") {
  const auto fv = extract_features(sent({"a", "b", "c"}), 1, E, B);
  for (const char* f : {"U00:BOS1#E", "U01:a#E", "U02:b#E", "U03:c#E", "U04:EOS1#E",
                        "U05:BOS1_a#E", "U06:a_b#E", "U07:b_c#E", "U08:c_EOS1#E", "T:B→E"})
    CHECK_MESSAGE(fv.count(f) == 1, f);
  CHECK(fv.size() == kFeaturesPerPosition);

  const auto single = extract_features(sent({"a"}), 0, S, std::nullopt);
  CHECK(single.count("U00:BOS2#S") == 1);
  CHECK(single.count("U01:BOS1#S") == 1);
  CHECK(single.count("U03:EOS1#S") == 1);
  CHECK(single.count("U04:EOS2#S") == 1);
  CHECK(single.count("T:START→S") == 1);

  std::mt19937_64 rng(1);
  const auto s = sent({"x", "x", "y", "x", "z", "x"});
  for (std::size_t i = 0; i < s.size(); ++i) {
    int total = 0;
    for (const auto& [f, c] : extract_features(s, i, kAllTags[rng() % 4], std::nullopt)) total += c;
    CHECK(total == static_cast<int>(kFeaturesPerPosition));
  }
}

TEST_CASE("global feature vector is the sum of per-position vectors") {
  const auto s = sent({"a", "b", "c"});
  const auto g = global_features(s, {B, E, S});
  int total = 0;
  for (const auto& [f, c] : g) total += c;
  CHECK(total == 30);
  CHECK(g.at("T:E→S") == 1);
}

TEST_CASE("zero weights decode to all singletons") {
  CHECK(viterbi_decode(sent({"a", "b", "c", "d"}), FeatureWeights{}) ==
        std::vector<BmesTag>{S, S, S, S});
  CHECK(viterbi_decode(sent({"a"}), LabellerModel{}) == std::vector<BmesTag>{S});
  CHECK_THROWS_AS(viterbi_decode(Sentence{}, FeatureWeights{}), ValidationError);
}

TEST_CASE("viterbi equals exhaustive argmax on random weights") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    Sentence s;
    const std::size_t n = 1 + rng() % 7;
    for (std::size_t i = 0; i < n; ++i) s.tokens.push_back("v" + std::to_string(rng() % 4));
    const auto w = random_weights(s, rng);
    double best = -1e300;
    std::vector<BmesTag> arg;
    for (const auto& y : all_valid_sequences(n)) {
      const double sc = score(w, s, y);
      if (sc > best) {
        best = sc;
        arg = y;
      }
    }
    const auto decoded = viterbi_decode(s, w);
    CHECK(is_valid_tag_sequence(decoded));
    CHECK(decoded == arg);
  }
}

TEST_CASE("perceptron fits a single instance") {
  const auto s = sent({"he", "is", "one", "of", "the", "few"});
  const std::vector<BmesTag> gold{B, E, B, E, S, S};
  const auto model = train_averaged_perceptron({{s, gold}}, 5, 1);
  CHECK(viterbi_decode(s, model) == gold);
  const auto scores = evaluate_partition({tags_to_partition(s, viterbi_decode(s, model))},
                                         {tags_to_partition(s, gold)});
  CHECK(scores.f1 == 1.0);
}

TEST_CASE("averaged weights equal the mean weight vector over all steps") {
  const auto gold = gold_from_bitext(12, 9);
  PerceptronTrainer trainer;
  FeatureWeights running_sum;
  int steps = 0;
  for (int epoch = 0; epoch < 3; ++epoch)
    for (const auto& [s, tags] : gold) {
      trainer.train_instance(s, tags);
      ++steps;
      for (const auto& [f, w] : trainer.current_weights()) running_sum[f] += w;
    }
  const auto model = trainer.finalize();
  CHECK(model.instances_seen == static_cast<std::uint64_t>(steps));
  CHECK(model.updates > 0);
  std::size_t nonzero = 0;
  for (const auto& [f, total] : running_sum) {
    const double mean = total / steps;
    auto it = model.averaged_weights.find(f);
    const double avg = it == model.averaged_weights.end() ? 0.0 : it->second;
    CHECK(avg == doctest::Approx(mean).epsilon(1e-12));
    if (mean != 0) ++nonzero;
  }
  CHECK(model.averaged_weights.size() == nonzero);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto gold = gold_from_bitext(40, 2);
  const auto a = serialize_labeller(train_averaged_perceptron(gold, 3, 17));
  const auto b = serialize_labeller(train_averaged_perceptron(gold, 3, 17));
  CHECK(a == b);
}

TEST_CASE("training rejects bad input") {
  CHECK_THROWS_AS(train_averaged_perceptron({}, 1, 0), ValidationError);
  CHECK_THROWS_AS(train_averaged_perceptron({{sent({"a"}), {S}}}, 0, 0), ValidationError);
  CHECK_THROWS_AS(train_averaged_perceptron({{sent({"a", "b"}), {B, B}}}, 1, 0), ValidationError);
}

TEST_CASE("labelling a corpus") {
  const auto model = train_averaged_perceptron(gold_from_bitext(30, 4), 3, 1);
  CHECK(label_corpus(model, {}).empty());
  for (const auto& p : label_corpus(model, {sent({"w1"}), sent({"p0a"}), sent({"zzz"})}))
    CHECK(p.phrases.size() == 1);

  std::mt19937_64 rng(8);
  std::vector<Sentence> corpus;
  for (int i = 0; i < 100; ++i) {
    Sentence s;
    const std::size_t n = 1 + rng() % 12;
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = rng() % 3;
      s.tokens.push_back(r == 0 ? "w" + std::to_string(rng() % 40)
                                : "p" + std::to_string(rng() % 16) + static_cast<char>('a' + rng() % 3));
    }
    corpus.push_back(s);
  }
  const auto labelled = label_corpus(model, corpus);
  REQUIRE(labelled.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK_NOTHROW(validate_partition(labelled[i]));
    CHECK(labelled[i].sentence() == corpus[i]);
  }
}

TEST_CASE("partition evaluation") {
  const std::vector<PartitionedSentence> gold{{{{"a"}, {"b"}, {"c", "d"}}}, {{{"e", "f"}}}};
  const auto id = evaluate_partition(gold, gold);
  CHECK(id.precision == 1.0);
  CHECK(id.recall == 1.0);
  CHECK(id.f1 == 1.0);

  // sentence 1: predicted {0,0} {1,2} {3,3} vs gold {0,0} {1,1} {2,3}: one match;
  // sentence 2: exact match. 2 of 4 predicted, 2 of 4 gold.
  const std::vector<PartitionedSentence> pred{{{{"a"}, {"b", "c"}, {"d"}}}, {{{"e", "f"}}}};
  const auto half = evaluate_partition(pred, gold);
  CHECK(half.correct == 2);
  CHECK(half.precision == 0.5);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == 0.5);

  // 3 predicted spans, 2 gold; 1 correct -> P = 1/3, R = 1/2, F1 = 0.4
  const std::vector<PartitionedSentence> g2{{{{"a", "b"}, {"c"}}}};
  const std::vector<PartitionedSentence> p2{{{{"a"}, {"b"}, {"c"}}}};
  const auto r2 = evaluate_partition(p2, g2);
  CHECK(r2.precision == doctest::Approx(1.0 / 3));
  CHECK(r2.recall == doctest::Approx(0.5));
  CHECK(r2.f1 == doctest::Approx(0.4));

  std::vector<PartitionedSentence> singles, wholes;
  for (int i = 0; i < 10; ++i) {
    singles.push_back({{{"a"}, {"b"}, {"c"}, {"d"}}});
    wholes.push_back({{{"a", "b", "c", "d"}}});
  }
  const auto zero = evaluate_partition(singles, wholes);
  CHECK(zero.precision == 0.0);
  CHECK(zero.recall == 0.0);
  CHECK(zero.f1 == 0.0);

  CHECK_THROWS_AS(evaluate_partition({{{{"x"}}}}, {{{{"y"}}}}), ValidationError);
  CHECK_THROWS_AS(evaluate_partition(gold, {gold[0]}), ValidationError);
  CHECK(evaluate_partition({}, {}).f1 == 0.0);
}

TEST_CASE("model serialization") {
  const auto gold = gold_from_bitext(50, 5);
  const auto model = train_averaged_perceptron(gold, 2, 3);
  const auto text = serialize_labeller(model);
  CHECK(text.rfind("mplm-labeller 1\nfeatures " + std::to_string(model.averaged_weights.size()) + "\n", 0) == 0);

  std::istringstream in(text);
  const auto back = load_labeller(in);
  CHECK(back.averaged_weights == model.averaged_weights);
  CHECK(serialize_labeller(back) == text);
  for (const auto& [s, tags] : gold) CHECK(viterbi_decode(s, back) == viterbi_decode(s, model));

  // feature lines are sorted
  std::istringstream lines(text);
  std::string line, prev;
  std::getline(lines, line);
  std::getline(lines, line);
  while (std::getline(lines, line)) {
    CHECK(prev < line);
    prev = line;
  }

  std::istringstream bad("mplm-labeller 9\nfeatures 0\n");
  CHECK_THROWS_AS(load_labeller(bad), ValidationError);
  std::istringstream truncated("mplm-labeller 1\nfeatures 2\nU02:a#S\t1\n");
  CHECK_THROWS_AS(load_labeller(truncated), ValidationError);
}
