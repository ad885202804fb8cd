#include "mplm/neural_lm.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mplm {

static_assert(std::endian::native == std::endian::little, "suite files are little-endian");

std::vector<TrainingExample> collect_windows(const std::vector<std::vector<UnitId>>& corpus,
                                             int context_size) {
  std::vector<TrainingExample> out;
  const auto c = static_cast<std::size_t>(context_size);
  for (const auto& seq : corpus)
    for (std::size_t p = c; p < seq.size(); ++p)
      out.push_back({std::vector<UnitId>(seq.begin() + static_cast<std::ptrdiff_t>(p - c),
                                         seq.begin() + static_cast<std::ptrdiff_t>(p)),
                     seq[p]});
  return out;
}

std::vector<TrainingExample> collect_routed_windows(
    const std::vector<std::vector<UnitId>>& corpus, int context_size, int order) {
  const auto c = static_cast<std::size_t>(context_size);
  const auto widest = static_cast<std::size_t>(order - 1);
  std::vector<TrainingExample> out;
  for (const auto& seq : corpus)
    for (std::size_t p = c; p < seq.size(); ++p) {
      if (std::min(p, widest) != c) continue;
      out.push_back({std::vector<UnitId>(seq.begin() + static_cast<std::ptrdiff_t>(p - c),
                                         seq.begin() + static_cast<std::ptrdiff_t>(p)),
                     seq[p]});
    }
  return out;
}

FeedForwardNet<double> train_network(const std::vector<TrainingExample>& examples,
                                     const NetworkConfig& config, const NoiseDistribution& q) {
  config.validate();
  if (config.vocab_size < 2) throw ValidationError("neural vocabulary needs at least 2 units");
  if (q.size() != config.vocab_size) throw ValidationError("noise distribution size mismatch");
  auto net = FeedForwardNet<double>::random(config);
  if (examples.empty()) return net;
  // Separate stream from initialization so shuffling does not shift init.
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  NceAccumulator<double> acc(config);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      acc.reset();
      std::vector<UnitId> noise(static_cast<std::size_t>(config.nce_k));
      for (std::size_t i = start; i < end; ++i) {
        for (auto& id : noise) id = q.sample(rng);
        acc.add(net, examples[order[i]], noise, q);
      }
      acc.apply(net.params(), config.learning_rate / static_cast<double>(end - start));
    }
  }
  if (!net.params().all_finite()) throw InvariantError("training diverged (non-finite parameters)");
  return net;
}

double mean_nce_objective(const FeedForwardNet<double>& net,
                          const std::vector<TrainingExample>& examples,
                          const NoiseDistribution& q, int k, std::uint64_t seed) {
  if (examples.empty()) return 0;
  std::mt19937_64 rng(seed);
  const auto r = nce_gradients(net, std::span<const TrainingExample>(examples), q, k, rng);
  return r.objective / static_cast<double>(examples.size());
}

double network_perplexity(const FeedForwardNet<double>& net,
                          const std::vector<TrainingExample>& examples) {
  if (examples.empty()) throw ValidationError("perplexity over no examples");
  double total = 0;
  for (const auto& ex : examples) total += net.logprob_exact(ex.target, ex.context);
  return std::exp(-total / static_cast<double>(examples.size()));
}

const FeedForwardNet<double>& NeuralSuite::network(int context_size) const {
  if (context_size < 1 || static_cast<std::size_t>(context_size) > networks.size())
    throw ValidationError("no network with context size " + std::to_string(context_size));
  return networks[static_cast<std::size_t>(context_size - 1)];
}

std::vector<double> unigram_probabilities(const std::vector<std::vector<UnitId>>& corpus,
                                          const UnitVocabulary& vocab) {
  std::vector<double> counts(vocab.size(), 0.0);
  for (const auto& seq : corpus)
    for (UnitId id : seq) counts.at(id) += 1;
  counts[vocab.unk()] = std::max(counts[vocab.unk()], 1.0);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  for (auto& c : counts) c /= total;
  return counts;
}

NeuralSuite train_suite(const std::vector<UnitSequence>& corpus, int order,
                        const NetworkConfig& shared, const VocabularyOptions& vocab_options,
                        UnitKind units) {
  if (order < 2) throw ValidationError("neural suite order must be >= 2");
  if (corpus.empty()) throw ValidationError("empty training corpus");
  auto opts = vocab_options;
  opts.with_boundaries = false;
  NeuralSuite suite;
  suite.order = order;
  suite.units = units;
  suite.vocab = build_vocabulary(corpus, opts);
  if (suite.vocab.size() < 2) throw ValidationError("neural vocabulary needs at least 2 units");
  std::vector<std::vector<UnitId>> ids;
  ids.reserve(corpus.size());
  for (const auto& seq : corpus) ids.push_back(suite.vocab.map(seq));

  const auto probs = unigram_probabilities(ids, suite.vocab);
  suite.log_unigram.reserve(probs.size());
  for (double p : probs) suite.log_unigram.push_back(std::log(p));
  const NoiseDistribution q(probs);

  for (int c = 1; c < order; ++c) {
    NetworkConfig cfg = shared;
    cfg.context_size = c;
    cfg.vocab_size = suite.vocab.size();
    cfg.seed = shared.seed + static_cast<std::uint64_t>(c);
    suite.networks.push_back(train_network(collect_routed_windows(ids, c, order), cfg, q));
  }
  return suite;
}

namespace {

constexpr char kSuiteMagic[8] = {'M', 'P', 'L', 'M', 'N', 'N', '\0', '\1'};
constexpr std::uint32_t kSuiteVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("suite file truncated");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ULL << 30)) throw ValidationError("suite file: implausible string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw ValidationError("suite file truncated");
  return s;
}

}  // namespace

void save_suite(const NeuralSuite& suite, std::ostream& out) {
  out.write(kSuiteMagic, sizeof kSuiteMagic);
  put<std::uint32_t>(out, kSuiteVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(suite.order));
  put<std::uint32_t>(out, suite.units == UnitKind::Word ? 0 : 1);
  put<std::uint64_t>(out, suite.vocab.size());
  for (UnitId id = 0; id < suite.vocab.size(); ++id) {
    put_string(out, suite.vocab.unit(id));
    put<std::uint64_t>(out, suite.vocab.frequency(id));
  }
  for (double lp : suite.log_unigram) put<double>(out, lp);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(suite.networks.size()));
  for (const auto& net : suite.networks) {
    const auto& c = net.config();
    put<std::int32_t>(out, c.context_size);
    put<std::int32_t>(out, c.embed_dim);
    put<std::int32_t>(out, c.hidden_dim);
    put<std::int32_t>(out, c.nce_k);
    put<std::int32_t>(out, c.epochs);
    put<std::int32_t>(out, c.batch_size);
    put<double>(out, c.learning_rate);
    put<std::uint64_t>(out, c.seed);
    net.params().visit([&](const char*, const auto& m) {
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    });
  }
}

std::string serialize_suite(const NeuralSuite& suite) {
  std::ostringstream ss(std::ios::binary);
  save_suite(suite, ss);
  return ss.str();
}

NeuralSuite load_suite(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kSuiteMagic, sizeof magic) != 0)
    throw ValidationError("not a neural suite file (bad magic)");
  if (get<std::uint32_t>(in) != kSuiteVersion) throw ValidationError("unsupported suite version");
  NeuralSuite s;
  s.order = static_cast<int>(get<std::uint32_t>(in));
  s.units = get<std::uint32_t>(in) == 0 ? UnitKind::Word : UnitKind::Phrase;
  const auto v = get<std::uint64_t>(in);
  if (v < 1 || v > (1ULL << 32)) throw ValidationError("suite file: bad vocabulary size");
  for (std::uint64_t i = 0; i < v; ++i) {
    auto unit = get_string(in);
    const auto freq = get<std::uint64_t>(in);
    if (i == 0) {
      if (unit != kUnkUnit) throw ValidationError("suite file: <unk> must be id 0");
      s.vocab.set_frequency(0, freq);
    } else {
      s.vocab.add(std::move(unit), freq);
    }
  }
  s.log_unigram.resize(v);
  for (auto& lp : s.log_unigram) lp = get<double>(in);
  const auto n = get<std::uint32_t>(in);
  if (static_cast<int>(n) != s.order - 1) throw ValidationError("suite file: network count != N-1");
  for (std::uint32_t i = 0; i < n; ++i) {
    NetworkConfig c;
    c.context_size = get<std::int32_t>(in);
    c.embed_dim = get<std::int32_t>(in);
    c.hidden_dim = get<std::int32_t>(in);
    c.nce_k = get<std::int32_t>(in);
    c.epochs = get<std::int32_t>(in);
    c.batch_size = get<std::int32_t>(in);
    c.learning_rate = get<double>(in);
    c.seed = get<std::uint64_t>(in);
    c.vocab_size = v;
    if (c.context_size != static_cast<int>(i) + 1)
      throw ValidationError("suite file: networks out of order");
    FeedForwardNet<double> net(c);
    net.params().visit([&](const char* name, auto& m) {
      const auto rows = get<std::uint64_t>(in);
      const auto cols = get<std::uint64_t>(in);
      if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols()))
        throw ValidationError(std::string("suite file: bad shape for ") + name);
      if (!in.read(reinterpret_cast<char*>(m.data()),
                   static_cast<std::streamsize>(m.size() * sizeof(double))))
        throw ValidationError("suite file truncated");
    });
    s.networks.push_back(std::move(net));
  }
  return s;
}

NeuralSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_suite(in);
}

}  // namespace mplm
