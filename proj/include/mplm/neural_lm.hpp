#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mplm/errors.hpp"
#include "mplm/vocabulary.hpp"

namespace mplm {

inline constexpr int kHiddenLayers = 2;
inline constexpr double kInitRange = 0.05;

struct NetworkConfig {
  int context_size = 1;
  std::size_t vocab_size = 0;
  int embed_dim = 128;
  int hidden_dim = 256;
  int nce_k = 100;
  double learning_rate = 0.1;
  int epochs = 5;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (context_size < 1 || embed_dim < 1 || hidden_dim < 1 || vocab_size < 1)
      throw ValidationError("network dimensions must be >= 1");
    if (nce_k < 1) throw ValidationError("nce_k must be >= 1");
    if (epochs < 0 || batch_size < 1) throw ValidationError("bad epochs/batch size");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate))
      throw ValidationError("learning rate must be positive");
  }
};

/// Parameters of the feed-forward net: a shared embedding table, two ReLU
/// hidden layers and a linear output layer over the vocabulary.
template <typename Scalar>
struct NetworkParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix embedding;  // |V| x embed
  Matrix w1;         // hidden x (context * embed)
  Vector b1;
  Matrix w2;  // hidden x hidden
  Vector b2;
  Matrix w_out;  // |V| x hidden
  Vector b_out;

  static NetworkParams zeros(const NetworkConfig& c) {
    const auto v = static_cast<Eigen::Index>(c.vocab_size);
    NetworkParams p;
    p.embedding = Matrix::Zero(v, c.embed_dim);
    p.w1 = Matrix::Zero(c.hidden_dim, c.context_size * c.embed_dim);
    p.b1 = Vector::Zero(c.hidden_dim);
    p.w2 = Matrix::Zero(c.hidden_dim, c.hidden_dim);
    p.b2 = Vector::Zero(c.hidden_dim);
    p.w_out = Matrix::Zero(v, c.hidden_dim);
    p.b_out = Vector::Zero(v);
    return p;
  }

  // Visits every parameter group in a fixed order (also the file order).
  template <typename F>
  void visit(F&& f) {
    f("embedding", embedding);
    f("w1", w1);
    f("b1", b1);
    f("w2", w2);
    f("b2", b2);
    f("w_out", w_out);
    f("b_out", b_out);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<NetworkParams*>(this)->visit([&](const char* name, auto& m) { f(name, std::as_const(m)); });
  }

  void set_zero() {
    visit([](const char*, auto& m) { m.setZero(); });
  }
  bool all_finite() const {
    bool ok = true;
    visit([&](const char*, const auto& m) { ok = ok && m.allFinite(); });
    return ok;
  }
  bool operator==(const NetworkParams& o) const {
    return embedding == o.embedding && w1 == o.w1 && b1 == o.b1 && w2 == o.w2 && b2 == o.b2 &&
           w_out == o.w_out && b_out == o.b_out;
  }
};

template <typename Scalar>
Scalar log_sum_exp(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
  const Scalar m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

template <typename Scalar>
class FeedForwardNet {
 public:
  using Params = NetworkParams<Scalar>;
  using Matrix = typename Params::Matrix;
  using Vector = typename Params::Vector;

  struct Activations {
    Vector input;  // concatenated context embeddings
    Vector pre1, h1, pre2, h2;
  };

  /// All parameters zero.
  explicit FeedForwardNet(NetworkConfig config)
      : config_(std::move(config)), params_(Params::zeros(config_)) {
    config_.validate();
  }

  /// Weights uniform in [-0.05, 0.05] from config.seed, biases zero.
  static FeedForwardNet random(const NetworkConfig& config, double range = kInitRange) {
    FeedForwardNet net(config);
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> u(-range, range);
    const auto fill = [&](Matrix& m) {
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(u(rng));
    };
    fill(net.params_.embedding);
    fill(net.params_.w1);
    fill(net.params_.w2);
    fill(net.params_.w_out);
    return net;
  }

  const NetworkConfig& config() const { return config_; }
  Params& params() { return params_; }
  const Params& params() const { return params_; }
  std::size_t vocab_size() const { return config_.vocab_size; }
  int context_size() const { return config_.context_size; }

  void check_context(std::span<const UnitId> context) const {
    if (context.size() != static_cast<std::size_t>(config_.context_size))
      throw ValidationError("network expects " + std::to_string(config_.context_size) +
                            " context units, got " + std::to_string(context.size()));
    check_ids(context);
  }
  void check_ids(std::span<const UnitId> ids) const {
    for (UnitId id : ids)
      if (id >= config_.vocab_size) throw ValidationError("unit id out of range");
  }

  Activations hidden(std::span<const UnitId> context) const {
    check_context(context);
    const int d = config_.embed_dim;
    Activations a;
    a.input.resize(static_cast<Eigen::Index>(context.size()) * d);
    for (std::size_t i = 0; i < context.size(); ++i)
      a.input.segment(static_cast<Eigen::Index>(i) * d, d) =
          params_.embedding.row(static_cast<Eigen::Index>(context[i])).transpose();
    a.pre1 = params_.w1 * a.input + params_.b1;
    a.h1 = a.pre1.cwiseMax(Scalar(0));
    a.pre2 = params_.w2 * a.h1 + params_.b2;
    a.h2 = a.pre2.cwiseMax(Scalar(0));
    return a;
  }

  /// D_u(x) for a single unit.
  Scalar output_score(const Activations& a, UnitId unit) const {
    const auto r = static_cast<Eigen::Index>(unit);
    return params_.w_out.row(r).dot(a.h2) + params_.b_out(r);
  }

  /// Raw pre-softmax scores D(x) over the whole vocabulary.
  Vector forward_scores(std::span<const UnitId> context) const {
    const auto a = hidden(context);
    return params_.w_out * a.h2 + params_.b_out;
  }

  Vector log_probs(std::span<const UnitId> context) const {
    Vector s = forward_scores(context);
    const Scalar lz = log_sum_exp<Scalar>(s);
    s.array() -= lz;
    return s;
  }

  Scalar log_partition(std::span<const UnitId> context) const {
    return log_sum_exp<Scalar>(forward_scores(context));
  }

  Scalar logprob_exact(UnitId unit, std::span<const UnitId> context) const {
    check_ids(std::span<const UnitId>(&unit, 1));
    return log_probs(context)(static_cast<Eigen::Index>(unit));
  }

  Scalar prob_exact(UnitId unit, std::span<const UnitId> context) const {
    return std::exp(logprob_exact(unit, context));
  }

  /// Approximate log probability that assumes Z(x) = 1 (self-normalization).
  Scalar logprob_unnormalized(UnitId unit, std::span<const UnitId> context) const {
    check_ids(std::span<const UnitId>(&unit, 1));
    return output_score(hidden(context), unit);
  }

  bool operator==(const FeedForwardNet& o) const { return params_ == o.params_; }

 private:
  NetworkConfig config_;
  Params params_;
};

struct TrainingExample {
  std::vector<UnitId> context;
  UnitId target = 0;
};

/// Unigram noise distribution q for NCE; strictly positive on the vocabulary.
class NoiseDistribution {
 public:
  explicit NoiseDistribution(std::vector<double> probs)
      : probs_(std::move(probs)), sampler_(probs_.begin(), probs_.end()) {
    if (probs_.empty()) throw ValidationError("empty noise distribution");
    for (double p : probs_)
      if (!(p > 0)) throw ValidationError("noise distribution must be strictly positive");
  }
  double prob(UnitId id) const { return probs_.at(id); }
  std::size_t size() const { return probs_.size(); }
  const std::vector<double>& probs() const { return probs_; }
  template <typename Rng>
  UnitId sample(Rng& rng) const {
    return static_cast<UnitId>(sampler_(rng));
  }

 private:
  std::vector<double> probs_;
  mutable std::discrete_distribution<std::size_t> sampler_;
};

template <typename Scalar>
struct NceResult {
  Scalar objective{};  // sum of log P(C=1|target) + sum log P(C=0|noise); maximised
  NetworkParams<Scalar> gradient;  // d objective / d parameters
  Scalar loss() const { return -objective; }
};

namespace detail {

template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  // log(1 / (1 + e^-x)), stable for large |x|
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

}  // namespace detail

/// NCE objective and gradient accumulation with sparse bookkeeping: only the
/// output and embedding rows touched by the batch are non-zero in `gradient`.
template <typename Scalar>
class NceAccumulator {
 public:
  explicit NceAccumulator(const NetworkConfig& config)
      : gradient_(NetworkParams<Scalar>::zeros(config)) {}

  /// Adds one datum with its k noise draws.
  void add(const FeedForwardNet<Scalar>& net, const TrainingExample& ex,
           std::span<const UnitId> noise, const NoiseDistribution& q) {
    const auto& p = net.params();
    const auto a = net.hidden(ex.context);
    net.check_ids(std::span<const UnitId>(&ex.target, 1));
    net.check_ids(noise);
    const Scalar log_k = std::log(static_cast<Scalar>(noise.size()));
    const auto shifted = [&](UnitId u) {
      return net.output_score(a, u) - (log_k + static_cast<Scalar>(std::log(q.prob(u))));
    };

    // d objective / d D_u for each output unit involved
    std::vector<std::pair<UnitId, Scalar>> d_out;
    const Scalar s_pos = shifted(ex.target);
    objective_ += detail::log_sigmoid(s_pos);
    d_out.emplace_back(ex.target, Scalar(1) - detail::sigmoid(s_pos));
    for (UnitId v : noise) {
      const Scalar s = shifted(v);
      objective_ += detail::log_sigmoid(-s);
      d_out.emplace_back(v, -detail::sigmoid(s));
    }

    typename FeedForwardNet<Scalar>::Vector dh2 =
        FeedForwardNet<Scalar>::Vector::Zero(a.h2.size());
    for (const auto& [u, g] : d_out) {
      const auto r = static_cast<Eigen::Index>(u);
      dh2.noalias() += g * p.w_out.row(r).transpose();
      gradient_.w_out.row(r).noalias() += g * a.h2.transpose();
      gradient_.b_out(r) += g;
      touch(out_rows_, out_seen_, u);
    }
    const auto dpre2 = (dh2.array() * (a.pre2.array() > 0).template cast<Scalar>()).matrix().eval();
    gradient_.w2.noalias() += dpre2 * a.h1.transpose();
    gradient_.b2 += dpre2;
    const auto dh1 = (p.w2.transpose() * dpre2).eval();
    const auto dpre1 = (dh1.array() * (a.pre1.array() > 0).template cast<Scalar>()).matrix().eval();
    gradient_.w1.noalias() += dpre1 * a.input.transpose();
    gradient_.b1 += dpre1;
    const auto dx = (p.w1.transpose() * dpre1).eval();
    const int d = net.config().embed_dim;
    for (std::size_t i = 0; i < ex.context.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(ex.context[i]);
      gradient_.embedding.row(r) += dx.segment(static_cast<Eigen::Index>(i) * d, d).transpose();
      touch(embed_rows_, embed_seen_, ex.context[i]);
    }
  }

  Scalar objective() const { return objective_; }
  const NetworkParams<Scalar>& gradient() const { return gradient_; }

  /// params += step * gradient, visiting only touched sparse rows.
  void apply(NetworkParams<Scalar>& params, Scalar step) const {
    for (UnitId u : embed_rows_) {
      const auto r = static_cast<Eigen::Index>(u);
      params.embedding.row(r) += step * gradient_.embedding.row(r);
    }
    for (UnitId u : out_rows_) {
      const auto r = static_cast<Eigen::Index>(u);
      params.w_out.row(r) += step * gradient_.w_out.row(r);
      params.b_out(r) += step * gradient_.b_out(r);
    }
    params.w1 += step * gradient_.w1;
    params.b1 += step * gradient_.b1;
    params.w2 += step * gradient_.w2;
    params.b2 += step * gradient_.b2;
  }

  void reset() {
    for (UnitId u : embed_rows_) {
      gradient_.embedding.row(static_cast<Eigen::Index>(u)).setZero();
      embed_seen_[u] = false;
    }
    for (UnitId u : out_rows_) {
      gradient_.w_out.row(static_cast<Eigen::Index>(u)).setZero();
      gradient_.b_out(static_cast<Eigen::Index>(u)) = 0;
      out_seen_[u] = false;
    }
    embed_rows_.clear();
    out_rows_.clear();
    gradient_.w1.setZero();
    gradient_.b1.setZero();
    gradient_.w2.setZero();
    gradient_.b2.setZero();
    objective_ = 0;
  }

  NceResult<Scalar> take() && { return {objective_, std::move(gradient_)}; }

 private:
  void touch(std::vector<UnitId>& rows, std::vector<bool>& seen, UnitId u) {
    if (seen.size() <= u) seen.resize(static_cast<std::size_t>(gradient_.b_out.size()), false);
    if (!seen[u]) {
      seen[u] = true;
      rows.push_back(u);
    }
  }

  NetworkParams<Scalar> gradient_;
  Scalar objective_{};
  std::vector<UnitId> embed_rows_, out_rows_;
  std::vector<bool> embed_seen_, out_seen_;
};

/// Draws k noise units per datum from q, in batch order.
template <typename Rng>
std::vector<std::vector<UnitId>> draw_noise(std::size_t batch_size, int k,
                                            const NoiseDistribution& q, Rng& rng) {
  std::vector<std::vector<UnitId>> noise(batch_size, std::vector<UnitId>(static_cast<std::size_t>(k)));
  for (auto& row : noise)
    for (auto& id : row) id = q.sample(rng);
  return noise;
}

/// Objective and gradient for fixed noise draws (deterministic).
template <typename Scalar>
NceResult<Scalar> nce_objective(const FeedForwardNet<Scalar>& net,
                                std::span<const TrainingExample> batch,
                                const std::vector<std::vector<UnitId>>& noise,
                                const NoiseDistribution& q) {
  if (noise.size() != batch.size()) throw ValidationError("one noise row per datum required");
  if (q.size() != net.vocab_size()) throw ValidationError("noise distribution size mismatch");
  NceAccumulator<Scalar> acc(net.config());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (noise[i].empty()) throw ValidationError("k must be >= 1");
    acc.add(net, batch[i], noise[i], q);
  }
  return std::move(acc).take();
}

template <typename Scalar, typename Rng>
NceResult<Scalar> nce_gradients(const FeedForwardNet<Scalar>& net,
                                std::span<const TrainingExample> batch,
                                const NoiseDistribution& q, int k, Rng& rng) {
  if (k < 1) throw ValidationError("k must be >= 1");
  return nce_objective(net, batch, draw_noise(batch.size(), k, q, rng), q);
}

/// Every position with at least c real predecessors yields a window.
std::vector<TrainingExample> collect_windows(const std::vector<std::vector<UnitId>>& corpus,
                                             int context_size);
/// Only the positions the suite routes to the c-context network: p == c for
/// c < N-1, p >= N-1 for c = N-1.
std::vector<TrainingExample> collect_routed_windows(
    const std::vector<std::vector<UnitId>>& corpus, int context_size, int order);

/// Minibatch stochastic gradient ascent on the NCE objective, starting from a
/// seeded random initialization. Deterministic given (examples, config).
FeedForwardNet<double> train_network(const std::vector<TrainingExample>& examples,
                                     const NetworkConfig& config, const NoiseDistribution& q);

/// Mean NCE objective per datum for fixed noise; a training-progress probe.
double mean_nce_objective(const FeedForwardNet<double>& net,
                          const std::vector<TrainingExample>& examples,
                          const NoiseDistribution& q, int k, std::uint64_t seed);

/// Unigram table plus one network per context size 1..N-1.
struct NeuralSuite {
  int order = 2;
  UnitKind units = UnitKind::Phrase;
  UnitVocabulary vocab{false};
  std::vector<double> log_unigram;  // natural log, one per vocabulary id
  std::vector<FeedForwardNet<double>> networks;  // networks[c-1] has context size c

  const FeedForwardNet<double>& network(int context_size) const;
};

/// Relative-frequency unigram over `vocab`; <unk> gets the OOV token count,
/// floored at 1.
std::vector<double> unigram_probabilities(const std::vector<std::vector<UnitId>>& corpus,
                                          const UnitVocabulary& vocab);

/// N-1 independently trained networks; `shared` provides everything but
/// context_size and vocab_size.
NeuralSuite train_suite(const std::vector<UnitSequence>& corpus, int order,
                        const NetworkConfig& shared, const VocabularyOptions& vocab_options = {},
                        UnitKind units = UnitKind::Phrase);

void save_suite(const NeuralSuite& suite, std::ostream& out);
std::string serialize_suite(const NeuralSuite& suite);
NeuralSuite load_suite(std::istream& in);
NeuralSuite load_suite(const std::filesystem::path& path);

/// Exact-softmax perplexity of a single network over its own windows.
double network_perplexity(const FeedForwardNet<double>& net,
                          const std::vector<TrainingExample>& examples);

}  // namespace mplm
