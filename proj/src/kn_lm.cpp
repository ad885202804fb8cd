#include "mplm/kn_lm.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "mplm/detail/numbers.hpp"
#include "mplm/errors.hpp"

namespace mplm {

namespace {

constexpr std::string_view kKnMagic = "mplm-kn";
constexpr int kKnVersion = 1;

struct ContextStats {
  double total = 0;
  std::uint64_t n1 = 0, n2 = 0, n3plus = 0;

  double gamma(const Discounts& d) const {
    return (d.d1 * n1 + d.d2 * n2 + d.d3plus * n3plus) / total;
  }
};

template <typename V>
std::vector<const typename NgramMap<V>::value_type*> sorted_items(const NgramMap<V>& m) {
  std::vector<const typename NgramMap<V>::value_type*> items;
  items.reserve(m.size());
  for (const auto& kv : m) items.push_back(&kv);
  std::sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->first < b->first; });
  return items;
}

}  // namespace

CountsOfCounts NgramCounts::counts_of_counts(int k) const {
  CountsOfCounts n{};
  for (const auto& [g, c] : counts.at(static_cast<std::size_t>(k - 1)))
    if (c >= 1 && c <= 4) ++n[c - 1];
  return n;
}

void NgramCounts::add_sequence(const std::vector<UnitId>& ids) {
  const auto pad = static_cast<std::size_t>(order - 1);
  std::vector<UnitId> padded(pad, vocab.bos());
  padded.insert(padded.end(), ids.begin(), ids.end());
  padded.push_back(vocab.eos());
  for (std::size_t p = pad; p < padded.size(); ++p) {
    for (int k = 1; k <= order; ++k) {
      Ngram g(padded.begin() + static_cast<std::ptrdiff_t>(p + 1 - static_cast<std::size_t>(k)),
              padded.begin() + static_cast<std::ptrdiff_t>(p + 1));
      ++counts[static_cast<std::size_t>(k - 1)][std::move(g)];
    }
  }
}

void NgramCounts::merge(const NgramCounts& other) {
  if (other.order != order || !(other.vocab == vocab))
    throw ValidationError("cannot merge counts with different order or vocabulary");
  for (std::size_t k = 0; k < counts.size(); ++k)
    for (const auto& [g, c] : other.counts[k]) counts[k][g] += c;
}

NgramCounts count_ngrams(const std::vector<UnitSequence>& corpus, const UnitVocabulary& vocab,
                         int order) {
  if (order < 1) throw ValidationError("n-gram order must be >= 1");
  if (!vocab.has_boundaries()) throw ValidationError("KN vocabulary needs <s> and </s>");
  NgramCounts c{order, vocab, std::vector<NgramMap<std::uint64_t>>(static_cast<std::size_t>(order))};
  for (const auto& seq : corpus) c.add_sequence(vocab.map(seq));
  return c;
}

Discounts modified_kn_discounts(const CountsOfCounts& n) {
  Discounts d;
  if (n[0] == 0 || n[1] == 0) {
    d.fallback = true;
    return d;
  }
  const double n1 = static_cast<double>(n[0]), n2 = static_cast<double>(n[1]),
               n3 = static_cast<double>(n[2]), n4 = static_cast<double>(n[3]);
  const double y = n1 / (n1 + 2 * n2);
  d.d1 = std::clamp(1 - 2 * y * n2 / n1, 0.0, 1.0);
  d.d2 = std::clamp(2 - 3 * y * n3 / n2, 0.0, 2.0);
  d.d3plus = n[2] == 0 ? d.d2 : std::clamp(3 - 4 * y * n4 / n3, 0.0, 3.0);
  return d;
}

KNModel estimate(const NgramCounts& counts, UnitKind units) {
  const int order = counts.order;
  const auto n_orders = static_cast<std::size_t>(order);
  KNModel model;
  model.order = order;
  model.units = units;
  model.vocab = counts.vocab;
  model.ngrams.resize(n_orders);
  model.discounts.resize(n_orders);

  // Highest order uses raw counts, lower orders the number of distinct
  // left extensions (continuation counts).
  std::vector<NgramMap<std::uint64_t>> adjusted(n_orders);
  adjusted[n_orders - 1] = counts.counts[n_orders - 1];
  for (std::size_t k = 0; k + 1 < n_orders; ++k)
    for (const auto& [g, c] : counts.counts[k + 1]) ++adjusted[k][Ngram(g.begin() + 1, g.end())];

  for (std::size_t k = 0; k < n_orders; ++k) {
    CountsOfCounts n{};
    for (const auto& [g, a] : adjusted[k])
      if (a >= 1 && a <= 4) ++n[a - 1];
    model.discounts[k] = modified_kn_discounts(n);
  }

  // Linear-space probabilities of every stored k-gram, filled bottom-up.
  std::vector<NgramMap<double>> prob(n_orders);
  const auto& vocab = model.vocab;
  const double uniform = 1.0 / static_cast<double>(model.predictable_size());

  for (std::size_t k = 0; k < n_orders; ++k) {
    const Discounts& d = model.discounts[k];
    NgramMap<ContextStats> stats;
    for (const auto& [g, a] : adjusted[k]) {
      auto& s = stats[Ngram(g.begin(), g.end() - 1)];
      s.total += static_cast<double>(a);
      if (a == 1) ++s.n1;
      else if (a == 2) ++s.n2;
      else ++s.n3plus;
    }
    auto& entries = model.ngrams[k];
    if (k == 0) {
      const ContextStats& s = stats.at(Ngram{});
      const double gamma = s.gamma(d);
      for (UnitId w = 0; w < vocab.size(); ++w) {
        Ngram g{w};
        entries[g];
        if (w == vocab.bos()) continue;
        auto it = adjusted[0].find(g);
        const std::uint64_t a = it == adjusted[0].end() ? 0 : it->second;
        prob[0][g] = std::max(static_cast<double>(a) - d(a), 0.0) / s.total + gamma * uniform;
      }
    } else {
      for (const auto& [g, a] : adjusted[k]) {
        const ContextStats& s = stats.at(Ngram(g.begin(), g.end() - 1));
        const double lower = prob[k - 1].at(Ngram(g.begin() + 1, g.end()));
        prob[k][g] = (static_cast<double>(a) - d(a)) / s.total + s.gamma(d) * lower;
        entries[g];
      }
    }
    // Interpolation weight of each context becomes its backoff weight.
    if (k > 0) {
      for (const auto& [h, s] : stats) model.ngrams[k - 1][h].log10_backoff = std::log10(s.gamma(d));
    }
  }

  for (std::size_t k = 0; k < n_orders; ++k) {
    for (auto& [g, e] : model.ngrams[k]) {
      auto pit = prob[k].find(g);
      if (pit != prob[k].end()) e.log10_prob = std::log10(pit->second);
      auto cit = counts.counts[k].find(g);
      if (cit != counts.counts[k].end()) e.count = cit->second;
    }
  }
  return model;
}

KnQuery KNModel::query(UnitId unit, std::span<const UnitId> context) const {
  const auto max_ctx = static_cast<std::size_t>(order - 1);
  if (context.size() > max_ctx) context = context.subspan(context.size() - max_ctx);
  double backoff = 0;
  Ngram g;
  for (std::size_t len = context.size() + 1; len >= 1; --len) {
    const auto ctx = context.subspan(context.size() - (len - 1));
    g.assign(ctx.begin(), ctx.end());
    g.push_back(unit);
    const auto& table = ngrams[len - 1];
    if (auto it = table.find(g); it != table.end() && std::isfinite(it->second.log10_prob))
      return {backoff + it->second.log10_prob, static_cast<int>(len)};
    if (len == 1) break;
    g.pop_back();
    if (auto it = ngrams[len - 2].find(g); it != ngrams[len - 2].end())
      backoff += it->second.log10_backoff;
  }
  return {-INFINITY, 0};  // only reachable for <s> or ids outside the vocabulary
}

double KNModel::logprob(std::string_view unit, const UnitSequence& context) const {
  const auto ids = vocab.map(context);
  return logprob(vocab.id(unit), ids);
}

std::uint64_t KNModel::count(std::span<const UnitId> ngram) const {
  if (ngram.empty() || ngram.size() > static_cast<std::size_t>(order)) return 0;
  const auto& table = ngrams[ngram.size() - 1];
  auto it = table.find(Ngram(ngram.begin(), ngram.end()));
  return it == table.end() ? 0 : it->second.count;
}

namespace {

std::vector<UnitId> padded_ids(const KNModel& model, const UnitSequence& sequence) {
  std::vector<UnitId> padded(static_cast<std::size_t>(model.order - 1), model.vocab.bos());
  for (const auto& u : sequence) padded.push_back(model.vocab.id(u));
  padded.push_back(model.vocab.eos());
  return padded;
}

}  // namespace

KnSequenceScore score_sequence(const KNModel& model, const UnitSequence& sequence) {
  if (sequence.empty()) throw ValidationError("cannot score an empty sequence");
  const auto padded = padded_ids(model, sequence);
  const auto pad = static_cast<std::size_t>(model.order - 1);
  KnSequenceScore out;
  for (std::size_t p = pad; p < padded.size(); ++p) {
    const auto q = model.query(padded[p], std::span<const UnitId>(padded.data() + p - pad, pad));
    const double lp = q.logprob();
    out.positions.push_back({p - pad, q.matched_order, lp});
    out.total += lp;
  }
  return out;
}

double sequence_logprob(const KNModel& model, const UnitSequence& sequence) {
  return score_sequence(model, sequence).total;
}

PerplexityReport perplexity(const KNModel& model, const std::vector<UnitSequence>& corpus) {
  if (corpus.empty()) throw ValidationError("perplexity of an empty corpus");
  PerplexityReport r;
  for (const auto& seq : corpus) {
    r.total_logprob += sequence_logprob(model, seq);
    r.predictions += seq.size() + 1;
    for (const auto& u : seq) r.words += unit_word_count(u);
    r.words += 1;
  }
  r.per_unit = std::exp(-r.total_logprob / static_cast<double>(r.predictions));
  r.per_word = std::exp(-r.total_logprob / static_cast<double>(r.words));
  return r;
}

double hit_rate(const KNModel& model, const std::vector<UnitSequence>& corpus, int k) {
  if (k < 1 || k > model.order) throw ValidationError("hit-rate order must be in [1, N]");
  std::size_t hits = 0, total = 0;
  const auto pad = static_cast<std::size_t>(model.order - 1);
  const auto ku = static_cast<std::size_t>(k);
  for (const auto& seq : corpus) {
    const auto padded = padded_ids(model, seq);
    for (std::size_t p = pad; p < padded.size(); ++p) {
      ++total;
      if (model.count(std::span<const UnitId>(padded.data() + p + 1 - ku, ku)) > 0) ++hits;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

void save_kn(const KNModel& model, std::ostream& out) {
  out << kKnMagic << ' ' << kKnVersion << '\n';
  out << "order " << model.order << '\n';
  out << "units " << unit_kind_name(model.units) << '\n';
  out << "vocab " << model.vocab.size() << '\n';
  for (UnitId id = 0; id < model.vocab.size(); ++id)
    out << id << '\t' << model.vocab.unit(id) << '\t' << model.vocab.frequency(id) << '\n';
  for (std::size_t k = 0; k < model.discounts.size(); ++k) {
    const auto& d = model.discounts[k];
    out << "discounts " << k + 1 << ' ' << detail::format_double(d.d1) << ' '
        << detail::format_double(d.d2) << ' ' << detail::format_double(d.d3plus) << ' '
        << (d.fallback ? 1 : 0) << '\n';
  }
  for (std::size_t k = 0; k < model.ngrams.size(); ++k) {
    out << "ngrams " << k + 1 << ' ' << model.ngrams[k].size() << '\n';
    for (const auto* kv : sorted_items(model.ngrams[k])) {
      for (std::size_t i = 0; i < kv->first.size(); ++i) out << (i ? " " : "") << kv->first[i];
      out << '\t' << detail::format_double(kv->second.log10_prob) << '\t'
          << detail::format_double(kv->second.log10_backoff) << '\t' << kv->second.count << '\n';
    }
  }
  out << "end\n";
}

std::string serialize_kn(const KNModel& model) {
  std::ostringstream ss;
  save_kn(model, ss);
  return ss.str();
}

namespace {

std::vector<std::string> split_on(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string expect_line(std::istream& in, std::string_view what) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("KN model truncated before " + std::string(what));
  return line;
}

std::string_view expect_key(std::string_view line, std::string_view key) {
  if (line.substr(0, key.size() + 1) != std::string(key) + ' ')
    throw ValidationError("KN model: expected '" + std::string(key) + "'");
  return line.substr(key.size() + 1);
}

}  // namespace

KNModel load_kn(std::istream& in) {
  using detail::parse_double;
  using detail::parse_int;
  if (expect_line(in, "header") != std::string(kKnMagic) + ' ' + std::to_string(kKnVersion))
    throw ValidationError("not a KN model (bad header)");
  KNModel m;
  m.order = parse_int<int>(expect_key(expect_line(in, "order"), "order"));
  if (m.order < 1) throw ValidationError("KN model: bad order");
  m.units = parse_unit_kind(expect_key(expect_line(in, "units"), "units"));
  const auto v = parse_int<std::size_t>(expect_key(expect_line(in, "vocab"), "vocab"));
  if (v < 3) throw ValidationError("KN model: vocabulary too small");
  for (std::size_t i = 0; i < v; ++i) {
    const auto f = split_on(expect_line(in, "vocabulary"), '\t');
    if (f.size() != 3 || parse_int<std::size_t>(f[0]) != i)
      throw ValidationError("KN model: bad vocabulary line");
    const auto freq = parse_int<std::uint64_t>(f[2]);
    if (i < 3) {
      if (m.vocab.unit(static_cast<UnitId>(i)) != f[1])
        throw ValidationError("KN model: reserved units out of place");
      m.vocab.set_frequency(static_cast<UnitId>(i), freq);
    } else {
      m.vocab.add(f[1], freq);
    }
  }
  const auto n_orders = static_cast<std::size_t>(m.order);
  m.discounts.resize(n_orders);
  for (std::size_t k = 0; k < n_orders; ++k) {
    const auto f = split_whitespace(expect_key(expect_line(in, "discounts"), "discounts"));
    if (f.size() != 5 || parse_int<std::size_t>(f[0]) != k + 1)
      throw ValidationError("KN model: bad discounts line");
    m.discounts[k] = {parse_double(f[1]), parse_double(f[2]), parse_double(f[3]), f[4] == "1"};
  }
  m.ngrams.resize(n_orders);
  for (std::size_t k = 0; k < n_orders; ++k) {
    const auto f = split_whitespace(expect_key(expect_line(in, "ngrams"), "ngrams"));
    if (f.size() != 2 || parse_int<std::size_t>(f[0]) != k + 1)
      throw ValidationError("KN model: bad ngrams header");
    const auto count = parse_int<std::size_t>(f[1]);
    auto& table = m.ngrams[k];
    table.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto cols = split_on(expect_line(in, "ngram"), '\t');
      if (cols.size() != 4) throw ValidationError("KN model: bad ngram line");
      Ngram g;
      for (const auto& id : split_whitespace(cols[0])) {
        g.push_back(parse_int<UnitId>(id));
        if (g.back() >= m.vocab.size()) throw ValidationError("KN model: id out of range");
      }
      if (g.size() != k + 1) throw ValidationError("KN model: n-gram of wrong order");
      table[std::move(g)] = {parse_double(cols[1]), parse_double(cols[2]),
                             parse_int<std::uint64_t>(cols[3])};
    }
  }
  if (expect_line(in, "end") != "end") throw ValidationError("KN model: missing end marker");
  return m;
}

KNModel load_kn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_kn(in);
}

void export_arpa(const KNModel& model, std::ostream& out) {
  const auto arpa_unit = [&](UnitId id) {
    std::string u = model.vocab.unit(id);
    std::replace(u.begin(), u.end(), ' ', '+');
    return u;
  };
  out << "\n\\data\\\n";
  for (std::size_t k = 0; k < model.ngrams.size(); ++k)
    out << "ngram " << k + 1 << '=' << model.ngrams[k].size() << '\n';
  for (std::size_t k = 0; k < model.ngrams.size(); ++k) {
    out << "\n\\" << k + 1 << "-grams:\n";
    for (const auto* kv : sorted_items(model.ngrams[k])) {
      const double p = kv->second.log10_prob;
      out << (std::isfinite(p) ? detail::format_double(p) : "-99");
      out << '\t';
      for (std::size_t i = 0; i < kv->first.size(); ++i)
        out << (i ? " " : "") << arpa_unit(kv->first[i]);
      if (k + 1 < model.ngrams.size()) {
        const double b = kv->second.log10_backoff;
        out << '\t' << (std::isfinite(b) ? detail::format_double(b) : "-99");
      }
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

}  // namespace mplm
