// mplm: command-line front end for minimal-phrase extraction, partitioning,
// language-model training and evaluation.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "mplm/corpus_io.hpp"
#include "mplm/errors.hpp"
#include "mplm/kn_lm.hpp"
#include "mplm/labeller.hpp"
#include "mplm/minphrase.hpp"
#include "mplm/neural_lm.hpp"
#include "mplm/scorer.hpp"

namespace fs = std::filesystem;
using namespace mplm;

namespace {

enum ExitCode { kOk = 0, kValidation = 1, kIo = 2, kInternal = 3 };

struct GlobalOptions {
  std::string delimiter{kDefaultDelimiter};
  unsigned threads = 1;
  std::string config;
};

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// Runs f over [0, n) in contiguous chunks. Output order does not depend on
// the thread count.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t * chunk; i < std::min(n, (t + 1) * chunk); ++i) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Applies "key=value" lines to options of `sub` (or the root app) that were
// not given on the command line.
void apply_config(const fs::path& path, CLI::App& app, CLI::App* sub) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    CLI::Option* opt = sub ? sub->get_option_no_throw("--" + key) : nullptr;
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt) throw ValidationError(path.string() + ": unknown option '" + key + "'");
    if (opt->count() > 0) continue;  // command line wins
    opt->add_result(value);
    opt->run_callback();
  }
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  fs::path source, target, align, out;
  bool verify = false;
};

int cmd_extract_mp(const ExtractArgs& a, const GlobalOptions& g) {
  const auto src = read_tokenized_corpus(a.source);
  const auto tgt = read_tokenized_corpus(a.target);
  const auto pairs = read_alignments(a.align, src.sentences, tgt.sentences);
  std::vector<PartitionedSentence> parts(pairs.size());
  parallel_for(pairs.size(), g.threads, [&](std::size_t i) {
    parts[i] = extract_minimal_partition(pairs[i]);
    if (a.verify && pairs[i].target.size() <= kBruteForceMaxTarget &&
        !(brute_force_minimal_partition(pairs[i]).partition == parts[i]))
      throw InvariantError("sentence " + std::to_string(i + 1) +
                           ": extraction disagrees with the exhaustive oracle");
  });
  write_partitioned_corpus(parts, a.out, g.delimiter);
  std::size_t phrases = 0, words = 0;
  for (const auto& p : parts) {
    phrases += p.phrases.size();
    words += p.token_count();
  }
  std::cout << "sentences " << parts.size() << '\n'
            << "phrases " << phrases << '\n'
            << "avg_phrase_length "
            << fixed(phrases ? static_cast<double>(words) / static_cast<double>(phrases) : 0.0, 4)
            << '\n';
  return kOk;
}

struct TrainLabellerArgs {
  fs::path gold, out;
  int epochs = 10;
  std::uint64_t seed = 1;
};

int cmd_train_labeller(const TrainLabellerArgs& a, const GlobalOptions& g) {
  const auto gold = read_partitioned_corpus(a.gold, g.delimiter);
  std::vector<GoldInstance> instances;
  instances.reserve(gold.size());
  for (const auto& p : gold) instances.emplace_back(p.sentence(), partition_to_tags(p));
  const auto model = train_averaged_perceptron(instances, a.epochs, a.seed);
  write_text_atomically(a.out, serialize_labeller(model));
  std::cout << "features " << model.averaged_weights.size() << '\n'
            << "updates " << model.updates << '\n';
  return kOk;
}

struct LabelArgs {
  fs::path model, in, out;
};

int cmd_label(const LabelArgs& a, const GlobalOptions& g) {
  const auto model = load_labeller(a.model);
  const auto corpus = read_tokenized_corpus(a.in);
  std::vector<PartitionedSentence> out(corpus.sentences.size());
  parallel_for(out.size(), g.threads, [&](std::size_t i) {
    out[i] = tags_to_partition(corpus.sentences[i], viterbi_decode(corpus.sentences[i], model));
  });
  write_partitioned_corpus(out, a.out, g.delimiter);
  return kOk;
}

struct EvalArgs {
  fs::path pred, gold;
};

int cmd_eval_partition(const EvalArgs& a, const GlobalOptions& g) {
  const auto s = evaluate_partition(read_partitioned_corpus(a.pred, g.delimiter),
                                    read_partitioned_corpus(a.gold, g.delimiter));
  std::cout << "P " << fixed(s.precision, 4) << " R " << fixed(s.recall, 4) << " F1 "
            << fixed(s.f1, 4) << '\n';
  return kOk;
}

std::vector<UnitSequence> read_units(const fs::path& path, UnitKind kind,
                                     const GlobalOptions& g) {
  return to_units(read_partitioned_corpus(path, g.delimiter), kind);
}

struct TrainKnArgs {
  fs::path in, out;
  int order = 5;
  std::string units = "phrase";
};

int cmd_train_kn(const TrainKnArgs& a, const GlobalOptions& g) {
  if (a.order < 1) throw ValidationError("--order must be >= 1");
  const auto kind = parse_unit_kind(a.units);
  const auto corpus = read_units(a.in, kind, g);
  if (corpus.empty()) throw ValidationError("empty training corpus");
  const auto model = estimate(count_ngrams(corpus, build_vocabulary(corpus), a.order), kind);
  write_text_atomically(a.out, serialize_kn(model));
  std::cout << "vocab " << model.vocab.size() << '\n';
  for (std::size_t k = 0; k < model.ngrams.size(); ++k)
    std::cout << "ngram " << k + 1 << ' ' << model.ngrams[k].size() << '\n';
  return kOk;
}

struct TrainNnArgs {
  fs::path in, out;
  int order = 5;
  std::string units = "phrase";
  NetworkConfig net;
  std::size_t max_vocab = 0;
};

int cmd_train_nn(const TrainNnArgs& a, const GlobalOptions& g) {
  const auto kind = parse_unit_kind(a.units);
  const auto corpus = read_units(a.in, kind, g);
  VocabularyOptions vo;
  if (a.max_vocab > 0) vo.max_size = a.max_vocab;
  auto cfg = a.net;
  cfg.vocab_size = 1;  // placeholder so validate() checks the remaining fields
  cfg.validate();
  const auto suite = train_suite(corpus, a.order, a.net, vo, kind);
  write_text_atomically(a.out, serialize_suite(suite));
  std::cout << "vocab " << suite.vocab.size() << '\n' << "networks " << suite.networks.size() << '\n';
  return kOk;
}

LanguageModel load_model(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char head[8] = {};
  in.read(head, sizeof head);
  const std::string magic(head, static_cast<std::size_t>(in.gcount()));
  in.clear();
  in.seekg(0);
  if (magic == std::string("MPLMNN\0\1", 8)) return load_suite(in);
  if (magic.rfind("mplm-kn", 0) == 0) return load_kn(in);
  throw ValidationError(path.string() + " is not a KN model or neural suite");
}

struct PerplexityArgs {
  fs::path model, in;
};

int cmd_perplexity(const PerplexityArgs& a, const GlobalOptions& g) {
  const auto model = load_model(a.model);
  const auto corpus = read_units(a.in, unit_kind(model), g);
  const auto r = std::holds_alternative<KNModel>(model)
                     ? perplexity(std::get<KNModel>(model), corpus)
                     : suite_perplexity(std::get<NeuralSuite>(model), corpus);
  std::cout << "PPL " << fixed(r.per_unit, 2) << '\n'
            << "PPL-WORD " << fixed(r.per_word, 2) << '\n'
            << "LOGPROB " << r.total_logprob << '\n'
            << "PREDICTIONS " << r.predictions << '\n';
  return kOk;
}

struct HitrateArgs {
  fs::path model, in;
  int order = 0;
};

int cmd_hitrate(const HitrateArgs& a, const GlobalOptions& g) {
  const auto model = load_model(a.model);
  const auto* kn = std::get_if<KNModel>(&model);
  if (!kn) throw ValidationError("hit rate needs a KN model");
  const int k = a.order == 0 ? kn->order : a.order;
  std::cout << fixed(hit_rate(*kn, read_units(a.in, kn->units, g), k), 4) << '\n';
  return kOk;
}

struct ScoreArgs {
  std::vector<std::string> models;
  fs::path in;
};

int cmd_score(const ScoreArgs& a, const GlobalOptions& g) {
  CombinedScorerConfig cfg;
  for (const auto& spec : a.models) {
    // path[:weight]
    std::string path = spec;
    double weight = 1.0;
    if (const auto colon = spec.rfind(':'); colon != std::string::npos) {
      try {
        std::size_t used = 0;
        weight = std::stod(spec.substr(colon + 1), &used);
        if (used != spec.size() - colon - 1) throw std::invalid_argument("trailing");
        path = spec.substr(0, colon);
      } catch (const std::logic_error&) {
        throw ValidationError("bad model weight in '" + spec + "'");
      }
    }
    cfg.models.push_back({path, std::make_shared<const LanguageModel>(load_model(path)), weight});
  }
  const auto corpus = read_partitioned_corpus(a.in, g.delimiter);
  std::string out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto c = combined_score(cfg, corpus[i].sentence(), corpus[i]);
    for (const auto& m : c.contributions) {
      out += "# sentence " + std::to_string(i) + " model " + m.name + " weight " +
             std::to_string(m.weight) + '\n';
      out += format_score_report(m.score);
    }
    std::ostringstream line;
    line.precision(17);
    line << "COMBINED\t" << c.total << '\n';
    out += line.str();
  }
  std::cout << out;
  return kOk;
}

struct ArpaArgs {
  fs::path model, out;
};

int cmd_export_arpa(const ArpaArgs& a, const GlobalOptions&) {
  const auto model = load_model(a.model);
  const auto* kn = std::get_if<KNModel>(&model);
  if (!kn) throw ValidationError("ARPA export needs a KN model");
  std::ostringstream ss;
  export_arpa(*kn, ss);
  write_text_atomically(a.out, ss.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  std::cout.precision(17);
  CLI::App app{"Minimal-phrase language modelling toolkit"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--delimiter", g.delimiter, "Phrase delimiter token in partitioned files")
      ->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for per-sentence work")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "key=value file; command-line flags take precedence");
  app.fallthrough();

  // Checked after the config file is applied, so it may supply them.
  std::vector<CLI::Option*> needed;
  const auto need = [&](CLI::Option* o) {
    needed.push_back(o);
    return o;
  };

  ExtractArgs ex;
  auto* s_ex = app.add_subcommand("extract-mp", "Extract minimal phrases from aligned bitext");
  need(s_ex->add_option("--source", ex.source));
  need(s_ex->add_option("--target", ex.target));
  need(s_ex->add_option("--align", ex.align));
  need(s_ex->add_option("--out", ex.out));
  s_ex->add_flag("--verify", ex.verify, "Check every short sentence against the exhaustive oracle");

  TrainLabellerArgs tl;
  auto* s_tl = app.add_subcommand("train-labeller", "Train the BMES partition labeller");
  need(s_tl->add_option("--gold", tl.gold));
  need(s_tl->add_option("--out", tl.out));
  s_tl->add_option("--epochs", tl.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  s_tl->add_option("--seed", tl.seed)->capture_default_str();

  LabelArgs lb;
  auto* s_lb = app.add_subcommand("label", "Partition tokenized text into minimal phrases");
  need(s_lb->add_option("--model", lb.model));
  need(s_lb->add_option("--in", lb.in));
  need(s_lb->add_option("--out", lb.out));

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval-partition", "Span precision, recall and F1");
  need(s_ev->add_option("--pred", ev.pred));
  need(s_ev->add_option("--gold", ev.gold));

  TrainKnArgs tk;
  auto* s_tk = app.add_subcommand("train-kn", "Estimate a modified Kneser-Ney model");
  need(s_tk->add_option("--in", tk.in));
  need(s_tk->add_option("--out", tk.out));
  s_tk->add_option("--order", tk.order)->capture_default_str();
  s_tk->add_option("--units", tk.units)->capture_default_str()->check(CLI::IsMember({"word", "phrase"}));

  TrainNnArgs tn;
  auto* s_tn = app.add_subcommand("train-nn", "Train the feed-forward network suite with NCE");
  need(s_tn->add_option("--in", tn.in));
  need(s_tn->add_option("--out", tn.out));
  s_tn->add_option("--order", tn.order)->capture_default_str();
  s_tn->add_option("--units", tn.units)->capture_default_str()->check(CLI::IsMember({"word", "phrase"}));
  s_tn->add_option("--embed-dim", tn.net.embed_dim)->capture_default_str();
  s_tn->add_option("--hidden-dim", tn.net.hidden_dim)->capture_default_str();
  s_tn->add_option("--nce-k", tn.net.nce_k)->capture_default_str();
  s_tn->add_option("--learning-rate", tn.net.learning_rate)->capture_default_str();
  s_tn->add_option("--epochs", tn.net.epochs)->capture_default_str();
  s_tn->add_option("--batch-size", tn.net.batch_size)->capture_default_str();
  s_tn->add_option("--seed", tn.net.seed)->capture_default_str();
  s_tn->add_option("--max-vocab", tn.max_vocab, "Keep the most frequent units (0 = all)")
      ->capture_default_str();

  PerplexityArgs pp;
  auto* s_pp = app.add_subcommand("perplexity", "Per-unit and per-word perplexity");
  need(s_pp->add_option("--model", pp.model));
  need(s_pp->add_option("--in", pp.in));

  HitrateArgs hr;
  auto* s_hr = app.add_subcommand("hitrate", "Fraction of k-grams seen in training");
  need(s_hr->add_option("--model", hr.model));
  need(s_hr->add_option("--in", hr.in));
  s_hr->add_option("--order", hr.order, "k (default: model order)");

  ScoreArgs sc;
  auto* s_sc = app.add_subcommand("score", "Per-position log probabilities");
  need(s_sc->add_option("--model", sc.models, "path[:weight], repeatable"));
  need(s_sc->add_option("--in", sc.in));

  ArpaArgs ar;
  auto* s_ar = app.add_subcommand("export-arpa", "Write a KN model in ARPA format");
  need(s_ar->add_option("--model", ar.model));
  need(s_ar->add_option("--out", ar.out));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!g.config.empty()) apply_config(g.config, app, sub);
    for (const auto* o : needed)
      if (sub->get_option_no_throw(o->get_name()) == o && o->count() == 0)
        throw ValidationError(o->get_name() + " is required");
    if (g.delimiter.empty() || split_whitespace(g.delimiter).size() != 1 ||
        split_whitespace(g.delimiter)[0] != g.delimiter)
      throw ValidationError("--delimiter must be a single non-blank token");

    if (sub == s_ex) return cmd_extract_mp(ex, g);
    if (sub == s_tl) return cmd_train_labeller(tl, g);
    if (sub == s_lb) return cmd_label(lb, g);
    if (sub == s_ev) return cmd_eval_partition(ev, g);
    if (sub == s_tk) return cmd_train_kn(tk, g);
    if (sub == s_tn) return cmd_train_nn(tn, g);
    if (sub == s_pp) return cmd_perplexity(pp, g);
    if (sub == s_hr) return cmd_hitrate(hr, g);
    if (sub == s_sc) return cmd_score(sc, g);
    if (sub == s_ar) return cmd_export_arpa(ar, g);
    return kInternal;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const InvariantError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}
