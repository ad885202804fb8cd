#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mplm/corpus_io.hpp"
#include "mplm/minphrase.hpp"
#include "mplm/neural_lm.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace mplm;
using mplm::testing::TempDir;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string(MPLM_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text_file(out);
  return r;
}

std::string p(const std::filesystem::path& path) { return path.string(); }

// Returns the value after `key ` on the matching output line.
std::string field(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + " ", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

void write_bitext(const TempDir& dir, const std::vector<AlignedSentencePair>& pairs) {
  std::string src, tgt, al;
  for (const auto& pr : pairs) {
    src += join(pr.source.tokens, " ") + "\n";
    tgt += join(pr.target.tokens, " ") + "\n";
    std::string line;
    for (const auto& l : pr.links)
      line += (line.empty() ? "" : " ") + std::to_string(l.source) + "-" + std::to_string(l.target);
    al += line + "\n";
  }
  dir.write("src.txt", src);
  dir.write("tgt.txt", tgt);
  dir.write("align.txt", al);
}

std::string extract_args(const TempDir& d) {
  return "extract-mp --source " + p(d / "src.txt") + " --target " + p(d / "tgt.txt") + " --align " +
         p(d / "align.txt") + " --out " + p(d / "mp.txt");
}

NeuralSuite uniform_suite(int order, const std::vector<std::string>& units) {
  NeuralSuite s;
  s.order = order;
  for (const auto& u : units) s.vocab.add(u, 1);
  s.log_unigram.assign(s.vocab.size(), -std::log(static_cast<double>(s.vocab.size())));
  for (int c = 1; c < order; ++c) {
    NetworkConfig cfg;
    cfg.vocab_size = s.vocab.size();
    cfg.context_size = c;
    cfg.embed_dim = 2;
    cfg.hidden_dim = 2;
    s.networks.emplace_back(cfg);
  }
  return s;
}

}  // namespace

TEST_CASE("extract-mp statistics and output") {
  TempDir d;
  d.write("src.txt", "a b c\nd e\n");
  d.write("tgt.txt", "x y z\nu v\n");
  d.write("align.txt", "0-0 1-1 2-2\n0-0 1-1\n");
  const auto r = run(d, extract_args(d));
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "sentences") == "2");
  CHECK(field(r.out, "phrases") == "5");
  CHECK(field(r.out, "avg_phrase_length") == "1.0000");
  CHECK(read_text_file(d / "mp.txt") == "x $ y $ z\nu $ v\n");

  // s0 links to t0 and t2 across t1: the three target words form one phrase
  d.write("src.txt", "a b\n");
  d.write("tgt.txt", "t0 t1 t2\n");
  d.write("align.txt", "0-0 0-2 1-1\n");
  REQUIRE(run(d, extract_args(d) + " --verify").code == 0);
  CHECK(read_text_file(d / "mp.txt") == "t0 t1 t2\n");
}

TEST_CASE("extract-mp output matches in-memory extraction") {
  TempDir d;
  std::mt19937_64 rng(5);
  std::vector<AlignedSentencePair> pairs;
  for (int i = 0; i < 60; ++i) pairs.push_back(mplm::testing::random_pair(rng, 1 + rng() % 6, 1 + rng() % 8, 0.25));
  write_bitext(d, pairs);
  const auto r = run(d, extract_args(d) + " --threads 3 --verify --delimiter '|||'");
  REQUIRE(r.code == 0);
  const auto back = read_partitioned_corpus(d / "mp.txt", "|||");
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(back[i] == extract_minimal_partition(pairs[i]));

  const auto first = read_text_file(d / "mp.txt");
  REQUIRE(run(d, extract_args(d) + " --delimiter '|||'").code == 0);
  CHECK(read_text_file(d / "mp.txt") == first);
}

TEST_CASE("labeller pipeline") {
  TempDir d;
  const auto bitext = mplm::testing::make_phrase_bitext(250, 12);
  write_bitext(d, bitext.pairs);
  REQUIRE(run(d, extract_args(d)).code == 0);

  const std::string train = "train-labeller --gold " + p(d / "mp.txt") + " --epochs 10 --seed 3 --out ";
  REQUIRE(run(d, train + p(d / "m1.txt")).code == 0);
  REQUIRE(run(d, train + p(d / "m2.txt")).code == 0);
  CHECK(read_text_file(d / "m1.txt") == read_text_file(d / "m2.txt"));

  const auto label = "label --model " + p(d / "m1.txt") + " --in " + p(d / "tgt.txt") + " --out ";
  REQUIRE(run(d, label + p(d / "pred.txt")).code == 0);
  REQUIRE(run(d, label + p(d / "pred4.txt") + " --threads 4").code == 0);
  CHECK(read_text_file(d / "pred.txt") == read_text_file(d / "pred4.txt"));

  const auto ev = run(d, "eval-partition --pred " + p(d / "pred.txt") + " --gold " + p(d / "mp.txt"));
  REQUIRE(ev.code == 0);
  const double f1 = std::stod(ev.out.substr(ev.out.find("F1 ") + 3));
  CHECK(f1 >= 0.95);

  const auto self = run(d, "eval-partition --pred " + p(d / "mp.txt") + " --gold " + p(d / "mp.txt"));
  CHECK(self.out == "P 1.0000 R 1.0000 F1 1.0000\n");
}

TEST_CASE("KN training, hit rate, perplexity and scoring") {
  TempDir d;
  const auto parts = mplm::testing::to_partitions(mplm::testing::make_phrase_corpus(80, 4));
  write_partitioned_corpus(parts, d / "train.txt");
  const auto kn = p(d / "kn.txt");
  REQUIRE(run(d, "train-kn --in " + p(d / "train.txt") + " --order 3 --out " + kn).code == 0);
  const auto first = read_text_file(kn);
  REQUIRE(run(d, "train-kn --in " + p(d / "train.txt") + " --order 3 --out " + kn).code == 0);
  CHECK(read_text_file(kn) == first);

  CHECK(run(d, "hitrate --model " + kn + " --in " + p(d / "train.txt")).out == "1.0000\n");
  CHECK(run(d, "hitrate --model " + kn + " --order 2 --in " + p(d / "train.txt")).out == "1.0000\n");

  const auto ppl = run(d, "perplexity --model " + kn + " --in " + p(d / "train.txt"));
  REQUIRE(ppl.code == 0);
  CHECK(std::stod(field(ppl.out, "PPL")) > 1.0);

  // sum of per-sentence totals from `score` equals the perplexity log probability
  const auto sc = run(d, "score --model " + kn + " --in " + p(d / "train.txt"));
  REQUIRE(sc.code == 0);
  std::istringstream lines(sc.out);
  std::string line;
  double total = 0;
  int sentences = 0;
  while (std::getline(lines, line))
    if (line.rfind("TOTAL\t", 0) == 0) {
      total += std::stod(line.substr(6));
      ++sentences;
    }
  CHECK(sentences == 80);
  const double logprob = std::stod(field(ppl.out, "LOGPROB"));
  CHECK(total == doctest::Approx(logprob).epsilon(1e-12));
  const double predictions = std::stod(field(ppl.out, "PREDICTIONS"));
  CHECK(field(ppl.out, "PPL") ==
        [&] {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.2f", std::exp(-total / predictions));
          return std::string(buf);
        }());

  // two models with weights
  REQUIRE(run(d, "train-kn --in " + p(d / "train.txt") + " --order 2 --units word --out " + p(d / "w.txt")).code == 0);
  const auto both = run(d, "score --model " + kn + ":0.5 --model " + p(d / "w.txt") + ":0.25 --in " +
                               p(d / "train.txt"));
  REQUIRE(both.code == 0);
  CHECK(both.out.find("COMBINED\t") != std::string::npos);

  REQUIRE(run(d, "export-arpa --model " + kn + " --out " + p(d / "kn.arpa")).code == 0);
  CHECK(read_text_file(d / "kn.arpa").find("\\3-grams:") != std::string::npos);
}

TEST_CASE("neural suite commands") {
  TempDir d;
  {
    std::ofstream out(d / "uniform.nn", std::ios::binary);
    save_suite(uniform_suite(3, {"a", "b", "c d"}), out);
  }
  d.write("test.txt", "a $ b\nc d $ a $ a\nzz\n");
  const auto ppl = run(d, "perplexity --model " + p(d / "uniform.nn") + " --in " + p(d / "test.txt"));
  REQUIRE(ppl.code == 0);
  CHECK(field(ppl.out, "PPL") == "4.00");

  const auto parts = mplm::testing::to_partitions(mplm::testing::make_phrase_corpus(40, 2));
  write_partitioned_corpus(parts, d / "train.txt");
  const auto train = "train-nn --in " + p(d / "train.txt") +
                     " --order 3 --embed-dim 4 --hidden-dim 8 --nce-k 5 --epochs 2 --out ";
  REQUIRE(run(d, train + p(d / "n1.nn")).code == 0);
  REQUIRE(run(d, train + p(d / "n2.nn")).code == 0);
  CHECK(read_text_file(d / "n1.nn") == read_text_file(d / "n2.nn"));
  const auto sc = run(d, "score --model " + p(d / "n1.nn") + " --in " + p(d / "train.txt"));
  REQUIRE(sc.code == 0);
  CHECK(sc.out.find("\tunigram\t") != std::string::npos);
  CHECK(sc.out.find("\tmp_nn3\t") != std::string::npos);
  CHECK(run(d, "hitrate --model " + p(d / "n1.nn") + " --in " + p(d / "train.txt")).code == 1);
}

TEST_CASE("config file and flag precedence") {
  TempDir d;
  write_partitioned_corpus(mplm::testing::to_partitions(mplm::testing::make_phrase_corpus(20, 1)),
                           d / "train.txt");
  d.write("run.cfg", "# training defaults\norder = 2\nunits=word\nin=" + p(d / "train.txt") + "\n");
  const auto cfg = run(d, "train-kn --config " + p(d / "run.cfg") + " --out " + p(d / "a.txt"));
  REQUIRE(cfg.code == 0);
  CHECK(field(cfg.out, "ngram 2") != "");
  CHECK(field(cfg.out, "ngram 3") == "");
  CHECK(read_text_file(d / "a.txt").find("units word") != std::string::npos);

  const auto flag = run(d, "train-kn --config " + p(d / "run.cfg") + " --order 3 --out " + p(d / "b.txt"));
  REQUIRE(flag.code == 0);
  CHECK(field(flag.out, "ngram 3") != "");

  d.write("bad.cfg", "nonsense=1\n");
  CHECK(run(d, "train-kn --config " + p(d / "bad.cfg") + " --out " + p(d / "c.txt")).code == 1);
}

TEST_CASE("exit codes and no partial output") {
  TempDir d;
  d.write("src.txt", "a b\n");
  d.write("tgt.txt", "x y\n");
  d.write("align.txt", "0-5\n");
  CHECK(run(d, extract_args(d)).code == 1);
  CHECK_FALSE(std::filesystem::exists(d / "mp.txt"));
  CHECK_FALSE(std::filesystem::exists(d / "mp.txt.tmp"));

  d.write("align.txt", "0-0 1-1\n0-0\n");
  CHECK(run(d, extract_args(d)).code == 1);

  CHECK(run(d, "label --model " + p(d / "missing.model") + " --in " + p(d / "tgt.txt") + " --out " +
                   p(d / "o.txt")).code == 2);
  CHECK(run(d, "perplexity --model " + p(d / "src.txt") + " --in " + p(d / "tgt.txt")).code == 1);
  CHECK(run(d, "no-such-command").code == 1);
  CHECK(run(d, "train-kn --in " + p(d / "tgt.txt")).code == 1);  // --out missing
  CHECK(run(d, "train-kn --in " + p(d / "tgt.txt") + " --order 0 --out " + p(d / "k.txt")).code == 1);
  CHECK(run(d, "--help").code == 0);
}
