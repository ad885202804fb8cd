#include "mplm/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mplm/errors.hpp"

namespace mplm {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

std::string line_ref(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

}  // namespace

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

bool is_valid_utf8(std::string_view bytes) {
  std::size_t i = 0;
  while (i < bytes.size()) {
    auto c = static_cast<unsigned char>(bytes[i]);
    std::size_t extra = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= bytes.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      auto cc = static_cast<unsigned char>(bytes[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // overlong encodings, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += extra + 1;
  }
  return true;
}

AlignedSentencePair make_aligned_pair(Sentence source, Sentence target, std::vector<Link> links) {
  const auto m = static_cast<int>(source.size());
  const auto n = static_cast<int>(target.size());
  for (const Link& l : links) {
    if (l.source < 0 || l.source >= m || l.target < 0 || l.target >= n) {
      throw ValidationError("alignment link " + std::to_string(l.source) + "-" +
                            std::to_string(l.target) + " out of range for lengths " +
                            std::to_string(m) + "/" + std::to_string(n));
    }
  }
  std::sort(links.begin(), links.end());
  links.erase(std::unique(links.begin(), links.end()), links.end());
  return {std::move(source), std::move(target), std::move(links)};
}

Sentence PartitionedSentence::sentence() const {
  Sentence s;
  for (const auto& ph : phrases) s.tokens.insert(s.tokens.end(), ph.begin(), ph.end());
  return s;
}

std::size_t PartitionedSentence::token_count() const {
  std::size_t n = 0;
  for (const auto& ph : phrases) n += ph.size();
  return n;
}

std::vector<std::string> PartitionedSentence::units() const {
  std::vector<std::string> out;
  out.reserve(phrases.size());
  for (const auto& ph : phrases) out.push_back(join(ph, " "));
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> PartitionedSentence::spans() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t start = 0;
  for (const auto& ph : phrases) {
    out.emplace_back(start, start + ph.size() - 1);
    start += ph.size();
  }
  return out;
}

void validate_partition(const PartitionedSentence& p) {
  if (p.phrases.empty()) throw ValidationError("partition has no phrases");
  for (const auto& ph : p.phrases) {
    if (ph.empty()) throw ValidationError("partition contains an empty phrase");
    for (const auto& tok : ph) {
      if (tok.empty() || std::any_of(tok.begin(), tok.end(), is_space))
        throw ValidationError("invalid token '" + tok + "'");
    }
  }
}

TokenizedCorpus parse_tokenized_corpus(std::istream& in) {
  TokenizedCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!is_valid_utf8(line)) throw ValidationError(line_ref(line_no) + "invalid UTF-8");
    auto tokens = split_whitespace(line);
    if (tokens.empty()) {
      ++corpus.blank_lines;
      continue;
    }
    corpus.sentences.push_back(Sentence{std::move(tokens)});
  }
  if (in.bad()) throw IoError("read failure");
  return corpus;
}

TokenizedCorpus read_tokenized_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_tokenized_corpus(in);
}

std::vector<Link> parse_alignment_line(std::string_view line, std::size_t source_len,
                                       std::size_t target_len) {
  std::vector<Link> links;
  for (const auto& item : split_whitespace(line)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
      throw ValidationError("malformed alignment pair '" + item + "'");
    Link l;
    const char* b = item.data();
    const char* e = item.data() + item.size();
    auto r1 = std::from_chars(b, b + dash, l.source);
    auto r2 = std::from_chars(b + dash + 1, e, l.target);
    if (r1.ec != std::errc{} || r1.ptr != b + dash || r2.ec != std::errc{} || r2.ptr != e)
      throw ValidationError("malformed alignment pair '" + item + "'");
    if (l.source < 0 || static_cast<std::size_t>(l.source) >= source_len || l.target < 0 ||
        static_cast<std::size_t>(l.target) >= target_len)
      throw ValidationError("alignment pair '" + item + "' out of range for lengths " +
                            std::to_string(source_len) + "/" + std::to_string(target_len));
    links.push_back(l);
  }
  return links;
}

std::vector<AlignedSentencePair> parse_alignments(std::istream& in,
                                                  const std::vector<Sentence>& source,
                                                  const std::vector<Sentence>& target) {
  if (source.size() != target.size())
    throw ValidationError("source/target corpora differ in sentence count (" +
                          std::to_string(source.size()) + " vs " +
                          std::to_string(target.size()) + ")");
  std::vector<AlignedSentencePair> out;
  out.reserve(source.size());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (line_no >= source.size()) {
      if (split_whitespace(line).empty()) continue;  // trailing blank lines
      throw ValidationError("alignment file has more lines than the corpus (" +
                            std::to_string(source.size()) + ")");
    }
    try {
      auto links = parse_alignment_line(line, source[line_no].size(), target[line_no].size());
      out.push_back(make_aligned_pair(source[line_no], target[line_no], std::move(links)));
    } catch (const ValidationError& e) {
      throw ValidationError(line_ref(line_no + 1) + e.what());
    }
    ++line_no;
  }
  if (in.bad()) throw IoError("read failure");
  if (line_no != source.size())
    throw ValidationError("alignment file has " + std::to_string(line_no) +
                          " lines, corpus has " + std::to_string(source.size()));
  return out;
}

std::vector<AlignedSentencePair> read_alignments(const std::filesystem::path& path,
                                                 const std::vector<Sentence>& source,
                                                 const std::vector<Sentence>& target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_alignments(in, source, target);
}

std::string format_partitioned_line(const PartitionedSentence& p, std::string_view delimiter) {
  validate_partition(p);
  std::string out;
  for (std::size_t i = 0; i < p.phrases.size(); ++i) {
    if (i) {
      out += ' ';
      out += delimiter;
      out += ' ';
    }
    for (std::size_t k = 0; k < p.phrases[i].size(); ++k) {
      const auto& tok = p.phrases[i][k];
      if (tok == delimiter)
        throw ValidationError("token collides with phrase delimiter '" + std::string(delimiter) +
                              "'");
      if (k) out += ' ';
      out += tok;
    }
  }
  return out;
}

PartitionedSentence parse_partitioned_line(std::string_view line, std::string_view delimiter) {
  if (!is_valid_utf8(line)) throw ValidationError("invalid UTF-8");
  PartitionedSentence p;
  std::vector<std::string> current;
  auto tokens = split_whitespace(line);
  if (tokens.empty()) throw ValidationError("empty line");
  for (auto& tok : tokens) {
    if (tok == delimiter) {
      if (current.empty()) throw ValidationError("empty phrase in '" + std::string(line) + "'");
      p.phrases.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(tok));
    }
  }
  if (current.empty()) throw ValidationError("trailing delimiter in '" + std::string(line) + "'");
  p.phrases.push_back(std::move(current));
  return p;
}

void write_partitioned_corpus(const std::vector<PartitionedSentence>& partitions,
                              const std::filesystem::path& path, std::string_view delimiter) {
  std::string content;
  for (const auto& p : partitions) {
    content += format_partitioned_line(p, delimiter);
    content += '\n';
  }
  write_text_atomically(path, content);
}

std::vector<PartitionedSentence> read_partitioned_corpus(const std::filesystem::path& path,
                                                         std::string_view delimiter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<PartitionedSentence> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (split_whitespace(line).empty()) continue;
    try {
      out.push_back(parse_partitioned_line(line, delimiter));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ": " + line_ref(line_no) + e.what());
    }
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return out;
}

void write_text_atomically(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace mplm
