#pragma once

// Direct, unoptimised interpolated modified Kneser-Ney over strings. It
// recomputes every quantity from the raw padded corpus on each query and
// shares no code with the library estimator.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mplm::testing {

class ReferenceKN {
 public:
  using Gram = std::vector<std::string>;

  ReferenceKN(const std::vector<std::vector<std::string>>& corpus, int order) : order_(order) {
    for (const auto& seq : corpus) {
      Gram padded(static_cast<std::size_t>(order - 1), "<s>");
      padded.insert(padded.end(), seq.begin(), seq.end());
      padded.push_back("</s>");
      for (std::size_t p = static_cast<std::size_t>(order - 1); p < padded.size(); ++p) {
        for (int k = 1; k <= order; ++k)
          raw_[Gram(padded.begin() + static_cast<long>(p) - k + 1,
                    padded.begin() + static_cast<long>(p) + 1)]++;
        predictable_.insert(padded[p]);
      }
    }
    predictable_.insert("<unk>");
  }

  const std::set<std::string>& predictable() const { return predictable_; }

  // Count used at order |g|: raw at the top order, distinct left extensions below.
  long adjusted(const Gram& g) const {
    if (static_cast<int>(g.size()) == order_) {
      auto it = raw_.find(g);
      return it == raw_.end() ? 0 : it->second;
    }
    long n = 0;
    for (const auto& [h, c] : raw_)
      if (h.size() == g.size() + 1 && std::equal(g.begin(), g.end(), h.begin() + 1)) ++n;
    return n;
  }

  // D1, D2, D3+ at order k.
  std::vector<double> discounts(int k) const {
    double n[5] = {0, 0, 0, 0, 0};
    for (const auto& [g, c] : raw_) {
      if (static_cast<int>(g.size()) != k) continue;
      const long a = adjusted(g);
      if (a >= 1 && a <= 4) n[a] += 1;
    }
    if (n[1] == 0 || n[2] == 0) return {0.5, 0.5, 0.5};
    const double y = n[1] / (n[1] + 2 * n[2]);
    const double d1 = std::clamp(1 - 2 * y * n[2] / n[1], 0.0, 1.0);
    const double d2 = std::clamp(2 - 3 * y * n[3] / n[2], 0.0, 2.0);
    const double d3 = n[3] == 0 ? d2 : std::clamp(3 - 4 * y * n[4] / n[3], 0.0, 3.0);
    return {d1, d2, d3};
  }

  // P(w | context) with context of any length <= N-1 (longer is truncated).
  double prob(const std::string& w, Gram context) const {
    if (static_cast<int>(context.size()) > order_ - 1)
      context.erase(context.begin(), context.end() - (order_ - 1));
    const std::string word = predictable_.count(w) ? w : "<unk>";
    return interpolated(word, context);
  }

 private:
  double interpolated(const std::string& w, const Gram& h) const {
    const int k = static_cast<int>(h.size()) + 1;
    const double lower = k == 1 ? 1.0 / static_cast<double>(predictable_.size())
                                : interpolated(w, Gram(h.begin() + 1, h.end()));
    double total = 0, n1 = 0, n2 = 0, n3 = 0;
    for (const auto& [g, c] : raw_) {
      if (static_cast<int>(g.size()) != k || !std::equal(h.begin(), h.end(), g.begin())) continue;
      const long a = adjusted(g);
      total += static_cast<double>(a);
      if (a == 1) n1 += 1;
      else if (a == 2) n2 += 1;
      else if (a >= 3) n3 += 1;
    }
    if (total == 0) return lower;
    const auto d = discounts(k);
    Gram hw = h;
    hw.push_back(w);
    const long a = adjusted(hw);
    const double disc = a == 0 ? 0 : a == 1 ? d[0] : a == 2 ? d[1] : d[2];
    const double gamma = (d[0] * n1 + d[1] * n2 + d[2] * n3) / total;
    return std::max(static_cast<double>(a) - disc, 0.0) / total + gamma * lower;
  }

  int order_;
  std::map<Gram, long> raw_;
  std::set<std::string> predictable_;
};

}  // namespace mplm::testing
