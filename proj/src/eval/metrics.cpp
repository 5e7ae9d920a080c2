#include "uca/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "uca/error.hpp"
#include "uca/text.hpp"

namespace uca::eval {

namespace {

using Tokens = std::vector<std::string>;

std::pair<Tokens, Tokens> tokens_of(std::string_view candidate, std::string_view reference) {
  Tokens c = tokenize(candidate), r = tokenize(reference);
  if (c.empty()) throw EmptyText("candidate text has no tokens");
  if (r.empty()) throw EmptyText("reference text has no tokens");
  return {std::move(c), std::move(r)};
}

std::map<Tokens, int> ngram_counts(const Tokens& t, std::size_t n) {
  std::map<Tokens, int> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
  return out;
}

}  // namespace

double bleu(std::string_view candidate, std::string_view reference) {
  const auto [c, r] = tokens_of(candidate, reference);
  constexpr std::size_t kMaxOrder = 4;
  std::size_t correct[kMaxOrder] = {}, total[kMaxOrder] = {};
  for (std::size_t n = 1; n <= kMaxOrder; ++n) {
    const auto cc = ngram_counts(c, n);
    const auto rc = ngram_counts(r, n);
    for (const auto& [g, k] : cc) {
      total[n - 1] += static_cast<std::size_t>(k);
      const auto it = rc.find(g);
      if (it != rc.end()) correct[n - 1] += static_cast<std::size_t>(std::min(k, it->second));
    }
  }
  if (std::all_of(std::begin(correct), std::end(correct), [](std::size_t v) { return v == 0; })) return 0.0;
  double log_sum = 0.0;
  std::size_t order = 0;
  for (std::size_t n = 0; n < kMaxOrder && total[n] > 0; ++n, ++order) {
    const double p = correct[n] > 0 ? static_cast<double>(correct[n]) / static_cast<double>(total[n])
                                    : kBleuFloor / static_cast<double>(total[n]);
    log_sum += std::log(p);
  }
  const double cl = static_cast<double>(c.size()), rl = static_cast<double>(r.size());
  const double bp = cl < rl ? std::exp(1.0 - rl / cl) : 1.0;
  return std::min(1.0, bp * std::exp(log_sum / static_cast<double>(order)));
}

double meteor(std::string_view candidate, std::string_view reference) {
  const auto [c, r] = tokens_of(candidate, reference);
  // Greedy left-to-right alignment onto the first unused identical token.
  std::vector<bool> used(r.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> align;
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (!used[j] && c[i] == r[j]) {
        used[j] = true;
        align.emplace_back(i, j);
        break;
      }
    }
  }
  const double m = static_cast<double>(align.size());
  if (m == 0.0) return 0.0;
  std::size_t chunks = 1;
  for (std::size_t k = 1; k < align.size(); ++k)
    if (align[k].first != align[k - 1].first + 1 || align[k].second != align[k - 1].second + 1) ++chunks;
  const double p = m / static_cast<double>(c.size());
  const double rr = m / static_cast<double>(r.size());
  const double fmean = 10.0 * p * rr / (rr + 9.0 * p);
  const double frag = (static_cast<double>(chunks) - 1.0) / m;
  const double penalty = 0.5 * frag * frag * frag;
  return fmean * (1.0 - penalty);
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto [c, r] = tokens_of(candidate, reference);
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j)
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rr = lcs / static_cast<double>(r.size());
  return 2.0 * p * rr / (p + rr);
}

}  // namespace uca::eval
