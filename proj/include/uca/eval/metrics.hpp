#pragma once

// Sentence-level text similarity: BLEU, a simplified METEOR and ROUGE-L.
// All three tokenize with uca::tokenize and throw EmptyText when either
// side has no tokens.

#include <string_view>

namespace uca::eval {

inline constexpr double kBleuFloor = 0.1;

/// n <= 4, effective order (orders the candidate is too short for are
/// dropped), floor smoothing: a zero-match order scores kBleuFloor / count.
/// No unigram match at all gives 0. Brevity penalty exp(1 - r/c) when c < r.
double bleu(std::string_view candidate, std::string_view reference);

/// Exact unigram matches only. Fmean = 10PR / (R + 9P), penalty
/// 0.5 * ((chunks - 1) / matches)^3, so a single contiguous chunk is free.
double meteor(std::string_view candidate, std::string_view reference);

/// ROUGE-L F1 over the longest common subsequence.
double rouge_l(std::string_view candidate, std::string_view reference);

}  // namespace uca::eval
