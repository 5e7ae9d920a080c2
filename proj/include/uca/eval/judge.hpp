#pragma once

// LLM-judge scoring (General / Regional / Suggestion, each 0..10) and the
// 3-P success rule. See docs/judge.md for the prompt and wire format.

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "uca/victim.hpp"

namespace uca::eval {

inline constexpr std::string_view kJudgeTemplateVersion = "uca-judge-v1";

struct JudgeScores {
  double general = 0.0;
  double regional = 0.0;
  double suggestion = 0.0;
  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

struct JudgeVerdict {
  JudgeScores scores;
  bool contradiction = false;
};

/// The judge prompt for one (clean, adversarial) answer pair.
std::string judge_prompt(std::string_view clean_text, std::string_view adv_text, Scenario scenario);

/// Extracts "General: x", "Regional: y", "Suggestion: z" (0..10, case
/// insensitive) and an optional "Contradiction: yes|no" line. Throws
/// ParseError when any score is missing or out of range.
JudgeVerdict parse_judge_reply(std::string_view reply);

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string name() const = 0;
  virtual JudgeVerdict judge(std::string_view clean_text, std::string_view adv_text, Scenario scenario) = 0;
};

/// Offline heuristic: scores are 10 x Jaccard overlap of token sets
/// (general: all tokens, regional: content words, suggestion: driving-action
/// keywords, falling back to content words). Contradiction when the
/// scenario keyword polarity flips.
class MockJudge final : public JudgeClient {
 public:
  std::string name() const override { return "mock"; }
  JudgeVerdict judge(std::string_view clean_text, std::string_view adv_text, Scenario scenario) override;
};

struct HttpJudgeConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string api_key;
  std::string model;
  int max_retries = 3;
  std::chrono::milliseconds backoff_initial{500};
  std::chrono::milliseconds backoff_max{8000};
  std::chrono::milliseconds min_interval{200};  // rate limit between requests
  std::chrono::seconds timeout{30};

  /// UCA_JUDGE_ENDPOINT, UCA_JUDGE_API_KEY, UCA_JUDGE_MODEL. Throws
  /// JudgeUnavailable when the endpoint is unset.
  static HttpJudgeConfig from_env();
};

/// POSTs {"model", "prompt", "temperature": 0} with a bearer key, retrying
/// transport failures and 429/5xx with doubling backoff. Throws
/// JudgeUnavailable once the retry budget is spent and ParseError on an
/// unusable reply.
class HttpJudge final : public JudgeClient {
 public:
  explicit HttpJudge(HttpJudgeConfig config);
  std::string name() const override { return "http:" + config_.model; }
  JudgeVerdict judge(std::string_view clean_text, std::string_view adv_text, Scenario scenario) override;

  /// Reply text from a response body: a "text", "output", "response" or
  /// "content" string, an OpenAI-style choices[0], or the raw body.
  static std::string extract_reply_text(const std::string& body);

 private:
  HttpJudgeConfig config_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

/// "mock" or "http" (from the environment).
std::unique_ptr<JudgeClient> make_judge(std::string_view kind);

enum class SuccessMode { ClosedSet, OpenText };
std::string_view success_mode_name(SuccessMode m) noexcept;
SuccessMode parse_success_mode(std::string_view name);

/// Scenario polarity class of a free-text answer, or "" when no keyword hits.
std::string polarity_class(std::string_view text, Scenario scenario);

/// closed_set: normalised answers differ. open_text: the judge's
/// contradiction verdict, or a polarity-class flip when `judge` is null.
/// Throws EmptyText on empty inputs.
bool three_p_success(std::string_view clean_text, std::string_view adv_text, Scenario scenario, SuccessMode mode,
                     JudgeClient* judge = nullptr);

}  // namespace uca::eval
