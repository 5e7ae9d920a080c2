#pragma once

// Desk-scale stand-in for a driving VLM: patch-embedding encoder ->
// token-pooling linear projector -> nearest-prototype answer head.
//
// Layer shapes at the default configuration (224 x 224 input):
//   "encoder"   : 196 x 64   (14 x 14 patch tokens after the last block)
//   "projector" :  32 x 128  (pooled visual tokens fed to the answer head)

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "uca/victim.hpp"

namespace uca {

struct SurrogateConfig {
  int input_size = 224;
  int patch = 16;
  int embed_dim = 64;
  int hidden_dim = 128;
  int blocks = 4;
  int proj_rows = 32;
  int proj_dim = 128;
  int text_buckets = 64;
  int filter_freqs = 4;        // low-frequency basis size of the patch filters
  double filter_noise = 0.35;  // white component relative to the smooth part
  double text_scale = 0.15;
  double head_focus = 0.3;     // width of the head's central pooling, in image fractions
  double head_blend = 0.7;     // head centre: 0 = blank frame, 1 = schematic street
  std::uint64_t seed = 0x5eed'2024'0001ULL;

  int grid() const noexcept { return input_size / patch; }
  int tokens() const noexcept { return grid() * grid(); }
  int patch_dim() const noexcept { return patch * patch * 3; }
};

/// Closed answer set per scenario (5 answers each).
const std::vector<std::string>& surrogate_answers(Scenario scenario);
/// Keyword routing used by the answer head.
Scenario route_prompt(std::string_view prompt);

class SurrogateVictim final : public Victim {
 public:
  static constexpr std::uint32_t kCheckpointVersion = 1;

  /// Deterministic weights from `config.seed`.
  explicit SurrogateVictim(const SurrogateConfig& config = {});

  const VictimSpec& spec() const noexcept override { return spec_; }
  const SurrogateConfig& config() const noexcept { return config_; }
  std::vector<std::string> exposed_layers() const override { return {"encoder", "projector"}; }
  FeatureStack forward(const Image& input, std::unique_ptr<Tape>* tape) const override;
  Image backward(const Tape& tape, const FeatureStack& grad) const override;
  std::string generate_from_input(const Image& input, std::string_view prompt) const override;
  std::vector<std::string> generate_many_from_input(const Image& input,
                                                    std::span<const std::string> prompts) const override;

  /// Answer-head scores for each answer of the routed scenario; the argmax
  /// is the generated answer.
  std::vector<double> answer_scores(const Matrix& projector, std::string_view prompt) const;

  /// Versioned binary checkpoint. load() throws VersionError on a version
  /// mismatch and FormatError on corrupt files.
  void save(const std::filesystem::path& path) const;
  static SurrogateVictim load(const std::filesystem::path& path);

 private:
  struct Weights {
    Matrix patch_embed;  // patch_dim x D
    Matrix embed_bias;   // 1 x D
    Matrix position;     // T x D
    std::vector<Matrix> w1, b1, w2;  // per block: D x H, 1 x H, H x D
    Matrix pool;         // R x T
    Matrix proj;         // D x P
    Matrix proj_bias;    // 1 x P
    Matrix head_pool;    // 1 x R, centre-weighted row pooling for the head
    Matrix head_center;  // 1 x P
    std::array<Matrix, 3> prototypes;  // per scenario: 5 x P
    Matrix text_embed;   // buckets x P
  };

  SurrogateVictim(const SurrogateConfig& config, Weights weights);
  static Weights init_weights(const SurrogateConfig& config);
  void finish_spec();

  SurrogateConfig config_;
  Weights w_;
  VictimSpec spec_;
  std::vector<std::array<int, 9>> neighbours_;  // 3x3 token neighbourhoods, -1 padded
  std::vector<double> neighbour_norm_;
};

}  // namespace uca
