#pragma once

// Training dataset manifest and pitch-reweighted batch sampling.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uca/random.hpp"
#include "uca/texture.hpp"
#include "uca/transforms.hpp"

namespace uca {

struct PoseGrid {
  std::vector<double> distances_m{5.0, 10.0};
  std::vector<double> pitches_deg{22.5, 45.0, 67.5};
  std::vector<Yaw> yaws{kAllYaws.begin(), kAllYaws.end()};

  bool contains(const CameraPose& pose) const noexcept;
  /// Index of `pitch` in pitches_deg (1e-9 tolerance), or -1.
  int pitch_index(double pitch) const noexcept;
  int distance_index(double distance) const noexcept;
};

nlohmann::json pose_grid_to_json(const PoseGrid& grid);
PoseGrid pose_grid_from_json(const nlohmann::json& j);

struct ManifestEntry {
  std::string sample_id;
  std::filesystem::path background_path;  // absolute after load
  std::filesystem::path uv_map_path;
  std::filesystem::path mask_path;
  CameraPose pose;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  PoseGrid pose_grid;
  std::filesystem::path root;  // directory the relative paths resolve against

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

/// JSONL manifest. An optional first record {"pose_grid": {...}} declares
/// the grid; otherwise the default grid applies. Unknown fields are logged
/// and ignored. Throws FormatError on malformed records or off-grid poses,
/// MissingFile on dangling paths.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Paths are written relative to the manifest's directory when possible.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Reads the three rasters of one entry and validates the sample.
SceneSample load_sample(const ManifestEntry& entry);

/// Keeps up to `capacity` decoded samples; eviction drops the oldest load.
class SampleCache {
 public:
  explicit SampleCache(std::size_t capacity = 64) : capacity_(capacity) {}
  const SceneSample& get(const DatasetManifest& manifest, std::size_t index);

 private:
  std::size_t capacity_;
  std::map<std::size_t, SceneSample> samples_;
  std::vector<std::size_t> order_;
};

struct SamplingPolicy {
  std::map<double, double> pitch_weights{{22.5, 3.0}, {45.0, 1.0}, {67.5, 1.0}};
  int batch_size = 8;
  std::uint64_t seed = 0;

  /// ConfigError on non-positive weights or batch size.
  void validate() const;
};

struct BatchItem {
  std::size_t entry = 0;  // index into manifest.entries
  TransformParams transform;
};

/// Per-pitch, per-(distance, yaw) grouping of a manifest for weighted draws.
class PoseIndex {
 public:
  PoseIndex(const DatasetManifest& manifest, const SamplingPolicy& policy);
  /// Pitch drawn by weight, then a uniform nonempty (distance, yaw) cell,
  /// then a uniform entry inside the cell.
  std::size_t draw(Rng& rng) const;

  const std::vector<double>& pitches() const noexcept { return pitches_; }
  std::size_t cells_for_pitch(std::size_t p) const { return cells_[p].size(); }

 private:
  std::vector<double> pitches_;
  std::vector<double> weights_;
  std::vector<std::vector<std::vector<std::size_t>>> cells_;  // [pitch][cell] -> entries
};

/// policy.batch_size draws with replacement, each with an independently
/// sampled transform. Throws EmptyPitchClass when a weighted pitch has no
/// entries and PreconditionError for weights on pitches off the grid.
std::vector<BatchItem> sample_batch(const DatasetManifest& manifest, const SamplingPolicy& policy,
                                    const TransformSchedule& schedule, Rng& rng);
std::vector<BatchItem> sample_batch(const PoseIndex& index, const SamplingPolicy& policy,
                                    const TransformSchedule& schedule, Rng& rng);

}  // namespace uca
