#include "uca/view_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <spdlog/spdlog.h>

#include "uca/error.hpp"

namespace uca {

namespace {

constexpr double kGridTol = 1e-9;

int find_close(const std::vector<double>& values, double x) {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (std::abs(values[i] - x) <= kGridTol) return static_cast<int>(i);
  return -1;
}

const std::set<std::string>& known_fields() {
  static const std::set<std::string> f = {"sample_id", "background_path", "uv_map_path", "mask_path",
                                          "distance_m", "pitch_deg",       "yaw_label"};
  return f;
}

std::filesystem::path resolve(const std::filesystem::path& root, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : root / path;
}

}  // namespace

bool PoseGrid::contains(const CameraPose& pose) const noexcept {
  return distance_index(pose.distance_m) >= 0 && pitch_index(pose.pitch_deg) >= 0 &&
         std::find(yaws.begin(), yaws.end(), pose.yaw) != yaws.end();
}

int PoseGrid::pitch_index(double pitch) const noexcept { return find_close(pitches_deg, pitch); }
int PoseGrid::distance_index(double distance) const noexcept { return find_close(distances_m, distance); }

nlohmann::json pose_grid_to_json(const PoseGrid& grid) {
  nlohmann::json yaws = nlohmann::json::array();
  for (Yaw y : grid.yaws) yaws.push_back(std::string(yaw_name(y)));
  return {{"distances_m", grid.distances_m}, {"pitches_deg", grid.pitches_deg}, {"yaws", yaws}};
}

PoseGrid pose_grid_from_json(const nlohmann::json& j) {
  PoseGrid g;
  try {
    if (j.contains("distances_m")) g.distances_m = j.at("distances_m").get<std::vector<double>>();
    if (j.contains("pitches_deg")) g.pitches_deg = j.at("pitches_deg").get<std::vector<double>>();
    if (j.contains("yaws")) {
      g.yaws.clear();
      for (const auto& y : j.at("yaws")) {
        const auto yaw = parse_yaw(y.get<std::string>());
        if (!yaw) throw FormatError("unknown yaw label '" + y.get<std::string>() + "'");
        g.yaws.push_back(*yaw);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed pose grid: ") + e.what());
  }
  if (g.distances_m.empty() || g.pitches_deg.empty() || g.yaws.empty())
    throw FormatError("pose grid lists must be nonempty");
  return g;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("manifest not found: " + path.string());
  DatasetManifest m;
  m.root = std::filesystem::absolute(path).parent_path();
  std::string line;
  int lineno = 0;
  bool first_record = true;
  std::set<std::string> warned;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(where + ": record is not an object");
    if (first_record && j.contains("pose_grid")) {
      m.pose_grid = pose_grid_from_json(j.at("pose_grid"));
      first_record = false;
      continue;
    }
    first_record = false;
    ManifestEntry e;
    try {
      e.sample_id = j.at("sample_id").get<std::string>();
      e.background_path = resolve(m.root, j.at("background_path").get<std::string>());
      e.uv_map_path = resolve(m.root, j.at("uv_map_path").get<std::string>());
      e.mask_path = resolve(m.root, j.at("mask_path").get<std::string>());
      e.pose.distance_m = j.at("distance_m").get<double>();
      e.pose.pitch_deg = j.at("pitch_deg").get<double>();
      const auto label = j.at("yaw_label").get<std::string>();
      const auto yaw = parse_yaw(label);
      if (!yaw) throw FormatError(where + ": unknown yaw label '" + label + "'");
      e.pose.yaw = *yaw;
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
    for (const auto& [key, value] : j.items()) {
      if (!known_fields().count(key) && warned.insert(key).second)
        spdlog::warn("{}: ignoring unknown manifest field '{}'", where, key);
    }
    if (!m.pose_grid.contains(e.pose))
      throw FormatError(where + ": pose (" + std::to_string(e.pose.distance_m) + " m, " +
                        std::to_string(e.pose.pitch_deg) + " deg, " + std::string(yaw_name(e.pose.yaw)) +
                        ") is not on the declared grid");
    if (!ids.insert(e.sample_id).second) throw FormatError(where + ": duplicate sample_id '" + e.sample_id + "'");
    for (const auto* p : {&e.background_path, &e.uv_map_path, &e.mask_path})
      if (!std::filesystem::exists(*p)) throw MissingFile(where + ": missing file " + p->string());
    m.entries.push_back(std::move(e));
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto dir = std::filesystem::absolute(path).parent_path();
  auto rel = [&](const std::filesystem::path& p) {
    const auto r = std::filesystem::absolute(p).lexically_relative(dir);
    return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
  };
  out << nlohmann::json{{"pose_grid", pose_grid_to_json(manifest.pose_grid)}}.dump() << '\n';
  for (const auto& e : manifest.entries) {
    nlohmann::ordered_json j;
    j["sample_id"] = e.sample_id;
    j["background_path"] = rel(e.background_path);
    j["uv_map_path"] = rel(e.uv_map_path);
    j["mask_path"] = rel(e.mask_path);
    j["distance_m"] = e.pose.distance_m;
    j["pitch_deg"] = e.pose.pitch_deg;
    j["yaw_label"] = std::string(yaw_name(e.pose.yaw));
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

SceneSample load_sample(const ManifestEntry& entry) {
  SceneSample s;
  s.background = read_image_png(entry.background_path);
  s.uv_map = read_uv_png(entry.uv_map_path);
  s.mask = read_mask_png(entry.mask_path);
  s.pose = entry.pose;
  s.sample_id = entry.sample_id;
  s.validate();
  return s;
}

const SceneSample& SampleCache::get(const DatasetManifest& manifest, std::size_t index) {
  if (index >= manifest.entries.size()) throw PreconditionError("sample index out of range");
  const auto it = samples_.find(index);
  if (it != samples_.end()) return it->second;
  if (capacity_ > 0 && samples_.size() >= capacity_) {
    samples_.erase(order_.front());
    order_.erase(order_.begin());
  }
  order_.push_back(index);
  return samples_.emplace(index, load_sample(manifest.entries[index])).first->second;
}

void SamplingPolicy::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (pitch_weights.empty()) throw ConfigError("pitch_weights must be nonempty");
  for (const auto& [p, w] : pitch_weights)
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("pitch weights must be positive");
}

PoseIndex::PoseIndex(const DatasetManifest& manifest, const SamplingPolicy& policy) {
  policy.validate();
  const auto& grid = manifest.pose_grid;
  for (const auto& [pitch, w] : policy.pitch_weights) {
    if (grid.pitch_index(pitch) < 0)
      throw PreconditionError("weighted pitch " + std::to_string(pitch) + " is not on the manifest grid");
    pitches_.push_back(pitch);
    weights_.push_back(w);
  }
  const std::size_t n_cells = grid.distances_m.size() * grid.yaws.size();
  cells_.assign(pitches_.size(), std::vector<std::vector<std::size_t>>(n_cells));
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& pose = manifest.entries[i].pose;
    const int pi = find_close(pitches_, pose.pitch_deg);
    if (pi < 0) continue;
    const auto yi = static_cast<std::size_t>(std::find(grid.yaws.begin(), grid.yaws.end(), pose.yaw) - grid.yaws.begin());
    const auto di = static_cast<std::size_t>(grid.distance_index(pose.distance_m));
    cells_[static_cast<std::size_t>(pi)][di * grid.yaws.size() + yi].push_back(i);
  }
  for (std::size_t p = 0; p < cells_.size(); ++p) {
    auto& cells = cells_[p];
    cells.erase(std::remove_if(cells.begin(), cells.end(), [](const auto& c) { return c.empty(); }), cells.end());
    if (cells.empty())
      throw EmptyPitchClass("no manifest entries at weighted pitch " + std::to_string(pitches_[p]) + " deg");
  }
}

std::size_t PoseIndex::draw(Rng& rng) const {
  const std::size_t p = weighted_index(rng, weights_);
  const auto& cells = cells_[p];
  const auto& cell = cells[uniform_index(rng, cells.size())];
  return cell[uniform_index(rng, cell.size())];
}

std::vector<BatchItem> sample_batch(const PoseIndex& index, const SamplingPolicy& policy,
                                    const TransformSchedule& schedule, Rng& rng) {
  if (schedule.empty()) throw EmptySchedule("transform schedule has no entries");
  std::vector<BatchItem> batch;
  batch.reserve(static_cast<std::size_t>(policy.batch_size));
  for (int b = 0; b < policy.batch_size; ++b) {
    BatchItem item;
    item.entry = index.draw(rng);
    item.transform = sample_transform(rng, schedule);
    batch.push_back(std::move(item));
  }
  return batch;
}

std::vector<BatchItem> sample_batch(const DatasetManifest& manifest, const SamplingPolicy& policy,
                                    const TransformSchedule& schedule, Rng& rng) {
  return sample_batch(PoseIndex(manifest, policy), policy, schedule, rng);
}

}  // namespace uca
