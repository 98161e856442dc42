#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lav/numeric.hpp"

namespace lav {

enum class Split { Train, Validation };

/// A labeled feature sequence standing in for one video.
struct SyntheticVideo {
  std::string video_id;
  int action_id = 0;
  int num_phases = 0;
  Split split = Split::Train;
  /// T x d_in.
  Matrix frames;
  std::vector<int> phase_labels;
  /// Frames at which the phase label changes (first frame of each new phase).
  std::vector<Index> key_events;
  /// Latent progress through the action, 0 at the first frame and 1 at the last.
  std::vector<double> progression;

  Index length() const { return frames.rows(); }
  friend bool operator==(const SyntheticVideo&, const SyntheticVideo&) = default;
};

struct GenConfig {
  int num_actions = 3;
  int videos_per_action = 12;
  /// Trailing videos of each action that form the validation split.
  int val_per_action = 4;
  int phases_per_action = 4;
  Index t_min = 40;
  Index t_max = 80;
  Index feature_dim = 8;
  double noise_std = 0.05;
  double warp_strength = 0.5;
  /// Scale of the random rotation mixing feature channels ("viewpoint").
  double mix_strength = 1.0;
  /// Size of the shared viewpoint pool each video draws its mix from; 0 gives
  /// every video its own mix.
  int num_views = 3;
  std::uint64_t seed = 0;

  void validate() const;
  std::map<std::string, std::string> to_kv() const;
};

struct Dataset {
  std::string name = "synthetic";
  Index feature_dim = 0;
  std::vector<SyntheticVideo> videos;
  /// Generator settings echoed into the manifest.
  std::map<std::string, std::string> meta;

  std::vector<const SyntheticVideo*> split(Split s) const;
  const SyntheticVideo& find(const std::string& video_id) const;
  std::vector<int> action_ids() const;
};

Dataset generate(const GenConfig& cfg);

/// Checks the per-video label/progression invariants; throws ContractError.
void validate_video(const SyntheticVideo& v);

/// Writes manifest.txt plus one <video_id>.csv per video into dir (created if absent).
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws ParseError on any malformed or truncated file; never returns a partial dataset.
Dataset read_dataset(const std::filesystem::path& dir);

std::string serialize_video(const SyntheticVideo& v);
SyntheticVideo parse_video(const std::string& text, const std::string& where);

}  // namespace lav
