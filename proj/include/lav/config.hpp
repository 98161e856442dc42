#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "lav/encoder.hpp"
#include "lav/loss.hpp"
#include "lav/metrics.hpp"
#include "lav/synthdata.hpp"
#include "lav/train.hpp"

namespace lav {

/// Every tunable of a run as one flat `key = value` document.
///
/// A single `seed` drives data generation, initialization, sampling and the
/// evaluation classifiers. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig gen;
  EncoderConfig encoder;
  TrainConfig train;
  LavConfig loss;
  LossArm arm = LossArm::Lav;
  EvalConfig eval;

  RunConfig();

  /// Throws ParameterError naming the key on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Propagates `seed` into the per-module configs.
  void set_seed(std::uint64_t s);
  /// Loss settings with the selected arm applied.
  LavConfig resolved_loss() const;

  std::map<std::string, std::string> to_kv() const;
  std::string to_text() const;
  static RunConfig parse(const std::string& text, const std::string& where = "config");
  static RunConfig load(const std::string& path);
};

}  // namespace lav
