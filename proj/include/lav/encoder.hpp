#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lav/numeric.hpp"

namespace lav {

/// Frame encoder: context stacking followed by a tanh MLP with a linear output layer.
struct EncoderConfig {
  Index input_dim = 8;
  std::vector<Index> hidden_dims{64};
  Index embed_dim = 128;
  /// Number of future context frames concatenated to each frame.
  Index context_frames = 1;
  Index context_stride = 15;

  Index stacked_dim() const { return input_dim * (context_frames + 1); }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct DenseLayer {
  /// out x in.
  Matrix weight;
  Vector bias;
  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct EncoderParams {
  std::vector<DenseLayer> layers;

  /// Zeros with the same shapes.
  EncoderParams zeros_like() const;
  Index size() const;
  bool all_finite() const;
  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Row t becomes [frame t | frame t + stride | ... | frame t + k * stride],
/// with indices past the end clamped to the last frame.
Matrix stack_context(const Matrix& frames, Index k, Index stride);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
EncoderParams init_params(const EncoderConfig& cfg, Rng& rng);

/// MLP forward on already-stacked inputs (T x stacked_dim).
Matrix mlp_forward(const Matrix& inputs, const EncoderParams& params);
/// Parameter gradients of <grad_out, mlp_forward(inputs)>.
EncoderParams mlp_backward(const Matrix& inputs, const EncoderParams& params, const Matrix& grad_out);

/// T x d_in frames -> T x embed_dim embeddings (not normalized).
Matrix encode(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params);
EncoderParams encode_backward(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params,
                              const Matrix& grad_embeddings);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled: params *= (1 - lr * weight_decay) before the Adam update.
  double weight_decay = 1e-5;
};

class Adam {
 public:
  Adam(const EncoderParams& like, AdamConfig cfg);
  void step(EncoderParams& params, const EncoderParams& grads);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  EncoderParams m_, v_;
  std::int64_t t_ = 0;
};

/// Versioned text checkpoint: encoder config, parameters and RNG state.
struct Checkpoint {
  EncoderConfig config;
  EncoderParams params;
  std::string rng_state;
  std::int64_t step = 0;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::string serialize_checkpoint(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& text, const std::string& where = "checkpoint");
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& p);
Checkpoint load_checkpoint(const std::filesystem::path& p);

}  // namespace lav
