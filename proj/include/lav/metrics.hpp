#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lav/encoder.hpp"
#include "lav/numeric.hpp"
#include "lav/synthdata.hpp"

namespace lav {

/// Frozen per-frame embeddings of one video with its annotations.
struct VideoEmbedding {
  std::string video_id;
  Matrix emb;
  std::vector<int> labels;
  std::vector<double> progression;
};

/// Encodes a video and L2-normalizes every frame embedding.
Matrix embed_normalized(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params);
VideoEmbedding embed_video(const SyntheticVideo& v, const EncoderConfig& cfg, const EncoderParams& params);

struct ClassificationResult {
  double accuracy = 0;
  /// Phases seen in validation but absent from the labeled training frames.
  std::vector<int> missing_phases;
};

struct LogRegConfig {
  double ridge = 1e-3;
  int max_iters = 2000;
  double tolerance = 1e-6;
};

/// Multinomial logistic regression (softmax, bias, L2 on weights) fit by
/// full-batch gradient descent on mean-centered features.
class LogisticRegression {
 public:
  void fit(const Matrix& x, const std::vector<int>& y, int num_classes, const LogRegConfig& cfg = {});
  std::vector<int> predict(const Matrix& x) const;
  int iterations() const { return iters_; }

 private:
  Eigen::RowVectorXd center_;  // training feature mean, subtracted before the affine map
  Matrix weight_;               // C x (d + 1), last column is the bias
  int iters_ = 0;
};

/// Trains on a label_fraction subset of the training videos (videos drawn
/// first with a seeded shuffle) and reports per-frame validation accuracy.
ClassificationResult phase_classification(const std::vector<VideoEmbedding>& train,
                                          const std::vector<VideoEmbedding>& val, double label_fraction,
                                          std::uint64_t seed, const LogRegConfig& cfg = {});

/// 1 - SS_res / SS_tot; throws ParameterError when the targets have zero variance.
double r_squared(const Vector& predicted, const Vector& target);

/// Ridge linear regression from embeddings to progression; R^2 on validation frames.
double phase_progression(const std::vector<VideoEmbedding>& train, const std::vector<VideoEmbedding>& val,
                         double ridge = 1e-6);

/// Index in v of the nearest row to each row of u (squared distance, lowest index on ties).
std::vector<Index> nearest_neighbors(const Matrix& u, const Matrix& v);

/// Kendall tau-a of nearest-neighbor frame matching from u into v.
double kendall_tau(const Matrix& u, const Matrix& v);

/// Mean over query frames of the fraction of the K nearest support frames sharing the query's label.
double frame_retrieval_ap(const VideoEmbedding& query, const std::vector<const VideoEmbedding*>& support, int k);

/// Mean over sequences of the mean off-diagonal squared self-distance.
double mean_self_distance(const std::vector<Matrix>& embeddings);

struct EvalConfig {
  std::vector<double> label_fractions{0.1, 0.5, 1.0};
  std::vector<int> ks{5, 10, 15};
  std::uint64_t seed = 0;
  void validate() const;
};

struct ActionMetrics {
  int action_id = 0;
  std::vector<std::pair<double, double>> classification;
  double progression_r2 = 0;
  double kendall_tau = 0;
  std::vector<std::pair<int, double>> ap_at_k;
  std::vector<int> missing_phases;
};

/// Metrics are computed per action (classifier and regressor fit on that
/// action's training videos) and then averaged over actions.
struct EvalReport {
  std::vector<std::pair<double, double>> classification;
  double progression_r2 = 0;
  double kendall_tau = 0;
  std::vector<std::pair<int, double>> ap_at_k;
  double mean_self_distance = 0;
  std::vector<ActionMetrics> per_action;

  double classification_at(double fraction) const;
  double ap_at(int k) const;
};

EvalReport evaluate(const Dataset& ds, const EncoderConfig& cfg, const EncoderParams& params,
                    const EvalConfig& eval_cfg);

/// Retrieval only, over the validation split.
std::vector<std::pair<int, double>> evaluate_retrieval(const Dataset& ds, const EncoderConfig& cfg,
                                                       const EncoderParams& params, const std::vector<int>& ks);

std::string report_to_json(const EvalReport& r);

}  // namespace lav
