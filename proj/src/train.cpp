#include "lav/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "lav/errors.hpp"

namespace lav {

namespace {

Matrix select_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

void accumulate(EncoderParams& acc, const EncoderParams& g, double scale) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    acc.layers[l].weight += scale * g.layers[l].weight;
    acc.layers[l].bias += scale * g.layers[l].bias;
  }
}

template <typename Derived>
double tensor_rel_error(const Eigen::MatrixBase<Derived>& analytic, const Eigen::MatrixBase<Derived>& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0)) throw ParameterError("train: learning_rate must be >= 0");
  if (!(weight_decay >= 0)) throw ParameterError("train: weight_decay must be >= 0");
  if (frames_per_video < 2) throw ParameterError("train: frames_per_video must be >= 2");
  if (batch_pairs < 1) throw ParameterError("train: batch_pairs must be >= 1");
  if (steps < 0) throw ParameterError("train: steps must be >= 0");
}

std::vector<Index> sample_frames(Index t, Index p, Rng& rng) {
  if (p < 1) throw ParameterError("sample_frames: p must be >= 1");
  if (t < p) throw ParameterError("sample_frames: fewer frames than chunks");
  std::vector<Index> idx(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) {
    const Index lo = i * t / p;
    const Index hi = (i + 1) * t / p - 1;
    idx[static_cast<std::size_t>(i)] = rng.uniform_int(lo, hi);
  }
  return idx;
}

std::vector<std::pair<std::size_t, std::size_t>> make_pairs(const std::vector<std::vector<std::size_t>>& groups,
                                                            Rng& rng, std::vector<std::string>* warnings) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) {
      if (warnings) warnings->push_back("group " + std::to_string(g) + " has fewer than 2 videos; skipped");
      continue;
    }
    std::vector<std::size_t> order = groups[g];
    rng.shuffle(order);
    std::size_t i = 0;
    for (; i + 1 < order.size(); i += 2) pairs.emplace_back(order[i], order[i + 1]);
    if (i < order.size()) {
      const auto partner = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      pairs.emplace_back(order[i], order[partner]);
    }
  }
  return pairs;
}

PairGradient pair_gradient(const Matrix& inputs_x, const Matrix& inputs_y, const EncoderParams& params,
                           const LavConfig& loss_cfg, std::span<const Index> times_x, std::span<const Index> times_y) {
  const Matrix ex = mlp_forward(inputs_x, params);
  const Matrix ey = mlp_forward(inputs_y, params);
  PairGradient out;
  out.report = lav_loss(ex, ey, loss_cfg, times_x, times_y);
  out.grads = mlp_backward(inputs_x, params, out.report.grad_x);
  accumulate(out.grads, mlp_backward(inputs_y, params, out.report.grad_y), 1.0);
  return out;
}

double pipeline_gradient_error(const LavConfig& loss_cfg, std::uint64_t seed) {
  EncoderConfig enc;
  enc.input_dim = 3;
  enc.hidden_dims = {5};
  enc.embed_dim = 4;
  enc.context_frames = 1;
  enc.context_stride = 2;
  LavConfig cfg = loss_cfg;
  cfg.cidm.sigma = std::min<Index>(cfg.cidm.sigma, 2);

  Rng rng(seed);
  const Index t = 6;
  Matrix fx(t, enc.input_dim), fy(t, enc.input_dim);
  for (Index i = 0; i < fx.size(); ++i) fx.data()[i] = rng.normal();
  for (Index i = 0; i < fy.size(); ++i) fy.data()[i] = rng.normal();
  const Matrix sx = stack_context(fx, enc.context_frames, enc.context_stride);
  const Matrix sy = stack_context(fy, enc.context_frames, enc.context_stride);
  EncoderParams params = init_params(enc, rng);

  auto loss_at = [&](const EncoderParams& p) {
    return lav_loss(mlp_forward(sx, p), mlp_forward(sy, p), cfg).total;
  };
  const EncoderParams analytic = pair_gradient(sx, sy, params, cfg).grads;

  constexpr double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto numeric_of = [&](auto member) {
      auto& target = params.layers[l].*member;
      using T = std::decay_t<decltype(target)>;
      T num(target.rows(), target.cols());
      for (Index i = 0; i < target.size(); ++i) {
        const double keep = target.data()[i];
        target.data()[i] = keep + eps;
        const double up = loss_at(params);
        target.data()[i] = keep - eps;
        const double down = loss_at(params);
        target.data()[i] = keep;
        num.data()[i] = (up - down) / (2 * eps);
      }
      return num;
    };
    const Matrix nw = numeric_of(&DenseLayer::weight);
    const Vector nb = numeric_of(&DenseLayer::bias);
    worst = std::max(worst, tensor_rel_error(analytic.layers[l].weight, nw));
    worst = std::max(worst, tensor_rel_error(analytic.layers[l].bias, nb));
  }
  return worst;
}

TrainResult train(const Dataset& ds, const EncoderConfig& enc_cfg, const TrainConfig& train_cfg,
                  const LavConfig& loss_cfg, const StepCallback& on_step) {
  enc_cfg.validate();
  train_cfg.validate();
  loss_cfg.validate();
  if (enc_cfg.input_dim != ds.feature_dim) throw ContractError("train: encoder input_dim does not match dataset");

  Rng rng(train_cfg.seed);
  TrainResult res;
  res.initial_params = init_params(enc_cfg, rng);
  res.params = res.initial_params;

  if (train_cfg.gradient_check && train_cfg.steps > 0) {
    const double err = pipeline_gradient_error(loss_cfg, train_cfg.seed);
    if (!(err <= kPipelineGradTolerance))
      throw NumericError("train: gradient check failed (relative error " + std::to_string(err) + ")");
  }

  std::map<int, std::vector<std::size_t>> by_action;
  std::vector<Matrix> stacked(ds.videos.size());
  for (std::size_t i = 0; i < ds.videos.size(); ++i) {
    const auto& v = ds.videos[i];
    if (v.split != Split::Train) continue;
    by_action[v.action_id].push_back(i);
    stacked[i] = stack_context(v.frames, enc_cfg.context_frames, enc_cfg.context_stride);
  }
  std::vector<std::vector<std::size_t>> groups;
  for (auto& [a, ids] : by_action) groups.push_back(ids);

  Adam adam(res.params, {train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_eps,
                         train_cfg.weight_decay});
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t cursor = 0;
  const double inv_batch = 1.0 / static_cast<double>(train_cfg.batch_pairs);

  for (int step = 1; step <= train_cfg.steps; ++step) {
    EncoderParams grads = res.params.zeros_like();
    StepRecord rec;
    rec.step = step;
    for (int b = 0; b < train_cfg.batch_pairs; ++b) {
      if (cursor == pairs.size()) {
        std::vector<std::string> warnings;
        pairs = make_pairs(groups, rng, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
        if (pairs.empty()) throw ParameterError("train: no action has two or more training videos");
        cursor = 0;
      }
      const auto [ia, ib] = pairs[cursor++];
      const auto rows_a = sample_frames(ds.videos[ia].length(), train_cfg.frames_per_video, rng);
      const auto rows_b = sample_frames(ds.videos[ib].length(), train_cfg.frames_per_video, rng);
      PairGradient pg;
      try {
        pg = train_cfg.frame_time_gaps
                 ? pair_gradient(select_rows(stacked[ia], rows_a), select_rows(stacked[ib], rows_b), res.params,
                                 loss_cfg, rows_a, rows_b)
                 : pair_gradient(select_rows(stacked[ia], rows_a), select_rows(stacked[ib], rows_b), res.params,
                                 loss_cfg);
      } catch (const DegenerateEmbeddingError& e) {
        throw NumericError("train: step " + std::to_string(step) + ": " + e.what());
      }
      accumulate(grads, pg.grads, inv_batch);
      rec.total += inv_batch * pg.report.total;
      rec.alignment += inv_batch * pg.report.alignment;
      rec.reg_x += inv_batch * pg.report.reg_x;
      rec.reg_y += inv_batch * pg.report.reg_y;
    }
    if (!std::isfinite(rec.total) || !grads.all_finite())
      throw NumericError("train: non-finite loss or gradient at step " + std::to_string(step) +
                         " (total=" + std::to_string(rec.total) + ", alignment=" + std::to_string(rec.alignment) +
                         ", reg_x=" + std::to_string(rec.reg_x) + ", reg_y=" + std::to_string(rec.reg_y) + ")");
    adam.step(res.params, grads);
    if (!res.params.all_finite())
      throw NumericError("train: parameters became non-finite at step " + std::to_string(step));
    res.history.push_back(rec);
    if (on_step) on_step(rec, res.params);
  }
  res.rng_state = rng.state();
  return res;
}

}  // namespace lav
