#include "lav/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

#include <json.hpp>

#include "lav/errors.hpp"
#include "lav/loss.hpp"

namespace lav {

namespace {

Matrix stack_embeddings(const std::vector<const VideoEmbedding*>& vids) {
  Index rows = 0, cols = 0;
  for (auto* v : vids) {
    rows += v->emb.rows();
    cols = v->emb.cols();
  }
  Matrix out(rows, cols);
  Index r = 0;
  for (auto* v : vids) {
    out.middleRows(r, v->emb.rows()) = v->emb;
    r += v->emb.rows();
  }
  return out;
}

std::vector<const VideoEmbedding*> pointers(const std::vector<VideoEmbedding>& v) {
  std::vector<const VideoEmbedding*> out;
  for (const auto& e : v) out.push_back(&e);
  return out;
}

Matrix with_bias(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out.leftCols(x.cols()) = x;
  out.col(x.cols()).setOnes();
  return out;
}

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
double mean_of(const std::vector<T>& xs, auto get) {
  double s = 0;
  for (const auto& x : xs) s += get(x);
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace

Matrix embed_normalized(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params) {
  return l2_normalize(encode(frames, cfg, params)).normalized;
}

VideoEmbedding embed_video(const SyntheticVideo& v, const EncoderConfig& cfg, const EncoderParams& params) {
  return {v.video_id, embed_normalized(v.frames, cfg, params), v.phase_labels, v.progression};
}

void LogisticRegression::fit(const Matrix& x, const std::vector<int>& y, int num_classes, const LogRegConfig& cfg) {
  if (x.rows() != static_cast<Index>(y.size())) throw ContractError("LogisticRegression: label count mismatch");
  if (x.rows() == 0) throw ContractError("LogisticRegression: no training samples");
  if (num_classes < 1) throw ParameterError("LogisticRegression: need at least one class");
  // Centering makes plain gradient descent indifferent to a shared offset,
  // which the unpenalized bias would otherwise absorb only slowly.
  center_ = x.colwise().mean();
  const Matrix xa = with_bias(x.rowwise() - center_);
  const Index n = xa.rows(), c = num_classes;
  Matrix onehot = Matrix::Zero(n, c);
  for (Index i = 0; i < n; ++i) {
    if (y[i] < 0 || y[i] >= num_classes) throw ContractError("LogisticRegression: label out of range");
    onehot(i, y[i]) = 1.0;
  }
  // Softmax cross-entropy curvature is bounded by half the largest squared row norm.
  const double lipschitz = 0.5 * xa.rowwise().squaredNorm().maxCoeff() + cfg.ridge;
  const double step = 1.0 / lipschitz;
  weight_ = Matrix::Zero(c, xa.cols());
  Matrix penalty_mask = Matrix::Ones(c, xa.cols());
  penalty_mask.col(xa.cols() - 1).setZero();

  for (iters_ = 0; iters_ < cfg.max_iters; ++iters_) {
    Matrix logits = xa * weight_.transpose();
    for (Index i = 0; i < n; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp().matrix();
      logits.row(i) /= logits.row(i).sum();
    }
    const Matrix grad = (logits - onehot).transpose() * xa / static_cast<double>(n) +
                        cfg.ridge * weight_.cwiseProduct(penalty_mask);
    if (grad.cwiseAbs().maxCoeff() < cfg.tolerance) break;
    weight_ -= step * grad;
  }
}

std::vector<int> LogisticRegression::predict(const Matrix& x) const {
  const Matrix logits = with_bias(x.rowwise() - center_) * weight_.transpose();
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    out[i] = static_cast<int>(best);
  }
  return out;
}

ClassificationResult phase_classification(const std::vector<VideoEmbedding>& train,
                                          const std::vector<VideoEmbedding>& val, double label_fraction,
                                          std::uint64_t seed, const LogRegConfig& cfg) {
  if (!(label_fraction > 0 && label_fraction <= 1)) throw ParameterError("phase_classification: fraction must be in (0, 1]");
  if (train.empty() || val.empty()) throw ContractError("phase_classification: empty train or validation set");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(label_fraction * static_cast<double>(train.size()))));
  order.resize(std::min(keep, order.size()));
  std::sort(order.begin(), order.end());

  std::vector<const VideoEmbedding*> labeled;
  std::vector<int> y;
  int num_classes = 0;
  std::set<int> present;
  for (auto i : order) {
    labeled.push_back(&train[i]);
    for (int l : train[i].labels) {
      y.push_back(l);
      present.insert(l);
      num_classes = std::max(num_classes, l + 1);
    }
  }
  ClassificationResult res;
  std::set<int> missing;
  for (const auto& v : val)
    for (int l : v.labels) {
      num_classes = std::max(num_classes, l + 1);
      if (!present.count(l)) missing.insert(l);
    }
  res.missing_phases.assign(missing.begin(), missing.end());

  LogisticRegression clf;
  clf.fit(stack_embeddings(labeled), y, num_classes, cfg);
  std::size_t correct = 0, total = 0;
  for (const auto& v : val) {
    const auto pred = clf.predict(v.emb);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == v.labels[i];
    total += pred.size();
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return res;
}

double r_squared(const Vector& predicted, const Vector& target) {
  if (predicted.size() != target.size() || target.size() == 0) throw ContractError("r_squared: size mismatch");
  const double mean = target.mean();
  const double ss_tot = (target.array() - mean).square().sum();
  if (!(ss_tot > 0)) throw ParameterError("r_squared: undefined for zero target variance");
  const double ss_res = (target - predicted).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

double phase_progression(const std::vector<VideoEmbedding>& train, const std::vector<VideoEmbedding>& val,
                         double ridge) {
  if (train.empty() || val.empty()) throw ContractError("phase_progression: empty train or validation set");
  auto targets = [](const std::vector<VideoEmbedding>& vids) {
    std::vector<double> t;
    for (const auto& v : vids) t.insert(t.end(), v.progression.begin(), v.progression.end());
    return Vector(Eigen::Map<const Vector>(t.data(), static_cast<Index>(t.size())));
  };
  const Matrix xa = with_bias(stack_embeddings(pointers(train)));
  const Vector yt = targets(train);
  Matrix gram = xa.transpose() * xa;
  gram.diagonal().array() += ridge;
  const Vector w = gram.ldlt().solve(xa.transpose() * yt);
  const Matrix xv = with_bias(stack_embeddings(pointers(val)));
  return r_squared(xv * w, targets(val));
}

std::vector<Index> nearest_neighbors(const Matrix& u, const Matrix& v) {
  if (v.rows() < 1) throw ContractError("nearest_neighbors: empty reference set");
  const Matrix d = pairwise_sq_dist(u, v);
  std::vector<Index> nn(static_cast<std::size_t>(u.rows()));
  for (Index i = 0; i < u.rows(); ++i) d.row(i).minCoeff(&nn[i]);
  return nn;
}

double kendall_tau(const Matrix& u, const Matrix& v) {
  const Index n = u.rows();
  if (n < 2) throw ContractError("kendall_tau: need at least two frames");
  const auto nn = nearest_neighbors(u, v);
  std::int64_t score = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) score += (nn[j] > nn[i]) - (nn[j] < nn[i]);
  return static_cast<double>(score) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double frame_retrieval_ap(const VideoEmbedding& query, const std::vector<const VideoEmbedding*>& support, int k) {
  if (k < 1) throw ParameterError("frame_retrieval_ap: K must be >= 1");
  if (query.emb.rows() < 1) throw ContractError("frame_retrieval_ap: empty query");
  std::vector<const VideoEmbedding*> sorted = support;
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->video_id < b->video_id; });
  for (auto* s : sorted)
    if (s->video_id == query.video_id) throw ContractError("frame_retrieval_ap: support contains the query video");

  const Matrix pool = stack_embeddings(sorted);
  std::vector<int> pool_labels;
  for (auto* s : sorted) pool_labels.insert(pool_labels.end(), s->labels.begin(), s->labels.end());
  if (pool.rows() < k) throw ParameterError("frame_retrieval_ap: support has fewer than K frames");

  const Matrix d = pairwise_sq_dist(query.emb, pool);
  std::vector<Index> idx(static_cast<std::size_t>(pool.rows()));
  double sum = 0;
  for (Index q = 0; q < query.emb.rows(); ++q) {
    std::iota(idx.begin(), idx.end(), Index{0});
    // pool order is (video_id, frame_index), so the index breaks distance ties.
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Index a, Index b) { return std::tie(d(q, a), a) < std::tie(d(q, b), b); });
    int hits = 0;
    for (int r = 0; r < k; ++r) hits += pool_labels[idx[r]] == query.labels[q];
    sum += static_cast<double>(hits) / k;
  }
  return sum / static_cast<double>(query.emb.rows());
}

double mean_self_distance(const std::vector<Matrix>& embeddings) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& e : embeddings) {
    const Index n = e.rows();
    if (n < 2) continue;
    total += pairwise_sq_dist(e, e).sum() / static_cast<double>(n * (n - 1));
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

void EvalConfig::validate() const {
  if (label_fractions.empty()) throw ParameterError("eval: need at least one label fraction");
  for (double f : label_fractions)
    if (!(f > 0 && f <= 1)) throw ParameterError("eval: label fractions must be in (0, 1]");
  for (int k : ks)
    if (k < 1) throw ParameterError("eval: K must be >= 1");
}

double EvalReport::classification_at(double fraction) const {
  for (const auto& [f, acc] : classification)
    if (f == fraction) return acc;
  throw ParameterError("no classification result for fraction " + shortest(fraction));
}

double EvalReport::ap_at(int k) const {
  for (const auto& [kk, ap] : ap_at_k)
    if (kk == k) return ap;
  throw ParameterError("no AP result for K=" + std::to_string(k));
}

namespace {

struct ActionSplit {
  std::vector<VideoEmbedding> train, val;
};

std::map<int, ActionSplit> embed_by_action(const Dataset& ds, const EncoderConfig& cfg, const EncoderParams& params,
                                           bool need_train) {
  std::map<int, ActionSplit> out;
  for (const auto& v : ds.videos) {
    if (v.split == Split::Train && !need_train) continue;
    auto& slot = v.split == Split::Train ? out[v.action_id].train : out[v.action_id].val;
    slot.push_back(embed_video(v, cfg, params));
  }
  return out;
}

std::vector<std::pair<int, double>> retrieval_for_action(const std::vector<VideoEmbedding>& val,
                                                         const std::vector<int>& ks) {
  std::vector<std::pair<int, double>> out;
  for (int k : ks) {
    double sum = 0;
    for (const auto& q : val) {
      std::vector<const VideoEmbedding*> support;
      for (const auto& s : val)
        if (s.video_id != q.video_id) support.push_back(&s);
      sum += frame_retrieval_ap(q, support, k);
    }
    out.emplace_back(k, val.empty() ? 0.0 : sum / static_cast<double>(val.size()));
  }
  return out;
}

template <typename K>
std::vector<std::pair<K, double>> average_keyed(const std::vector<ActionMetrics>& acts,
                                                std::vector<std::pair<K, double>> ActionMetrics::*field) {
  std::vector<std::pair<K, double>> out;
  if (acts.empty()) return out;
  out = acts.front().*field;
  for (auto& [key, val] : out) {
    val = 0;
    for (const auto& a : acts)
      for (const auto& [k2, v2] : a.*field)
        if (k2 == key) val += v2;
    val /= static_cast<double>(acts.size());
  }
  return out;
}

}  // namespace

EvalReport evaluate(const Dataset& ds, const EncoderConfig& cfg, const EncoderParams& params,
                    const EvalConfig& eval_cfg) {
  eval_cfg.validate();
  EvalReport rep;
  const auto by_action = embed_by_action(ds, cfg, params, true);
  std::vector<Matrix> val_embs;
  for (const auto& [action, sp] : by_action) {
    if (sp.train.empty() || sp.val.size() < 2) throw ContractError("evaluate: each action needs training and >= 2 validation videos");
    ActionMetrics am;
    am.action_id = action;
    std::set<int> missing;
    for (double f : eval_cfg.label_fractions) {
      auto cr = phase_classification(sp.train, sp.val, f, eval_cfg.seed);
      am.classification.emplace_back(f, cr.accuracy);
      missing.insert(cr.missing_phases.begin(), cr.missing_phases.end());
    }
    am.missing_phases.assign(missing.begin(), missing.end());
    am.progression_r2 = phase_progression(sp.train, sp.val);
    double tau = 0;
    int pairs = 0;
    for (const auto& a : sp.val)
      for (const auto& b : sp.val) {
        if (&a == &b) continue;
        tau += kendall_tau(a.emb, b.emb);
        ++pairs;
      }
    am.kendall_tau = tau / pairs;
    am.ap_at_k = retrieval_for_action(sp.val, eval_cfg.ks);
    for (const auto& v : sp.val) val_embs.push_back(v.emb);
    rep.per_action.push_back(std::move(am));
  }
  rep.classification = average_keyed(rep.per_action, &ActionMetrics::classification);
  rep.ap_at_k = average_keyed(rep.per_action, &ActionMetrics::ap_at_k);
  rep.progression_r2 = mean_of(rep.per_action, [](const ActionMetrics& a) { return a.progression_r2; });
  rep.kendall_tau = mean_of(rep.per_action, [](const ActionMetrics& a) { return a.kendall_tau; });
  rep.mean_self_distance = mean_self_distance(val_embs);
  return rep;
}

std::vector<std::pair<int, double>> evaluate_retrieval(const Dataset& ds, const EncoderConfig& cfg,
                                                       const EncoderParams& params, const std::vector<int>& ks) {
  std::vector<ActionMetrics> acts;
  for (const auto& [action, sp] : embed_by_action(ds, cfg, params, false)) {
    ActionMetrics am;
    am.action_id = action;
    am.ap_at_k = retrieval_for_action(sp.val, ks);
    acts.push_back(std::move(am));
  }
  return average_keyed(acts, &ActionMetrics::ap_at_k);
}

std::string report_to_json(const EvalReport& r) {
  using nlohmann::json;
  auto fractions = [](const std::vector<std::pair<double, double>>& xs) {
    json j = json::object();
    for (const auto& [f, v] : xs) j[shortest(f)] = v;
    return j;
  };
  auto ks = [](const std::vector<std::pair<int, double>>& xs) {
    json j = json::object();
    for (const auto& [k, v] : xs) j[std::to_string(k)] = v;
    return j;
  };
  json j;
  j["classification"] = fractions(r.classification);
  j["progression_r2"] = r.progression_r2;
  j["kendall_tau"] = r.kendall_tau;
  j["ap_at_k"] = ks(r.ap_at_k);
  j["mean_self_distance"] = r.mean_self_distance;
  j["per_action"] = json::array();
  for (const auto& a : r.per_action) {
    json ja;
    ja["action_id"] = a.action_id;
    ja["classification"] = fractions(a.classification);
    ja["progression_r2"] = a.progression_r2;
    ja["kendall_tau"] = a.kendall_tau;
    ja["ap_at_k"] = ks(a.ap_at_k);
    ja["missing_phases"] = a.missing_phases;
    j["per_action"].push_back(ja);
  }
  return j.dump(2) + "\n";
}

}  // namespace lav
