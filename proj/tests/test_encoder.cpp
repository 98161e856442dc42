#include <doctest.h>

#include <set>

#include "lav/encoder.hpp"
#include "lav/errors.hpp"
#include "lav/loss.hpp"
#include "lav/metrics.hpp"
#include "lav/synthdata.hpp"
#include "lav/train.hpp"
#include "support.hpp"

using namespace lav;
using lav::testing::random_matrix;
using lav::testing::rel_error;
using lav::testing::TempDir;

namespace {

EncoderConfig small_encoder(Index d_in = 3) {
  EncoderConfig cfg;
  cfg.input_dim = d_in;
  cfg.hidden_dims = {5, 4};
  cfg.embed_dim = 3;
  cfg.context_frames = 1;
  cfg.context_stride = 2;
  return cfg;
}

// Straightforward per-row reimplementation of the encoder forward pass.
Matrix reference_encode(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& p) {
  const Index t = frames.rows();
  Matrix out(t, cfg.embed_dim);
  for (Index r = 0; r < t; ++r) {
    std::vector<double> h;
    for (Index c = 0; c <= cfg.context_frames; ++c) {
      const Index src = std::min(r + c * cfg.context_stride, t - 1);
      for (Index j = 0; j < frames.cols(); ++j) h.push_back(frames(src, j));
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const auto& layer = p.layers[l];
      std::vector<double> next(static_cast<std::size_t>(layer.weight.rows()));
      for (Index i = 0; i < layer.weight.rows(); ++i) {
        double s = layer.bias(i);
        for (Index j = 0; j < layer.weight.cols(); ++j) s += layer.weight(i, j) * h[static_cast<std::size_t>(j)];
        next[static_cast<std::size_t>(i)] = l + 1 < p.layers.size() ? std::tanh(s) : s;
      }
      h = std::move(next);
    }
    for (Index j = 0; j < cfg.embed_dim; ++j) out(r, j) = h[static_cast<std::size_t>(j)];
  }
  return out;
}

Dataset tiny_dataset(std::uint64_t seed = 0) {
  GenConfig g;
  g.num_actions = 2;
  g.videos_per_action = 5;
  g.val_per_action = 1;
  g.phases_per_action = 3;
  g.t_min = 20;
  g.t_max = 30;
  g.feature_dim = 4;
  g.seed = seed;
  return generate(g);
}

EncoderConfig tiny_encoder() {
  EncoderConfig e;
  e.input_dim = 4;
  e.hidden_dims = {16};
  e.embed_dim = 8;
  e.context_frames = 1;
  e.context_stride = 3;
  return e;
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.frames_per_video = 8;
  t.steps = steps;
  t.learning_rate = 3e-3;
  return t;
}

}  // namespace

TEST_CASE("stack_context") {
  Matrix f(3, 1);
  f << 1, 2, 3;
  CHECK(stack_context(f, 0, 15) == f);
  Matrix expect(3, 2);
  expect << 1, 2, 2, 3, 3, 3;
  CHECK(stack_context(f, 1, 1) == expect);

  Rng rng(1);
  const Matrix g = random_matrix(rng, 10, 2);
  const Matrix s = stack_context(g, 1, 15);
  CHECK(s.cols() == 4);
  for (Index i = 0; i < 10; ++i) {
    CHECK(s.block(i, 0, 1, 2) == g.row(i));
    CHECK(s.block(i, 2, 1, 2) == g.row(9));
  }
  CHECK_THROWS_AS(stack_context(Matrix(0, 2), 1, 1), ContractError);
  CHECK_THROWS_AS(stack_context(g, 1, 0), ParameterError);
}

TEST_CASE("encode forward") {
  SUBCASE("zero parameters give zero embeddings, which the loss rejects") {
    const EncoderConfig cfg = small_encoder();
    Rng rng(2);
    const EncoderParams zero = init_params(cfg, rng).zeros_like();
    const Matrix frames = random_matrix(rng, 6, 3);
    const Matrix e = encode(frames, cfg, zero);
    CHECK(e == Matrix::Zero(6, 3));
    CHECK_THROWS_AS(lav_loss(e, e, LavConfig{}), DegenerateEmbeddingError);
  }
  SUBCASE("identity linear layer passes inputs through") {
    EncoderConfig cfg;
    cfg.input_dim = 4;
    cfg.hidden_dims = {};
    cfg.embed_dim = 4;
    cfg.context_frames = 0;
    EncoderParams p;
    p.layers.push_back({Matrix::Identity(4, 4), Vector::Zero(4)});
    Rng rng(3);
    const Matrix frames = random_matrix(rng, 5, 4);
    CHECK(encode(frames, cfg, p) == frames);
  }
  SUBCASE("matches an independent reimplementation") {
    const EncoderConfig cfg = small_encoder();
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
      const EncoderParams p = init_params(cfg, rng);
      const Matrix frames = random_matrix(rng, 7, 3);
      CHECK((encode(frames, cfg, p) - reference_encode(frames, cfg, p)).cwiseAbs().maxCoeff() < 1e-13);
    }
  }
  SUBCASE("shape errors") {
    const EncoderConfig cfg = small_encoder();
    Rng rng(5);
    const EncoderParams p = init_params(cfg, rng);
    CHECK_THROWS_AS(encode(Matrix::Ones(4, 2), cfg, p), ContractError);
    CHECK_THROWS_AS(encode_backward(Matrix::Ones(4, 3), cfg, p, Matrix::Ones(4, 2)), ContractError);
  }
}

TEST_CASE("init_params shapes and bounds") {
  const EncoderConfig cfg = small_encoder();
  Rng a(6), b(6);
  const EncoderParams p = init_params(cfg, a);
  CHECK(p == init_params(cfg, b));
  REQUIRE(p.layers.size() == 3);
  CHECK(p.layers[0].weight.rows() == 5);
  CHECK(p.layers[0].weight.cols() == 6);
  CHECK(p.layers[2].weight.rows() == 3);
  CHECK(p.size() == 5 * 6 + 5 + 4 * 5 + 4 + 3 * 4 + 3);
  CHECK(p.layers[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(6.0));
  CHECK(p.all_finite());

  EncoderConfig bad = cfg;
  bad.embed_dim = 0;
  CHECK_THROWS_AS(init_params(bad, a), ParameterError);
  bad = cfg;
  bad.context_stride = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("encode_backward") {
  const EncoderConfig cfg = small_encoder();
  Rng rng(7);
  SUBCASE("zero upstream gradient") {
    const EncoderParams p = init_params(cfg, rng);
    const Matrix frames = random_matrix(rng, 5, 3);
    CHECK(encode_backward(frames, cfg, p, Matrix::Zero(5, 3)) == p.zeros_like());
  }
  SUBCASE("scalar linear layer") {
    EncoderConfig lin;
    lin.input_dim = 1;
    lin.hidden_dims = {};
    lin.embed_dim = 1;
    lin.context_frames = 0;
    EncoderParams p;
    p.layers.push_back({Matrix::Constant(1, 1, 0.7), Vector::Constant(1, -0.2)});
    Matrix x(1, 1), g(1, 1);
    x << 1.5;
    g << -2.0;
    const EncoderParams grads = encode_backward(x, lin, p, g);
    CHECK(grads.layers[0].weight(0, 0) == -3.0);
    CHECK(grads.layers[0].bias(0) == -2.0);
  }
  SUBCASE("matches central differences on every tensor") {
    for (int t = 0; t < 10; ++t) {
      EncoderParams p = init_params(cfg, rng);
      const Matrix frames = random_matrix(rng, 6, 3);
      const Matrix w = random_matrix(rng, 6, 3);
      const EncoderParams analytic = encode_backward(frames, cfg, p, w);
      for (std::size_t l = 0; l < p.layers.size(); ++l) {
        auto check_tensor = [&](auto& target, const auto& grad) {
          Matrix num(target.rows(), target.cols());
          for (Index i = 0; i < target.size(); ++i) {
            const double keep = target.data()[i];
            target.data()[i] = keep + 1e-6;
            const double up = encode(frames, cfg, p).cwiseProduct(w).sum();
            target.data()[i] = keep - 1e-6;
            const double down = encode(frames, cfg, p).cwiseProduct(w).sum();
            target.data()[i] = keep;
            num.data()[i] = (up - down) / 2e-6;
          }
          CHECK(rel_error(Matrix(grad), num) < 1e-5);
        };
        check_tensor(p.layers[l].weight, analytic.layers[l].weight);
        check_tensor(p.layers[l].bias, analytic.layers[l].bias);
      }
    }
  }
}

TEST_CASE("Adam") {
  const EncoderConfig cfg = small_encoder();
  Rng rng(8);
  SUBCASE("zero gradient and zero weight decay leave parameters unchanged") {
    EncoderParams p = init_params(cfg, rng);
    const EncoderParams before = p;
    Adam opt(p, {.learning_rate = 1e-2, .weight_decay = 0.0});
    for (int i = 0; i < 5; ++i) opt.step(p, p.zeros_like());
    CHECK(p == before);
    CHECK(opt.steps_taken() == 5);
  }
  SUBCASE("first step moves each parameter by about lr against the gradient sign") {
    EncoderParams p = init_params(cfg, rng);
    const EncoderParams before = p;
    EncoderParams g = p.zeros_like();
    g.layers[0].weight(0, 0) = 3.0;
    g.layers[1].bias(2) = -0.5;
    Adam opt(p, {.learning_rate = 1e-3, .weight_decay = 0.0});
    opt.step(p, g);
    CHECK(p.layers[0].weight(0, 0) == doctest::Approx(before.layers[0].weight(0, 0) - 1e-3).epsilon(1e-9));
    CHECK(p.layers[1].bias(2) == doctest::Approx(before.layers[1].bias(2) + 1e-3).epsilon(1e-9));
    CHECK(p.layers[0].weight(1, 1) == before.layers[0].weight(1, 1));
  }
  SUBCASE("decoupled weight decay shrinks parameters without a gradient") {
    EncoderParams p = init_params(cfg, rng);
    const EncoderParams before = p;
    Adam opt(p, {.learning_rate = 0.1, .weight_decay = 0.5});
    opt.step(p, p.zeros_like());
    CHECK((p.layers[0].weight - 0.95 * before.layers[0].weight).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("invalid settings") {
    const EncoderParams p = init_params(cfg, rng);
    CHECK_THROWS_AS(Adam(p, {.learning_rate = -1}), ParameterError);
    CHECK_THROWS_AS(Adam(p, {.beta1 = 1.0}), ParameterError);
  }
}

TEST_CASE("checkpoint round trip") {
  const EncoderConfig cfg = small_encoder();
  Rng rng(9);
  Checkpoint ck{cfg, init_params(cfg, rng), rng.state(), 42};
  const std::string text = serialize_checkpoint(ck);
  CHECK(parse_checkpoint(text) == ck);
  CHECK(serialize_checkpoint(parse_checkpoint(text)) == text);

  TempDir dir("ckpt");
  save_checkpoint(ck, dir / "model.ckpt");
  CHECK(load_checkpoint(dir / "model.ckpt") == ck);

  Rng restored(0);
  restored.set_state(parse_checkpoint(text).rng_state);
  CHECK(restored == rng);
}

TEST_CASE("checkpoint parse errors") {
  const EncoderConfig cfg = small_encoder();
  Rng rng(10);
  const std::string text = serialize_checkpoint({cfg, init_params(cfg, rng), rng.state(), 1});

  CHECK_THROWS_AS(parse_checkpoint(""), ParseError);
  CHECK_THROWS_AS(parse_checkpoint("hello 1\n"), ParseError);
  std::string other_version = text;
  other_version.replace(other_version.find(" 1\n"), 3, " 9\n");
  CHECK_THROWS_AS(parse_checkpoint(other_version), ParseError);

  // Truncation anywhere past the header is reported, never silently accepted.
  for (std::size_t cut : {text.size() / 4, text.size() / 2, text.size() - 5}) {
    const std::string truncated = text.substr(0, cut);
    CHECK_THROWS_AS(parse_checkpoint(truncated), ParseError);
  }
  try {
    parse_checkpoint(text.substr(0, text.size() / 2), "model.ckpt");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() > 0);
    CHECK(std::string(e.what()).find("model.ckpt") != std::string::npos);
  }

  std::string bad_number = text;
  const auto at = bad_number.find("layer 0");
  const auto row = bad_number.find('\n', at) + 1;
  bad_number.replace(row, 1, "x");
  CHECK_THROWS_AS(parse_checkpoint(bad_number), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.ckpt"), std::exception);
}

TEST_CASE("sample_frames") {
  Rng rng(11);
  std::vector<Index> all(7);
  std::iota(all.begin(), all.end(), 0);
  CHECK(sample_frames(7, 7, rng) == all);

  std::set<Index> firsts, seconds;
  for (int i = 0; i < 500; ++i) {
    const auto s = sample_frames(10, 2, rng);
    REQUIRE(s.size() == 2);
    CHECK(s[0] >= 0);
    CHECK(s[0] <= 4);
    CHECK(s[1] >= 5);
    CHECK(s[1] <= 9);
    firsts.insert(s[0]);
    seconds.insert(s[1]);
  }
  CHECK(firsts.size() == 5);
  CHECK(seconds.size() == 5);

  for (int i = 0; i < 100; ++i) {
    const Index t = rng.uniform_int(20, 90), p = rng.uniform_int(2, 20);
    const auto s = sample_frames(t, p, rng);
    CHECK(std::adjacent_find(s.begin(), s.end(), std::greater_equal<>()) == s.end());
    CHECK(s.back() < t);
  }

  Rng a(12), b(12);
  CHECK(sample_frames(50, 20, a) == sample_frames(50, 20, b));
  CHECK_THROWS_AS(sample_frames(3, 4, rng), ParameterError);
}

TEST_CASE("make_pairs") {
  Rng rng(13);
  SUBCASE("two videos give one pair") {
    const auto p = make_pairs({{4, 9}}, rng);
    REQUIRE(p.size() == 1);
    CHECK(std::set<std::size_t>{p[0].first, p[0].second} == std::set<std::size_t>{4, 9});
  }
  SUBCASE("four videos give two disjoint pairs covering all") {
    for (int t = 0; t < 20; ++t) {
      const auto p = make_pairs({{0, 1, 2, 3}}, rng);
      REQUIRE(p.size() == 2);
      std::set<std::size_t> seen{p[0].first, p[0].second, p[1].first, p[1].second};
      CHECK(seen == std::set<std::size_t>{0, 1, 2, 3});
    }
  }
  SUBCASE("odd groups pair the leftover with another member") {
    const auto p = make_pairs({{0, 1, 2}}, rng);
    REQUIRE(p.size() == 2);
    for (auto [a, b] : p) CHECK(a != b);
  }
  SUBCASE("pairs stay within groups and singletons are skipped with a warning") {
    std::vector<std::string> warnings;
    const auto p = make_pairs({{0, 1}, {2}, {3, 4, 5, 6}}, rng, &warnings);
    CHECK(p.size() == 3);
    CHECK(warnings.size() == 1);
    for (auto [a, b] : p) CHECK((a < 2) == (b < 2));
  }
  SUBCASE("deterministic for a fixed seed") {
    Rng a(14), b(14);
    const std::vector<std::vector<std::size_t>> groups{{0, 1, 2, 3, 4, 5}, {6, 7, 8, 9}};
    CHECK(make_pairs(groups, a) == make_pairs(groups, b));
  }
}

TEST_CASE("full pipeline gradient passes the finite-difference gate") {
  for (LossArm arm : {LossArm::Lav, LossArm::Sdtw, LossArm::SdtwSfa, LossArm::SdtwIdm})
    for (std::uint64_t seed : {0u, 1u, 2u}) CHECK(pipeline_gradient_error(apply_arm(LavConfig{}, arm), seed) < kPipelineGradTolerance);
}

TEST_CASE("train") {
  const Dataset ds = tiny_dataset();
  const EncoderConfig enc = tiny_encoder();
  LavConfig loss;
  loss.cidm.sigma = 3;

  SUBCASE("zero steps return the initialization") {
    const auto r = train(ds, enc, tiny_train(0), loss);
    CHECK(r.params == r.initial_params);
    CHECK(r.history.empty());
    Rng rng(tiny_train(0).seed);
    CHECK(r.initial_params == init_params(enc, rng));
  }
  SUBCASE("zero learning rate gives a constant loss history") {
    // One pair of videos with T = p, so every step sees the same batch.
    GenConfig g;
    g.num_actions = 1;
    g.videos_per_action = 3;
    g.val_per_action = 1;
    g.phases_per_action = 2;
    g.t_min = g.t_max = 8;
    g.feature_dim = 4;
    TrainConfig t = tiny_train(6);
    t.learning_rate = 0.0;
    const auto r = train(generate(g), enc, t, loss);
    CHECK(r.params == r.initial_params);
    REQUIRE(r.history.size() == 6);
    // Pair order may flip between refreshes, which only reorders sums.
    for (const auto& h : r.history) CHECK(h.total == doctest::Approx(r.history.front().total).epsilon(1e-12));
  }
  SUBCASE("identical inputs give identical runs") {
    const auto a = train(ds, enc, tiny_train(10), loss);
    const auto b = train(ds, enc, tiny_train(10), loss);
    CHECK(a.params == b.params);
    CHECK(a.rng_state == b.rng_state);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) CHECK(a.history[i].total == b.history[i].total);
    TrainConfig other = tiny_train(10);
    other.seed = 1;
    CHECK_FALSE(train(ds, enc, other, loss).params == a.params);
  }
  SUBCASE("callback sees every step") {
    int calls = 0;
    train(ds, enc, tiny_train(4), loss, [&](const StepRecord& s, const EncoderParams&) { CHECK(s.step == ++calls); });
    CHECK(calls == 4);
  }
  SUBCASE("alignment alone collapses more than with the regularizer") {
    const auto spread = [&](const EncoderParams& p) {
      std::vector<Matrix> embs;
      for (const auto* v : ds.split(Split::Train)) embs.push_back(embed_normalized(v->frames, enc, p));
      return mean_self_distance(embs);
    };
    const auto plain = train(ds, enc, tiny_train(150), apply_arm(loss, LossArm::Sdtw));
    const auto reg = train(ds, enc, tiny_train(150), apply_arm(loss, LossArm::Lav));
    CHECK(spread(plain.params) < spread(reg.params));
    CHECK(spread(plain.params) < spread(plain.initial_params));
  }
  SUBCASE("invalid configuration") {
    TrainConfig t = tiny_train(1);
    t.frames_per_video = 1;
    CHECK_THROWS_AS(train(ds, enc, t, loss), ParameterError);
    EncoderConfig wrong = enc;
    wrong.input_dim = 3;
    CHECK_THROWS_AS(train(ds, wrong, tiny_train(1), loss), ContractError);
  }
}
