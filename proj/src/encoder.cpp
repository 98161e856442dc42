#include "lav/encoder.hpp"

#include <cmath>
#include <sstream>

#include "lav/errors.hpp"
#include "lav/textio.hpp"

namespace lav {

namespace {

constexpr const char* kCheckpointTag = "lav-checkpoint";
constexpr int kCheckpointVersion = 1;

// Activations after each layer; acts[0] is the input.
struct ForwardTrace {
  std::vector<Matrix> acts;
};

ForwardTrace forward_trace(const Matrix& inputs, const EncoderParams& params) {
  ForwardTrace tr;
  tr.acts.reserve(params.layers.size() + 1);
  tr.acts.push_back(inputs);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (tr.acts.back().cols() != layer.weight.cols()) throw ContractError("encoder: input width does not match layer");
    Matrix z = tr.acts.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < params.layers.size()) z = z.array().tanh().matrix();
    tr.acts.push_back(std::move(z));
  }
  return tr;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1) throw ParameterError("encoder: input_dim must be >= 1");
  if (embed_dim < 1) throw ParameterError("encoder: embed_dim must be >= 1");
  if (context_frames < 0) throw ParameterError("encoder: context_frames must be >= 0");
  if (context_stride < 1) throw ParameterError("encoder: context_stride must be >= 1");
  for (Index h : hidden_dims)
    if (h < 1) throw ParameterError("encoder: hidden widths must be >= 1");
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  for (const auto& l : layers) z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return z;
}

Index EncoderParams::size() const {
  Index n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool EncoderParams::all_finite() const {
  for (const auto& l : layers)
    if (!lav::all_finite(l.weight) || !lav::all_finite(l.bias)) return false;
  return true;
}

Matrix stack_context(const Matrix& frames, Index k, Index stride) {
  const Index t = frames.rows(), d = frames.cols();
  if (t < 1) throw ContractError("stack_context: empty sequence");
  if (k < 0 || stride < 1) throw ParameterError("stack_context: need k >= 0 and stride >= 1");
  Matrix out(t, d * (k + 1));
  for (Index i = 0; i < t; ++i)
    for (Index c = 0; c <= k; ++c) out.block(i, c * d, 1, d) = frames.row(std::min(i + c * stride, t - 1));
  return out;
}

EncoderParams init_params(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderParams p;
  std::vector<Index> widths{cfg.stacked_dim()};
  widths.insert(widths.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  widths.push_back(cfg.embed_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index in = widths[l], out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    DenseLayer layer{Matrix(out, in), Vector(out)};
    for (Index i = 0; i < out; ++i)
      for (Index j = 0; j < in; ++j) layer.weight(i, j) = rng.uniform(-bound, bound);
    for (Index i = 0; i < out; ++i) layer.bias(i) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Matrix mlp_forward(const Matrix& inputs, const EncoderParams& params) {
  return std::move(forward_trace(inputs, params).acts.back());
}

EncoderParams mlp_backward(const Matrix& inputs, const EncoderParams& params, const Matrix& grad_out) {
  const ForwardTrace tr = forward_trace(inputs, params);
  if (grad_out.rows() != tr.acts.back().rows() || grad_out.cols() != tr.acts.back().cols())
    throw ContractError("mlp_backward: gradient shape does not match output");
  EncoderParams grads = params.zeros_like();
  Matrix delta = grad_out;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    grads.layers[l].weight = delta.transpose() * tr.acts[l];
    grads.layers[l].bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    delta = delta * params.layers[l].weight;
    // acts[l] = tanh(z) for hidden layers, so dtanh = 1 - acts^2.
    delta.array() *= 1.0 - tr.acts[l].array().square();
  }
  return grads;
}

Matrix encode(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params) {
  if (frames.cols() != cfg.input_dim) throw ContractError("encode: frame width does not match input_dim");
  return mlp_forward(stack_context(frames, cfg.context_frames, cfg.context_stride), params);
}

EncoderParams encode_backward(const Matrix& frames, const EncoderConfig& cfg, const EncoderParams& params,
                              const Matrix& grad_embeddings) {
  if (frames.cols() != cfg.input_dim) throw ContractError("encode_backward: frame width does not match input_dim");
  return mlp_backward(stack_context(frames, cfg.context_frames, cfg.context_stride), params, grad_embeddings);
}

Adam::Adam(const EncoderParams& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (!(cfg_.learning_rate >= 0) || !(cfg_.weight_decay >= 0) || !(cfg_.eps > 0) || !(cfg_.beta1 >= 0 && cfg_.beta1 < 1) ||
      !(cfg_.beta2 >= 0 && cfg_.beta2 < 1))
    throw ParameterError("Adam: invalid hyperparameters");
}

void Adam::step(EncoderParams& params, const EncoderParams& grads) {
  if (params.layers.size() != m_.layers.size() || grads.layers.size() != m_.layers.size())
    throw ContractError("Adam::step: parameter structure mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double decay = 1.0 - cfg_.learning_rate * cfg_.weight_decay;
  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (cfg_.weight_decay != 0.0) p *= decay;
    p.array() -= cfg_.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weight, grads.layers[l].weight, m_.layers[l].weight, v_.layers[l].weight);
    update(params.layers[l].bias, grads.layers[l].bias, m_.layers[l].bias, v_.layers[l].bias);
  }
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::ostringstream os;
  os << kCheckpointTag << ' ' << kCheckpointVersion << '\n';
  os << "input_dim " << ck.config.input_dim << '\n';
  os << "hidden_dims " << ck.config.hidden_dims.size();
  for (Index h : ck.config.hidden_dims) os << ' ' << h;
  os << '\n';
  os << "embed_dim " << ck.config.embed_dim << '\n';
  os << "context_frames " << ck.config.context_frames << '\n';
  os << "context_stride " << ck.config.context_stride << '\n';
  os << "activation tanh\n";
  os << "step " << ck.step << '\n';
  os << "rng " << ck.rng_state << '\n';
  os << "layers " << ck.params.layers.size() << '\n';
  for (std::size_t l = 0; l < ck.params.layers.size(); ++l) {
    const auto& layer = ck.params.layers[l];
    os << "layer " << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Index i = 0; i < layer.weight.rows(); ++i) {
      for (Index j = 0; j < layer.weight.cols(); ++j) os << (j ? " " : "") << textio::format_double(layer.weight(i, j));
      os << '\n';
    }
    for (Index i = 0; i < layer.bias.size(); ++i) os << (i ? " " : "") << textio::format_double(layer.bias(i));
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

Checkpoint parse_checkpoint(const std::string& text, const std::string& where) {
  std::vector<std::string_view> lines = textio::split(text, '\n');
  std::size_t ln = 0;
  auto fail = [&](const std::string& what) -> void { throw ParseError(where, ln, what); };
  auto next = [&]() -> std::vector<std::string_view> {
    if (ln >= lines.size()) fail("unexpected end of checkpoint");
    auto toks = textio::split(textio::trim(lines[ln++]), ' ');
    return toks;
  };
  auto int_field = [&](const char* key) -> std::int64_t {
    auto toks = next();
    std::int64_t v = 0;
    if (toks.size() != 2 || toks[0] != key || !textio::parse_int(toks[1], v)) fail(std::string("expected ") + key);
    return v;
  };

  Checkpoint ck;
  {
    auto toks = next();
    std::int64_t version = 0;
    if (toks.size() != 2 || toks[0] != kCheckpointTag || !textio::parse_int(toks[1], version))
      fail("not a checkpoint file");
    if (version != kCheckpointVersion) fail("unsupported checkpoint version " + std::to_string(version));
  }
  ck.config.input_dim = int_field("input_dim");
  {
    auto toks = next();
    std::int64_t count = 0;
    if (toks.size() < 2 || toks[0] != "hidden_dims" || !textio::parse_int(toks[1], count) ||
        static_cast<std::int64_t>(toks.size()) != count + 2)
      fail("expected hidden_dims");
    ck.config.hidden_dims.clear();
    for (std::int64_t i = 0; i < count; ++i) {
      std::int64_t h = 0;
      if (!textio::parse_int(toks[static_cast<std::size_t>(i) + 2], h)) fail("invalid hidden width");
      ck.config.hidden_dims.push_back(h);
    }
  }
  ck.config.embed_dim = int_field("embed_dim");
  ck.config.context_frames = int_field("context_frames");
  ck.config.context_stride = int_field("context_stride");
  {
    auto toks = next();
    if (toks.size() != 2 || toks[0] != "activation" || toks[1] != "tanh") fail("expected activation tanh");
  }
  ck.step = int_field("step");
  {
    if (ln >= lines.size()) fail("unexpected end of checkpoint");
    auto line = textio::trim(lines[ln++]);
    if (line.substr(0, 4) != "rng ") fail("expected rng state");
    ck.rng_state = std::string(line.substr(4));
  }
  try {
    ck.config.validate();
  } catch (const ParameterError& e) {
    fail(e.what());
  }
  const std::int64_t nlayers = int_field("layers");
  if (nlayers != static_cast<std::int64_t>(ck.config.hidden_dims.size()) + 1) fail("layer count does not match config");
  Index expected_in = ck.config.stacked_dim();
  for (std::int64_t l = 0; l < nlayers; ++l) {
    auto toks = next();
    std::int64_t idx = 0, rows = 0, cols = 0;
    if (toks.size() != 4 || toks[0] != "layer" || !textio::parse_int(toks[1], idx) || idx != l ||
        !textio::parse_int(toks[2], rows) || !textio::parse_int(toks[3], cols))
      fail("expected layer header");
    const Index expected_out = l + 1 < nlayers ? ck.config.hidden_dims[static_cast<std::size_t>(l)] : ck.config.embed_dim;
    if (rows != expected_out || cols != expected_in) fail("layer shape does not match config");
    DenseLayer layer{Matrix(rows, cols), Vector(rows)};
    for (Index i = 0; i < rows; ++i) {
      auto vals = next();
      if (static_cast<Index>(vals.size()) != cols) fail("wrong weight count");
      for (Index j = 0; j < cols; ++j)
        if (!textio::parse_double(vals[j], layer.weight(i, j))) fail("invalid weight");
    }
    auto vals = next();
    if (static_cast<Index>(vals.size()) != rows) fail("wrong bias count");
    for (Index i = 0; i < rows; ++i)
      if (!textio::parse_double(vals[i], layer.bias(i))) fail("invalid bias");
    ck.params.layers.push_back(std::move(layer));
    expected_in = rows;
  }
  {
    auto toks = next();
    if (toks.size() != 1 || toks[0] != "end") fail("missing end marker");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& p) {
  textio::write_file_atomic(p, serialize_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& p) {
  return parse_checkpoint(textio::read_file(p), p.string());
}

}  // namespace lav
