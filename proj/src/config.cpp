#include "lav/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "lav/errors.hpp"
#include "lav/textio.hpp"

namespace lav {

namespace {

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>)
      out += shortest(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ParameterError("config key '" + key + "': invalid value '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  double d = 0;
  if (!textio::parse_double(v, d)) bad_value(key, v);
  return d;
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t i = 0;
  if (!textio::parse_int(v, i)) bad_value(key, v);
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v);
}

template <typename T>
std::vector<T> to_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  if (textio::trim(v).empty()) return out;
  for (auto tok : textio::split(v, ',')) {
    if constexpr (std::is_floating_point_v<T>)
      out.push_back(to_double(key, std::string(tok)));
    else
      out.push_back(static_cast<T>(to_int(key, std::string(tok))));
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  // Training and evaluation run on these unless overridden.
  train.steps = 500;
  set_seed(0);
}

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  gen.seed = s;
  train.seed = s;
  eval.seed = s;
}

LavConfig RunConfig::resolved_loss() const { return apply_arm(loss, arm); }

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v(textio::trim(raw));
  using Setter = std::function<void(RunConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"seed",
       [](RunConfig& c, const std::string& x) {
         std::uint64_t s = 0;
         if (!textio::parse_u64(x, s)) bad_value("seed", x);
         c.set_seed(s);
       }},
      {"gen.num_actions", [](RunConfig& c, const std::string& x) { c.gen.num_actions = static_cast<int>(to_int("gen.num_actions", x)); }},
      {"gen.videos_per_action",
       [](RunConfig& c, const std::string& x) { c.gen.videos_per_action = static_cast<int>(to_int("gen.videos_per_action", x)); }},
      {"gen.val_per_action",
       [](RunConfig& c, const std::string& x) { c.gen.val_per_action = static_cast<int>(to_int("gen.val_per_action", x)); }},
      {"gen.phases", [](RunConfig& c, const std::string& x) { c.gen.phases_per_action = static_cast<int>(to_int("gen.phases", x)); }},
      {"gen.t_min", [](RunConfig& c, const std::string& x) { c.gen.t_min = to_int("gen.t_min", x); }},
      {"gen.t_max", [](RunConfig& c, const std::string& x) { c.gen.t_max = to_int("gen.t_max", x); }},
      {"gen.feature_dim", [](RunConfig& c, const std::string& x) { c.gen.feature_dim = to_int("gen.feature_dim", x); }},
      {"gen.noise_std", [](RunConfig& c, const std::string& x) { c.gen.noise_std = to_double("gen.noise_std", x); }},
      {"gen.warp_strength", [](RunConfig& c, const std::string& x) { c.gen.warp_strength = to_double("gen.warp_strength", x); }},
      {"gen.mix_strength", [](RunConfig& c, const std::string& x) { c.gen.mix_strength = to_double("gen.mix_strength", x); }},
      {"gen.num_views", [](RunConfig& c, const std::string& x) { c.gen.num_views = static_cast<int>(to_int("gen.num_views", x)); }},
      {"encoder.hidden_dims",
       [](RunConfig& c, const std::string& x) { c.encoder.hidden_dims = to_list<Index>("encoder.hidden_dims", x); }},
      {"encoder.embed_dim", [](RunConfig& c, const std::string& x) { c.encoder.embed_dim = to_int("encoder.embed_dim", x); }},
      {"encoder.context_frames",
       [](RunConfig& c, const std::string& x) { c.encoder.context_frames = to_int("encoder.context_frames", x); }},
      {"encoder.context_stride",
       [](RunConfig& c, const std::string& x) { c.encoder.context_stride = to_int("encoder.context_stride", x); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& x) { c.train.learning_rate = to_double("train.learning_rate", x); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& x) { c.train.weight_decay = to_double("train.weight_decay", x); }},
      {"train.adam_beta1", [](RunConfig& c, const std::string& x) { c.train.adam_beta1 = to_double("train.adam_beta1", x); }},
      {"train.adam_beta2", [](RunConfig& c, const std::string& x) { c.train.adam_beta2 = to_double("train.adam_beta2", x); }},
      {"train.adam_eps", [](RunConfig& c, const std::string& x) { c.train.adam_eps = to_double("train.adam_eps", x); }},
      {"train.frames_per_video",
       [](RunConfig& c, const std::string& x) { c.train.frames_per_video = to_int("train.frames_per_video", x); }},
      {"train.batch_pairs", [](RunConfig& c, const std::string& x) { c.train.batch_pairs = static_cast<int>(to_int("train.batch_pairs", x)); }},
      {"train.steps", [](RunConfig& c, const std::string& x) { c.train.steps = static_cast<int>(to_int("train.steps", x)); }},
      {"train.gradient_check", [](RunConfig& c, const std::string& x) { c.train.gradient_check = to_bool("train.gradient_check", x); }},
      {"train.frame_time_gaps",
       [](RunConfig& c, const std::string& x) { c.train.frame_time_gaps = to_bool("train.frame_time_gaps", x); }},
      {"loss.arm", [](RunConfig& c, const std::string& x) { c.arm = parse_loss_arm(x); }},
      {"loss.gamma", [](RunConfig& c, const std::string& x) { c.loss.gamma = to_double("loss.gamma", x); }},
      {"loss.alpha", [](RunConfig& c, const std::string& x) { c.loss.alpha = to_double("loss.alpha", x); }},
      {"loss.sigma", [](RunConfig& c, const std::string& x) { c.loss.cidm.sigma = to_int("loss.sigma", x); }},
      {"loss.lambda", [](RunConfig& c, const std::string& x) { c.loss.cidm.lambda_margin = to_double("loss.lambda", x); }},
      {"loss.normalize", [](RunConfig& c, const std::string& x) { c.loss.sdtw.normalize = to_bool("loss.normalize", x); }},
      {"eval.label_fractions",
       [](RunConfig& c, const std::string& x) { c.eval.label_fractions = to_list<double>("eval.label_fractions", x); }},
      {"eval.k", [](RunConfig& c, const std::string& x) { c.eval.ks = to_list<int>("eval.k", x); }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ParameterError("unknown config key '" + key + "'");
  it->second(*this, v);
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv = {
      {"seed", std::to_string(seed)},
      {"gen.num_actions", std::to_string(gen.num_actions)},
      {"gen.videos_per_action", std::to_string(gen.videos_per_action)},
      {"gen.val_per_action", std::to_string(gen.val_per_action)},
      {"gen.phases", std::to_string(gen.phases_per_action)},
      {"gen.t_min", std::to_string(gen.t_min)},
      {"gen.t_max", std::to_string(gen.t_max)},
      {"gen.feature_dim", std::to_string(gen.feature_dim)},
      {"gen.noise_std", shortest(gen.noise_std)},
      {"gen.warp_strength", shortest(gen.warp_strength)},
      {"gen.mix_strength", shortest(gen.mix_strength)},
      {"gen.num_views", std::to_string(gen.num_views)},
      {"encoder.hidden_dims", join(encoder.hidden_dims)},
      {"encoder.embed_dim", std::to_string(encoder.embed_dim)},
      {"encoder.context_frames", std::to_string(encoder.context_frames)},
      {"encoder.context_stride", std::to_string(encoder.context_stride)},
      {"train.learning_rate", shortest(train.learning_rate)},
      {"train.weight_decay", shortest(train.weight_decay)},
      {"train.adam_beta1", shortest(train.adam_beta1)},
      {"train.adam_beta2", shortest(train.adam_beta2)},
      {"train.adam_eps", shortest(train.adam_eps)},
      {"train.frames_per_video", std::to_string(train.frames_per_video)},
      {"train.batch_pairs", std::to_string(train.batch_pairs)},
      {"train.steps", std::to_string(train.steps)},
      {"train.gradient_check", train.gradient_check ? "true" : "false"},
      {"train.frame_time_gaps", train.frame_time_gaps ? "true" : "false"},
      {"loss.arm", std::string(to_string(arm))},
      {"loss.gamma", shortest(loss.gamma)},
      {"loss.alpha", shortest(loss.alpha)},
      {"loss.sigma", std::to_string(loss.cidm.sigma)},
      {"loss.lambda", shortest(loss.cidm.lambda_margin)},
      {"loss.normalize", loss.sdtw.normalize ? "true" : "false"},
      {"eval.label_fractions", join(eval.label_fractions)},
      {"eval.k", join(eval.ks)},
  };
  return kv;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_kv()) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& where) {
  RunConfig cfg;
  std::size_t ln = 0;
  for (auto line : textio::split(text, '\n')) {
    ++ln;
    line = textio::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(where, ln, "expected key = value");
    const std::string key(textio::trim(line.substr(0, eq)));
    try {
      cfg.set(key, std::string(line.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParseError(where, ln, e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) { return parse(textio::read_file(path), path); }

}  // namespace lav
