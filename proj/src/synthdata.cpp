#include "lav/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lav/errors.hpp"
#include "lav/textio.hpp"

namespace lav {

namespace {

constexpr int kHarmonics = 3;
constexpr int kMaxWarpTries = 64;
constexpr const char* kManifestName = "manifest.txt";
constexpr const char* kFormatTag = "lav-dataset-1";

// Smooth map from latent progress s in [0, 1] to feature space, shared by
// every video of one action.
struct ActionCurve {
  Matrix amp;     // d x H
  Matrix phase;   // d x H
  Vector trend;   // d
  std::vector<double> boundaries;  // P - 1 interior phase boundaries in (0, 1)

  Vector operator()(double s) const {
    Vector f = trend * (2.0 * s - 1.0);
    for (Index c = 0; c < amp.rows(); ++c)
      for (Index h = 0; h < amp.cols(); ++h)
        f(c) += amp(c, h) * std::sin(M_PI * static_cast<double>(h + 1) * s + phase(c, h));
    return f;
  }

  int phase_of(double s) const {
    int k = 0;
    while (k < static_cast<int>(boundaries.size()) && s >= boundaries[k]) ++k;
    return k;
  }
};

ActionCurve make_curve(const GenConfig& cfg, Rng& rng) {
  const Index d = cfg.feature_dim;
  ActionCurve c;
  c.amp.resize(d, kHarmonics);
  c.phase.resize(d, kHarmonics);
  c.trend.resize(d);
  for (Index i = 0; i < d; ++i) {
    c.trend(i) = rng.normal();
    for (Index h = 0; h < kHarmonics; ++h) {
      c.amp(i, h) = rng.normal() / static_cast<double>(h + 1);
      c.phase(i, h) = rng.uniform(0.0, 2.0 * M_PI);
    }
  }
  const int p = cfg.phases_per_action;
  for (int k = 1; k < p; ++k) c.boundaries.push_back((k + rng.uniform(-0.25, 0.25)) / p);
  return c;
}

// Monotone map from normalized frame time to latent progress with exact
// endpoints 0 and 1: the normalized integral of a positive rate.
std::vector<double> make_warp(Index t, double strength, Rng& rng) {
  const double a1 = 0.5 * rng.normal(), a2 = 0.5 * rng.normal();
  const double q1 = rng.uniform(0.0, 2.0 * M_PI), q2 = rng.uniform(0.0, 2.0 * M_PI);
  auto rate = [&](double u) {
    return std::exp(strength * (a1 * std::sin(2.0 * M_PI * u + q1) + a2 * std::sin(4.0 * M_PI * u + q2)));
  };
  std::vector<double> s(static_cast<std::size_t>(t), 0.0);
  if (t == 1) return s;
  const double du = 1.0 / static_cast<double>(t - 1);
  for (Index i = 1; i < t; ++i) {
    const double u0 = du * static_cast<double>(i - 1), u1 = du * static_cast<double>(i);
    s[i] = s[i - 1] + 0.5 * du * (rate(u0) + rate(u1));
  }
  const double total = s.back();
  for (auto& v : s) v /= total;
  s.front() = 0.0;
  s.back() = 1.0;
  return s;
}

// Orthogonal matrix near the identity via the Cayley transform of a random
// skew-symmetric matrix.
Matrix make_mix(Index d, double strength, Rng& rng) {
  Matrix k = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = i + 1; j < d; ++j) {
      k(i, j) = strength * rng.normal() / std::sqrt(static_cast<double>(d));
      k(j, i) = -k(i, j);
    }
  const Matrix id = Matrix::Identity(d, d);
  return (id - k).partialPivLu().solve(id + k);
}

std::string video_id_for(int action, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "a%d_v%02d", action, index);
  return buf;
}

[[noreturn]] void fail(const std::string& where, std::size_t line, const std::string& what) {
  throw ParseError(where, line, what);
}

}  // namespace

void GenConfig::validate() const {
  if (num_actions < 1) throw ParameterError("gen: num_actions must be >= 1");
  if (videos_per_action < 1) throw ParameterError("gen: videos_per_action must be >= 1");
  if (val_per_action < 0 || val_per_action >= videos_per_action)
    throw ParameterError("gen: val_per_action must be in [0, videos_per_action)");
  if (phases_per_action < 2) throw ParameterError("gen: phases_per_action must be >= 2");
  if (t_min < 2 * static_cast<Index>(phases_per_action)) throw ParameterError("gen: t_min must be >= 2 * phases");
  if (t_max < t_min) throw ParameterError("gen: t_max must be >= t_min");
  if (feature_dim < 1) throw ParameterError("gen: feature_dim must be >= 1");
  if (!(noise_std >= 0)) throw ParameterError("gen: noise_std must be >= 0");
  if (!(warp_strength >= 0)) throw ParameterError("gen: warp_strength must be >= 0");
  if (!(mix_strength >= 0)) throw ParameterError("gen: mix_strength must be >= 0");
  if (num_views < 0) throw ParameterError("gen: num_views must be >= 0");
}

std::map<std::string, std::string> GenConfig::to_kv() const {
  return {
      {"gen.num_actions", std::to_string(num_actions)},
      {"gen.videos_per_action", std::to_string(videos_per_action)},
      {"gen.val_per_action", std::to_string(val_per_action)},
      {"gen.phases", std::to_string(phases_per_action)},
      {"gen.t_min", std::to_string(t_min)},
      {"gen.t_max", std::to_string(t_max)},
      {"gen.feature_dim", std::to_string(feature_dim)},
      {"gen.noise_std", textio::format_double(noise_std)},
      {"gen.warp_strength", textio::format_double(warp_strength)},
      {"gen.mix_strength", textio::format_double(mix_strength)},
      {"gen.num_views", std::to_string(num_views)},
      {"gen.seed", std::to_string(seed)},
  };
}

std::vector<const SyntheticVideo*> Dataset::split(Split s) const {
  std::vector<const SyntheticVideo*> out;
  for (const auto& v : videos)
    if (v.split == s) out.push_back(&v);
  return out;
}

const SyntheticVideo& Dataset::find(const std::string& video_id) const {
  for (const auto& v : videos)
    if (v.video_id == video_id) return v;
  throw ParameterError("no video '" + video_id + "' in dataset");
}

std::vector<int> Dataset::action_ids() const {
  std::vector<int> ids;
  for (const auto& v : videos)
    if (std::find(ids.begin(), ids.end(), v.action_id) == ids.end()) ids.push_back(v.action_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Dataset ds;
  ds.feature_dim = cfg.feature_dim;
  ds.meta = cfg.to_kv();
  const Index d = cfg.feature_dim;
  std::vector<Matrix> views;
  for (int k = 0; k < cfg.num_views; ++k) views.push_back(make_mix(d, cfg.mix_strength, rng));

  for (int a = 0; a < cfg.num_actions; ++a) {
    const ActionCurve curve = make_curve(cfg, rng);
    for (int k = 0; k < cfg.videos_per_action; ++k) {
      SyntheticVideo v;
      v.video_id = video_id_for(a, k);
      v.action_id = a;
      v.num_phases = cfg.phases_per_action;
      v.split = k >= cfg.videos_per_action - cfg.val_per_action ? Split::Validation : Split::Train;
      const Index t = rng.uniform_int(cfg.t_min, cfg.t_max);

      // Re-draw the warp until every phase is visited by at least one frame.
      std::vector<double> s;
      std::vector<int> labels(static_cast<std::size_t>(t));
      bool ok = false;
      for (int attempt = 0; attempt < kMaxWarpTries && !ok; ++attempt) {
        s = make_warp(t, attempt + 1 < kMaxWarpTries ? cfg.warp_strength : 0.0, rng);
        std::vector<bool> seen(static_cast<std::size_t>(cfg.phases_per_action), false);
        for (Index i = 0; i < t; ++i) {
          labels[i] = curve.phase_of(s[i]);
          seen[labels[i]] = true;
        }
        ok = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
      }
      if (!ok) throw ParameterError("gen: frame count too small to visit every phase");

      const Matrix mix = views.empty() ? make_mix(d, cfg.mix_strength, rng)
                                       : views[static_cast<std::size_t>(rng.uniform_int(0, cfg.num_views - 1))];
      v.frames.resize(t, d);
      for (Index i = 0; i < t; ++i) {
        Vector f = mix * curve(s[i]);
        for (Index c = 0; c < d; ++c) f(c) += cfg.noise_std > 0 ? rng.normal(0.0, cfg.noise_std) : 0.0;
        v.frames.row(i) = f.transpose();
      }
      v.phase_labels = labels;
      v.progression = s;
      for (Index i = 1; i < t; ++i)
        if (labels[i] != labels[i - 1]) v.key_events.push_back(i);
      validate_video(v);
      ds.videos.push_back(std::move(v));
    }
  }
  return ds;
}

void validate_video(const SyntheticVideo& v) {
  const Index t = v.length();
  auto bad = [&](const std::string& what) { throw ContractError("video " + v.video_id + ": " + what); };
  if (t < 1) bad("no frames");
  if (static_cast<Index>(v.phase_labels.size()) != t || static_cast<Index>(v.progression.size()) != t)
    bad("label/progression length mismatch");
  if (v.num_phases < 2) bad("fewer than 2 phases");
  std::size_t next_event = 0;
  for (Index i = 0; i < t; ++i) {
    if (v.phase_labels[i] < 0 || v.phase_labels[i] >= v.num_phases) bad("phase label out of range");
    if (v.progression[i] < 0.0 || v.progression[i] > 1.0) bad("progression outside [0, 1]");
    if (i == 0) continue;
    if (v.progression[i] < v.progression[i - 1]) bad("progression decreases");
    const bool is_event = next_event < v.key_events.size() && v.key_events[next_event] == i;
    if ((v.phase_labels[i] != v.phase_labels[i - 1]) != is_event) bad("label change not at a key event");
    if (is_event) ++next_event;
  }
  if (next_event != v.key_events.size()) bad("key events not strictly increasing within range");
}

std::string serialize_video(const SyntheticVideo& v) {
  std::string out;
  out += v.video_id + "," + std::to_string(v.action_id) + "," + std::to_string(v.length()) + "," +
         std::to_string(v.frames.cols()) + "," + std::to_string(v.num_phases) + "\n";
  for (std::size_t i = 0; i < v.key_events.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v.key_events[i]);
  }
  out += "\n";
  for (Index i = 0; i < v.length(); ++i) {
    out += std::to_string(i) + "," + std::to_string(v.phase_labels[i]) + "," + textio::format_double(v.progression[i]);
    for (Index c = 0; c < v.frames.cols(); ++c) out += "," + textio::format_double(v.frames(i, c));
    out += "\n";
  }
  return out;
}

SyntheticVideo parse_video(const std::string& text, const std::string& where) {
  if (text.empty() || text.back() != '\n') fail(where, 0, "truncated file (missing final newline)");
  std::vector<std::string_view> lines = textio::split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.size() < 2) fail(where, lines.size() + 1, "missing header or key-event line");

  auto header = textio::split(lines[0], ',');
  if (header.size() != 5) fail(where, 1, "header must be video_id,action_id,T,d_in,P");
  SyntheticVideo v;
  v.video_id = std::string(textio::trim(header[0]));
  std::int64_t action = 0, t = 0, d = 0, p = 0;
  if (v.video_id.empty() || !textio::parse_int(header[1], action) || !textio::parse_int(header[2], t) ||
      !textio::parse_int(header[3], d) || !textio::parse_int(header[4], p) || t < 1 || d < 1 || p < 2)
    fail(where, 1, "invalid header values");
  v.action_id = static_cast<int>(action);
  v.num_phases = static_cast<int>(p);

  if (!textio::trim(lines[1]).empty()) {
    for (auto tok : textio::split(lines[1], ',')) {
      std::int64_t e = 0;
      if (!textio::parse_int(tok, e)) fail(where, 2, "invalid key-event index");
      v.key_events.push_back(e);
    }
  }
  if (static_cast<std::int64_t>(lines.size()) != t + 2)
    fail(where, lines.size() + 1, "expected " + std::to_string(t) + " frame lines, found " +
                                      std::to_string(lines.size() - 2));

  v.frames.resize(t, d);
  v.phase_labels.resize(static_cast<std::size_t>(t));
  v.progression.resize(static_cast<std::size_t>(t));
  for (std::int64_t i = 0; i < t; ++i) {
    const std::size_t ln = static_cast<std::size_t>(i) + 3;
    auto cols = textio::split(lines[static_cast<std::size_t>(i) + 2], ',');
    if (static_cast<std::int64_t>(cols.size()) != d + 3) fail(where, ln, "wrong column count");
    std::int64_t idx = 0, label = 0;
    if (!textio::parse_int(cols[0], idx) || idx != i) fail(where, ln, "frame index out of sequence");
    if (!textio::parse_int(cols[1], label)) fail(where, ln, "invalid phase label");
    v.phase_labels[i] = static_cast<int>(label);
    if (!textio::parse_double(cols[2], v.progression[i])) fail(where, ln, "invalid progression");
    for (std::int64_t c = 0; c < d; ++c)
      if (!textio::parse_double(cols[c + 3], v.frames(i, c))) fail(where, ln, "invalid feature value");
  }
  try {
    validate_video(v);
  } catch (const ContractError& e) {
    fail(where, 0, e.what());
  }
  return v;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream man;
  man << "format = " << kFormatTag << "\n";
  man << "name = " << ds.name << "\n";
  man << "feature_dim = " << ds.feature_dim << "\n";
  const auto actions = ds.action_ids();
  man << "actions = ";
  for (std::size_t i = 0; i < actions.size(); ++i) man << (i ? "," : "") << actions[i];
  man << "\n";
  for (const auto& [k, val] : ds.meta) man << k << " = " << val << "\n";
  man << "videos = " << ds.videos.size() << "\n";
  for (const auto& v : ds.videos) {
    textio::write_file_atomic(dir / (v.video_id + ".csv"), serialize_video(v));
    man << "video = " << v.video_id << "," << (v.split == Split::Train ? "train" : "val") << "\n";
  }
  man << "end\n";
  textio::write_file_atomic(dir / kManifestName, man.str());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto man_path = dir / kManifestName;
  const std::string where = man_path.string();
  std::string text;
  try {
    text = textio::read_file(man_path);
  } catch (const std::exception& e) {
    fail(where, 0, e.what());
  }
  Dataset ds;
  std::vector<std::pair<std::string, Split>> entries;
  std::int64_t declared = -1;
  bool format_ok = false, ended = false;
  std::size_t ln = 0;
  for (auto line : textio::split(text, '\n')) {
    ++ln;
    line = textio::trim(line);
    if (line.empty() || line.front() == '#') continue;
    if (ended) fail(where, ln, "content after end marker");
    if (line == "end") {
      ended = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(where, ln, "expected key = value");
    const std::string key(textio::trim(line.substr(0, eq)));
    const std::string val(textio::trim(line.substr(eq + 1)));
    if (key == "format") {
      if (val != kFormatTag) fail(where, ln, "unsupported format '" + val + "'");
      format_ok = true;
    } else if (key == "name") {
      ds.name = val;
    } else if (key == "feature_dim") {
      std::int64_t d = 0;
      if (!textio::parse_int(val, d) || d < 0) fail(where, ln, "invalid feature_dim");
      ds.feature_dim = d;
    } else if (key == "videos") {
      if (!textio::parse_int(val, declared) || declared < 0) fail(where, ln, "invalid video count");
    } else if (key == "video") {
      auto parts = textio::split(val, ',');
      if (parts.size() != 2) fail(where, ln, "video entry must be id,split");
      const auto sp = textio::trim(parts[1]);
      if (sp != "train" && sp != "val") fail(where, ln, "split must be train or val");
      entries.emplace_back(std::string(textio::trim(parts[0])), sp == "train" ? Split::Train : Split::Validation);
    } else if (key == "actions") {
      continue;
    } else {
      ds.meta[key] = val;
    }
  }
  if (!format_ok) fail(where, 1, "missing format line");
  if (!ended) fail(where, ln, "truncated manifest (no end marker)");
  if (declared != static_cast<std::int64_t>(entries.size()))
    fail(where, ln, "video count does not match entries");

  for (const auto& [id, sp] : entries) {
    const auto vpath = dir / (id + ".csv");
    std::string vtext;
    try {
      vtext = textio::read_file(vpath);
    } catch (const std::exception& e) {
      fail(vpath.string(), 0, e.what());
    }
    SyntheticVideo v = parse_video(vtext, vpath.string());
    if (v.video_id != id) fail(vpath.string(), 1, "video id does not match manifest");
    if (v.frames.cols() != ds.feature_dim) fail(vpath.string(), 1, "feature dimension does not match manifest");
    v.split = sp;
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

}  // namespace lav
