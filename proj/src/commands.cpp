#include "lav/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lav/alignment.hpp"
#include "lav/errors.hpp"
#include "lav/textio.hpp"

namespace lav::cli {

namespace {

// Heatmap gray levels span [0, kHeatmapMax]; squared distances between unit
// vectors never exceed 4.
constexpr double kHeatmapMax = 4.0;

void write(const fs::path& p, const std::string& s) { textio::write_file_atomic(p, s); }

Checkpoint load_ck(const fs::path& p) { return load_checkpoint(resolve_checkpoint(p)); }

}  // namespace

StagedDir::StagedDir(fs::path dest, bool force) : dest_(std::move(dest)), force_(force) {
  if (fs::exists(dest_)) {
    if (!fs::is_directory(dest_)) throw ParameterError("output path exists and is not a directory: " + dest_.string());
    if (!fs::is_empty(dest_) && !force_)
      throw ParameterError("output directory is not empty (use --force): " + dest_.string());
  }
  staging_ = dest_;
  staging_ += ".staging";
  fs::remove_all(staging_);
  fs::create_directories(staging_);
}

StagedDir::~StagedDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

void StagedDir::commit() {
  if (fs::exists(dest_)) fs::remove_all(dest_);
  if (dest_.has_parent_path()) fs::create_directories(dest_.parent_path());
  fs::rename(staging_, dest_);
  committed_ = true;
}

fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::is_directory(p)) return p / "checkpoint.txt";
  return p;
}

void cmd_gen(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  const Dataset ds = generate(cfg.gen);
  StagedDir out(out_dir, force);
  write_dataset(ds, out.path());
  write(out.path() / kConfigEcho, cfg.to_text());
  out.commit();
}

std::string loss_log_csv(const std::vector<StepRecord>& history) {
  std::string s = "step,total,alignment,reg_x,reg_y\n";
  for (const auto& r : history)
    s += std::to_string(r.step) + "," + textio::format_double(r.total) + "," + textio::format_double(r.alignment) +
         "," + textio::format_double(r.reg_x) + "," + textio::format_double(r.reg_y) + "\n";
  return s;
}

void cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir, bool force) {
  const Dataset ds = read_dataset(dataset_dir);
  EncoderConfig enc = cfg.encoder;
  enc.input_dim = ds.feature_dim;
  StagedDir out(out_dir, force);
  const TrainResult res = train(ds, enc, cfg.train, cfg.resolved_loss());
  Checkpoint ck{enc, res.params, res.rng_state, static_cast<std::int64_t>(res.history.size())};
  save_checkpoint(ck, out.path() / "checkpoint.txt");
  write(out.path() / "loss.csv", loss_log_csv(res.history));
  write(out.path() / kConfigEcho, cfg.to_text());
  out.commit();
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset_dir,
                    const fs::path& out_dir, bool force) {
  const Checkpoint ck = load_ck(checkpoint);
  const Dataset ds = read_dataset(dataset_dir);
  if (ck.config.input_dim != ds.feature_dim) throw ContractError("checkpoint input_dim does not match dataset");
  StagedDir out(out_dir, force);
  EvalReport rep = evaluate(ds, ck.config, ck.params, cfg.eval);
  write(out.path() / "report.json", report_to_json(rep));
  write(out.path() / kConfigEcho, cfg.to_text());
  out.commit();
  return rep;
}

std::string distance_csv(const Matrix& d) {
  std::string s;
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = 0; j < d.cols(); ++j) {
      if (j) s += ",";
      s += textio::format_double(d(i, j));
    }
    s += "\n";
  }
  return s;
}

std::string heatmap_svg(const Matrix& d, const AlignmentPath& path, double scale_max) {
  constexpr int cell = 6;
  constexpr int margin = 20;
  const Index n = d.rows(), m = d.cols();
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << m * cell + 2 * margin << "\" height=\""
     << n * cell + 2 * margin << "\">\n";
  os << "<g id=\"heatmap\" transform=\"translate(" << margin << "," << margin << ")\">\n";
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      const double t = std::clamp(d(i, j) / scale_max, 0.0, 1.0);
      const int g = static_cast<int>(std::lround(255.0 * t));
      os << "<rect x=\"" << j * cell << "\" y=\"" << i * cell << "\" width=\"" << cell << "\" height=\"" << cell
         << "\" fill=\"rgb(" << g << "," << g << "," << g << ")\"/>\n";
    }
  }
  os << "</g>\n";
  os << "<polyline id=\"path\" transform=\"translate(" << margin << "," << margin
     << ")\" fill=\"none\" stroke=\"red\" stroke-width=\"1.5\" points=\"";
  for (std::size_t k = 0; k < path.size(); ++k)
    os << (k ? " " : "") << path[k].j * cell + cell / 2 << "," << path[k].i * cell + cell / 2;
  os << "\"/>\n";
  os << "<text x=\"" << margin << "\" y=\"" << margin - 6 << "\" font-size=\"10\">rows: A frames, cols: B frames, black=0 white="
     << scale_max << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

AlignSummary cmd_align(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset_dir,
                       const std::string& video_a, const std::string& video_b, const fs::path& out_dir, bool force) {
  const Checkpoint ck = load_ck(checkpoint);
  const Dataset ds = read_dataset(dataset_dir);
  const Matrix ea = embed_normalized(ds.find(video_a).frames, ck.config, ck.params);
  const Matrix eb = embed_normalized(ds.find(video_b).frames, ck.config, ck.params);
  const Matrix d = pairwise_sq_dist(ea, eb);
  const auto hard = dtw(d);

  AlignSummary sum;
  sum.kendall_tau = kendall_tau(ea, eb);
  sum.dtw = hard.value;
  sum.soft_dtw = soft_dtw(d, cfg.loss.gamma).value;
  sum.mean_distance = d.mean();

  StagedDir out(out_dir, force);
  write(out.path() / "distance.csv", distance_csv(d));
  std::string path_csv = "i,j\n";
  for (const auto& s : *hard.path) path_csv += std::to_string(s.i) + "," + std::to_string(s.j) + "\n";
  write(out.path() / "path.csv", path_csv);
  write(out.path() / "heatmap.svg", heatmap_svg(d, *hard.path, kHeatmapMax));
  std::string summary = "video_a = " + video_a + "\nvideo_b = " + video_b +
                        "\nkendall_tau = " + textio::format_double(sum.kendall_tau) +
                        "\ndtw = " + textio::format_double(sum.dtw) +
                        "\nsoft_dtw = " + textio::format_double(sum.soft_dtw) +
                        "\nmean_distance = " + textio::format_double(sum.mean_distance) + "\n";
  write(out.path() / "summary.txt", summary);
  write(out.path() / kConfigEcho, cfg.to_text());
  out.commit();
  return sum;
}

std::vector<std::pair<int, double>> cmd_retrieve(const RunConfig& cfg, const fs::path& checkpoint,
                                                 const fs::path& dataset_dir, const fs::path& out_dir, bool force) {
  const Checkpoint ck = load_ck(checkpoint);
  const Dataset ds = read_dataset(dataset_dir);
  auto table = evaluate_retrieval(ds, ck.config, ck.params, cfg.eval.ks);
  StagedDir out(out_dir, force);
  std::string csv = "k,ap\n";
  for (const auto& [k, ap] : table) csv += std::to_string(k) + "," + textio::format_double(ap) + "\n";
  write(out.path() / "ap.csv", csv);
  write(out.path() / kConfigEcho, cfg.to_text());
  out.commit();
  return table;
}

}  // namespace lav::cli
