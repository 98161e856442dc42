#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lav/config.hpp"

namespace lav::cli {

namespace fs = std::filesystem;

/// Name of the resolved-config echo written into every output directory.
inline constexpr const char* kConfigEcho = "config.txt";

/// Output files are staged in a sibling directory and moved into place only
/// when the command succeeds. A non-empty destination is refused unless forced.
class StagedDir {
 public:
  StagedDir(fs::path dest, bool force);
  ~StagedDir();
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;

  const fs::path& path() const { return staging_; }
  void commit();

 private:
  fs::path dest_, staging_;
  bool force_;
  bool committed_ = false;
};

void cmd_gen(const RunConfig& cfg, const fs::path& out_dir, bool force = false);

/// Writes checkpoint.txt, loss.csv and config.txt into out_dir.
void cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir, bool force = false);

/// Writes report.json and config.txt into out_dir.
EvalReport cmd_eval(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset_dir,
                    const fs::path& out_dir, bool force = false);

struct AlignSummary {
  double kendall_tau = 0;
  double dtw = 0;
  double soft_dtw = 0;
  double mean_distance = 0;
};

/// Writes distance.csv, path.csv, heatmap.svg, summary.txt and config.txt into out_dir.
AlignSummary cmd_align(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& dataset_dir,
                       const std::string& video_a, const std::string& video_b, const fs::path& out_dir,
                       bool force = false);

/// Writes ap.csv and config.txt into out_dir.
std::vector<std::pair<int, double>> cmd_retrieve(const RunConfig& cfg, const fs::path& checkpoint,
                                                 const fs::path& dataset_dir, const fs::path& out_dir,
                                                 bool force = false);

/// Accepts a checkpoint file or a training output directory.
fs::path resolve_checkpoint(const fs::path& p);

std::string loss_log_csv(const std::vector<StepRecord>& history);
std::string distance_csv(const Matrix& d);
std::string heatmap_svg(const Matrix& d, const AlignmentPath& path, double scale_max);

}  // namespace lav::cli
