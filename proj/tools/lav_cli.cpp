// Command-line front end: gen, train, eval, align, retrieve.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "lav/commands.hpp"
#include "lav/errors.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool force = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "flat key = value config file");
  app->add_option("--seed", c.seed, "seed for every stochastic step (overrides config)");
  app->add_option("--out", c.out, "output directory")->required();
  app->add_option("--set", c.overrides, "config override key=value (repeatable)");
  app->add_flag("--force", c.force, "replace a non-empty output directory");
}

lav::RunConfig resolve(const Common& c) {
  lav::RunConfig cfg = c.config.empty() ? lav::RunConfig{} : lav::RunConfig::load(c.config);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw lav::ParameterError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed) cfg.set_seed(*c.seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal alignment representation learning toolkit"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, align_c, retr_c;
  std::string dataset, checkpoint, loss_arm, video_a, video_b;
  std::optional<int> steps;
  std::vector<double> fractions;
  std::vector<int> ks;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  add_common(gen, gen_c);

  auto* tr = app.add_subcommand("train", "train the encoder with one loss arm");
  add_common(tr, train_c);
  tr->add_option("--dataset", dataset, "dataset directory")->required();
  tr->add_option("--loss", loss_arm, "lav|sdtw|cidm|sfa|idm|sdtw+idm|sdtw+sfa");
  tr->add_option("--steps", steps, "optimizer steps");

  auto* ev = app.add_subcommand("eval", "evaluate a frozen encoder");
  add_common(ev, eval_c);
  ev->add_option("--checkpoint", checkpoint, "checkpoint file or training directory")->required();
  ev->add_option("--dataset", dataset, "dataset directory")->required();
  ev->add_option("--label-fraction", fractions, "labeled-video fractions for classification");
  ev->add_option("--k", ks, "retrieval K values");

  auto* al = app.add_subcommand("align", "distance matrix, DTW path and Kendall tau for two videos");
  add_common(al, align_c);
  al->add_option("--checkpoint", checkpoint, "checkpoint file or training directory")->required();
  al->add_option("--dataset", dataset, "dataset directory")->required();
  al->add_option("--video-a", video_a)->required();
  al->add_option("--video-b", video_b)->required();

  auto* re = app.add_subcommand("retrieve", "fine-grained frame retrieval AP@K");
  add_common(re, retr_c);
  re->add_option("--checkpoint", checkpoint, "checkpoint file or training directory")->required();
  re->add_option("--dataset", dataset, "dataset directory")->required();
  re->add_option("--k", ks, "retrieval K values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      lav::cli::cmd_gen(resolve(gen_c), gen_c.out, gen_c.force);
      std::cout << "dataset written to " << gen_c.out << "\n";
    } else if (tr->parsed()) {
      auto cfg = resolve(train_c);
      if (!loss_arm.empty()) cfg.set("loss.arm", loss_arm);
      if (steps) cfg.train.steps = *steps;
      lav::cli::cmd_train(cfg, dataset, train_c.out, train_c.force);
      std::cout << "trained " << cfg.train.steps << " steps (" << lav::to_string(cfg.arm) << "), output in "
                << train_c.out << "\n";
    } else if (ev->parsed()) {
      auto cfg = resolve(eval_c);
      if (!fractions.empty()) cfg.eval.label_fractions = fractions;
      if (!ks.empty()) cfg.eval.ks = ks;
      const auto rep = lav::cli::cmd_eval(cfg, checkpoint, dataset, eval_c.out, eval_c.force);
      std::cout << lav::report_to_json(rep);
    } else if (al->parsed()) {
      const auto s = lav::cli::cmd_align(resolve(align_c), checkpoint, dataset, video_a, video_b, align_c.out,
                                         align_c.force);
      std::cout << "kendall_tau " << s.kendall_tau << "\ndtw " << s.dtw << "\nsoft_dtw " << s.soft_dtw
                << "\nmean_distance " << s.mean_distance << "\n";
    } else if (re->parsed()) {
      auto cfg = resolve(retr_c);
      if (!ks.empty()) cfg.eval.ks = ks;
      const auto table = lav::cli::cmd_retrieve(cfg, checkpoint, dataset, retr_c.out, retr_c.force);
      std::cout << "K\tAP@K\n";
      for (const auto& [k, ap] : table) std::cout << k << "\t" << ap << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
