#include <iostream>

#include <CLI11.hpp>

#include "rangeseg/commands.hpp"

using namespace rangeseg;

int main(int argc, char** argv) {
  CLI::App app{"LiDAR range-view segmentation pipeline"};
  app.require_subcommand(1);

  CommonOptions common;
  bool multi_scan = false;
  std::uint64_t seed_value = 0;
  int workers_value = 0;

  const auto add_common = [&](CLI::App* cmd, bool with_protocol = true) {
    cmd->add_option("--config", common.config_path, "pipeline config file")
        ->required();
    cmd->add_option("--seed", seed_value, "override the config seed")
        ->each([&](const std::string&) { common.seed = seed_value; });
    cmd->add_option("--workers", workers_value, "worker pool size (0 = cores)")
        ->each([&](const std::string&) { common.workers = workers_value; });
    if (with_protocol) {
      auto* multi = cmd->add_flag("--multi-scan", multi_scan,
                                  "use the 25-class multi-scan protocol");
      cmd->add_flag("--single-scan", "use the 19-class single-scan protocol")
          ->excludes(multi);
    }
  };

  std::string sequence_dir, out_dir, labels_dir, pred_dir, gt_dir;
  std::string checkpoint_path, save_checkpoint_path, report_path, rri_path;
  int iterations = 5;
  bool perturb = false;

  CLI::App* project = app.add_subcommand(
      "project", "write range residual image dumps for a sequence");
  add_common(project, false);
  project->add_option("--seq", sequence_dir, "sequence directory")->required();
  project->add_option("--out", out_dir, "output directory")->required();

  CLI::App* infer = app.add_subcommand(
      "infer", "run the network and write per-point prediction labels");
  add_common(infer);
  infer->add_option("--seq", sequence_dir, "sequence directory")->required();
  infer->add_option("--out", out_dir, "output directory")->required();
  infer->add_option("--checkpoint", checkpoint_path,
                    "parameter checkpoint (seeded random weights when absent)");
  infer->add_option("--save-checkpoint", save_checkpoint_path,
                    "write the effective parameters to this path");

  CLI::App* postprocess = app.add_subcommand(
      "postprocess", "re-project per-point labels and refine them with k-NN");
  add_common(postprocess, false);
  postprocess->add_option("--seq", sequence_dir, "sequence directory")->required();
  postprocess->add_option("--labels", labels_dir, "per-point label directory")
      ->required();
  postprocess->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "score predictions with mIoU");
  add_common(eval);
  eval->add_option("--pred", pred_dir, "prediction label directory")->required();
  eval->add_option("--gt", gt_dir, "ground-truth label directory")->required();
  eval->add_option("--report", report_path, "write the key-value metric report");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "verify meta-kernel gradients against finite differences");
  add_common(gradcheck, false);
  gradcheck
      ->add_flag("--perturb-analytic", perturb,
                 "corrupt the analytic gradient (negative control)")
      ->group(""); // test hook, hidden from help

  CLI::App* bench = app.add_subcommand(
      "bench", "single-thread per-stage latency measurements");
  add_common(bench);
  bench->add_option("--seq", sequence_dir, "sequence directory")->required();
  bench->add_option("--iterations", iterations, "number of timed iterations");
  bench->add_option("--report", report_path, "write the key-value timing report");

  CLI::App* freqs = app.add_subcommand(
      "freqs", "compute per-class frequencies from a label corpus");
  add_common(freqs);
  freqs->add_option("--labels", labels_dir, "label corpus directory")->required();
  freqs->add_option("--out", out_dir, "output frequency table")->required();

  CLI::App* inspect =
      app.add_subcommand("inspect", "print range residual image dump statistics");
  inspect->add_option("file", rri_path, "range residual image dump")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  common.protocol = multi_scan ? Protocol::MultiScan : Protocol::SingleScan;

  try {
    if (project->parsed())
      return cmd_project(common, sequence_dir, out_dir, std::cout);
    if (infer->parsed())
      return cmd_infer(common, sequence_dir, out_dir, checkpoint_path,
                       save_checkpoint_path, std::cout);
    if (postprocess->parsed())
      return cmd_postprocess(common, sequence_dir, labels_dir, out_dir, std::cout);
    if (eval->parsed())
      return cmd_eval(common, pred_dir, gt_dir, report_path, std::cout);
    if (gradcheck->parsed())
      return cmd_gradcheck(common, perturb, std::cout);
    if (bench->parsed())
      return cmd_bench(common, sequence_dir, iterations, report_path, std::cout);
    if (freqs->parsed())
      return cmd_freqs(common, labels_dir, out_dir, std::cout);
    if (inspect->parsed())
      return cmd_inspect(rri_path, std::cout);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
