#ifndef RANGESEG_COMMANDS_HPP
#define RANGESEG_COMMANDS_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rangeseg/config.hpp"

namespace rangeseg {

// Exit-code contract shared by every subcommand:
// 0 success, 1 usage error, 2 data error, 3 check failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitCheckFailed = 3;

enum class Protocol { SingleScan, MultiScan };

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  Protocol protocol = Protocol::SingleScan;

  // Loads the config and applies the seed/worker overrides.
  PipelineConfig load_config() const;
};

// Scans of a SemanticKITTI-layout sequence directory, sorted by name.
struct SequenceScans {
  std::vector<std::filesystem::path> cloud_files;
  std::vector<std::filesystem::path> label_files; // empty when absent
  std::vector<Pose> poses;
  std::vector<std::string> stems;
};
SequenceScans list_sequence(const std::filesystem::path& dir, bool need_labels,
                            bool need_poses);

int cmd_project(const CommonOptions& common, const std::string& sequence_dir,
                const std::string& out_dir, std::ostream& log);

int cmd_infer(const CommonOptions& common, const std::string& sequence_dir,
              const std::string& out_dir, const std::string& checkpoint_path,
              const std::string& save_checkpoint_path, std::ostream& log);

int cmd_postprocess(const CommonOptions& common, const std::string& sequence_dir,
                    const std::string& labels_dir, const std::string& out_dir,
                    std::ostream& log);

int cmd_eval(const CommonOptions& common, const std::string& pred_dir,
             const std::string& gt_dir, const std::string& report_path,
             std::ostream& log);

// Seeded finite-difference verification of the meta-kernel gradients.
// perturb_analytic is a negative-control hook that corrupts the analytic
// gradient so the check must fail.
int cmd_gradcheck(const CommonOptions& common, bool perturb_analytic,
                  std::ostream& log);

int cmd_bench(const CommonOptions& common, const std::string& sequence_dir,
              int iterations, const std::string& report_path, std::ostream& log);

int cmd_freqs(const CommonOptions& common, const std::string& labels_dir,
              const std::string& out_path, std::ostream& log);

int cmd_inspect(const std::string& rri_path, std::ostream& log);

} // namespace rangeseg

#endif // RANGESEG_COMMANDS_HPP
