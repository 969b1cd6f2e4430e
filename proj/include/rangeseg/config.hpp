#ifndef RANGESEG_CONFIG_HPP
#define RANGESEG_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "rangeseg/losses.hpp"
#include "rangeseg/net_blocks.hpp"
#include "rangeseg/postproc.hpp"
#include "rangeseg/range_view.hpp"

namespace rangeseg {

// Effective pipeline configuration. Serialized as a plain-text key-value
// file with dotted section keys; dump-then-load round-trips exactly.
struct PipelineConfig {
  ProjectionConfig projection;
  int residual_count = 3;
  double residual_cap = 0.0; // <= 0: unclipped
  NormalizeConfig normalize;
  KnnConfig knn;
  LossWeights loss_weights;
  int theta0 = 3;
  std::string mapping_single; // paths resolved against the config file
  std::string mapping_multi;
  std::string freqs_path;
  NetConfig net; // num_classes follows the selected protocol
  std::uint64_t seed = 1337;
  int workers = 0; // 0: logical cores
  bool score_absent_zero = false;

  static PipelineConfig load(const std::filesystem::path& path);
  void dump(const std::filesystem::path& path) const;
  std::string dump_string() const;

  bool operator==(const PipelineConfig& other) const = default;
};

// Normalized per-class frequencies from a table of "<train_id> <frequency>"
// lines. Zero entries are floored at 1e-6 and the table renormalized so the
// strictly-positive invariant holds for corpora with absent classes.
ClassFrequencies load_class_frequencies(const std::filesystem::path& path,
                                        int num_classes);
void write_class_frequencies(const std::vector<double>& freqs,
                             const std::filesystem::path& path);

} // namespace rangeseg

#endif // RANGESEG_CONFIG_HPP
