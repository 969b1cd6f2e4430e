#ifndef RANGESEG_EVALUATION_HPP
#define RANGESEG_EVALUATION_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rangeseg/kitti_io.hpp"

namespace rangeseg {

inline constexpr std::int32_t kIgnoreTrainId = -1;

// Raw label id <-> train id mapping for one evaluation protocol (19-class
// single scan or 25-class multi scan). Loaded from a plain-text config so
// protocol updates never require code changes.
struct ClassMapping {
  int num_classes = 0;
  std::vector<std::int32_t> raw_to_train; // dense table over the u16 id space
  std::vector<std::int32_t> train_to_raw; // canonical raw id per train id
  std::vector<std::int32_t> moving_classes;
  std::vector<std::string> names; // per train id, may be empty

  static ClassMapping load(const std::filesystem::path& path);
  std::string class_name(std::int32_t train_id) const;
};

std::vector<std::int32_t> remap_labels(const LabelArray& raw,
                                       const ClassMapping& mapping);

// Back to raw ids for submission files; ignore maps to raw id 0.
std::vector<std::uint16_t> unmap_labels(std::span<const std::int32_t> train_ids,
                                        const ClassMapping& mapping);

struct ConfusionMatrix {
  int n = 0;
  std::vector<std::uint64_t> counts; // n x n, counts[gt * n + pred]

  explicit ConfusionMatrix(int classes = 0)
      : n(classes), counts(static_cast<std::size_t>(classes) * classes, 0) {}

  std::uint64_t at(int gt, int pred) const {
    return counts[static_cast<std::size_t>(gt) * n + pred];
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

// counts[gt][pred] += 1 per point; ignore ground truth is skipped.
void accumulate_confusion(std::span<const std::int32_t> pred,
                          std::span<const std::int32_t> gt, ConfusionMatrix& m);

struct IouReport {
  std::vector<double> per_class;
  std::vector<bool> has_denominator; // false when TP + FP + FN == 0
  double mean = 0.0;
};

// IoU_c = TP / (TP + FP + FN). Zero-denominator classes are excluded from
// the mean by default (score_absent_zero folds them in as 0 instead).
IouReport miou(const ConfusionMatrix& m, bool score_absent_zero = false);

// Line-oriented report plus machine-readable key-value form (4 decimals).
std::string format_report(const IouReport& report, const ClassMapping& mapping);
std::string format_report_kv(const IouReport& report, const ClassMapping& mapping);

} // namespace rangeseg

#endif // RANGESEG_EVALUATION_HPP
