#ifndef RANGESEG_SYNTH_HPP
#define RANGESEG_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rangeseg/kitti_io.hpp"

namespace rangeseg {
namespace synth {

// Deterministic 4-scan sequence (~200 points per scan) with a translating
// sensor and one moving object, written in the SemanticKITTI directory
// layout (velodyne/, labels/, poses.txt, calib.txt). Output bytes are fully
// reproducible, so the bundled copy under data/ can be regenerated and
// compared at any time.
void write_mini_sequence(const std::filesystem::path& dir);

// Scan-local clouds and LiDAR-frame poses of the same sequence, for tests
// that want the geometry without touching the filesystem.
struct MiniSequence {
  std::vector<PointCloud> clouds;
  std::vector<std::vector<std::uint16_t>> semantic;
  std::vector<Pose> poses; // LiDAR frame, scan -> world of scan 0
};
MiniSequence make_mini_sequence();

// Dense LiDAR-like scan with roughly rows x cols points, for throughput
// benchmarks at the 64 x 2048 scale.
PointCloud make_dense_scan(int rows, int cols, std::uint64_t seed);

// Sequence of dense scans plus poses/labels in the same layout as the mini
// sequence.
void write_dense_sequence(const std::filesystem::path& dir, int scans, int rows,
                          int cols, std::uint64_t seed);

} // namespace synth
} // namespace rangeseg

#endif // RANGESEG_SYNTH_HPP
