#include "rangeseg/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <functional>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "rangeseg/checkpoint.hpp"
#include "rangeseg/evaluation.hpp"
#include "rangeseg/losses.hpp"
#include "rangeseg/postproc.hpp"
#include "rangeseg/synth.hpp"

namespace rangeseg {

namespace fs = std::filesystem;

PipelineConfig CommonOptions::load_config() const {
  if (config_path.empty())
    throw ConfigError("no --config given");
  PipelineConfig cfg = PipelineConfig::load(config_path);
  if (seed)
    cfg.seed = *seed;
  if (workers)
    cfg.workers = *workers;
  return cfg;
}

namespace {

std::vector<fs::path> sorted_files(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir))
    throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

// Bounded worker pool over scan indices; exceptions from workers are
// rethrown on the caller thread.
void parallel_scans(std::size_t count, int workers,
                    const std::function<void(std::size_t)>& fn) {
  int n = workers > 0 ? workers
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1)
    n = 1;
  n = std::min<int>(n, static_cast<int>(count));
  if (n <= 1) {
    for (std::size_t i = 0; i < count; ++i)
      fn(i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int t = 0; t < n; ++t) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count)
          return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error)
            error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool)
    t.join();
  if (error)
    std::rethrow_exception(error);
}

const ClassMapping load_mapping(const PipelineConfig& cfg, Protocol protocol) {
  const std::string& path = protocol == Protocol::SingleScan ? cfg.mapping_single
                                                             : cfg.mapping_multi;
  if (path.empty())
    throw ConfigError(std::string("config does not define mapping.") +
                      (protocol == Protocol::SingleScan ? "single" : "multi"));
  return ClassMapping::load(path);
}

// Up to residual_count predecessors of scan i, most recent first, paired
// with the transform into scan i's frame.
std::vector<std::pair<PointCloud, Pose>>
gather_predecessors(const SequenceScans& seq, std::size_t i, int residual_count) {
  std::vector<std::pair<PointCloud, Pose>> prev;
  for (int j = 1; j <= residual_count && i >= static_cast<std::size_t>(j); ++j) {
    const std::size_t k = i - static_cast<std::size_t>(j);
    prev.emplace_back(read_point_cloud(seq.cloud_files[k]),
                      relative_transform(seq.poses[k], seq.poses[i]));
  }
  return prev;
}

} // namespace

SequenceScans list_sequence(const fs::path& dir, bool need_labels, bool need_poses) {
  SequenceScans seq;
  seq.cloud_files = sorted_files(dir / "velodyne", ".bin");
  if (seq.cloud_files.empty())
    throw DataError("no scans found under " + (dir / "velodyne").string());
  for (const fs::path& f : seq.cloud_files)
    seq.stems.push_back(f.stem().string());

  if (need_poses) {
    seq.poses = read_poses(dir / "poses.txt", dir / "calib.txt");
    if (seq.poses.size() < seq.cloud_files.size())
      throw DataError("poses.txt has " + std::to_string(seq.poses.size()) +
                      " entries for " + std::to_string(seq.cloud_files.size()) +
                      " scans");
  }
  if (need_labels) {
    for (const std::string& stem : seq.stems) {
      const fs::path label = dir / "labels" / (stem + ".label");
      if (!fs::exists(label))
        throw DataError("missing label file: " + label.string());
      seq.label_files.push_back(label);
    }
  }
  return seq;
}

int cmd_project(const CommonOptions& common, const std::string& sequence_dir,
                const std::string& out_dir, std::ostream& log) {
  const PipelineConfig cfg = common.load_config();
  const SequenceScans seq = list_sequence(sequence_dir, false, true);
  fs::create_directories(out_dir);

  parallel_scans(seq.cloud_files.size(), cfg.workers, [&](std::size_t i) {
    const PointCloud current = read_point_cloud(seq.cloud_files[i]);
    const auto prev = gather_predecessors(seq, i, cfg.residual_count);
    const auto [rri, map] =
        assemble_residual_image(current, prev, cfg.projection, cfg.residual_cap);
    write_rri(rri, fs::path(out_dir) / (seq.stems[i] + ".rri"));
  });

  log << "projected " << seq.cloud_files.size() << " scan(s) to " << out_dir << "\n";
  return kExitOk;
}

int cmd_infer(const CommonOptions& common, const std::string& sequence_dir,
              const std::string& out_dir, const std::string& checkpoint_path,
              const std::string& save_checkpoint_path, std::ostream& log) {
  PipelineConfig cfg = common.load_config();
  const ClassMapping mapping = load_mapping(cfg, common.protocol);
  cfg.net.num_classes = mapping.num_classes;

  const NetworkParams params =
      checkpoint_path.empty() ? init_network_params(cfg.net, cfg.seed)
                              : load_checkpoint(checkpoint_path, cfg.net);
  if (!save_checkpoint_path.empty()) {
    save_checkpoint(params, save_checkpoint_path);
    log << "checkpoint written to " << save_checkpoint_path << "\n";
  }

  const SequenceScans seq = list_sequence(sequence_dir, false, true);
  fs::create_directories(out_dir);

  parallel_scans(seq.cloud_files.size(), cfg.workers, [&](std::size_t i) {
    const PointCloud current = read_point_cloud(seq.cloud_files[i]);
    const auto prev = gather_predecessors(seq, i, cfg.residual_count);
    const auto [rri, map] =
        assemble_residual_image(current, prev, cfg.projection, cfg.residual_cap);

    const FeatureMap logits = network_forward(rri, params, cfg.normalize);
    const std::vector<std::int32_t> labels2d = argmax_channels(logits);

    // Rebuild the range image view used by the k-NN from the assembled
    // channels (same data, no second projection).
    RangeImage img;
    img.height = rri.height;
    img.width = rri.width;
    const std::size_t plane = static_cast<std::size_t>(rri.height) * rri.width;
    img.range.assign(rri.channel(kChRange), rri.channel(kChRange) + plane);
    img.mask.resize(plane);
    const float* mask = rri.channel(kChMask);
    for (std::size_t p = 0; p < plane; ++p)
      img.mask[p] = mask[p] != 0.0f ? 1 : 0;

    const std::vector<std::int32_t> point_labels =
        knn_refine(current, map, img, labels2d, cfg.knn);
    const std::vector<std::uint16_t> raw = unmap_labels(point_labels, mapping);
    write_predictions(raw, fs::path(out_dir) / (seq.stems[i] + ".label"));
  });

  log << "inferred " << seq.cloud_files.size() << " scan(s) to " << out_dir << "\n";
  return kExitOk;
}

int cmd_postprocess(const CommonOptions& common, const std::string& sequence_dir,
                    const std::string& labels_dir, const std::string& out_dir,
                    std::ostream& log) {
  const PipelineConfig cfg = common.load_config();
  const SequenceScans seq = list_sequence(sequence_dir, false, false);
  fs::create_directories(out_dir);

  parallel_scans(seq.cloud_files.size(), cfg.workers, [&](std::size_t i) {
    const fs::path label_path = fs::path(labels_dir) / (seq.stems[i] + ".label");
    if (!fs::exists(label_path))
      throw DataError("missing label file: " + label_path.string());
    const PointCloud cloud = read_point_cloud(seq.cloud_files[i]);
    const LabelArray labels = read_labels(label_path);

    const auto [img, map] = spherical_project(cloud, cfg.projection);
    const std::vector<std::int32_t> labels2d =
        project_labels(labels, map, cfg.projection);
    const std::vector<std::int32_t> refined =
        knn_refine(cloud, map, img, labels2d, cfg.knn);

    std::vector<std::uint16_t> raw(refined.size(), 0);
    for (std::size_t p = 0; p < refined.size(); ++p)
      if (refined[p] != kIgnoreLabel)
        raw[p] = static_cast<std::uint16_t>(refined[p]);
    write_predictions(raw, fs::path(out_dir) / (seq.stems[i] + ".label"));
  });

  log << "post-processed " << seq.cloud_files.size() << " scan(s) to " << out_dir
      << "\n";
  return kExitOk;
}

int cmd_eval(const CommonOptions& common, const std::string& pred_dir,
             const std::string& gt_dir, const std::string& report_path,
             std::ostream& log) {
  const PipelineConfig cfg = common.load_config();
  const ClassMapping mapping = load_mapping(cfg, common.protocol);

  const std::vector<fs::path> gt_files = sorted_files(gt_dir, ".label");
  if (gt_files.empty())
    throw DataError("no ground-truth label files under " + gt_dir);

  ConfusionMatrix total(mapping.num_classes);
  std::mutex merge_mutex;
  parallel_scans(gt_files.size(), cfg.workers, [&](std::size_t i) {
    const fs::path pred_path = fs::path(pred_dir) / gt_files[i].filename();
    if (!fs::exists(pred_path))
      throw DataError("missing prediction for scan " +
                      gt_files[i].stem().string() + ": " + pred_path.string());
    const LabelArray gt = read_labels(gt_files[i]);
    const LabelArray pred = read_labels(pred_path);
    if (gt.size() != pred.size())
      throw DataError("scan " + gt_files[i].stem().string() + ": prediction has " +
                      std::to_string(pred.size()) + " points, ground truth " +
                      std::to_string(gt.size()));

    ConfusionMatrix local(mapping.num_classes);
    accumulate_confusion(remap_labels(pred, mapping), remap_labels(gt, mapping),
                         local);
    std::lock_guard<std::mutex> lock(merge_mutex);
    total += local;
  });

  const IouReport report = miou(total, cfg.score_absent_zero);
  log << format_report(report, mapping);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out.is_open())
      throw IoError("cannot write report: " + report_path);
    out << format_report_kv(report, mapping);
  }
  return kExitOk;
}

int cmd_gradcheck(const CommonOptions& common, bool perturb_analytic,
                  std::ostream& log) {
  const PipelineConfig cfg = common.load_config();

  const double tolerance = 1e-4;
  const std::vector<double> eps_sweep = {1e-2, 1e-3, 1e-4};
  const int instance_h = 4, instance_w = 4;
  const int cval = 3, hidden = 8, cout = 2;

  double worst_at_checked_eps = 0.0;
  log << "meta-kernel gradient check, 4x4 instances, 5 seeds\n";

  for (int s = 0; s < 5; ++s) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    SplitMix64 rng(seed);

    MetaKernelParams params = make_meta_kernel_params(cval, hidden, cout, rng);
    for (double& b : params.agg_bias)
      b = rng.uniform(-0.1, 0.1);

    MetaKernelInput input;
    input.height = instance_h;
    input.width = instance_w;
    const std::size_t plane = static_cast<std::size_t>(instance_h) * instance_w;
    input.geometry.resize(4 * plane);
    input.values.resize(static_cast<std::size_t>(cval) * plane);
    input.mask.resize(plane);
    for (float& g : input.geometry)
      g = static_cast<float>(rng.uniform(-2.0, 2.0));
    for (float& v : input.values)
      v = static_cast<float>(rng.uniform(-1.0, 1.0));
    for (std::uint8_t& m : input.mask)
      m = rng.uniform() < 0.8 ? 1 : 0;

    FeatureMap upstream(cout, instance_h, instance_w);
    std::fill(upstream.data.begin(), upstream.data.end(), 1.0f);

    MetaKernelGrad grad = meta_kernel_backward(input, params, upstream);
    std::vector<double> analytic = flatten_grad(grad);
    if (perturb_analytic && !analytic.empty())
      analytic[0] += 0.05;

    const std::vector<double> x0 = flatten_params(params);
    const auto objective = [&](std::span<const double> flat) {
      MetaKernelParams probe = params;
      unflatten_params(probe, flat);
      return meta_kernel_forward_sum(input, probe);
    };

    for (double eps : eps_sweep) {
      const std::vector<double> numeric = finite_diff_grad(objective, x0, eps);
      double worst = 0.0;
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double denom =
            std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
      }
      log << "  seed " << seed << " eps " << std::scientific << std::setprecision(1)
          << eps << ": max relative error " << std::setprecision(3) << worst
          << std::defaultfloat << "\n";
      if (eps == 1e-3)
        worst_at_checked_eps = std::max(worst_at_checked_eps, worst);
    }

    // Value gradients at the checked eps.
    const auto value_objective = [&](std::span<const double> flat) {
      MetaKernelInput probe = input;
      for (std::size_t i = 0; i < flat.size(); ++i)
        probe.values[i] = static_cast<float>(flat[i]);
      return meta_kernel_forward_sum(probe, params);
    };
    std::vector<double> values0(input.values.begin(), input.values.end());
    const std::vector<double> numeric_values =
        finite_diff_grad(value_objective, values0, 1e-3);
    for (std::size_t i = 0; i < numeric_values.size(); ++i) {
      const double denom =
          std::max({1.0, std::abs(grad.values[i]), std::abs(numeric_values[i])});
      worst_at_checked_eps = std::max(
          worst_at_checked_eps, std::abs(grad.values[i] - numeric_values[i]) / denom);
    }
  }

  log << "max relative error at eps 1e-3: " << std::scientific
      << std::setprecision(3) << worst_at_checked_eps << std::defaultfloat << "\n";
  if (worst_at_checked_eps < tolerance) {
    log << "gradcheck PASS (tolerance " << tolerance << ")\n";
    return kExitOk;
  }
  log << "gradcheck FAIL (tolerance " << tolerance << ")\n";
  return kExitCheckFailed;
}

int cmd_bench(const CommonOptions& common, const std::string& sequence_dir,
              int iterations, const std::string& report_path, std::ostream& log) {
  if (iterations < 1)
    throw ConfigError("bench: iterations must be positive");
  const PipelineConfig cfg = common.load_config();
  const SequenceScans seq = list_sequence(sequence_dir, true, true);

  // The budgeted measurement runs strictly single-threaded on the newest
  // scan (the one with the most predecessors available).
  const std::size_t i = seq.cloud_files.size() - 1;
  const PointCloud current = read_point_cloud(seq.cloud_files[i]);
  const auto prev = gather_predecessors(seq, i, cfg.residual_count);
  const LabelArray gt_labels = read_labels(seq.label_files[i]);
  const ClassMapping mapping = load_mapping(cfg, common.protocol);

  struct Stage {
    std::string name;
    std::vector<double> samples_ms;
  };
  std::vector<Stage> stages = {{"projection", {}},
                               {"residual_assembly", {}},
                               {"knn", {}},
                               {"evaluation", {}}};

  const auto time_ms = [](const std::function<void()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count();
  };

  for (int it = 0; it < iterations; ++it) {
    RangeImage img;
    PixelIndexMap map;
    stages[0].samples_ms.push_back(time_ms([&]() {
      auto [im, mp] = spherical_project(current, cfg.projection);
      img = std::move(im);
      map = std::move(mp);
    }));

    stages[1].samples_ms.push_back(time_ms([&]() {
      auto [rri, mp] =
          assemble_residual_image(current, prev, cfg.projection, cfg.residual_cap);
      (void)rri;
    }));

    std::vector<std::int32_t> labels2d = project_labels(gt_labels, map, cfg.projection);
    std::vector<std::int32_t> refined;
    stages[2].samples_ms.push_back(time_ms(
        [&]() { refined = knn_refine(current, map, img, labels2d, cfg.knn); }));

    stages[3].samples_ms.push_back(time_ms([&]() {
      LabelArray pred;
      pred.semantic.resize(refined.size());
      for (std::size_t p = 0; p < refined.size(); ++p)
        pred.semantic[p] = refined[p] == kIgnoreLabel
                               ? 0
                               : static_cast<std::uint16_t>(refined[p]);
      pred.instance.assign(pred.semantic.size(), 0);
      ConfusionMatrix m(mapping.num_classes);
      accumulate_confusion(remap_labels(pred, mapping),
                           remap_labels(gt_labels, mapping), m);
      (void)miou(m, cfg.score_absent_zero);
    }));
  }

  std::ostringstream report;
  report << "bench.scan " << seq.stems[i] << "\n";
  report << "bench.points " << current.size() << "\n";
  report << "bench.predecessors " << prev.size() << "\n";
  report << "bench.iterations " << iterations << "\n";
  report << std::fixed << std::setprecision(3);
  for (Stage& stage : stages) {
    std::vector<double> sorted = stage.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    for (double v : sorted)
      mean += v;
    mean /= static_cast<double>(sorted.size());
    const std::size_t p95_idx =
        sorted.size() < 2 ? 0
                          : static_cast<std::size_t>(
                                std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1;
    report << "stage." << stage.name << ".mean_ms " << mean << "\n";
    report << "stage." << stage.name << ".p95_ms " << sorted[p95_idx] << "\n";
  }

  log << report.str();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out.is_open())
      throw IoError("cannot write report: " + report_path);
    out << report.str();
  }
  return kExitOk;
}

int cmd_freqs(const CommonOptions& common, const std::string& labels_dir,
              const std::string& out_path, std::ostream& log) {
  const PipelineConfig cfg = common.load_config();
  const ClassMapping mapping = load_mapping(cfg, common.protocol);

  const std::vector<fs::path> files = sorted_files(labels_dir, ".label");
  if (files.empty())
    throw DataError("no label files under " + labels_dir);

  std::vector<std::uint64_t> counts(static_cast<std::size_t>(mapping.num_classes), 0);
  std::uint64_t total = 0;
  for (const fs::path& f : files) {
    const LabelArray labels = read_labels(f);
    for (std::int32_t t : remap_labels(labels, mapping)) {
      if (t == kIgnoreTrainId)
        continue;
      counts[static_cast<std::size_t>(t)]++;
      ++total;
    }
  }
  if (total == 0)
    throw DataError("label corpus has no points with evaluated classes");

  std::vector<double> freqs(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c)
    freqs[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  write_class_frequencies(freqs, out_path);
  log << "frequencies over " << total << " points written to " << out_path << "\n";
  return kExitOk;
}

int cmd_inspect(const std::string& rri_path, std::ostream& log) {
  const RangeResidualImage rri = read_rri(rri_path);
  const std::size_t plane = static_cast<std::size_t>(rri.height) * rri.width;
  static const char* kChannelNames[9] = {"range", "x",          "y",
                                         "z",     "remission",  "residual1",
                                         "residual2", "residual3", "mask"};

  log << "range residual image " << rri.height << " x " << rri.width << "\n";
  std::size_t valid = 0;
  const float* mask = rri.channel(kChMask);
  for (std::size_t i = 0; i < plane; ++i)
    valid += mask[i] != 0.0f ? 1 : 0;
  log << "valid pixels: " << valid << " / " << plane << "\n";

  log << std::fixed << std::setprecision(4);
  for (int c = 0; c < 9; ++c) {
    const float* ch = rri.channel(c);
    float lo = ch[0], hi = ch[0];
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      lo = std::min(lo, ch[i]);
      hi = std::max(hi, ch[i]);
      mean += ch[i];
    }
    mean /= static_cast<double>(plane);
    log << "channel " << c << " (" << kChannelNames[c] << "): min " << lo
        << " max " << hi << " mean " << mean << "\n";
  }
  return kExitOk;
}

} // namespace rangeseg
