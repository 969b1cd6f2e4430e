#include "rangeseg/evaluation.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace rangeseg {

namespace {
constexpr std::int32_t kUnmapped = -2;
} // namespace

ClassMapping ClassMapping::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.is_open())
    throw IoError("cannot open class mapping file: " + path.string());

  ClassMapping mapping;
  mapping.raw_to_train.assign(65536, kUnmapped);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    std::istringstream ss(line);
    std::string directive;
    if (!(ss >> directive))
      continue;

    const auto fail = [&](const std::string& why) {
      throw DataError("class mapping " + path.string() + " line " +
                      std::to_string(line_no) + ": " + why);
    };

    if (directive == "classes") {
      if (!(ss >> mapping.num_classes) || mapping.num_classes < 1)
        fail("invalid class count");
      mapping.train_to_raw.assign(static_cast<std::size_t>(mapping.num_classes), 0);
      mapping.names.assign(static_cast<std::size_t>(mapping.num_classes), "");
    } else if (directive == "map") {
      long raw = 0;
      std::string target;
      if (!(ss >> raw >> target) || raw < 0 || raw > 0xFFFF)
        fail("invalid map entry");
      std::int32_t train = kIgnoreTrainId;
      if (target != "ignore") {
        train = std::stoi(target);
        if (train < 0 || train >= mapping.num_classes)
          fail("train id out of range: " + target);
      }
      mapping.raw_to_train[static_cast<std::size_t>(raw)] = train;
    } else if (directive == "inv") {
      std::int32_t train = 0;
      long raw = 0;
      if (!(ss >> train >> raw) || train < 0 || train >= mapping.num_classes ||
          raw < 0 || raw > 0xFFFF)
        fail("invalid inv entry");
      mapping.train_to_raw[static_cast<std::size_t>(train)] =
          static_cast<std::int32_t>(raw);
    } else if (directive == "name") {
      std::int32_t train = 0;
      std::string name;
      if (!(ss >> train >> name) || train < 0 || train >= mapping.num_classes)
        fail("invalid name entry");
      mapping.names[static_cast<std::size_t>(train)] = name;
    } else if (directive == "moving") {
      std::int32_t train = 0;
      while (ss >> train) {
        if (train < 0 || train >= mapping.num_classes)
          fail("moving train id out of range");
        mapping.moving_classes.push_back(train);
      }
    } else {
      fail("unknown directive '" + directive + "'");
    }
  }

  if (mapping.num_classes == 0)
    throw DataError("class mapping " + path.string() + " has no 'classes' line");

  // raw_to_train(train_to_raw) must be the identity on train ids.
  for (int t = 0; t < mapping.num_classes; ++t) {
    const std::int32_t raw = mapping.train_to_raw[static_cast<std::size_t>(t)];
    if (mapping.raw_to_train[static_cast<std::size_t>(raw)] != t)
      throw DataError("class mapping " + path.string() + ": inv entry for train id " +
                      std::to_string(t) + " is not a section of the forward map");
  }
  return mapping;
}

std::string ClassMapping::class_name(std::int32_t train_id) const {
  if (train_id >= 0 && train_id < num_classes &&
      !names[static_cast<std::size_t>(train_id)].empty())
    return names[static_cast<std::size_t>(train_id)];
  return "class-" + std::to_string(train_id);
}

std::vector<std::int32_t> remap_labels(const LabelArray& raw,
                                       const ClassMapping& mapping) {
  std::vector<std::int32_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::int32_t train = mapping.raw_to_train[raw.semantic[i]];
    if (train == kUnmapped)
      throw DataError("remap_labels: raw id " + std::to_string(raw.semantic[i]) +
                      " is not covered by the class mapping");
    out[i] = train;
  }
  return out;
}

std::vector<std::uint16_t> unmap_labels(std::span<const std::int32_t> train_ids,
                                        const ClassMapping& mapping) {
  std::vector<std::uint16_t> out(train_ids.size(), 0);
  for (std::size_t i = 0; i < train_ids.size(); ++i) {
    const std::int32_t t = train_ids[i];
    if (t == kIgnoreTrainId)
      continue; // raw id 0 (unlabeled)
    if (t < 0 || t >= mapping.num_classes)
      throw DataError("unmap_labels: train id " + std::to_string(t) + " out of range");
    out[i] = static_cast<std::uint16_t>(mapping.train_to_raw[static_cast<std::size_t>(t)]);
  }
  return out;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (n != other.n)
    throw ShapeError("confusion matrix: size mismatch in merge");
  for (std::size_t i = 0; i < counts.size(); ++i)
    counts[i] += other.counts[i];
  return *this;
}

void accumulate_confusion(std::span<const std::int32_t> pred,
                          std::span<const std::int32_t> gt, ConfusionMatrix& m) {
  if (pred.size() != gt.size())
    throw ShapeError("accumulate_confusion: prediction/ground truth length mismatch");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] == kIgnoreTrainId)
      continue;
    if (gt[i] < 0 || gt[i] >= m.n || pred[i] < 0 || pred[i] >= m.n)
      throw DataError("accumulate_confusion: train id out of range at point " +
                      std::to_string(i));
    m.counts[static_cast<std::size_t>(gt[i]) * m.n + pred[i]]++;
  }
}

IouReport miou(const ConfusionMatrix& m, bool score_absent_zero) {
  if (m.n == 0)
    throw DataError("miou: empty confusion matrix");

  IouReport report;
  report.per_class.assign(static_cast<std::size_t>(m.n), 0.0);
  report.has_denominator.assign(static_cast<std::size_t>(m.n), false);

  std::uint64_t total = 0;
  for (std::uint64_t c : m.counts)
    total += c;
  if (total == 0)
    throw DataError("miou: confusion matrix has no counts");

  double sum = 0.0;
  int contributing = 0;
  for (int c = 0; c < m.n; ++c) {
    const std::uint64_t tp = m.at(c, c);
    std::uint64_t row = 0, col = 0;
    for (int j = 0; j < m.n; ++j) {
      row += m.at(c, j);
      col += m.at(j, c);
    }
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) {
      if (score_absent_zero) {
        sum += 0.0;
        ++contributing;
      }
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    report.per_class[static_cast<std::size_t>(c)] = iou;
    report.has_denominator[static_cast<std::size_t>(c)] = true;
    sum += iou;
    ++contributing;
  }
  report.mean = contributing > 0 ? sum / contributing : 0.0;
  return report;
}

std::string format_report(const IouReport& report, const ClassMapping& mapping) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    out << "IoU " << mapping.class_name(static_cast<std::int32_t>(c)) << ": ";
    if (report.has_denominator[c])
      out << report.per_class[c] << "\n";
    else
      out << "absent\n";
  }
  out << "mIoU: " << report.mean << "\n";
  return out.str();
}

std::string format_report_kv(const IouReport& report, const ClassMapping& mapping) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    out << "iou." << mapping.class_name(static_cast<std::int32_t>(c)) << " ";
    if (report.has_denominator[c])
      out << report.per_class[c] << "\n";
    else
      out << "absent\n";
  }
  out << "miou " << report.mean << "\n";
  return out.str();
}

} // namespace rangeseg
