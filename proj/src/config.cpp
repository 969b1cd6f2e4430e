#include "rangeseg/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace rangeseg {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> tokenize(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok)
    out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used == tok.size())
      return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: invalid numeric value '" + tok + "' for " + key);
}

long long parse_int(const std::string& tok, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(tok, &used);
    if (used == tok.size())
      return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: invalid integer value '" + tok + "' for " + key);
}

std::string resolve_path(const std::string& value,
                         const std::filesystem::path& base_dir) {
  if (value.empty())
    return value;
  std::filesystem::path p(value);
  if (p.is_relative())
    p = base_dir / p;
  return p.lexically_normal().string();
}

} // namespace

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in.is_open())
    throw IoError("cannot open config file: " + path.string());
  const std::filesystem::path base_dir =
      std::filesystem::absolute(path).parent_path();

  PipelineConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) +
                          " is not 'key = value': " + line);
      continue;
    }
    const std::vector<std::string> key_tok = tokenize(line.substr(0, eq));
    if (key_tok.size() != 1)
      throw ConfigError("config line " + std::to_string(line_no) + " has no key");
    const std::string key = key_tok[0];
    const std::vector<std::string> vals = tokenize(line.substr(eq + 1));
    if (vals.empty())
      throw ConfigError("config: key '" + key + "' has no value");
    const std::string& v0 = vals[0];

    const auto want = [&](std::size_t n) {
      if (vals.size() != n)
        throw ConfigError("config: key '" + key + "' expects " + std::to_string(n) +
                          " value(s), got " + std::to_string(vals.size()));
    };

    if (key == "projection.height") {
      want(1);
      cfg.projection.height = static_cast<int>(parse_int(v0, key));
    } else if (key == "projection.width") {
      want(1);
      cfg.projection.width = static_cast<int>(parse_int(v0, key));
    } else if (key == "projection.fov_up_rad") {
      want(1);
      cfg.projection.fov_up_rad = parse_double(v0, key);
    } else if (key == "projection.fov_down_rad") {
      want(1);
      cfg.projection.fov_down_rad = parse_double(v0, key);
    } else if (key == "projection.fov_up_deg") {
      want(1);
      cfg.projection.fov_up_rad = parse_double(v0, key) * M_PI / 180.0;
    } else if (key == "projection.fov_down_deg") {
      want(1);
      cfg.projection.fov_down_rad = parse_double(v0, key) * M_PI / 180.0;
    } else if (key == "residual.count") {
      want(1);
      cfg.residual_count = static_cast<int>(parse_int(v0, key));
    } else if (key == "residual.cap") {
      want(1);
      cfg.residual_cap = parse_double(v0, key);
    } else if (key == "normalize.mean") {
      want(5);
      for (std::size_t i = 0; i < 5; ++i)
        cfg.normalize.mean[i] = parse_double(vals[i], key);
    } else if (key == "normalize.std") {
      want(5);
      for (std::size_t i = 0; i < 5; ++i)
        cfg.normalize.stddev[i] = parse_double(vals[i], key);
    } else if (key == "knn.k") {
      want(1);
      cfg.knn.k = static_cast<int>(parse_int(v0, key));
    } else if (key == "knn.window") {
      want(1);
      cfg.knn.window = static_cast<int>(parse_int(v0, key));
    } else if (key == "knn.cutoff") {
      want(1);
      cfg.knn.cutoff = parse_double(v0, key);
    } else if (key == "knn.gaussian_weight") {
      want(1);
      cfg.knn.gaussian_weight = parse_int(v0, key) != 0;
    } else if (key == "knn.gaussian_sigma") {
      want(1);
      cfg.knn.gaussian_sigma = parse_double(v0, key);
    } else if (key == "loss.w1") {
      want(1);
      cfg.loss_weights.w_cross_entropy = parse_double(v0, key);
    } else if (key == "loss.w2") {
      want(1);
      cfg.loss_weights.w_lovasz = parse_double(v0, key);
    } else if (key == "loss.w3") {
      want(1);
      cfg.loss_weights.w_boundary = parse_double(v0, key);
    } else if (key == "loss.theta0") {
      want(1);
      cfg.theta0 = static_cast<int>(parse_int(v0, key));
    } else if (key == "mapping.single") {
      want(1);
      cfg.mapping_single = resolve_path(v0, base_dir);
    } else if (key == "mapping.multi") {
      want(1);
      cfg.mapping_multi = resolve_path(v0, base_dir);
    } else if (key == "freqs.path") {
      want(1);
      cfg.freqs_path = resolve_path(v0, base_dir);
    } else if (key == "net.mlp_hidden") {
      want(1);
      cfg.net.meta_mlp_hidden = static_cast<int>(parse_int(v0, key));
    } else if (key == "net.meta_out") {
      want(1);
      cfg.net.meta_out_channels = static_cast<int>(parse_int(v0, key));
    } else if (key == "net.encoder") {
      want(4);
      for (std::size_t i = 0; i < 4; ++i)
        cfg.net.encoder_channels[i] = static_cast<int>(parse_int(vals[i], key));
    } else if (key == "net.backbone_out") {
      want(1);
      cfg.net.backbone_out_channels = static_cast<int>(parse_int(v0, key));
    } else if (key == "net.context") {
      want(1);
      cfg.net.context_channels = static_cast<int>(parse_int(v0, key));
    } else if (key == "net.fam") {
      want(1);
      cfg.net.fam_channels = static_cast<int>(parse_int(v0, key));
    } else if (key == "seed") {
      want(1);
      cfg.seed = static_cast<std::uint64_t>(parse_int(v0, key));
    } else if (key == "workers") {
      want(1);
      cfg.workers = static_cast<int>(parse_int(v0, key));
    } else if (key == "eval.score_absent_zero") {
      want(1);
      cfg.score_absent_zero = parse_int(v0, key) != 0;
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  cfg.projection.validate();
  cfg.knn.validate();
  if (cfg.residual_count < 0 || cfg.residual_count > 3)
    throw ConfigError("config: residual.count must be in [0, 3]");
  if (cfg.theta0 < 1 || cfg.theta0 % 2 == 0)
    throw ConfigError("config: loss.theta0 must be odd and positive");
  for (double s : cfg.normalize.stddev)
    if (!(s > 0.0))
      throw ConfigError("config: normalize.std entries must be positive");
  for (const std::string& p : {cfg.mapping_single, cfg.mapping_multi, cfg.freqs_path})
    if (!p.empty() && !std::filesystem::exists(p))
      throw ConfigError("config: referenced file does not exist: " + p);
  return cfg;
}

std::string PipelineConfig::dump_string() const {
  std::ostringstream out;
  out << "projection.height = " << projection.height << "\n";
  out << "projection.width = " << projection.width << "\n";
  out << "projection.fov_up_rad = " << format_double(projection.fov_up_rad) << "\n";
  out << "projection.fov_down_rad = " << format_double(projection.fov_down_rad) << "\n";
  out << "residual.count = " << residual_count << "\n";
  out << "residual.cap = " << format_double(residual_cap) << "\n";
  out << "normalize.mean =";
  for (double v : normalize.mean)
    out << " " << format_double(v);
  out << "\n";
  out << "normalize.std =";
  for (double v : normalize.stddev)
    out << " " << format_double(v);
  out << "\n";
  out << "knn.k = " << knn.k << "\n";
  out << "knn.window = " << knn.window << "\n";
  out << "knn.cutoff = " << format_double(knn.cutoff) << "\n";
  out << "knn.gaussian_weight = " << (knn.gaussian_weight ? 1 : 0) << "\n";
  out << "knn.gaussian_sigma = " << format_double(knn.gaussian_sigma) << "\n";
  out << "loss.w1 = " << format_double(loss_weights.w_cross_entropy) << "\n";
  out << "loss.w2 = " << format_double(loss_weights.w_lovasz) << "\n";
  out << "loss.w3 = " << format_double(loss_weights.w_boundary) << "\n";
  out << "loss.theta0 = " << theta0 << "\n";
  if (!mapping_single.empty())
    out << "mapping.single = " << mapping_single << "\n";
  if (!mapping_multi.empty())
    out << "mapping.multi = " << mapping_multi << "\n";
  if (!freqs_path.empty())
    out << "freqs.path = " << freqs_path << "\n";
  out << "net.mlp_hidden = " << net.meta_mlp_hidden << "\n";
  out << "net.meta_out = " << net.meta_out_channels << "\n";
  out << "net.encoder =";
  for (int v : net.encoder_channels)
    out << " " << v;
  out << "\n";
  out << "net.backbone_out = " << net.backbone_out_channels << "\n";
  out << "net.context = " << net.context_channels << "\n";
  out << "net.fam = " << net.fam_channels << "\n";
  out << "seed = " << seed << "\n";
  out << "workers = " << workers << "\n";
  out << "eval.score_absent_zero = " << (score_absent_zero ? 1 : 0) << "\n";
  return out.str();
}

void PipelineConfig::dump(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out.is_open())
    throw IoError("cannot open config file for writing: " + path.string());
  out << dump_string();
  if (!out)
    throw IoError("failed to write config file: " + path.string());
}

ClassFrequencies load_class_frequencies(const std::filesystem::path& path,
                                        int num_classes) {
  std::ifstream in(path);
  if (!in.is_open())
    throw IoError("cannot open frequency table: " + path.string());

  std::map<int, double> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos)
      line.resize(hash);
    std::istringstream ss(line);
    int train = 0;
    double freq = 0.0;
    if (!(ss >> train))
      continue;
    if (!(ss >> freq) || train < 0 || train >= num_classes || freq < 0.0)
      throw DataError("frequency table " + path.string() + " line " +
                      std::to_string(line_no) + " is invalid");
    raw[train] = freq;
  }

  ClassFrequencies freqs;
  freqs.f.assign(static_cast<std::size_t>(num_classes), 0.0);
  for (const auto& [train, freq] : raw)
    freqs.f[static_cast<std::size_t>(train)] = freq;

  // Floor absent classes and renormalize to keep 1/sqrt(f) defined.
  double sum = 0.0;
  for (double& v : freqs.f) {
    v = std::max(v, 1e-6);
    sum += v;
  }
  for (double& v : freqs.f)
    v /= sum;
  freqs.validate();
  return freqs;
}

void write_class_frequencies(const std::vector<double>& freqs,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out.is_open())
    throw IoError("cannot open frequency table for writing: " + path.string());
  out << "# train_id frequency\n";
  for (std::size_t c = 0; c < freqs.size(); ++c)
    out << c << " " << format_double(freqs[c]) << "\n";
  if (!out)
    throw IoError("failed to write frequency table: " + path.string());
}

} // namespace rangeseg
