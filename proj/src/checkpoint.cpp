#include "rangeseg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

namespace rangeseg {

namespace {

struct Section {
  std::string name;
  std::vector<float> data;
};

std::vector<float> to_floats(const std::vector<double>& v) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = static_cast<float>(v[i]);
  return out;
}

void from_floats(const std::vector<float>& src, std::vector<double>& dst) {
  dst.assign(src.begin(), src.end());
}

// Canonical section list of a parameter set; the same enumeration drives
// both save and load so the two cannot drift apart.
void enumerate_conv(const std::string& prefix, Conv2d& conv,
                    std::vector<std::pair<std::string, std::vector<float>*>>& out) {
  out.emplace_back(prefix + ".weight", &conv.weight);
  out.emplace_back(prefix + ".bias", &conv.bias);
}

std::vector<std::pair<std::string, std::vector<float>*>>
float_sections(NetworkParams& params) {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  for (std::size_t s = 0; s < params.backbone.encoder.size(); ++s)
    enumerate_conv("backbone.enc" + std::to_string(s), params.backbone.encoder[s], out);
  for (std::size_t s = 0; s < params.backbone.decoder.size(); ++s)
    enumerate_conv("backbone.dec" + std::to_string(s), params.backbone.decoder[s], out);
  enumerate_conv("fam.ctx1", params.fam.context.conv1, out);
  enumerate_conv("fam.ctx2", params.fam.context.conv2, out);
  enumerate_conv("fam.gate", params.fam.attention.gate, out);
  enumerate_conv("fam.proj", params.fam.attention.proj, out);
  enumerate_conv("fam.fuse", params.fam.fuse, out);
  enumerate_conv("fam.fuse_proj", params.fam.fuse_proj, out);
  enumerate_conv("fam.head", params.fam.head, out);
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>>
double_sections(NetworkParams& params) {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (std::size_t li = 0; li < params.meta.weight_mlp.layers.size(); ++li) {
    DenseLayer& l = params.meta.weight_mlp.layers[li];
    out.emplace_back("meta.mlp" + std::to_string(li) + ".weight", &l.weight);
    out.emplace_back("meta.mlp" + std::to_string(li) + ".bias", &l.bias);
  }
  out.emplace_back("meta.agg.weight", &params.meta.agg_weight);
  out.emplace_back("meta.agg.bias", &params.meta.agg_bias);
  return out;
}

} // namespace

void save_checkpoint(const NetworkParams& params,
                     const std::filesystem::path& path) {
  NetworkParams copy = params; // the section enumeration needs mutable refs
  std::vector<Section> sections;
  for (auto& [name, vec] : double_sections(copy))
    sections.push_back({name, to_floats(*vec)});
  for (auto& [name, vec] : float_sections(copy))
    sections.push_back({name, *vec});

  std::ofstream out(path, std::ios::binary);
  if (!out.is_open())
    throw IoError("cannot open checkpoint for writing: " + path.string());

  out.write("MRSK", 4);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&params.seed), 8);
  const std::uint32_t count = static_cast<std::uint32_t>(sections.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Section& s : sections) {
    const std::uint32_t len = static_cast<std::uint32_t>(s.name.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(s.name.data(), len);
    const std::uint64_t n = s.data.size();
    out.write(reinterpret_cast<const char*>(&n), 8);
  }
  for (const Section& s : sections)
    out.write(reinterpret_cast<const char*>(s.data.data()),
              static_cast<std::streamsize>(s.data.size() * sizeof(float)));
  if (!out)
    throw IoError("failed to write checkpoint: " + path.string());
}

NetworkParams load_checkpoint(const std::filesystem::path& path,
                              const NetConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open())
    throw IoError("cannot open checkpoint: " + path.string());

  char magic[4] = {};
  std::uint32_t version = 0;
  std::uint64_t seed = 0;
  std::uint32_t count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&seed), 8);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || std::memcmp(magic, "MRSK", 4) != 0)
    throw DataError("not a checkpoint file: " + path.string());
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  std::vector<std::pair<std::string, std::uint64_t>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    if (!in || len > 4096)
      throw DataError("corrupt checkpoint section table: " + path.string());
    std::string name(len, '\0');
    in.read(name.data(), len);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    if (!in)
      throw DataError("corrupt checkpoint section table: " + path.string());
    table.emplace_back(std::move(name), n);
  }

  std::map<std::string, std::vector<float>> blocks;
  for (const auto& [name, n] : table) {
    std::vector<float> data(n);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in)
      throw DataError("truncated checkpoint: " + path.string());
    if (!blocks.emplace(name, std::move(data)).second)
      throw DataError("duplicate checkpoint section '" + name + "'");
  }

  // Architecture shapes come from the config; the file must match exactly.
  NetworkParams params = init_network_params(cfg, seed);
  params.seed = seed;

  const auto take = [&](const std::string& name, std::size_t expected) {
    auto it = blocks.find(name);
    if (it == blocks.end())
      throw DataError("checkpoint is missing section '" + name + "'");
    if (it->second.size() != expected)
      throw DataError("checkpoint section '" + name + "' has " +
                      std::to_string(it->second.size()) + " values, architecture " +
                      "expects " + std::to_string(expected));
    std::vector<float> data = std::move(it->second);
    blocks.erase(it);
    return data;
  };

  for (auto& [name, vec] : double_sections(params))
    from_floats(take(name, vec->size()), *vec);
  for (auto& [name, vec] : float_sections(params))
    *vec = take(name, vec->size());

  if (!blocks.empty())
    throw DataError("checkpoint contains unknown section '" +
                    blocks.begin()->first + "'");
  return params;
}

} // namespace rangeseg
