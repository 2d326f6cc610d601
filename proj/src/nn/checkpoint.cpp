#include "feddiff/nn/checkpoint.hpp"

#include <array>
#include <bit>
#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace feddiff::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'E', 'D', 'D', 'C', 'K', 'P', 'T'};

template <class U>
void put(std::ostream& os, U value) {
  static_assert(std::is_integral_v<U> || std::is_floating_point_v<U>);
  std::array<unsigned char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(U));
}

template <class U>
U get(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(U))) {
    throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::filesystem::path& path) {
  const auto n = get<std::uint32_t>(is, path);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
  return s;
}

}  // namespace

std::string config_to_json(const DenoiserConfig& c) {
  nlohmann::json j = {{"in_channels", c.in_channels},
                      {"image_size", c.image_size},
                      {"base_channels", c.base_channels},
                      {"channel_multipliers", c.channel_multipliers},
                      {"res_blocks_per_stage", c.res_blocks_per_stage},
                      {"time_embed_dim", c.time_embed_dim},
                      {"class_conditional", c.class_conditional},
                      {"num_classes", c.num_classes}};
  return j.dump();
}

DenoiserConfig config_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  DenoiserConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.channel_multipliers = j.at("channel_multipliers").get<std::vector<int>>();
  c.res_blocks_per_stage = j.at("res_blocks_per_stage").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
  c.class_conditional = j.at("class_conditional").get<bool>();
  c.num_classes = j.at("num_classes").get<int>();
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.params.validate();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::int64_t>(os, ckpt.round);
    put_string(os, config_to_json(ckpt.config));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.params.manifest.size()));
    for (const ManifestEntry& e : ckpt.params.manifest) {
      put_string(os, e.name);
      put<std::uint32_t>(os, static_cast<std::uint32_t>(e.shape.size()));
      for (std::size_t d : e.shape) put<std::uint64_t>(os, d);
    }
    put<std::uint64_t>(os, ckpt.params.values.size());
    for (float v : ckpt.params.values) put<float>(os, v);
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path.string() + ": unsupported format version " +
                             std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.round = get<std::int64_t>(is, path);
  ckpt.config = config_from_json(get_string(is, path));
  const auto entries = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < entries; ++i) {
    ManifestEntry e;
    e.name = get_string(is, path);
    const auto rank = get<std::uint32_t>(is, path);
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(get<std::uint64_t>(is, path));
    ckpt.params.manifest.push_back(std::move(e));
  }
  const auto count = get<std::uint64_t>(is, path);
  ckpt.params.values.resize(count);
  for (auto& v : ckpt.params.values) v = get<float>(is, path);
  ckpt.params.validate();
  return ckpt;
}

}  // namespace feddiff::nn
