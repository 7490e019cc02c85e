#include "crank/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "io_util.hpp"

namespace crank {

namespace {
constexpr char kMagic[4] = {'C', 'R', 'N', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const RankerNetwork& net, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  detail::put_bytes(os, kMagic, 4);
  detail::put_le<std::uint32_t>(os, kVersion);

  const auto& c = net.config;
  detail::put_le<std::int32_t>(os, c.capacity_n);
  detail::put_le<std::int32_t>(os, c.bpn_channels);
  detail::put_le<std::int32_t>(os, c.bpn_depth);
  detail::put_le<std::int32_t>(os, c.interleave);
  detail::put_le<std::int32_t>(os, c.scales);
  detail::put_le<std::int32_t>(os, c.fpn_channels);
  detail::put_le<std::int32_t>(os, c.image_size);
  detail::put_le<double>(os, c.leaky_alpha);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(c.backbone_channels.size()));
  for (int ch : c.backbone_channels) detail::put_le<std::int32_t>(os, ch);
  detail::put_le<std::uint64_t>(os, net.rng_seed);

  const auto params = parameters(net);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_le<std::uint16_t>(os, static_cast<std::uint16_t>(p.name.size()));
    detail::put_bytes(os, p.name.data(), p.name.size());
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(p.tensor->shape.size()));
    for (int d : p.tensor->shape) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : p.tensor->data) detail::put_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

RankerNetwork load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }

  RankerConfig cfg;
  cfg.capacity_n = detail::get_le<std::int32_t>(is);
  cfg.bpn_channels = detail::get_le<std::int32_t>(is);
  cfg.bpn_depth = detail::get_le<std::int32_t>(is);
  cfg.interleave = detail::get_le<std::int32_t>(is);
  cfg.scales = detail::get_le<std::int32_t>(is);
  cfg.fpn_channels = detail::get_le<std::int32_t>(is);
  cfg.image_size = detail::get_le<std::int32_t>(is);
  cfg.leaky_alpha = detail::get_le<double>(is);
  const auto stages = detail::get_le<std::uint32_t>(is);
  cfg.backbone_channels.clear();
  for (std::uint32_t i = 0; i < stages; ++i) {
    cfg.backbone_channels.push_back(detail::get_le<std::int32_t>(is));
  }
  const auto seed = detail::get_le<std::uint64_t>(is);

  RankerNetwork net = init_network(cfg, seed);
  const auto params = parameters(net);
  const auto count = detail::get_le<std::uint32_t>(is);
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: array count mismatch in " + path);
  }
  for (const auto& p : params) {
    const auto name_len = detail::get_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw std::runtime_error("checkpoint: truncated file");
    }
    if (name != p.name) {
      throw std::runtime_error("checkpoint: unexpected array '" + name + "', expected '" +
                               p.name + "'");
    }
    const auto rank = detail::get_le<std::uint8_t>(is);
    std::vector<int> shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<int>(detail::get_le<std::uint32_t>(is)));
    }
    if (shape != p.tensor->shape) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    }
    for (double& v : p.tensor->data) v = detail::get_le<double>(is);
  }
  return net;
}

}  // namespace crank
