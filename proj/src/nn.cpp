#include "cuelab/nn.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cuelab/checkpoint.hpp"

namespace cuelab::nn {

std::vector<int> convnet_widths(int w) {
  if (w < 1) throw UserError("width multiplier must be >= 1");
  return {w, w, 2 * w, 2 * w, 4 * w, 4 * w};
}

std::vector<int> ffnet_widths_desk() { return {256, 128, 38, 19, 6}; }

std::vector<int> ffnet_widths_scaled(int w) {
  if (w < 1) throw UserError("width multiplier must be >= 1");
  return {4 * w, 2 * w, w};
}

std::vector<ParamSegment> param_layout(const ModelConfig& cfg) {
  if (cfg.classes < 2) throw UserError("need at least 2 classes");
  for (int w : cfg.widths)
    if (w < 1) throw UserError("layer widths must be positive");
  std::vector<ParamSegment> segs;
  int64_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape, int fan_in) {
    ParamSegment s;
    s.name = std::move(name);
    s.count = TensorT<float>::count(shape);
    s.shape = std::move(shape);
    s.offset = offset;
    s.fan_in = fan_in;
    offset += s.count;
    segs.push_back(std::move(s));
  };
  if (cfg.arch == Arch::FFnet) {
    int prev = cfg.in_channels * cfg.resolution * cfg.resolution;
    for (size_t i = 0; i < cfg.widths.size(); ++i) {
      int w = cfg.widths[i];
      add("fc" + std::to_string(i) + ".weight", {prev, w}, prev);
      add("fc" + std::to_string(i) + ".bias", {w}, 0);
      prev = w;
    }
    add("head.weight", {prev, cfg.classes}, prev);
    add("head.bias", {cfg.classes}, 0);
  } else {
    int prev = cfg.in_channels;
    for (size_t i = 0; i < cfg.widths.size(); ++i) {
      int oc = cfg.widths[i];
      add("conv" + std::to_string(i) + ".weight", {oc, prev, 3, 3}, prev * 9);
      add("conv" + std::to_string(i) + ".bias", {oc}, 0);
      prev = oc;
    }
    add("head.weight", {prev, cfg.classes}, prev);
    add("head.bias", {cfg.classes}, 0);
  }
  return segs;
}

int64_t param_count(const ModelConfig& cfg) {
  int64_t total = 0;
  for (const auto& s : param_layout(cfg)) total += s.count;
  return total;
}

}  // namespace cuelab::nn

namespace cuelab {

using nn::Arch;
using nn::ModelConfig;

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return {{"arch", cfg.arch == Arch::FFnet ? "ffnet" : "convnet"},
          {"widths", cfg.widths},
          {"resolution", cfg.resolution},
          {"in_channels", cfg.in_channels},
          {"classes", cfg.classes},
          {"skip_connections", cfg.skip_connections}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    std::string arch = j.at("arch").get<std::string>();
    if (arch != "ffnet" && arch != "convnet") throw UserError("arch must be ffnet or convnet");
    cfg.arch = arch == "ffnet" ? Arch::FFnet : Arch::Convnet;
    cfg.widths = j.at("widths").get<std::vector<int>>();
    cfg.resolution = j.at("resolution").get<int>();
    cfg.in_channels = j.value("in_channels", 3);
    cfg.classes = j.at("classes").get<int>();
    cfg.skip_connections = j.value("skip_connections", false);
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("bad model config json: ") + e.what());
  }
  return cfg;
}

namespace {

constexpr char kMagic[] = "CUELABCKPT v1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t at) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

uint64_t get_u64(const std::string& s, size_t at) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(s[at + i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["model"] = model_config_to_json(ckpt.config);
  header["meta"] = ckpt.meta;
  const std::string hs = header.dump();
  std::string out;
  out.reserve(kMagicLen + 12 + hs.size() + 4 * ckpt.params.size());
  out.append(kMagic, kMagicLen);
  put_u32(out, static_cast<uint32_t>(hs.size()));
  out += hs;
  put_u64(out, ckpt.params.size());
  for (float f : ckpt.params) {
    uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  if (s.size() < kMagicLen + 12 || std::memcmp(s.data(), kMagic, kMagicLen) != 0)
    throw UserError("not a checkpoint file (bad magic): " + path.string());
  size_t at = kMagicLen;
  const uint32_t hlen = get_u32(s, at);
  at += 4;
  if (s.size() < at + hlen + 8) throw UserError("truncated checkpoint: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(s.substr(at, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("bad checkpoint header: ") + e.what());
  }
  at += hlen;
  const uint64_t count = get_u64(s, at);
  at += 8;
  if (s.size() != at + 4 * count) throw UserError("checkpoint size mismatch: " + path.string());
  Checkpoint ckpt;
  ckpt.config = model_config_from_json(header.at("model"));
  ckpt.meta = header.value("meta", nlohmann::json::object());
  ckpt.params.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t bits = get_u32(s, at + 4 * i);
    std::memcpy(&ckpt.params[i], &bits, 4);
  }
  if (static_cast<int64_t>(count) != nn::param_count(ckpt.config))
    throw UserError("checkpoint parameter count does not match its model config");
  return ckpt;
}

nn::Model model_from_checkpoint(const Checkpoint& ckpt) {
  nn::Model m = nn::Model::create(ckpt.config, 0);
  m.flat = ckpt.params;
  return m;
}

}  // namespace cuelab
