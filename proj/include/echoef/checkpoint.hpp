#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "echoef/config.hpp"
#include "echoef/model.hpp"
#include "echoef/pseudolabels.hpp"
#include "json.hpp"

namespace echoef::checkpoint {

// Container layout: "ECKP", u32 version, u64 header length, JSON header
// {kind, config, tensors:[{name, shape}]}, then every tensor as
// little-endian float64 in header order.
inline constexpr char kMagic[4] = {'E', 'C', 'K', 'P'};
inline constexpr std::uint32_t kVersion = 1;

inline nlohmann::json model_config_json(const model::ModelConfig& m) {
  const auto b = m.resolved_backbone();
  std::vector<std::string> modes;
  for (auto a : b.attention) modes.push_back(attention::mode_name(a));
  return {{"ablation", model::ablation_name(m.ablation)},
          {"attention", attention::mode_name(m.attention)},
          {"stage_channels", b.stage_channels},
          {"temporal_strides", b.temporal_strides},
          {"spatial_strides", b.spatial_strides},
          {"stage_attention", modes},
          {"reduction", b.reduction},
          {"pool_window", b.pool_window},
          {"image_height", m.image_height},
          {"image_width", m.image_width},
          {"clip_frames", m.clip_frames},
          {"anchors", m.anchors},
          {"aspp_channels", m.aspp_channels},
          {"dilation_kernel", m.dilation_kernel},
          {"mask_threshold", m.mask_threshold}};
}

inline nlohmann::json teacher_config_json(const pseudo::TeacherConfig& t) {
  return {{"height", t.height}, {"width", t.width}, {"channels", t.channels}};
}

template <typename T>
void save(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
          const ParamRefs<T>& params) {
  nlohmann::json header = {{"kind", kind}, {"config", config}, {"tensors", nlohmann::json::array()}};
  for (const auto* p : params) header["tensors"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
  const std::string h = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  auto put = [&](auto v) {
    unsigned char b[sizeof v];
    for (std::size_t i = 0; i < sizeof v; ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), sizeof v);
  };
  put(kVersion);
  put(static_cast<std::uint64_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto* p : params)
    for (T v : p->value.values()) {
      const double d = static_cast<double>(v);
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      put(bits);
    }
  if (!out) throw RuntimeFailure("short write to checkpoint " + path.string());
}

/// Loads tensors into `params`, refusing a kind/config/tensor-list mismatch.
template <typename T>
void load(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& config,
          const ParamRefs<T>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open checkpoint " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  auto need = [&](std::size_t n, const char* what) {
    if (off + n > buf.size()) throw FormatError(std::string("checkpoint truncated in ") + what, off);
  };
  auto get = [&](std::size_t n) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    off += n;
    return v;
  };
  need(4, "magic");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)", 0);
  off = 4;
  need(12, "header");
  const auto version = static_cast<std::uint32_t>(get(4));
  if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::size_t hlen = get(8);
  need(hlen, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.begin() + static_cast<long>(off), buf.begin() + static_cast<long>(off + hlen));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("bad checkpoint header: ") + e.what(), off);
  }
  off += hlen;
  if (header.value("kind", "") != kind) throw InvalidConfig("checkpoint holds a '" + header.value("kind", "") + "', expected '" + kind + "'");
  if (header["config"] != config) {
    throw InvalidConfig("checkpoint config does not match: stored " + header["config"].dump() + " vs requested " + config.dump());
  }
  const auto& tensors = header["tensors"];
  if (tensors.size() != params.size()) throw InvalidConfig("checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (tensors[i]["name"] != params[i]->name || tensors[i]["shape"].get<Shape>() != params[i]->value.shape()) {
      throw InvalidConfig("checkpoint tensor " + tensors[i]["name"].get<std::string>() + " does not match " + params[i]->name);
    }
  }
  for (auto* p : params) {
    need(8 * p->value.size(), "tensor data");
    for (auto& v : p->value.values()) {
      const std::uint64_t bits = get(8);
      double d;
      std::memcpy(&d, &bits, 8);
      v = static_cast<T>(d);
    }
  }
  if (off != buf.size()) throw FormatError("trailing bytes in checkpoint", off);
}

template <typename T>
void save_model(const std::filesystem::path& path, model::EfModel<T>& m) {
  save(path, "ef_model", model_config_json(m.config()), m.params());
}

template <typename T>
model::EfModel<T> load_model(const std::filesystem::path& path, const model::ModelConfig& cfg) {
  model::EfModel<T> m(cfg);
  load(path, "ef_model", model_config_json(cfg), m.params());
  return m;
}

template <typename T>
void save_teacher(const std::filesystem::path& path, pseudo::Teacher<T>& t) {
  ParamRefs<T> p;
  t.collect(p);
  save(path, "teacher", teacher_config_json(t.config()), p);
}

template <typename T>
pseudo::Teacher<T> load_teacher(const std::filesystem::path& path, const pseudo::TeacherConfig& cfg) {
  pseudo::Teacher<T> t(cfg);
  ParamRefs<T> p;
  t.collect(p);
  load(path, "teacher", teacher_config_json(cfg), p);
  return t;
}

}  // namespace echoef::checkpoint
