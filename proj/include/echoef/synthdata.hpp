#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "echoef/error.hpp"
#include "echoef/nn/param.hpp"
#include "json.hpp"

namespace echoef::synth {

/// F x H x W stack of 8-bit planes, frame-major then row-major.
struct FrameStack {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<std::uint8_t> data;

  FrameStack() = default;
  FrameStack(std::size_t f, std::size_t h, std::size_t w) : frames(f), height(h), width(w), data(f * h * w, 0) {}

  std::size_t plane() const { return height * width; }
  std::span<std::uint8_t> frame(std::size_t i) { return {data.data() + i * plane(), plane()}; }
  std::span<const std::uint8_t> frame(std::size_t i) const { return {data.data() + i * plane(), plane()}; }
  std::size_t count_nonzero(std::size_t i) const {
    const auto f = frame(i);
    return static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [](std::uint8_t v) { return v != 0; }));
  }
  friend bool operator==(const FrameStack&, const FrameStack&) = default;
};

struct SyntheticVideo {
  FrameStack frames;
  FrameStack masks;
  std::size_t ed_index = 0;
  std::size_t es_index = 0;
  double ef = 0;
  std::size_t period = 0;

  friend bool operator==(const SyntheticVideo&, const SyntheticVideo&) = default;
};

/// EF proxy from single-plane areas: 100 * (A_ed - A_es) / A_ed.
inline double ef_from_areas(double a_ed, double a_es) {
  if (!(a_ed > 0)) throw InvalidInput("end-diastolic area must be positive");
  if (a_es < 0 || a_es > a_ed) throw InvalidInput("end-systolic area must lie in [0, A_ed]");
  return 100.0 * (a_ed - a_es) / a_ed;
}

struct Blob {
  double cy = 0, cx = 0, radius = 0, intensity = 0;
};

/// Shape, motion and texture of one synthetic ventricle video.
struct VentricleParams {
  std::size_t height = 112, width = 112, frames = 112;
  double ef_target = 60;
  std::size_t period = 28;        // frames per cardiac cycle, even
  std::size_t phase_offset = 0;   // frame at which the first end-diastole occurs
  double center_y = 56, center_x = 56;
  double orientation = 0;         // radians, long axis from vertical
  double long_axis = 26, short_axis = 16;  // end-diastolic semi-axes, px
  double wall_thickness = 4;
  double cavity_intensity = 30, tissue_intensity = 100, wall_intensity = 190;
  double speckle = 0.15;          // multiplicative noise std
  std::vector<Blob> distractors;
};

/// Sampling ranges for random parameter draws, tied to an image size.
struct GeneratorProfile {
  std::size_t height = 112, width = 112, frames = 112;
  std::size_t min_period = 20, max_period = 32;
  double ef_min = 10, ef_max = 80;

  static GeneratorProfile default_profile() { return {}; }
  static GeneratorProfile test_profile() { return {64, 64, 80, 20, 32, 10, 80}; }
};

/// Cardiac phase in [0,1]: 0 at end-diastole, 1 at end-systole (raised cosine).
inline double cardiac_phase(std::size_t frame, std::size_t period, std::size_t offset) {
  const double cycle = static_cast<double>((frame + period - offset % period) % period) / static_cast<double>(period);
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * cycle));
}

/// Semi-axis scale factors at end-systole whose product is 1 - EF/100.
inline std::pair<double, double> systolic_axis_scales(double ef) {
  const double q = 1.0 - ef / 100.0;
  return {std::pow(q, 0.35), std::pow(q, 0.65)};
}

namespace detail {

inline double ellipse_level(double y, double x, double cy, double cx, double theta, double a, double b) {
  const double dy = y - cy, dx = x - cx;
  const double along = dy * std::cos(theta) + dx * std::sin(theta);
  const double across = -dy * std::sin(theta) + dx * std::cos(theta);
  return (along * along) / (a * a) + (across * across) / (b * b);
}

// Axis-aligned half extents of a rotated ellipse.
inline std::pair<double, double> ellipse_extent(double theta, double a, double b) {
  const double ey = std::sqrt(a * a * std::cos(theta) * std::cos(theta) + b * b * std::sin(theta) * std::sin(theta));
  const double ex = std::sqrt(a * a * std::sin(theta) * std::sin(theta) + b * b * std::cos(theta) * std::cos(theta));
  return {ey, ex};
}

}  // namespace detail

inline void validate(const VentricleParams& p) {
  if (p.height < 8 || p.width < 8 || p.frames < 2) throw InvalidInput("video geometry too small");
  if (!(p.ef_target >= 10.0 && p.ef_target <= 80.0)) {
    throw InvalidInput("EF target " + std::to_string(p.ef_target) + " outside [10,80]");
  }
  if (p.period < 2 || p.period % 2 != 0) throw InvalidInput("period must be an even number of frames >= 2");
  if (p.long_axis <= 0 || p.short_axis <= 0 || p.wall_thickness < 0) throw InvalidInput("axes must be positive");
  // End-diastole is the largest phase; the outer wall must stay inside the frame.
  const auto [ey, ex] =
      detail::ellipse_extent(p.orientation, p.long_axis + p.wall_thickness, p.short_axis + p.wall_thickness);
  if (p.center_y - ey < 0 || p.center_x - ex < 0 || p.center_y + ey > static_cast<double>(p.height - 1) ||
      p.center_x + ex > static_cast<double>(p.width - 1)) {
    throw InvalidInput("ventricle leaves the frame");
  }
}

/// Renders the video; deterministic for fixed (params, seed). The stored EF
/// is recomputed from the rasterized ED/ES mask areas.
inline SyntheticVideo generate_video(const VentricleParams& p, std::uint64_t seed) {
  validate(p);
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto [qa, qb] = systolic_axis_scales(p.ef_target);

  SyntheticVideo v;
  v.frames = FrameStack(p.frames, p.height, p.width);
  v.masks = FrameStack(p.frames, p.height, p.width);
  v.period = p.period;

  // Static background: tissue plus distractor blobs.
  std::vector<double> background(p.height * p.width, p.tissue_intensity);
  for (const Blob& b : p.distractors)
    for (std::size_t i = 0; i < p.height; ++i)
      for (std::size_t j = 0; j < p.width; ++j) {
        const double dy = static_cast<double>(i) - b.cy, dx = static_cast<double>(j) - b.cx;
        if (dy * dy + dx * dx <= b.radius * b.radius) background[i * p.width + j] = b.intensity;
      }

  std::vector<std::size_t> areas(p.frames);
  for (std::size_t f = 0; f < p.frames; ++f) {
    const double phase = cardiac_phase(f, p.period, p.phase_offset);
    const double a = p.long_axis * (1.0 - (1.0 - qa) * phase);
    const double b = p.short_axis * (1.0 - (1.0 - qb) * phase);
    const double aw = a + p.wall_thickness, bw = b + p.wall_thickness;
    auto pixels = v.frames.frame(f);
    auto mask = v.masks.frame(f);
    std::size_t area = 0;
    for (std::size_t i = 0; i < p.height; ++i)
      for (std::size_t j = 0; j < p.width; ++j) {
        const double y = static_cast<double>(i), x = static_cast<double>(j);
        double base = background[i * p.width + j];
        if (detail::ellipse_level(y, x, p.center_y, p.center_x, p.orientation, aw, bw) <= 1.0) base = p.wall_intensity;
        const bool inside = detail::ellipse_level(y, x, p.center_y, p.center_x, p.orientation, a, b) <= 1.0;
        if (inside) {
          base = p.cavity_intensity;
          ++area;
        }
        mask[i * p.width + j] = inside ? 1 : 0;
        const double value = base * (1.0 + p.speckle * noise(rng));
        pixels[i * p.width + j] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      }
    areas[f] = area;
  }
  v.ed_index = static_cast<std::size_t>(std::max_element(areas.begin(), areas.end()) - areas.begin());
  v.es_index = static_cast<std::size_t>(std::min_element(areas.begin(), areas.end()) - areas.begin());
  v.ef = ef_from_areas(static_cast<double>(areas[v.ed_index]), static_cast<double>(areas[v.es_index]));
  return v;
}

/// Random parameter set for `profile` with the given EF target.
inline VentricleParams sample_params(const GeneratorProfile& profile, double ef_target, Rng& rng) {
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double h = static_cast<double>(profile.height), w = static_cast<double>(profile.width);
  VentricleParams p;
  p.height = profile.height;
  p.width = profile.width;
  p.frames = profile.frames;
  p.ef_target = ef_target;
  const std::size_t half_periods = std::uniform_int_distribution<std::size_t>(profile.min_period / 2, profile.max_period / 2)(rng);
  p.period = 2 * half_periods;
  p.phase_offset = std::uniform_int_distribution<std::size_t>(0, p.period - 1)(rng);
  p.long_axis = uni(0.20, 0.27) * h;
  p.short_axis = p.long_axis * uni(0.55, 0.75);
  p.wall_thickness = uni(0.03, 0.05) * h;
  p.orientation = uni(-0.5, 0.5);
  const auto [ey, ex] = detail::ellipse_extent(p.orientation, p.long_axis + p.wall_thickness, p.short_axis + p.wall_thickness);
  p.center_y = uni(ey + 1.0, h - 2.0 - ey);
  p.center_x = uni(ex + 1.0, w - 2.0 - ex);
  p.cavity_intensity = uni(15, 45);
  p.tissue_intensity = uni(80, 120);
  p.wall_intensity = uni(160, 220);
  p.speckle = uni(0.10, 0.25);
  const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int k = 0, tries = 0; k < blobs && tries < 200; ++tries) {
    Blob b{uni(0, h - 1), uni(0, w - 1), uni(0.04, 0.10) * h, uni(0, 1) < 0.5 ? uni(15, 50) : uni(150, 230)};
    // Keep distractors clear of the ventricle wall at end-diastole.
    const double clearance = b.radius + 2.0;
    if (detail::ellipse_level(b.cy, b.cx, p.center_y, p.center_x, p.orientation, p.long_axis + p.wall_thickness + clearance,
                              p.short_axis + p.wall_thickness + clearance) <= 1.0) {
      continue;
    }
    p.distractors.push_back(b);
    ++k;
  }
  return p;
}

inline double sample_ef(const GeneratorProfile& profile, Rng& rng) {
  return std::uniform_real_distribution<double>(profile.ef_min, profile.ef_max)(rng);
}

/// Sets exactly round(rate * H * W) pixels of every frame to 0, chosen
/// uniformly without replacement and independently per frame.
inline SyntheticVideo degrade(const SyntheticVideo& video, double noise_rate, std::uint64_t seed) {
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw InvalidInput("noise_rate outside [0,1]");
  SyntheticVideo out = video;
  const std::size_t plane = video.frames.plane();
  const auto count = static_cast<std::size_t>(std::llround(noise_rate * static_cast<double>(plane)));
  if (count == 0) return out;
  Rng rng(seed);
  std::vector<std::size_t> idx(plane);
  for (std::size_t f = 0; f < video.frames.frames; ++f) {
    for (std::size_t i = 0; i < plane; ++i) idx[i] = i;
    auto frame = out.frames.frame(f);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(k, plane - 1)(rng);
      std::swap(idx[k], idx[j]);
      frame[idx[k]] = 0;
    }
  }
  return out;
}

struct ClipSpec {
  std::size_t num_frames = 32;
  std::size_t stride = 2;
  std::size_t start_offset = 0;

  std::size_t last_index() const { return start_offset + (num_frames - 1) * stride; }
};

inline std::vector<std::size_t> clip_indices(std::size_t video_frames, const ClipSpec& spec) {
  if (spec.num_frames == 0 || spec.stride == 0) throw InvalidInput("clip needs positive length and stride");
  if (spec.last_index() >= video_frames) {
    throw InvalidInput("video of " + std::to_string(video_frames) + " frames too short for clip ending at " +
                       std::to_string(spec.last_index()));
  }
  std::vector<std::size_t> idx(spec.num_frames);
  for (std::size_t k = 0; k < spec.num_frames; ++k) idx[k] = spec.start_offset + k * spec.stride;
  return idx;
}

/// Clip indices that repeat the last frame when the video is too short.
inline std::vector<std::size_t> clip_indices_padded(std::size_t video_frames, const ClipSpec& spec) {
  std::vector<std::size_t> idx(spec.num_frames);
  for (std::size_t k = 0; k < spec.num_frames; ++k) idx[k] = std::min(spec.start_offset + k * spec.stride, video_frames - 1);
  return idx;
}

inline std::size_t max_start_offset(std::size_t video_frames, std::size_t num_frames, std::size_t stride) {
  const std::size_t span = (num_frames - 1) * stride;
  if (span >= video_frames) throw InvalidInput("video too short for requested clip");
  return video_frames - 1 - span;
}

/// Clip with a start offset drawn uniformly from the valid range.
inline ClipSpec random_clip(std::size_t video_frames, std::size_t num_frames, std::size_t stride, Rng& rng) {
  const std::size_t hi = max_start_offset(video_frames, num_frames, stride);
  return {num_frames, stride, std::uniform_int_distribution<std::size_t>(0, hi)(rng)};
}

inline FrameStack gather_frames(const FrameStack& stack, const std::vector<std::size_t>& idx) {
  FrameStack out(idx.size(), stack.height, stack.width);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto src = stack.frame(idx[k]);
    std::copy(src.begin(), src.end(), out.frame(k).begin());
  }
  return out;
}

inline FrameStack sample_clip(const SyntheticVideo& video, const ClipSpec& spec) {
  return gather_frames(video.frames, clip_indices(video.frames.frames, spec));
}

/// Seed-driven start offset; spec.start_offset is ignored.
inline FrameStack sample_clip(const SyntheticVideo& video, ClipSpec spec, std::uint64_t seed) {
  Rng rng(seed);
  spec = random_clip(video.frames.frames, spec.num_frames, spec.stride, rng);
  return sample_clip(video, spec);
}

// ---------------------------------------------------------------------------
// On-disk formats.

inline constexpr char kVideoMagic[4] = {'E', 'V', 'I', 'D'};
inline constexpr char kMaskMagic[4] = {'E', 'M', 'S', 'K'};

namespace detail {

inline void put_u32(std::vector<char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::vector<char>& buf, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
  return v;
}

inline std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_all(const std::filesystem::path& path, const std::vector<char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw RuntimeFailure("short write to " + path.string());
}

}  // namespace detail

inline std::vector<char> encode_stack(const FrameStack& s, const char (&magic)[4]) {
  std::vector<char> buf(magic, magic + 4);
  detail::put_u32(buf, static_cast<std::uint32_t>(s.frames));
  detail::put_u32(buf, static_cast<std::uint32_t>(s.height));
  detail::put_u32(buf, static_cast<std::uint32_t>(s.width));
  buf.insert(buf.end(), s.data.begin(), s.data.end());
  return buf;
}

/// Parses an EVID/EMSK byte image. Mask payloads must be 0/1.
inline FrameStack decode_stack(const std::vector<char>& buf, const char (&magic)[4]) {
  if (buf.size() < 4) throw FormatError("file shorter than magic", buf.size());
  if (std::memcmp(buf.data(), magic, 4) != 0) throw FormatError(std::string("bad magic, expected ") + std::string(magic, 4), 0);
  if (buf.size() < 16) throw FormatError("truncated header", buf.size());
  FrameStack s;
  s.frames = detail::get_u32(buf, 4);
  s.height = detail::get_u32(buf, 8);
  s.width = detail::get_u32(buf, 12);
  if (s.frames == 0) throw FormatError("zero frame count", 4);
  if (s.height == 0) throw FormatError("zero height", 8);
  if (s.width == 0) throw FormatError("zero width", 12);
  const std::size_t payload = s.frames * s.height * s.width;
  if (buf.size() < 16 + payload) throw FormatError("truncated payload", buf.size());
  if (buf.size() > 16 + payload) throw FormatError("trailing bytes after payload", 16 + payload);
  s.data.assign(reinterpret_cast<const std::uint8_t*>(buf.data()) + 16,
                reinterpret_cast<const std::uint8_t*>(buf.data()) + 16 + payload);
  if (std::memcmp(magic, kMaskMagic, 4) == 0) {
    for (std::size_t i = 0; i < payload; ++i)
      if (s.data[i] > 1) throw FormatError("mask value outside {0,1}", 16 + i);
  }
  return s;
}

inline void write_video_file(const std::filesystem::path& p, const FrameStack& s) {
  detail::write_all(p, encode_stack(s, kVideoMagic));
}
inline void write_mask_file(const std::filesystem::path& p, const FrameStack& s) {
  detail::write_all(p, encode_stack(s, kMaskMagic));
}
inline FrameStack read_video_file(const std::filesystem::path& p) { return decode_stack(detail::read_all(p), kVideoMagic); }
inline FrameStack read_mask_file(const std::filesystem::path& p) { return decode_stack(detail::read_all(p), kMaskMagic); }

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidInput("unknown split '" + s + "'");
}

/// One manifest record. Paths are relative to the manifest's directory.
struct ManifestRecord {
  std::string video_path;
  std::string mask_path;
  double ef = 0;
  std::size_t ed_index = 0;
  std::size_t es_index = 0;
  Split split = Split::Train;
  std::optional<double> alpha;
  std::optional<std::string> teacher_mask_path;

  std::string id() const { return std::filesystem::path(video_path).stem().string(); }
};

struct DatasetEntry {
  ManifestRecord record;
  SyntheticVideo video;
  std::optional<FrameStack> teacher_masks;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;

  std::vector<const DatasetEntry*> split(Split s) const {
    std::vector<const DatasetEntry*> out;
    for (const auto& e : entries)
      if (e.record.split == s) out.push_back(&e);
    return out;
  }
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j = {{"video_path", r.video_path}, {"mask_path", r.mask_path}, {"ef", r.ef},
                      {"ed_index", r.ed_index},     {"es_index", r.es_index},   {"split", split_name(r.split)}};
  if (r.alpha) j["alpha"] = *r.alpha;
  if (r.teacher_mask_path) j["teacher_mask_path"] = *r.teacher_mask_path;
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  try {
    r.video_path = j.at("video_path").get<std::string>();
    r.mask_path = j.at("mask_path").get<std::string>();
    r.ef = j.at("ef").get<double>();
    r.ed_index = j.at("ed_index").get<std::size_t>();
    r.es_index = j.at("es_index").get<std::size_t>();
    r.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
    if (j.contains("teacher_mask_path")) r.teacher_mask_path = j.at("teacher_mask_path").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest record: ") + e.what(), 0);
  }
  return r;
}

inline void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + manifest.string());
  out << arr.dump(1) << '\n';
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw RuntimeFailure("cannot open " + manifest.string());
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  if (!arr.is_array()) throw FormatError("manifest must be a JSON array", 0);
  std::vector<ManifestRecord> out;
  for (const auto& j : arr) out.push_back(record_from_json(j));
  return out;
}

struct NamedVideo {
  std::string id;
  SyntheticVideo video;
  Split split = Split::Train;
};

/// Writes <id>.evid / <id>.emsk under `dir` and a manifest referencing them.
inline std::vector<ManifestRecord> write_dataset(const std::vector<NamedVideo>& videos,
                                                 const std::filesystem::path& manifest_path,
                                                 const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (manifest_path.has_parent_path()) std::filesystem::create_directories(manifest_path.parent_path());
  const auto base = manifest_path.has_parent_path() ? manifest_path.parent_path() : std::filesystem::path(".");
  std::vector<ManifestRecord> records;
  for (const auto& nv : videos) {
    const auto vp = dir / (nv.id + ".evid");
    const auto mp = dir / (nv.id + ".emsk");
    write_video_file(vp, nv.video.frames);
    write_mask_file(mp, nv.video.masks);
    ManifestRecord r;
    r.video_path = std::filesystem::relative(vp, base).generic_string();
    r.mask_path = std::filesystem::relative(mp, base).generic_string();
    r.ef = nv.video.ef;
    r.ed_index = nv.video.ed_index;
    r.es_index = nv.video.es_index;
    r.split = nv.split;
    records.push_back(r);
  }
  write_manifest(manifest_path, records);
  return records;
}

inline Dataset read_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.root = manifest_path.has_parent_path() ? manifest_path.parent_path() : std::filesystem::path(".");
  for (auto& r : read_manifest(manifest_path)) {
    DatasetEntry e;
    e.video.frames = read_video_file(ds.root / r.video_path);
    e.video.masks = read_mask_file(ds.root / r.mask_path);
    const auto& f = e.video.frames;
    const auto& m = e.video.masks;
    if (f.frames != m.frames || f.height != m.height || f.width != m.width) {
      throw FormatError("video and mask dimensions differ for " + r.video_path, 4);
    }
    if (r.ed_index >= f.frames || r.es_index >= f.frames) throw FormatError("ED/ES index out of range in manifest", 0);
    e.video.ed_index = r.ed_index;
    e.video.es_index = r.es_index;
    e.video.ef = r.ef;
    if (r.teacher_mask_path) e.teacher_masks = read_mask_file(ds.root / *r.teacher_mask_path);
    e.record = std::move(r);
    ds.entries.push_back(std::move(e));
  }
  return ds;
}

/// Generates a split dataset with EF targets uniform on the profile range.
inline std::vector<NamedVideo> generate_dataset(const GeneratorProfile& profile, std::size_t n_train, std::size_t n_val,
                                                std::size_t n_test, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<NamedVideo> out;
  const std::size_t total = n_train + n_val + n_test;
  for (std::size_t i = 0; i < total; ++i) {
    const Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    const double ef = sample_ef(profile, rng);
    const VentricleParams params = sample_params(profile, ef, rng);
    char id[32];
    std::snprintf(id, sizeof id, "video_%05zu", i);
    out.push_back({id, generate_video(params, rng()), split});
  }
  return out;
}

}  // namespace echoef::synth
