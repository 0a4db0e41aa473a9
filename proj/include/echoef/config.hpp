#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "echoef/model.hpp"
#include "echoef/nn/optim.hpp"
#include "echoef/pseudolabels.hpp"

namespace echoef::config {

/// Flat `key = value` settings. Lines starting with '#' are comments.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw InvalidConfig(origin + ":" + std::to_string(lineno) + ": expected key = value");
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config " + path.string());
    return parse(in, path.string());
  }

  /// Applies a `key=value` override.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw InvalidConfig("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw InvalidConfig("empty config key");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Every setting consumed by the harness. Defaults depend on `profile`.
struct ExperimentConfig {
  // data
  std::string profile = "test";
  std::filesystem::path manifest = "data/manifest.json";
  std::filesystem::path data_dir = "data";
  std::size_t n_train = 200, n_val = 50, n_test = 50;
  std::uint64_t data_seed = 1;
  // model
  model::ModelConfig model;
  // training; the clip keeps summed-pixel aux gradients from blowing up early SGD steps
  OptimizerConfig optimizer{"sgd", 0.01, 0.9, 0.0, 5.0, 25, 0.1};
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  double beta = 0.01;
  loss::PixelReduction aux_reduction = loss::PixelReduction::Sum;
  std::size_t clip_stride = 2;
  std::size_t val_clips = 3;
  // evaluation
  std::size_t n_clips = 10;
  std::uint64_t eval_seed = 7;
  std::string split = "test";
  std::vector<double> noise_rates{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t noise_seed = 11;
  std::size_t cam_videos = 8;
  // teacher
  pseudo::TeacherConfig teacher;
  std::uint64_t teacher_seed = 3;
  std::filesystem::path teacher_checkpoint = "runs/teacher.ckpt";
  // outputs
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path checkpoint;  // defaults to out_dir/model.ckpt

  std::filesystem::path checkpoint_path() const { return checkpoint.empty() ? out_dir / "model.ckpt" : checkpoint; }

  KeyValues source;  // the settings this config was built from, for echoing
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = KeyValues::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidConfig("key '" + key + "': '" + v + "' is not a number");
  }
}

inline std::size_t to_size(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d)) throw InvalidConfig("key '" + key + "': '" + v + "' is not a non-negative integer");
  return static_cast<std::size_t>(d);
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(key, s));
  return out;
}

}  // namespace detail

inline const std::set<std::string>& anchor_only_keys() {
  static const std::set<std::string> keys{"anchors", "decode"};
  return keys;
}

/// Builds and validates an ExperimentConfig; unknown keys and invalid
/// combinations raise InvalidConfig naming the offending keys.
inline ExperimentConfig from_key_values(const KeyValues& kv) {
  using namespace detail;
  ExperimentConfig c;
  c.source = kv;
  const auto& v = kv.values();
  auto get = [&](const std::string& k) -> const std::string* {
    auto it = v.find(k);
    return it == v.end() ? nullptr : &it->second;
  };

  if (auto* p = get("profile")) c.profile = *p;
  if (c.profile == "test") {
    c.model.backbone = backbone::BackboneConfig::test_profile();
    c.model.image_height = c.model.image_width = 64;
    c.model.aspp_channels = 16;
    c.teacher.height = c.teacher.width = 64;
    c.epochs = 5;
  } else if (c.profile == "default") {
    c.model.backbone = backbone::BackboneConfig::default_profile();
    c.model.image_height = c.model.image_width = 112;
    c.model.aspp_channels = 32;
    c.teacher.height = c.teacher.width = 112;
    c.teacher.channels = {8, 16, 32, 32};
    c.epochs = 30;
  } else {
    throw InvalidConfig("profile must be 'test' or 'default'");
  }

  std::vector<std::string> unknown;
  for (const auto& [key, val] : v) {
    if (key == "profile") continue;
    else if (key == "manifest") c.manifest = val;
    else if (key == "data_dir") c.data_dir = val;
    else if (key == "n_train") c.n_train = to_size(key, val);
    else if (key == "n_val") c.n_val = to_size(key, val);
    else if (key == "n_test") c.n_test = to_size(key, val);
    else if (key == "data_seed") c.data_seed = to_size(key, val);
    else if (key == "ablation") c.model.ablation = model::parse_ablation(val);
    else if (key == "attention") c.model.attention = attention::parse_mode(val);
    else if (key == "stage_channels") c.model.backbone.stage_channels = to_sizes(key, val);
    else if (key == "temporal_strides") c.model.backbone.temporal_strides = to_sizes(key, val);
    else if (key == "spatial_strides") c.model.backbone.spatial_strides = to_sizes(key, val);
    else if (key == "reduction") c.model.backbone.reduction = to_size(key, val);
    else if (key == "pool_window") c.model.backbone.pool_window = static_cast<int>(to_size(key, val));
    else if (key == "anchors") c.model.anchors = to_size(key, val);
    else if (key == "decode") c.model.decode = head::parse_decode_mode(val);
    else if (key == "aspp_channels") c.model.aspp_channels = to_size(key, val);
    else if (key == "dilation_kernel") c.model.dilation_kernel = static_cast<int>(to_size(key, val));
    else if (key == "mask_threshold") c.model.mask_threshold = to_double(key, val);
    else if (key == "clip_frames") c.model.clip_frames = to_size(key, val);
    else if (key == "clip_stride") c.clip_stride = to_size(key, val);
    else if (key == "optimizer") c.optimizer.kind = val;
    else if (key == "lr") c.optimizer.lr = to_double(key, val);
    else if (key == "momentum") c.optimizer.momentum = to_double(key, val);
    else if (key == "weight_decay") c.optimizer.weight_decay = to_double(key, val);
    else if (key == "grad_clip") c.optimizer.grad_clip = to_double(key, val);
    else if (key == "lr_step_epochs") c.optimizer.step_epochs = to_size(key, val);
    else if (key == "lr_gamma") c.optimizer.gamma = to_double(key, val);
    else if (key == "epochs") c.epochs = to_size(key, val);
    else if (key == "batch_size") c.batch_size = to_size(key, val);
    else if (key == "seed") c.seed = to_size(key, val);
    else if (key == "beta") c.beta = to_double(key, val);
    else if (key == "aux_reduction") {
      if (val == "sum") c.aux_reduction = loss::PixelReduction::Sum;
      else if (val == "mean") c.aux_reduction = loss::PixelReduction::Mean;
      else throw InvalidConfig("aux_reduction must be sum or mean");
    } else if (key == "val_clips") c.val_clips = to_size(key, val);
    else if (key == "n_clips") c.n_clips = to_size(key, val);
    else if (key == "eval_seed") c.eval_seed = to_size(key, val);
    else if (key == "split") c.split = val;
    else if (key == "noise_rates") {
      c.noise_rates.clear();
      for (const auto& s : split_list(val)) c.noise_rates.push_back(to_double(key, s));
    } else if (key == "noise_seed") c.noise_seed = to_size(key, val);
    else if (key == "cam_videos") c.cam_videos = to_size(key, val);
    else if (key == "teacher_checkpoint") c.teacher_checkpoint = val;
    else if (key == "teacher_seed") c.teacher_seed = to_size(key, val);
    else if (key == "teacher_epochs") c.teacher.epochs = to_size(key, val);
    else if (key == "teacher_lr") c.teacher.optimizer.lr = to_double(key, val);
    else if (key == "teacher_batch") c.teacher.batch = to_size(key, val);
    else if (key == "teacher_channels") c.teacher.channels = to_sizes(key, val);
    else if (key == "out_dir") c.out_dir = val;
    else if (key == "checkpoint") c.checkpoint = val;
    else unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw InvalidConfig(msg);
  }

  std::vector<std::string> offending;
  if (c.model.ablation == model::Ablation::M0) {
    for (const auto& k : anchor_only_keys())
      if (kv.has(k)) offending.push_back(k);
  }
  if (c.model.ablation == model::Ablation::M3 && c.model.attention != attention::Mode::Tca) offending.push_back("attention");
  if (c.batch_size == 0) offending.push_back("batch_size");
  if (c.n_clips == 0) offending.push_back("n_clips");
  if (c.val_clips == 0) offending.push_back("val_clips");
  if (c.beta < 0) offending.push_back("beta");
  if (c.clip_stride == 0) offending.push_back("clip_stride");
  for (double r : c.noise_rates)
    if (!(r >= 0 && r <= 1)) {
      offending.push_back("noise_rates");
      break;
    }
  if (c.split != "train" && c.split != "val" && c.split != "test") offending.push_back("split");
  if (!offending.empty()) {
    std::string msg = "inconsistent config keys:";
    for (const auto& k : offending) msg += " " + k;
    throw InvalidConfig(msg);
  }
  c.teacher.height = c.model.image_height;
  c.teacher.width = c.model.image_width;
  c.model.validate();
  c.teacher.validate();
  return c;
}

}  // namespace echoef::config
