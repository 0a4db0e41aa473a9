#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "echoef/harness.hpp"

namespace fs = std::filesystem;
using namespace echoef;
using harness::Scalar;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

config::ExperimentConfig load_config(const Common& c) {
  config::KeyValues kv;
  if (!c.config_path.empty()) kv = config::KeyValues::load(c.config_path);
  for (const auto& o : c.overrides) kv.apply_override(o);
  return config::from_key_values(kv);
}

synth::GeneratorProfile generator_profile(const config::ExperimentConfig& cfg) {
  return cfg.profile == "default" ? synth::GeneratorProfile::default_profile() : synth::GeneratorProfile::test_profile();
}

void print_report(const std::string& label, const metrics::MetricReport& r) {
  std::cout << label << ": n=" << r.n << " MAE=" << harness::fmt(r.mae, 3) << " RMSE=" << harness::fmt(r.rmse, 3)
            << " R2=" << harness::fmt(r.r2_or_nan(), 3) << '\n';
}

int cmd_generate(const config::ExperimentConfig& cfg) {
  const auto videos = synth::generate_dataset(generator_profile(cfg), cfg.n_train, cfg.n_val, cfg.n_test, cfg.data_seed);
  synth::write_dataset(videos, cfg.manifest, cfg.data_dir);
  std::cout << "wrote " << videos.size() << " videos, manifest " << cfg.manifest.string() << '\n';
  return 0;
}

int cmd_train_teacher(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  pseudo::TeacherTrainLog log;
  auto teacher = pseudo::train_teacher<Scalar>(harness::sparse_labels(ds.split(synth::Split::Train)), cfg.teacher,
                                                cfg.teacher_seed, &log);
  checkpoint::save_teacher(cfg.teacher_checkpoint, teacher);
  const auto val = ds.split(synth::Split::Val);
  if (!val.empty()) std::cout << "teacher val Dice (all frames): " << harness::fmt(harness::teacher_dice(teacher, val), 4) << '\n';
  std::cout << "saved teacher to " << cfg.teacher_checkpoint.string() << '\n';
  return 0;
}

int cmd_pseudolabel(const config::ExperimentConfig& cfg) {
  auto ds = synth::read_dataset(cfg.manifest);
  const auto teacher = checkpoint::load_teacher<Scalar>(cfg.teacher_checkpoint, cfg.teacher);
  harness::pseudolabel_dataset(teacher, ds, cfg.manifest);
  double alpha = 0;
  std::size_t n = 0;
  for (const auto* e : ds.split(synth::Split::Train)) {
    alpha += *e->record.alpha;
    ++n;
  }
  std::cout << "pseudo-labelled " << n << " training videos, mean alpha " << harness::fmt(n ? alpha / n : 0, 4) << '\n';
  return 0;
}

void write_eval(const fs::path& dir, const std::string& tag, const harness::Evaluation& ev) {
  harness::write_metrics_csv(dir / (tag + "_metrics.csv"), ev);
  harness::write_scatter_svg(dir / (tag + "_scatter.svg"), ev);
}

int cmd_train(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  auto run = harness::train<Scalar>(cfg, ds);
  checkpoint::save_model(cfg.checkpoint_path(), run.model);
  const auto split = harness::split_from_name(cfg.split);
  const auto entries = ds.split(split);
  if (!entries.empty()) {
    const auto ev = harness::evaluate_entries(run.model, entries, cfg.n_clips, cfg.eval_seed);
    run.record.reports[cfg.split] = ev.report;
    write_eval(cfg.out_dir, cfg.split, ev);
    print_report(cfg.split, ev.report);
  }
  harness::write_json(cfg.out_dir / "run_record.json", run.record.to_json());
  std::cout << "saved model to " << cfg.checkpoint_path().string() << '\n';
  return 0;
}

int cmd_eval(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  const auto m = checkpoint::load_model<Scalar>(cfg.checkpoint_path(), cfg.model);
  const auto entries = ds.split(harness::split_from_name(cfg.split));
  const auto ev = harness::evaluate_entries(m, entries, cfg.n_clips, cfg.eval_seed);
  const auto base = harness::constant_mean_baseline(ds, entries);
  write_eval(cfg.out_dir, cfg.split, ev);
  print_report(cfg.split, ev.report);
  print_report("constant-mean baseline", base.report);
  return 0;
}

int cmd_robustness(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  const auto m = checkpoint::load_model<Scalar>(cfg.checkpoint_path(), cfg.model);
  const auto sweep = harness::robustness_sweep(m, ds.split(harness::split_from_name(cfg.split)), cfg);
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  for (const auto& [rate, ev] : sweep) {
    rows.emplace_back(harness::fmt(rate, 2), ev.report);
    print_report("noise " + harness::fmt(rate, 2), ev.report);
  }
  harness::write_table_csv(cfg.out_dir / "robustness.csv", "noise_rate", rows);
  harness::write_robustness_svg(cfg.out_dir / "robustness.svg", sweep);
  return 0;
}

int cmd_compare_attention(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  for (const auto& r : harness::compare_attention(cfg, ds)) {
    rows.emplace_back(r.attention, r.report);
    print_report(r.attention, r.report);
  }
  harness::write_table_csv(cfg.out_dir / "attention.csv", "attention", rows);
  return 0;
}

int cmd_cam(const config::ExperimentConfig& cfg) {
  const auto ds = synth::read_dataset(cfg.manifest);
  const auto m = checkpoint::load_model<Scalar>(cfg.checkpoint_path(), cfg.model);
  const auto entries = ds.split(harness::split_from_name(cfg.split));
  const fs::path dir = cfg.out_dir / "cam";
  fs::create_directories(dir);
  std::ofstream summary(dir / "cam_summary.csv");
  summary << "video_id,interval,inside_mean,outside_mean\n";
  const std::size_t n = std::min(cfg.cam_videos, entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = entries[i]->video;
    const auto idx = metrics::sample_clip_indices(v.frames.frames, {cfg.model.clip_frames, cfg.clip_stride}, 1,
                                                  harness::video_seed(cfg.eval_seed, i))
                         .front();
    const auto c = metrics::cam(m, metrics::clip_tensor<Scalar>(v.frames, idx));
    const auto mass = metrics::cam_mass(c, v.masks.frame(v.ed_index), v.frames.height, v.frames.width);
    const std::string id = entries[i]->record.id();
    harness::write_cam_overlay_ppm(dir / (id + ".ppm"), v.frames.frame(v.ed_index), c.map, v.frames.height,
                                   v.frames.width);
    summary << id << ',' << c.interval << ',' << harness::fmt(mass.inside_mean) << ',' << harness::fmt(mass.outside_mean)
            << '\n';
  }
  std::cout << "wrote " << n << " CAM overlays to " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic echocardiogram LVEF estimation"};
  app.require_subcommand(1);
  Common common;
  using Handler = int (*)(const config::ExperimentConfig&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"generate", "write a synthetic dataset and manifest", cmd_generate},
      {"train-teacher", "train the frame-level segmentation teacher", cmd_train_teacher},
      {"pseudolabel", "store teacher masks and quality weights for training videos", cmd_pseudolabel},
      {"train", "train an EF model and evaluate it", cmd_train},
      {"eval", "evaluate a saved model", cmd_eval},
      {"robustness", "evaluate under pixel-zeroing noise", cmd_robustness},
      {"compare-attention", "train SE, ME and TCA variants with the same seed", cmd_compare_attention},
      {"cam", "write class activation maps", cmd_cam},
  };
  Handler chosen = nullptr;
  for (const auto& [name, help, handler] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", common.config_path, "key = value config file");
    sub->add_option("-s,--set", common.overrides, "override a setting, key=value (repeatable)");
    sub->callback([&chosen, h = handler] { chosen = h; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    return chosen(load_config(common));
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return 3;
  }
}
