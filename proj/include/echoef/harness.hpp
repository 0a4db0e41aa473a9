#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "echoef/checkpoint.hpp"
#include "echoef/config.hpp"
#include "echoef/losses.hpp"
#include "echoef/metrics.hpp"
#include "echoef/model.hpp"
#include "echoef/nn/optim.hpp"
#include "echoef/pseudolabels.hpp"
#include "echoef/synthdata.hpp"
#include "json.hpp"

namespace echoef::harness {

using Scalar = float;
using config::ExperimentConfig;
using metrics::MetricReport;
using synth::Dataset;
using synth::DatasetEntry;
using synth::Split;

inline std::uint64_t video_seed(std::uint64_t base, std::size_t index) {
  return base * 1000003ULL + static_cast<std::uint64_t>(index) * 7919ULL + 17ULL;
}

inline Split split_from_name(const std::string& s) { return synth::parse_split(s); }

/// Builds the model described by the config, randomly initialized.
template <typename T = Scalar>
model::EfModel<T> build_model(const model::ModelConfig& cfg, std::uint64_t seed) {
  model::EfModel<T> m(cfg);
  Rng rng(seed);
  m.init(rng);
  return m;
}

struct ClipTarget {
  double ef = 0;
  const pseudo::PseudoLabelSet* pseudo = nullptr;
};

/// Per-clip objective and its gradients w.r.t. the model outputs.
template <typename T>
std::pair<loss::LossBundle, model::OutputGrad<T>> clip_objective(const model::ModelConfig& mc, const model::Output<T>& out,
                                                                  const ClipTarget& target, double beta,
                                                                  loss::PixelReduction reduction) {
  loss::LossBundle lb;
  lb.beta = beta;
  model::OutputGrad<T> g;
  if (mc.anchor_head()) {
    const head::AnchorCoding code = head::encode_label(target.ef, mc.anchors);
    const auto& a = *out.anchor;
    std::vector<T> g_cls, g_o, g_p;
    lb.l_cls = static_cast<double>(loss::cls_loss<T>(a.logits, code.u, &g_cls));
    lb.l_reg = static_cast<double>(loss::reg_loss<T>(a.o, code.v, a.p, &g_o, &g_p));
    const std::vector<T> g_from_p = softmax_backward<T>(a.p, g_p);
    g.logits.resize(g_cls.size());
    for (std::size_t m = 0; m < g_cls.size(); ++m) g.logits[m] = g_cls[m] + g_from_p[m];
    g.offsets = std::move(g_o);
  } else {
    // Squared error in EF fractions.
    const double e = (static_cast<double>(out.direct) - target.ef) / 100.0;
    lb.l_cls = e * e;
    g.direct = static_cast<T>(2.0 * e / 100.0);
  }
  lb.l_ef = lb.l_cls + lb.l_reg;
  if (mc.segmentation() && target.pseudo) {
    const auto& ps = *target.pseudo;
    auto aux = loss::aux_loss<T>(out.ed->logits.values(), out.es->logits.values(), ps.ed_mask, ps.es_mask,
                                 ps.alpha.alpha, reduction, true);
    lb.l_seg = static_cast<double>(aux.l_seg);
    lb.l_aux = static_cast<double>(aux.l_aux);
    for (auto& v : aux.g_ed) v *= static_cast<T>(beta);
    for (auto& v : aux.g_es) v *= static_cast<T>(beta);
    g.ed = Tensor<T>(out.ed->logits.shape(), std::move(aux.g_ed));
    g.es = Tensor<T>(out.es->logits.shape(), std::move(aux.g_es));
  }
  lb.total = loss::total_loss(lb.l_ef, lb.l_aux, beta);
  return {lb, std::move(g)};
}

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0, l_ef = 0, l_aux = 0;
  double val_mae = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0;
};

inline nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j = {{"mae", r.mae}, {"rmse", r.rmse}, {"n", r.n}};
  j["r2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
  return j;
}

struct RunRecord {
  std::string config_echo;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  std::size_t param_count = 0;
  std::map<std::string, MetricReport> reports;
  double wall_clock_seconds = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config_echo;
    j["seed"] = seed;
    j["param_count"] = param_count;
    j["best_epoch"] = best_epoch;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs) {
      nlohmann::json ej = {{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"l_ef", e.l_ef}, {"l_aux", e.l_aux},
                           {"seconds", e.seconds}};
      ej["val_mae"] = std::isfinite(e.val_mae) ? nlohmann::json(e.val_mae) : nlohmann::json(nullptr);
      j["epochs"].push_back(ej);
    }
    for (const auto& [k, r] : reports) j["metrics"][k] = report_json(r);
    return j;
  }
};

template <typename T>
struct Trained {
  model::EfModel<T> model;
  RunRecord record;
};

struct EvalRow {
  std::string video_id;
  double y_true = 0, y_pred = 0;
};

struct Evaluation {
  MetricReport report;
  std::vector<EvalRow> rows;
};

/// 10-clip (or n_clips) averaged prediction for every entry.
template <typename T>
Evaluation evaluate_entries(const model::EfModel<T>& m, const std::vector<const DatasetEntry*>& entries,
                            std::size_t n_clips, std::uint64_t seed) {
  if (entries.empty()) throw InvalidInput("evaluation split is empty");
  Evaluation ev;
  std::vector<double> yt, yp;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = *entries[i];
    const double pred = metrics::predict_video(m, e.video, n_clips, video_seed(seed, i));
    ev.rows.push_back({e.record.id(), e.video.ef, pred});
    yt.push_back(e.video.ef);
    yp.push_back(pred);
  }
  ev.report = metrics::compute_metrics(yt, yp);
  return ev;
}

/// Predicts the training-label mean for every entry.
inline Evaluation constant_mean_baseline(const Dataset& ds, const std::vector<const DatasetEntry*>& entries) {
  double mean = 0;
  const auto train = ds.split(Split::Train);
  if (train.empty()) throw InvalidInput("no training videos for the mean baseline");
  for (const auto* e : train) mean += e->video.ef;
  mean /= static_cast<double>(train.size());
  Evaluation ev;
  std::vector<double> yt, yp;
  for (const auto* e : entries) {
    ev.rows.push_back({e->record.id(), e->video.ef, mean});
    yt.push_back(e->video.ef);
    yp.push_back(mean);
  }
  ev.report = metrics::compute_metrics(yt, yp);
  return ev;
}

namespace detail {

inline void dump_nan(const std::filesystem::path& out_dir, const std::string& video, std::size_t clip_start,
                     const loss::LossBundle& lb, std::size_t epoch) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j = {{"video_id", video}, {"clip_start", clip_start}, {"epoch", epoch}, {"l_cls", lb.l_cls},
                      {"l_reg", lb.l_reg}, {"l_seg", lb.l_seg}, {"l_aux", lb.l_aux}};
  std::ofstream(out_dir / "nan_dump.json") << j.dump(1) << '\n';
}

inline bool loss_is_finite(const loss::LossBundle& lb) {
  return std::isfinite(lb.l_cls) && std::isfinite(lb.l_reg) && std::isfinite(lb.l_aux) && std::isfinite(lb.total);
}

}  // namespace detail

/// Mini-batch training with validation-selected checkpointing on MAE.
/// Deterministic for a fixed config in single-threaded mode.
template <typename T = Scalar>
Trained<T> train(const ExperimentConfig& cfg, const Dataset& ds) {
  const auto clock_start = std::chrono::steady_clock::now();
  const auto train_set = ds.split(Split::Train);
  const auto val_set = ds.split(Split::Val);
  if (train_set.empty()) throw InvalidInput("training split is empty");
  const bool seg = cfg.model.segmentation();
  if (seg) {
    for (const auto* e : train_set)
      if (!e->teacher_masks || !e->record.alpha) {
        throw InvalidConfig("M3 requires teacher masks and alpha for every training video (run pseudolabel): missing for " +
                            e->record.id());
      }
  }
  for (const auto* e : train_set)
    if (e->video.frames.height != cfg.model.image_height || e->video.frames.width != cfg.model.image_width) {
      throw InvalidConfig("dataset frame size does not match the model profile");
    }

  Rng rng(cfg.seed);
  Trained<T> run{model::EfModel<T>(cfg.model), {}};
  run.model.init(rng);
  ParamRefs<T> params = run.model.params();
  Optimizer<T> opt(cfg.optimizer, params);
  run.record.config_echo = cfg.source.dump();
  run.record.seed = cfg.seed;
  run.record.param_count = count_scalars(params);

  std::vector<Tensor<T>> best;
  double best_mae = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.lr = cfg.optimizer.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const DatasetEntry& e = *train_set[order[b]];
        const auto spec = synth::random_clip(e.video.frames.frames, cfg.model.clip_frames, cfg.clip_stride, rng);
        const auto idx = synth::clip_indices(e.video.frames.frames, spec);
        const model::FeatureMap<T> x = metrics::clip_tensor<T>(e.video.frames, idx);
        model::Cache<T> cache;
        const model::Output<T> out = run.model.forward(x, &cache);
        std::optional<pseudo::PseudoLabelSet> ps;
        if (seg) ps = pseudo::pseudo_for_clip(*e.teacher_masks, idx, *e.record.alpha);
        auto [lb, g] = clip_objective(cfg.model, out, ClipTarget{e.video.ef, ps ? &*ps : nullptr}, cfg.beta,
                                      cfg.aux_reduction);
        if (!detail::loss_is_finite(lb)) {
          detail::dump_nan(cfg.out_dir, e.record.id(), spec.start_offset, lb, epoch);
          throw RuntimeFailure("non-finite loss on " + e.record.id() + " (epoch " + std::to_string(epoch) +
                               "); diagnostics in nan_dump.json");
        }
        log.loss += lb.total;
        log.l_ef += lb.l_ef;
        log.l_aux += lb.l_aux;
        run.model.backward(cache, out.final_features.shape(), g);
      }
      opt.step(log.lr, static_cast<double>(end - start));
    }
    const double n = static_cast<double>(order.size());
    log.loss /= n;
    log.l_ef /= n;
    log.l_aux /= n;
    bool improved = true;
    if (!val_set.empty()) {
      log.val_mae = evaluate_entries(run.model, val_set, cfg.val_clips, cfg.eval_seed).report.mae;
      improved = log.val_mae < best_mae;
    }
    if (improved) {
      best_mae = std::isfinite(log.val_mae) ? log.val_mae : best_mae;
      best.clear();
      for (const auto* p : params) best.push_back(p->value);
      run.record.best_epoch = epoch;
    }
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log::info("epoch " + std::to_string(epoch) + " loss " + std::to_string(log.loss) + " l_ef " +
              std::to_string(log.l_ef) + " val_mae " + std::to_string(log.val_mae) + " (" +
              std::to_string(log.seconds) + " s)");
    run.record.epochs.push_back(log);
  }
  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  run.record.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  return run;
}

/// Evaluates on freshly degraded copies of `entries` at every noise rate.
template <typename T>
std::vector<std::pair<double, Evaluation>> robustness_sweep(const model::EfModel<T>& m,
                                                            const std::vector<const DatasetEntry*>& entries,
                                                            const ExperimentConfig& cfg) {
  std::vector<std::pair<double, Evaluation>> out;
  for (double rate : cfg.noise_rates) {
    std::vector<DatasetEntry> degraded;
    degraded.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      DatasetEntry d;
      d.record = entries[i]->record;
      d.video = synth::degrade(entries[i]->video, rate, video_seed(cfg.noise_seed, i));
      degraded.push_back(std::move(d));
    }
    std::vector<const DatasetEntry*> ptrs;
    for (const auto& d : degraded) ptrs.push_back(&d);
    out.emplace_back(rate, evaluate_entries(m, ptrs, cfg.n_clips, cfg.eval_seed));
  }
  return out;
}

struct AttentionRow {
  std::string attention;
  MetricReport report;
};

/// Trains one M2-style run per attention block with identical seeds and data.
inline std::vector<AttentionRow> compare_attention(const ExperimentConfig& base, const Dataset& ds) {
  std::vector<AttentionRow> rows;
  for (auto mode : {attention::Mode::Se, attention::Mode::Me, attention::Mode::Tca}) {
    ExperimentConfig c = base;
    c.model.ablation = model::Ablation::M2;
    c.model.attention = mode;
    c.model.validate();
    auto run = train<Scalar>(c, ds);
    rows.push_back({attention::mode_name(mode),
                    evaluate_entries(run.model, ds.split(split_from_name(c.split)), c.n_clips, c.eval_seed).report});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports.

inline std::string fmt(double v, int precision = 6) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline void write_metrics_csv(const std::filesystem::path& path, const Evaluation& ev) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "video_id,y_true,y_pred,abs_err\n";
  for (const auto& r : ev.rows)
    out << r.video_id << ',' << fmt(r.y_true) << ',' << fmt(r.y_pred) << ',' << fmt(std::abs(r.y_pred - r.y_true)) << '\n';
  out << "summary,mae=" << fmt(ev.report.mae) << ",rmse=" << fmt(ev.report.rmse) << ",r2=" << fmt(ev.report.r2_or_nan())
      << '\n';
}

inline void write_table_csv(const std::filesystem::path& path, const std::string& key_name,
                            const std::vector<std::pair<std::string, MetricReport>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << key_name << ",mae,rmse,r2\n";
  for (const auto& [k, r] : rows) out << k << ',' << fmt(r.mae) << ',' << fmt(r.rmse) << ',' << fmt(r.r2_or_nan()) << '\n';
}

struct SvgSeries {
  std::vector<double> x, y;
  bool line = false;
};

/// Minimal SVG chart with axes, ticks and optional y = x reference.
inline void write_svg_chart(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const SvgSeries& s, double xmin, double xmax, double ymin,
                            double ymax, bool diagonal) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  const double w = 480, h = 400, l = 60, r = 20, t = 40, b = 50;
  auto px = [&](double x) { return l + (x - xmin) / (xmax - xmin) * (w - l - r); };
  auto py = [&](double y) { return h - b - (y - ymin) / (ymax - ymin) * (h - t - b); };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  out << "<line x1=\"" << l << "\" y1=\"" << h - b << "\" x2=\"" << w - r << "\" y2=\"" << h - b << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << l << "\" y1=\"" << t << "\" x2=\"" << l << "\" y2=\"" << h - b << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5, yv = ymin + (ymax - ymin) * i / 5;
    out << "<text x=\"" << px(xv) << "\" y=\"" << h - b + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv, 2)
        << "</text>\n";
    out << "<text x=\"" << l - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv, 2)
        << "</text>\n";
  }
  out << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  out << "<text x=\"14\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " << h / 2
      << ")\">" << ylabel << "</text>\n";
  if (diagonal) {
    out << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(xmax) << "\" y2=\"" << py(ymax)
        << "\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n";
  }
  if (s.line && s.x.size() > 1) {
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    out << "\"/>\n";
  }
  for (std::size_t i = 0; i < s.x.size(); ++i)
    out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  out << "</svg>\n";
}

inline void write_scatter_svg(const std::filesystem::path& path, const Evaluation& ev) {
  SvgSeries s;
  for (const auto& r : ev.rows) {
    s.x.push_back(r.y_true);
    s.y.push_back(r.y_pred);
  }
  write_svg_chart(path, "Predicted vs true EF", "true EF (%)", "predicted EF (%)", s, 0, 100, 0, 100, true);
}

inline void write_robustness_svg(const std::filesystem::path& path,
                                 const std::vector<std::pair<double, Evaluation>>& sweep) {
  SvgSeries s;
  s.line = true;
  double ymax = 1;
  for (const auto& [rate, ev] : sweep) {
    s.x.push_back(rate * 100);
    s.y.push_back(ev.report.mae);
    ymax = std::max(ymax, ev.report.mae * 1.2);
  }
  write_svg_chart(path, "MAE under pixel-zeroing noise", "noise rate (%)", "MAE (EF points)", s, 0, 100, 0, ymax, false);
}

/// Binary PPM: grayscale frame with the CAM blended in as a red-yellow heat map.
inline void write_cam_overlay_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> frame,
                                  const Tensor<double>& cam, std::size_t h, std::size_t w) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    const double g = frame[i] / 255.0, c = cam[i];
    const double red = std::min(1.0, 2 * c), green = std::max(0.0, 2 * c - 1);
    const double a = 0.5 * c;
    const unsigned char px[3] = {static_cast<unsigned char>(std::lround(255 * ((1 - a) * g + a * red))),
                                 static_cast<unsigned char>(std::lround(255 * ((1 - a) * g + a * green))),
                                 static_cast<unsigned char>(std::lround(255 * ((1 - a) * g)))};
    out.write(reinterpret_cast<const char*>(px), 3);
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Teacher / pseudo-label stages.

inline std::vector<pseudo::SparseLabel> sparse_labels(const std::vector<const DatasetEntry*>& entries) {
  std::vector<pseudo::SparseLabel> out;
  for (const auto* e : entries) out.push_back(pseudo::SparseLabel::from_video(e->video));
  return out;
}

/// Mean per-frame Dice of teacher masks against generator masks.
template <typename T>
double teacher_dice(const pseudo::Teacher<T>& teacher, const std::vector<const DatasetEntry*>& entries,
                    std::size_t frame_step = 1) {
  double s = 0;
  std::size_t n = 0;
  for (const auto* e : entries) {
    std::vector<std::size_t> idx;
    for (std::size_t f = 0; f < e->video.frames.frames; f += frame_step) idx.push_back(f);
    const auto pred = pseudo::infer_masks(teacher, synth::gather_frames(e->video.frames, idx));
    const auto truth = synth::gather_frames(e->video.masks, idx);
    s += pseudo::mean_dice(pred, truth) * static_cast<double>(idx.size());
    n += idx.size();
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

/// Runs the teacher over every frame of the training videos, stores the
/// masks next to the videos and records teacher_mask_path and alpha in the manifest.
template <typename T>
void pseudolabel_dataset(const pseudo::Teacher<T>& teacher, Dataset& ds, const std::filesystem::path& manifest_path) {
  std::vector<synth::ManifestRecord> records;
  for (auto& e : ds.entries) {
    if (e.record.split == Split::Train) {
      const auto masks = pseudo::infer_masks(teacher, e.video.frames);
      const auto q = pseudo::quality_from_masks(e.video.masks.frame(e.video.ed_index), masks.frame(e.video.ed_index),
                                                e.video.masks.frame(e.video.es_index), masks.frame(e.video.es_index));
      const auto video_path = std::filesystem::path(e.record.video_path);
      const auto rel = (video_path.parent_path() / (video_path.stem().string() + ".teacher.emsk")).generic_string();
      synth::write_mask_file(ds.root / rel, masks);
      e.record.teacher_mask_path = rel;
      e.record.alpha = q.alpha;
      e.teacher_masks = masks;
    }
    records.push_back(e.record);
  }
  synth::write_manifest(manifest_path, records);
}

}  // namespace echoef::harness
