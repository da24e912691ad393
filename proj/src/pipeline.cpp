#include "resplat/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "resplat/attention_stats.hpp"
#include "resplat/metrics.hpp"

namespace resplat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Rethrows the same exception type with the failing stage's tag prefixed, so
// callers still see the right error category (and the CLI the right exit
// code) but know which stage died.
template <typename Fn>
auto stage(const std::string& tag, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("[" + tag + "] " + e.what());
  } catch (const StageError& e) {
    throw StageError("[" + tag + "] " + e.what());
  } catch (const NumericError& e) {
    throw NumericError("[" + tag + "] " + e.what());
  }
}

std::string sample_dir_name(size_t i) {
  std::ostringstream os;
  os << "sample_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

std::string slug(const std::string& label) {
  std::string out;
  bool last_dash = true;  // also swallows leading dashes
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      last_dash = false;
    } else if (!last_dash) {
      out.push_back('-');
      last_dash = true;
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "cell" : out;
}

}  // namespace

MaskMode mask_mode_from_string(const std::string& s) {
  if (s == "none-noncyclic") return MaskMode::kNoneNoncyclic;
  if (s == "none-cyclic") return MaskMode::kNoneCyclic;
  if (s == "masked-cyclic") return MaskMode::kMaskedCyclic;
  throw ConfigError("unknown mask mode '" + s +
                    "' (expected none-noncyclic, none-cyclic, or masked-cyclic)");
}

std::string to_string(MaskMode mode) {
  switch (mode) {
    case MaskMode::kNoneNoncyclic: return "none-noncyclic";
    case MaskMode::kNoneCyclic: return "none-cyclic";
    case MaskMode::kMaskedCyclic: return "masked-cyclic";
  }
  throw ConfigError("invalid mask mode value");
}

void PairedSample::validate() const {
  coarse.validate();
  truth.validate();
  reference.validate();
  if (!coarse.cyclic || !truth.cyclic)
    throw ConfigError("paired sample videos must be cyclic");
  if (coarse.n_frames() != truth.n_frames())
    throw ConfigError("paired sample coarse/truth frame counts differ");
  if (coarse.width() != truth.width() || coarse.height() != truth.height())
    throw ConfigError("paired sample coarse/truth resolutions differ");
  if (coarse.azimuths != truth.azimuths)
    throw ConfigError("paired sample coarse/truth azimuths differ");
  if (reference.empty()) throw ConfigError("paired sample reference is empty");
  if (ref_embedding.rows() == 0 || ref_embedding.cols() == 0)
    throw ConfigError("paired sample reference tokens are empty");
  if (!ref_embedding.allFinite())
    throw ConfigError("paired sample reference tokens are not finite");
  if (scene_id.empty()) throw ConfigError("paired sample has no scene id");
}

void RunConfig::validate() const {
  rig.validate();
  init.validate();
  coarse_fit.validate();
  refine_fit.validate();
  model.validate();
  if (alternations < 0)
    throw ConfigError("alternation count must be non-negative");
  if (sample_steps < 1) throw ConfigError("sampling needs at least one step");
}

RenderSettings pipeline_render_settings() {
  RenderSettings s;
  s.blend = BlendMode::FrontToBackAlpha;
  return s;
}

Video ring_video_16(const GaussianScene& scene, const RingRig& rig) {
  Video v = render_ring(scene, rig, pipeline_render_settings());
  v.quantize(16);  // before closing the cycle, so the copy stays bit-identical
  return make_cyclic(v);
}

std::vector<PairedSample> build_paired_dataset(
    const std::vector<SyntheticScene>& scenes, const RingRig& rig,
    const InitSpec& init, const FitConfig& fit_cfg) {
  if (scenes.empty())
    throw ConfigError("paired dataset needs at least one scene");
  rig.validate();
  init.validate();
  fit_cfg.validate();
  const RenderSettings settings = pipeline_render_settings();
  const CameraPose frontal = ring_pose_at(rig, 0.0);

  std::vector<PairedSample> out;
  out.reserve(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i) {
    const SyntheticScene& sc = scenes[i];
    sc.validate();
    PairedSample s;
    s.truth = stage("dataset/render-truth",
                    [&] { return ring_video_16(sc.truth, rig); });
    s.reference = s.truth.frames.front();

    InitSpec spec = init;
    spec.seed = derive_seed(init.seed, "init", i);
    GaussianScene coarse = stage("dataset/init", [&] {
      return init_scene_from_reference(s.reference, spec, frontal);
    });
    stage("dataset/coarse-fit", [&] {
      return fit_scene(&coarse, {frontal}, {s.reference}, settings, fit_cfg);
    });
    s.coarse = stage("dataset/render-coarse",
                     [&] { return ring_video_16(coarse, rig); });
    s.ref_embedding = reference_tokens(s.reference, kRefPatch);
    s.scene_id = sc.generator + "-" + std::to_string(sc.seed);
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::string& dir,
                  const std::vector<PairedSample>& data) {
  if (data.empty()) throw ConfigError("refusing to save an empty dataset");
  fs::create_directories(dir);
  for (size_t i = 0; i < data.size(); ++i) {
    const PairedSample& s = data[i];
    s.validate();
    const fs::path sd = fs::path(dir) / sample_dir_name(i);
    fs::create_directories(sd);
    save_video((sd / "coarse").string(), s.coarse, 16);
    save_video((sd / "truth").string(), s.truth, 16);
    write_png((sd / "reference.png").string(), s.reference, 16);
    json sj;
    sj["format"] = "paired-sample";
    sj["version"] = 1;
    sj["scene_id"] = s.scene_id;
    std::ofstream f(sd / "sample.json");
    if (!f) throw StageError("cannot write sample manifest in " + sd.string());
    f << sj.dump(2) << "\n";
  }
  json manifest;
  manifest["format"] = "paired-dataset";
  manifest["version"] = 1;
  manifest["n_samples"] = data.size();
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw StageError("cannot write dataset manifest in " + dir);
  f << manifest.dump(2) << "\n";
}

std::vector<PairedSample> load_dataset(const std::string& dir) {
  std::ifstream f(fs::path(dir) / "manifest.json");
  if (!f) throw StageError("missing dataset manifest in " + dir);
  json manifest;
  try {
    f >> manifest;
  } catch (const json::exception& e) {
    throw StageError("bad dataset manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format", "") != "paired-dataset")
    throw StageError("not a paired dataset directory: " + dir);
  const size_t n = manifest.at("n_samples").get<size_t>();
  if (n == 0) throw StageError("dataset manifest lists no samples: " + dir);

  std::vector<PairedSample> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const fs::path sd = fs::path(dir) / sample_dir_name(i);
    PairedSample s;
    s.coarse = load_video((sd / "coarse").string());
    s.truth = load_video((sd / "truth").string());
    s.reference = read_png((sd / "reference.png").string());
    s.ref_embedding = reference_tokens(s.reference, kRefPatch);
    std::ifstream sf(sd / "sample.json");
    if (!sf) throw StageError("missing sample manifest in " + sd.string());
    json sj;
    try {
      sf >> sj;
    } catch (const json::exception& e) {
      throw StageError("bad sample manifest in " + sd.string() + ": " +
                       e.what());
    }
    s.scene_id = sj.at("scene_id").get<std::string>();
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TrainingSample> to_training_samples(
    const std::vector<PairedSample>& data, MaskMode mode) {
  if (data.empty()) throw ConfigError("no paired samples to convert");
  std::vector<TrainingSample> out;
  out.reserve(data.size());
  for (const PairedSample& p : data) {
    p.validate();
    Video truth = p.truth;
    Video coarse = p.coarse;
    if (mode == MaskMode::kNoneNoncyclic) {
      truth = strip_cycle(truth);
      coarse = strip_cycle(coarse);
    }
    TrainingSample t;
    t.z_gt = video_to_latent(truth, kLatentPatch);
    t.z_c = video_to_latent(coarse, kLatentPatch);
    t.ref = p.ref_embedding;
    out.push_back(std::move(t));
  }
  return out;
}

Fixer make_model_fixer(const std::string& checkpoint_path,
                       const Image& reference, MaskMode mode, int sample_steps,
                       uint64_t seed) {
  if (checkpoint_path.empty())
    throw ConfigError("model fixer needs a checkpoint path");
  if (sample_steps < 1) throw ConfigError("sampling needs at least one step");
  reference.validate();
  auto model = std::make_shared<FixerModel>(FixerModel::load(checkpoint_path));
  const bool want_mask = (mode == MaskMode::kMaskedCyclic);
  if (model->config().use_mask != want_mask)
    throw ConfigError("checkpoint mask setting does not match mode '" +
                      to_string(mode) + "': " + checkpoint_path);
  const NoiseSchedule schedule = karras_schedule(sample_steps);
  return [model, reference, mode, schedule, seed](const Video& coarse) {
    if (!coarse.cyclic)
      throw StageError("model fixer expects a cyclic coarse video");
    if (mode == MaskMode::kNoneNoncyclic) {
      const Video stripped = strip_cycle(coarse);
      Video restored =
          restore_video(*model, stripped, reference, schedule, seed);
      return make_cyclic(restored);
    }
    return restore_video(*model, coarse, reference, schedule, seed);
  };
}

RunResult run_pipeline(const SyntheticScene& scene, const RunConfig& cfg,
                       const Fixer& fixer) {
  cfg.validate();
  scene.validate();
  if (!fixer) throw ConfigError("run_pipeline needs a fixer");
  const RenderSettings settings = pipeline_render_settings();
  const CameraPose frontal = ring_pose_at(cfg.rig, 0.0);
  const std::vector<CameraPose> poses = ring_poses(cfg.rig);

  RunResult res;
  const Video v_gt = stage("pipeline/render-truth",
                           [&] { return ring_video_16(scene.truth, cfg.rig); });
  const Image reference = v_gt.frames.front();

  GaussianScene current = stage("pipeline/init", [&] {
    return init_scene_from_reference(reference, cfg.init, frontal);
  });
  res.report.coarse_fit = stage("pipeline/coarse-fit", [&] {
    return fit_scene(&current, {frontal}, {reference}, settings,
                     cfg.coarse_fit);
  });
  res.coarse_video = stage("pipeline/render-coarse",
                           [&] { return ring_video_16(current, cfg.rig); });
  res.report.coarse_psnr = video_psnr(res.coarse_video, v_gt);
  res.restored_video = res.coarse_video;

  for (int a = 0; a < cfg.alternations; ++a) {
    const Video v_c = (a == 0) ? res.coarse_video
                               : stage("pipeline/render-ring", [&] {
                                   return ring_video_16(current, cfg.rig);
                                 });
    Video v_r = stage("pipeline/restore", [&] { return fixer(v_c); });
    if (!v_r.cyclic)
      throw StageError("[pipeline/restore] fixer returned a non-cyclic video");
    if (v_r.n_frames() != v_gt.n_frames() || v_r.width() != v_gt.width() ||
        v_r.height() != v_gt.height())
      throw StageError("[pipeline/restore] fixer changed the video shape");
    v_r.quantize(16);  // restored frames live on the same grid as the renders
    v_r.validate();
    res.restored_video = v_r;

    const Video targets = strip_cycle(v_r);
    res.report.refine_fit = stage("pipeline/refine-fit", [&] {
      return fit_scene(&current, poses, targets.frames, settings,
                       cfg.refine_fit);
    });
    const Video refined_ring = stage("pipeline/render-refined", [&] {
      return ring_video_16(current, cfg.rig);
    });
    res.report.refined_psnr_per_alternation.push_back(
        video_psnr(refined_ring, v_gt));
  }

  res.report.restored_psnr = (cfg.alternations > 0)
                                 ? video_psnr(res.restored_video, v_gt)
                                 : res.report.coarse_psnr;
  res.report.refined_psnr = cfg.alternations > 0
                                ? res.report.refined_psnr_per_alternation.back()
                                : res.report.coarse_psnr;
  res.refined = std::move(current);
  return res;
}

std::string AblationTable::csv() const {
  std::ostringstream os;
  os << "variant,psnr,ssim,corner_mass,max_entry,fully_masked_rows\n";
  os << std::fixed << std::setprecision(6);
  for (const AblationRow& r : rows) {
    os << r.label << "," << r.psnr << "," << r.ssim << "," << r.corner_mass
       << "," << r.max_entry << "," << r.fully_masked_rows << "\n";
  }
  return os.str();
}

std::string AblationTable::aligned_text() const {
  const std::vector<std::string> headers = {"variant",     "psnr",
                                            "ssim",        "corner_mass",
                                            "max_entry",   "masked_rows"};
  std::vector<std::vector<std::string>> cells;
  cells.push_back(headers);
  for (const AblationRow& r : rows) {
    std::ostringstream p, s, c, m;
    p << std::fixed << std::setprecision(2) << r.psnr;
    s << std::fixed << std::setprecision(4) << r.ssim;
    c << std::fixed << std::setprecision(4) << r.corner_mass;
    m << std::fixed << std::setprecision(4) << r.max_entry;
    cells.push_back({r.label, p.str(), s.str(), c.str(), m.str(),
                     std::to_string(r.fully_masked_rows)});
  }
  std::vector<size_t> width(headers.size(), 0);
  for (const auto& row : cells)
    for (size_t i = 0; i < row.size(); ++i)
      width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << "  ";
      os << row[i] << std::string(width[i] - row[i].size(), ' ');
    }
    os << "\n";
  }
  return os.str();
}

AblationTable run_ablation(const std::vector<PairedSample>& eval_set,
                           const std::vector<AblationCell>& cells,
                           int sample_steps, uint64_t seed,
                           const std::string& out_dir) {
  if (eval_set.empty()) throw ConfigError("ablation needs eval samples");
  if (cells.empty()) throw ConfigError("ablation needs at least one cell");
  if (sample_steps < 1) throw ConfigError("sampling needs at least one step");
  const NoiseSchedule schedule = karras_schedule(sample_steps);

  AblationTable table;
  for (size_t ci = 0; ci < cells.size(); ++ci) {
    const AblationCell& cell = cells[ci];
    if (cell.checkpoint.empty())
      throw ConfigError("ablation cell " + std::to_string(ci) +
                        " has no checkpoint");
    const FixerModel model = stage(
        "ablate/load", [&] { return FixerModel::load(cell.checkpoint); });
    const bool want_mask = (cell.mode == MaskMode::kMaskedCyclic);
    if (model.config().use_mask != want_mask)
      throw ConfigError("checkpoint mask setting does not match mode '" +
                        to_string(cell.mode) + "': " + cell.checkpoint);
    if (model.config().condition_on_coarse != cell.condition_on_coarse)
      throw ConfigError(
          "checkpoint coarse-conditioning does not match the ablation cell: " +
          cell.checkpoint);

    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (size_t si = 0; si < eval_set.size(); ++si) {
      const PairedSample& p = eval_set[si];
      p.validate();
      Video coarse = p.coarse;
      Video truth = p.truth;
      if (cell.mode == MaskMode::kNoneNoncyclic) {
        coarse = strip_cycle(coarse);
        truth = strip_cycle(truth);
      }
      const uint64_t s = derive_seed(seed, "ablate", ci * 10000 + si);
      Video restored = stage("ablate/restore", [&] {
        return restore_video(model, coarse, p.reference, schedule, s);
      });
      restored.quantize(16);
      psnr_sum += video_psnr(restored, truth);
      ssim_sum += video_ssim(restored, truth);
    }

    AttnSelectors sel;
    sel.sigma = 1.0;
    sel.seed = derive_seed(seed, "ablate-attn", ci);
    const AttnHeatmap hm = stage("ablate/attention", [&] {
      return attention_stats(model, eval_set, cell.mode, sel);
    });

    AblationRow row;
    row.label = to_string(cell.mode) +
                (cell.condition_on_coarse ? "" : " / no-coarse");
    row.psnr = psnr_sum / static_cast<double>(eval_set.size());
    row.ssim = ssim_sum / static_cast<double>(eval_set.size());
    row.corner_mass = attn_corner_mass(hm.mean);
    row.max_entry = attn_max_entry(hm.mean);
    row.fully_masked_rows = hm.fully_masked_rows;
    table.rows.push_back(row);

    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      const std::string stem = "attn_" + slug(row.label);
      save_heatmap_png((fs::path(out_dir) / (stem + ".png")).string(),
                       hm.mean);
      save_heatmap_csv((fs::path(out_dir) / (stem + ".csv")).string(),
                       hm.mean);
    }
  }
  return table;
}

}  // namespace resplat
