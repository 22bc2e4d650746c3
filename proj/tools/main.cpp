// lomae: desk-scale low-dose CT denoising lab.
// Simulation, masked self-pretraining, finetuning, evaluation, dose and
// label-budget sweeps, plus the interpretability tools.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "lomae/config.hpp"
#include "lomae/experiments.hpp"
#include "lomae/interpret.hpp"
#include "lomae/rng.hpp"

namespace fs = std::filesystem;
using namespace lomae;

namespace {

struct GlobalOpts {
  std::string config_path;
  int64_t seed = -1;  // -1: use config / default
  std::string out_dir = ".";

  FlatConfig config() const {
    FlatConfig cfg = config_path.empty() ? FlatConfig{} : FlatConfig::load(config_path);
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    return cfg;
  }
  uint64_t resolved_seed(const FlatConfig& cfg) const {
    return static_cast<uint64_t>(cfg.get_int("seed", 0));
  }
};

void ensure_out(const std::string& dir) { fs::create_directories(dir); }

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write: " + path);
  out << text;
}

std::string dose_tag(double I0) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", I0);
  return buf;
}

data::PairPool load_pool(const std::string& manifest_path) {
  const auto manifest = data::Manifest::load(manifest_path);
  const std::string dir = fs::path(manifest_path).parent_path().string();
  return data::PairPool(data::load_pairs(manifest, dir.empty() ? "." : dir));
}

std::vector<data::SlicePair> load_pairs_vec(const std::string& manifest_path) {
  const auto manifest = data::Manifest::load(manifest_path);
  const std::string dir = fs::path(manifest_path).parent_path().string();
  return data::load_pairs(manifest, dir.empty() ? "." : dir);
}

// first k patient ids in sorted order; 0 means all
data::PairPool labeled_subset(const data::PairPool& pool, int labeled_k) {
  if (labeled_k <= 0) return pool;
  std::set<std::string> ids;
  for (int64_t i = 0; i < pool.size(); ++i) ids.insert(pool.meta(i).patient_id);
  if (labeled_k > static_cast<int>(ids.size()))
    throw std::invalid_argument("labeled_patients exceeds the available " +
                                std::to_string(ids.size()) + " patients");
  std::vector<std::string> keep(ids.begin(), std::next(ids.begin(), labeled_k));
  return pool.filter_patients(keep);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const GlobalOpts& g, const std::string& phantom_kind, int n, int views,
                 const std::vector<double>& doses, int patients, int slices, double pitch_div,
                 const std::string& filter_name) {
  const FlatConfig cfg = g.config();
  const uint64_t seed = g.resolved_seed(cfg);
  ensure_out(g.out_dir);

  tomo::SimOptions opt;
  opt.geometry.n_views = views;
  if (pitch_div > 0.0)
    opt.geometry.detector_pitch_mm = tomo::pixel_size_for_grid(n) / pitch_div;
  opt.filter = tomo::fbp_filter_from_string(filter_name);

  data::Manifest manifest;
  {
    std::ostringstream geo;
    geo << "parallel views=" << views << " pixel_mm=" << tomo::pixel_size_for_grid(n)
        << " pitch_div=" << (pitch_div > 0 ? pitch_div : 1.0)
        << " mu_per_mm=" << opt.geometry.mu_per_unit_mm << " filter=" << filter_name;
    manifest.geometry = geo.str();
  }

  const auto kind = tomo::phantom_kind_from_string(phantom_kind);
  for (int p = 0; p < patients; ++p) {
    char pid[8];
    std::snprintf(pid, sizeof(pid), "P%02d", p);
    for (int s = 0; s < slices; ++s) {
      const uint64_t phantom_seed =
          derive_seed(seed, 0x51aull + static_cast<uint64_t>(p) * 1024 + static_cast<uint64_t>(s));
      const tomo::Phantom phantom = tomo::make_phantom(kind, n, phantom_seed);
      std::vector<uint64_t> noise_seeds;
      for (size_t d = 0; d < doses.size(); ++d)
        noise_seeds.push_back(derive_seed(
            seed, 0x70158ull + (static_cast<uint64_t>(p) * slices + s) * 64 + d));
      const auto series = tomo::make_dose_series(phantom, doses, noise_seeds, opt);
      for (size_t d = 0; d < series.size(); ++d) {
        std::ostringstream base;
        base << pid << "_s" << s << "_d" << dose_tag(doses[d]);
        const std::string noisy_name = base.str() + "_noisy.f32";
        const std::string clean_name = base.str() + "_clean.f32";
        write_tensor_f32((fs::path(g.out_dir) / noisy_name).string(), series[d].noisy);
        write_tensor_f32((fs::path(g.out_dir) / clean_name).string(), series[d].clean);
        manifest.records.push_back(
            {pid, s, dose_tag(doses[d]), noise_seeds[d], noisy_name, clean_name});
      }
    }
  }
  const std::string manifest_path = (fs::path(g.out_dir) / "manifest.tsv").string();
  manifest.save(manifest_path);
  std::cout << "wrote " << manifest.records.size() << " pairs to " << g.out_dir << "\n";
  return 0;
}

int cmd_ingest(const GlobalOpts& g, const std::string& manifest_path,
               const std::vector<double>& window, int resize_to, bool augment_all) {
  ensure_out(g.out_dir);
  const auto manifest = data::Manifest::load(manifest_path);
  const std::string src_dir = fs::path(manifest_path).parent_path().string();
  auto pairs = data::load_pairs(manifest, src_dir.empty() ? "." : src_dir);

  data::Manifest out_manifest;
  out_manifest.geometry = manifest.geometry;
  int written = 0;
  for (auto& pair : pairs) {
    if (window.size() == 2) {
      pair.noisy = data::normalize_window(pair.noisy, window[0], window[1]);
      pair.clean = data::normalize_window(pair.clean, window[0], window[1]);
    }
    if (resize_to > 0) {
      pair.noisy = data::resize_area(pair.noisy, resize_to);
      pair.clean = data::resize_area(pair.clean, resize_to);
    }
    const auto ops = augment_all ? data::all_augment_ops()
                                 : std::vector<data::AugmentOp>{data::AugmentOp::none};
    for (size_t oi = 0; oi < ops.size(); ++oi) {
      const data::SlicePair aug = data::augment(pair, ops[oi]);
      std::ostringstream base;
      base << pair.patient_id << "_s" << pair.slice_index << "_" << data::augment_name(ops[oi]);
      const std::string noisy_name = base.str() + "_noisy.f32";
      const std::string clean_name = base.str() + "_clean.f32";
      write_tensor_f32((fs::path(g.out_dir) / noisy_name).string(), aug.noisy);
      write_tensor_f32((fs::path(g.out_dir) / clean_name).string(), aug.clean);
      const int slice_id = pair.slice_index * static_cast<int>(ops.size()) + static_cast<int>(oi);
      out_manifest.records.push_back(
          {pair.patient_id, slice_id, pair.dose_tag, pair.seed, noisy_name, clean_name});
      ++written;
    }
  }
  out_manifest.save((fs::path(g.out_dir) / "manifest.tsv").string());
  std::cout << "ingested " << written << " pairs into " << g.out_dir << "\n";
  return 0;
}

int cmd_pretrain(const GlobalOpts& g, const std::string& manifest_path) {
  const FlatConfig cfg = g.config();
  ensure_out(g.out_dir);
  models::ModelConfig model_cfg = models::model_config_from_flat(cfg);
  model_cfg.use_front_to_end_shortcut = false;  // removed during self-pretraining
  train::TrainConfig train_cfg = train::train_config_from_flat(cfg);
  train_cfg.loss_csv_path = (fs::path(g.out_dir) / "pretrain_loss.csv").string();

  auto pool = load_pool(manifest_path);
  models::Model model(model_cfg, derive_seed(train_cfg.seed, 0x1417ull));
  const auto result = train::pretrain(model, pool, train_cfg);

  const std::string ckpt_path = (fs::path(g.out_dir) / "pretrained.ckpt").string();
  result.checkpoint.save(ckpt_path);
  std::cout << "pretrained on " << pool.size() << " noisy slices (" << result.curve.size()
            << " iterations)\n"
            << "clean reads during pretraining: " << result.audit.clean_reads << "\n"
            << "checkpoint: " << ckpt_path << "\n";
  return 0;
}

int cmd_finetune(const GlobalOpts& g, const std::string& manifest_path,
                 const std::string& ckpt_path) {
  const FlatConfig cfg = g.config();
  ensure_out(g.out_dir);
  train::TrainConfig train_cfg = train::train_config_from_flat(cfg);
  train_cfg.loss_csv_path = (fs::path(g.out_dir) / "finetune_loss.csv").string();
  const int labeled_k = static_cast<int>(cfg.get_int("labeled_patients", 0));

  const auto ckpt = models::Checkpoint::load(ckpt_path);
  auto pool = labeled_subset(load_pool(manifest_path), labeled_k);
  const auto result = train::finetune(ckpt, pool, train_cfg);

  const std::string out_path = (fs::path(g.out_dir) / "finetuned.ckpt").string();
  result.checkpoint.save(out_path);
  std::cout << "finetuned on " << pool.size() << " labeled pairs (" << result.curve.size()
            << " iterations, masks built: " << result.audit.masks_built
            << ")\ncheckpoint: " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const GlobalOpts& g, const std::string& manifest_path,
                 const std::string& ckpt_path, double rmse_scale) {
  ensure_out(g.out_dir);
  const auto ckpt = models::Checkpoint::load(ckpt_path);
  const models::Model model = models::transfer_weights(ckpt, ckpt.config);
  const auto pairs = load_pairs_vec(manifest_path);
  eval::EvalOptions opt;
  opt.rmse_unit_scale = rmse_scale;
  const auto report = eval::evaluate(model, pairs, opt);
  write_text((fs::path(g.out_dir) / "report.csv").string(), report.to_csv());
  write_text((fs::path(g.out_dir) / "summary.txt").string(), report.summary());
  std::cout << report.summary();
  return 0;
}

int cmd_dose_sweep(const GlobalOpts& g, const std::string& lomae_ckpt,
                   const std::string& scratch_ckpt, const std::vector<double>& doses,
                   int n_test_patients, int slices, int n, int views, double pitch_div) {
  const FlatConfig cfg = g.config();
  ensure_out(g.out_dir);
  const auto lc = models::Checkpoint::load(lomae_ckpt);
  const auto sc = models::Checkpoint::load(scratch_ckpt);
  const models::Model lomae = models::transfer_weights(lc, lc.config);
  const models::Model scratch = models::transfer_weights(sc, sc.config);

  experiments::DeskDataSpec data_spec;
  data_spec.image_n = n;
  data_spec.n_views = views;
  data_spec.detector_pitch_div = pitch_div;
  data_spec.slices_per_patient = slices;
  data_spec.seed = g.resolved_seed(cfg);
  std::vector<int> test_patients;
  for (int p = 0; p < n_test_patients; ++p) test_patients.push_back(p);

  const auto report =
      experiments::dose_sweep(lomae, scratch, data_spec, test_patients,
                              doses.empty() ? tomo::standard_dose_series() : doses,
                              data_spec.seed);
  const std::string path = (fs::path(g.out_dir) / "dose_sweep.csv").string();
  write_text(path, report.to_csv());
  std::cout << report.to_csv() << "wrote " << path << "\n";
  return 0;
}

int cmd_dependency_sweep(const GlobalOpts& g, const std::vector<int>& counts) {
  const FlatConfig cfg = g.config();
  ensure_out(g.out_dir);
  experiments::DeskExperimentSpec spec;
  spec.seed = g.resolved_seed(cfg);
  spec.data.seed = spec.seed;
  if (cfg.has("epochs")) spec.finetune.epochs = static_cast<int>(cfg.get_int("epochs", 150));
  const auto report = experiments::dependency_sweep(spec, counts);
  const std::string path = (fs::path(g.out_dir) / "dependency_sweep.csv").string();
  write_text(path, report.to_csv());
  std::cout << report.to_csv() << "wrote " << path << "\n";
  return 0;
}

int cmd_gradcam(const GlobalOpts& g, const std::string& ckpt_path, const std::string& slice_path,
                const std::string& target_path, const std::vector<int>& region,
                const std::string& layer) {
  ensure_out(g.out_dir);
  const auto ckpt = models::Checkpoint::load(ckpt_path);
  const models::Model model = models::transfer_weights(ckpt, ckpt.config);
  const Slice input = read_tensor_f32(slice_path);
  const Slice target = target_path.empty() ? input : read_tensor_f32(target_path);
  interpret::PatchRegion patch{region.at(0), region.at(1), region.at(2)};
  const auto map = interpret::mae_gradcam(model, input, target, patch, layer);
  write_tensor_f32((fs::path(g.out_dir) / "saliency.f32").string(), map.values);
  write_pgm((fs::path(g.out_dir) / "saliency.pgm").string(), map.values);
  std::cout << "saliency over layer " << map.layer_tag << ", max " << map.values.max() << "\n";
  return 0;
}

int cmd_cka(const GlobalOpts& g, const std::string& manifest_path, const std::string& ckpt_path,
            const std::string& layer) {
  ensure_out(g.out_dir);
  const auto ckpt = models::Checkpoint::load(ckpt_path);
  const models::Model model = models::transfer_weights(ckpt, ckpt.config);
  const auto pairs = load_pairs_vec(manifest_path);

  // group the noisy members by dose tag; identities must align across doses
  std::map<std::string, std::map<std::pair<std::string, int>, Slice>> by_dose;
  for (const auto& p : pairs) by_dose[p.dose_tag][{p.patient_id, p.slice_index}] = p.noisy;
  if (by_dose.size() < 2)
    throw std::invalid_argument("cka needs a manifest holding at least two dose tags");
  std::vector<std::string> labels;
  std::vector<std::vector<Slice>> slices_per_dose;
  const auto& ref_ids = by_dose.begin()->second;
  for (auto& [tag, slices] : by_dose) {
    labels.push_back(tag);
    std::vector<Slice> list;
    for (const auto& [id, unused] : ref_ids) {
      (void)unused;
      const auto it = slices.find(id);
      if (it == slices.end())
        throw std::invalid_argument("cka: slice " + id.first + "/" + std::to_string(id.second) +
                                    " missing at dose " + tag);
      list.push_back(it->second);
    }
    slices_per_dose.push_back(std::move(list));
  }
  const auto matrix = interpret::cka_across_doses(model, slices_per_dose, labels, layer);
  write_text((fs::path(g.out_dir) / "cka.csv").string(), matrix.to_csv());
  write_tensor_f32((fs::path(g.out_dir) / "cka.f32").string(), matrix.values);
  std::cout << matrix.to_csv();
  return 0;
}

int cmd_nps(const GlobalOpts& g, const std::string& manifest_path, const std::string& ckpt_path) {
  ensure_out(g.out_dir);
  const auto pairs = load_pairs_vec(manifest_path);
  std::vector<Slice> denoised, clean;
  if (!ckpt_path.empty()) {
    const auto ckpt = models::Checkpoint::load(ckpt_path);
    const models::Model model = models::transfer_weights(ckpt, ckpt.config);
    for (const auto& p : pairs) {
      denoised.push_back(model.denoise(p.noisy));
      clean.push_back(p.clean);
    }
  } else {
    for (const auto& p : pairs) {  // NPS of the raw noise itself
      denoised.push_back(p.noisy);
      clean.push_back(p.clean);
    }
  }
  const auto map = interpret::nps_map(denoised, clean);
  write_tensor_f32((fs::path(g.out_dir) / "nps.f32").string(), map.values);
  write_pgm((fs::path(g.out_dir) / "nps.pgm").string(), map.values);
  std::ostringstream csv;
  csv << "index,row_sum,col_sum\n";
  const auto rows = interpret::nps_axis_sum(map, false);
  const auto cols = interpret::nps_axis_sum(map, true);
  for (size_t i = 0; i < rows.size(); ++i) csv << i << "," << rows[i] << "," << cols[i] << "\n";
  write_text((fs::path(g.out_dir) / "nps_axis_sums.csv").string(), csv.str());
  std::cout << "nps over " << denoised.size() << " residuals, total power " << map.values.sum()
            << "\n";
  return 0;
}

int cmd_profile(const GlobalOpts& g, const std::string& slice_path, const std::string& axis,
                int index, const std::string& reference_path) {
  ensure_out(g.out_dir);
  const Slice slice = read_tensor_f32(slice_path);
  if (axis != "vertical" && axis != "horizontal")
    throw std::invalid_argument("profile axis must be 'horizontal' or 'vertical'");
  const auto ax = axis == "vertical" ? interpret::ProfileAxis::vertical
                                     : interpret::ProfileAxis::horizontal;
  const auto profile = interpret::intensity_profile(slice, ax, index);

  std::ostringstream csv;
  csv << "position,value";
  std::vector<double> ref;
  if (!reference_path.empty()) {
    ref = interpret::intensity_profile(read_tensor_f32(reference_path), ax, index);
    csv << ",reference";
  }
  csv << "\n";
  for (size_t i = 0; i < profile.size(); ++i) {
    csv << i << "," << profile[i];
    if (!ref.empty()) csv << "," << ref[i];
    csv << "\n";
  }
  write_text((fs::path(g.out_dir) / "profile.csv").string(), csv.str());
  if (!ref.empty())
    std::cout << "profile MAE vs reference: " << interpret::profile_mae(profile, ref) << "\n";
  else
    std::cout << "profile of " << profile.size() << " samples written\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lomae: masked-autoencoder pretraining lab for low-dose CT denoising"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "flat key = value config file");
  app.add_option("--seed", g.seed, "seed override");
  app.add_option("--out", g.out_dir, "output directory")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "generate noisy/clean phantom pairs");
  std::string phantom = "ellipse_soup";
  int sim_n = 64, sim_views = 96, sim_patients = 1, sim_slices = 1;
  double sim_pitch_div = 12.0;
  std::string sim_filter = "ramp";
  std::vector<double> sim_doses{tomo::quarter_dose_intensity()};
  sim->add_option("--phantom", phantom, "shepp_logan | ellipse_soup | disk");
  sim->add_option("--n", sim_n, "grid size");
  sim->add_option("--views", sim_views, "projection views");
  sim->add_option("--doses", sim_doses, "x-ray intensities (one pair per dose)");
  sim->add_option("--patients", sim_patients, "number of simulated patients");
  sim->add_option("--slices", sim_slices, "slices per patient");
  sim->add_option("--pitch-div", sim_pitch_div, "detector pitch = pixel / this");
  sim->add_option("--filter", sim_filter, "ramp | hann");

  auto* ing = app.add_subcommand("ingest", "normalize/resize/augment an existing manifest");
  std::string ing_manifest;
  std::vector<double> ing_window;
  int ing_resize = 0;
  bool ing_augment = false;
  ing->add_option("--manifest", ing_manifest, "input manifest")->required();
  ing->add_option("--window", ing_window, "normalization window: low high")->expected(2);
  ing->add_option("--resize", ing_resize, "area-downsample to this size");
  ing->add_flag("--augment", ing_augment, "emit all rotation/flip variants");

  auto* pre = app.add_subcommand("pretrain", "masked self-pretraining on noisy slices");
  std::string pre_manifest;
  pre->add_option("--manifest", pre_manifest, "training data manifest")->required();

  auto* fin = app.add_subcommand("finetune", "supervised finetune from a pretrained checkpoint");
  std::string fin_manifest, fin_ckpt;
  fin->add_option("--manifest", fin_manifest, "labeled data manifest")->required();
  fin->add_option("--ckpt", fin_ckpt, "pretrained checkpoint")->required();

  auto* ev = app.add_subcommand("evaluate", "SSIM/RMSE report on a test manifest");
  std::string ev_manifest, ev_ckpt;
  double ev_rmse_scale = 0.0;
  ev->add_option("--manifest", ev_manifest, "test manifest")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--rmse-scale", ev_rmse_scale, "report RMSE in display-window units");

  auto* ds = app.add_subcommand("dose-sweep", "compare two checkpoints across dose levels");
  std::string ds_lomae, ds_scratch;
  std::vector<double> ds_doses;
  int ds_patients = 4, ds_slices = 10, ds_n = 64, ds_views = 96;
  double ds_pitch_div = 12.0;
  ds->add_option("--lomae", ds_lomae, "LoMAE checkpoint")->required();
  ds->add_option("--scratch", ds_scratch, "scratch-trained checkpoint")->required();
  ds->add_option("--doses", ds_doses, "dose series (default: the standard five)");
  ds->add_option("--patients", ds_patients, "test phantom patients");
  ds->add_option("--slices", ds_slices, "slices per patient");
  ds->add_option("--n", ds_n, "grid size");
  ds->add_option("--views", ds_views, "projection views");
  ds->add_option("--pitch-div", ds_pitch_div, "detector pitch = pixel / this");

  auto* dep =
      app.add_subcommand("dependency-sweep", "scratch vs LoMAE across labeled patient counts");
  std::vector<int> dep_counts{2, 4, 8, 16};
  dep->add_option("--counts", dep_counts, "labeled patient counts");

  auto* gc = app.add_subcommand("gradcam", "regional-loss saliency map");
  std::string gc_ckpt, gc_slice, gc_target, gc_layer = "middle";
  std::vector<int> gc_region{0, 0, 8};
  gc->add_option("--ckpt", gc_ckpt, "checkpoint")->required();
  gc->add_option("--slice", gc_slice, "input slice container")->required();
  gc->add_option("--target", gc_target, "target container (default: the input)");
  gc->add_option("--region", gc_region, "row col size")->expected(3);
  gc->add_option("--layer", gc_layer, "tapped layer: middle | last | blocks.K");

  auto* ck = app.add_subcommand("cka", "representation similarity across dose tags");
  std::string ck_manifest, ck_ckpt, ck_layer = "last";
  ck->add_option("--manifest", ck_manifest, "manifest with multiple dose tags")->required();
  ck->add_option("--ckpt", ck_ckpt, "checkpoint")->required();
  ck->add_option("--layer", ck_layer, "tapped layer");

  auto* np = app.add_subcommand("nps", "noise power spectrum of residuals");
  std::string np_manifest, np_ckpt;
  np->add_option("--manifest", np_manifest, "paired manifest")->required();
  np->add_option("--ckpt", np_ckpt, "checkpoint (omit for raw noise residuals)");

  auto* pr = app.add_subcommand("profile", "intensity profile extraction");
  std::string pr_slice, pr_axis = "horizontal", pr_reference;
  int pr_index = 0;
  pr->add_option("--slice", pr_slice, "slice container")->required();
  pr->add_option("--axis", pr_axis, "horizontal | vertical");
  pr->add_option("--index", pr_index, "row/column index");
  pr->add_option("--reference", pr_reference, "reference slice for MAE");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim)
      return cmd_simulate(g, phantom, sim_n, sim_views, sim_doses, sim_patients, sim_slices,
                          sim_pitch_div, sim_filter);
    if (*ing) return cmd_ingest(g, ing_manifest, ing_window, ing_resize, ing_augment);
    if (*pre) return cmd_pretrain(g, pre_manifest);
    if (*fin) return cmd_finetune(g, fin_manifest, fin_ckpt);
    if (*ev) return cmd_evaluate(g, ev_manifest, ev_ckpt, ev_rmse_scale);
    if (*ds)
      return cmd_dose_sweep(g, ds_lomae, ds_scratch, ds_doses, ds_patients, ds_slices, ds_n,
                            ds_views, ds_pitch_div);
    if (*dep) return cmd_dependency_sweep(g, dep_counts);
    if (*gc) return cmd_gradcam(g, gc_ckpt, gc_slice, gc_target, gc_region, gc_layer);
    if (*ck) return cmd_cka(g, ck_manifest, ck_ckpt, ck_layer);
    if (*np) return cmd_nps(g, np_manifest, np_ckpt);
    if (*pr) return cmd_profile(g, pr_slice, pr_axis, pr_index, pr_reference);
  } catch (const tomo::NoiseClampError& e) {
    std::cerr << "error: [dose] " << e.what() << "\n";
    return 2;
  } catch (const interpret::DegenerateFeaturesError& e) {
    std::cerr << "error: [degenerate-input] " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: [invalid-input] " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: [runtime] " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << "\n";
    return 4;
  }
  return 0;
}
