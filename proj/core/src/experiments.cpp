#include "lomae/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "lomae/rng.hpp"

namespace lomae::experiments {

namespace {

// stable sub-stream ids for everything a desk run randomizes
constexpr uint64_t kStreamPhantom = 0x0ba5e000ull;
constexpr uint64_t kStreamNoise = 0xd05e0000ull;
constexpr uint64_t kStreamSplit = 0x5917ull;
constexpr uint64_t kStreamPretrainInit = 0x1317ull;
constexpr uint64_t kStreamScratchInit = 0x5c12ull;
constexpr uint64_t kStreamPretrain = 0x9121ull;
constexpr uint64_t kStreamFinetune = 0xf17eull;

std::string dose_tag(double I0) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", I0);
  return buf;
}

int parse_patient_index(const std::string& id) { return std::stoi(id.substr(1)); }

models::Model model_from_checkpoint(const models::Checkpoint& ckpt) {
  return models::transfer_weights(ckpt, ckpt.config);
}

}  // namespace

tomo::ProjectionGeometry DeskDataSpec::geometry() const {
  tomo::ProjectionGeometry g;
  g.beam = tomo::BeamGeometry::parallel;
  g.n_views = n_views;
  g.detector_pitch_mm = tomo::pixel_size_for_grid(image_n) / detector_pitch_div;
  return g;
}

tomo::Phantom DeskDataSpec::phantom_for(int patient, int slice) const {
  const uint64_t s = derive_seed(
      seed, kStreamPhantom + static_cast<uint64_t>(patient) * 1024 + static_cast<uint64_t>(slice));
  return tomo::make_phantom(tomo::PhantomKind::ellipse_soup, image_n, s);
}

std::string DeskDataSpec::patient_id(int patient) const {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "P%02d", patient);
  return buf;
}

std::vector<data::SlicePair> simulate_desk_dataset(const DeskDataSpec& spec) {
  std::vector<data::SlicePair> pairs;
  pairs.reserve(static_cast<size_t>(spec.n_patients) * spec.slices_per_patient);
  tomo::SimOptions opt;
  opt.geometry = spec.geometry();
  opt.filter = spec.filter;
  opt.electronic_variance = spec.electronic_variance;
  for (int p = 0; p < spec.n_patients; ++p)
    for (int s = 0; s < spec.slices_per_patient; ++s) {
      const tomo::Phantom phantom = spec.phantom_for(p, s);
      const uint64_t noise_seed = derive_seed(
          spec.seed,
          kStreamNoise + (static_cast<uint64_t>(p) * spec.slices_per_patient + s) * 64);
      const auto series = tomo::make_dose_series(phantom, {spec.train_dose}, {noise_seed}, opt);
      data::SlicePair pair;
      pair.noisy = series[0].noisy;
      pair.clean = series[0].clean;
      pair.patient_id = spec.patient_id(p);
      pair.slice_index = s;
      pair.dose_tag = dose_tag(spec.train_dose);
      pair.seed = noise_seed;
      pairs.push_back(std::move(pair));
    }
  return pairs;
}

models::ModelConfig desk_model_config() {
  models::ModelConfig cfg;
  cfg.arch = models::Arch::swinir_style;
  cfg.depths = {2, 2};
  cfg.embed_dim = 32;
  cfg.n_heads = 4;
  cfg.patch_size = 8;
  cfg.window_size = 4;
  cfg.mlp_ratio = 2.0;
  cfg.shallow_channels = 4;
  cfg.input_size = 64;
  return cfg;
}

DeskExperimentSpec::DeskExperimentSpec() {
  model = desk_model_config();
  // desk-scale schedule: small model, heavier lr than the full-scale recipe,
  // stepped decay stretched to the shorter runs
  pretrain.epochs = 20;
  pretrain.lr0 = 1e-3;
  pretrain.decay_every = 4000;
  finetune.epochs = 150;
  finetune.lr0 = 1e-3;
  finetune.decay_every = 4000;
  finetune.weights = {1.0, 0.1};
}

std::string DoseSweepReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "dose,ssim_lomae,ssim_scratch,ssim_noisy,rmse_lomae,rmse_scratch\n";
  for (const auto& p : points)
    os << p.dose << "," << p.ssim_lomae << "," << p.ssim_scratch << "," << p.ssim_noisy << ","
       << p.rmse_lomae << "," << p.rmse_scratch << "\n";
  return os.str();
}

std::string DependencyReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "labeled_patients,ssim_lomae,ssim_scratch,rmse_lomae,rmse_scratch\n";
  for (const auto& p : points)
    os << p.labeled_patients << "," << p.ssim_lomae << "," << p.ssim_scratch << ","
       << p.rmse_lomae << "," << p.rmse_scratch << "\n";
  return os.str();
}

namespace {

struct SplitPools {
  data::PairPool train_pool;    // all train patients (pretraining)
  data::PairPool labeled_pool;  // the labeled subset (finetune/scratch)
  std::vector<data::SlicePair> test_pairs;
  std::vector<int> test_patient_indices;
  std::vector<std::string> train_patients;
};

SplitPools build_pools(const DeskExperimentSpec& spec, const std::vector<data::SlicePair>& pairs,
                       int labeled_k) {
  std::vector<std::string> patients;
  for (int p = 0; p < spec.data.n_patients; ++p) patients.push_back(spec.data.patient_id(p));
  const auto plan = data::make_split(patients, spec.n_folds, labeled_k,
                                     derive_seed(spec.seed, kStreamSplit));
  const auto& fold = plan.folds.front();

  data::PairPool all(pairs);
  SplitPools pools;
  pools.train_pool = all.filter_patients(fold.train_patients);
  pools.labeled_pool = all.filter_patients(plan.labeled_patients(0));
  pools.train_patients = fold.train_patients;
  for (const auto& pair : pairs)
    if (std::find(fold.test_patients.begin(), fold.test_patients.end(), pair.patient_id) !=
        fold.test_patients.end())
      pools.test_pairs.push_back(pair);
  for (const auto& id : fold.test_patients)
    pools.test_patient_indices.push_back(parse_patient_index(id));
  return pools;
}

int default_labeled_k(const DeskExperimentSpec& spec) {
  const int test0 = (spec.data.n_patients + spec.n_folds - 1) / spec.n_folds;
  const int train0 = spec.data.n_patients - test0;
  return std::max(1, static_cast<int>(std::lround(spec.labeled_fraction * train0)));
}

}  // namespace

DoseSweepReport dose_sweep(const models::Model& lomae, const models::Model& scratch,
                           const DeskDataSpec& data_spec, const std::vector<int>& test_patients,
                           const std::vector<double>& doses, uint64_t seed) {
  if (doses.empty()) throw std::invalid_argument("dose_sweep: empty dose list");
  if (test_patients.empty()) throw std::invalid_argument("dose_sweep: no test patients");
  tomo::SimOptions opt;
  opt.geometry = data_spec.geometry();
  opt.filter = data_spec.filter;
  opt.electronic_variance = data_spec.electronic_variance;

  DoseSweepReport report;
  for (size_t di = 0; di < doses.size(); ++di) {
    std::vector<data::SlicePair> pairs;
    for (int p : test_patients)
      for (int s = 0; s < data_spec.slices_per_patient; ++s) {
        const tomo::Phantom phantom = data_spec.phantom_for(p, s);
        const uint64_t noise_seed =
            derive_seed(seed, kStreamNoise +
                                  (static_cast<uint64_t>(p) * data_spec.slices_per_patient + s) *
                                      64 +
                                  1 + di);
        const auto series = tomo::make_dose_series(phantom, {doses[di]}, {noise_seed}, opt);
        data::SlicePair pair;
        pair.noisy = series[0].noisy;
        pair.clean = series[0].clean;
        pair.patient_id = data_spec.patient_id(p);
        pair.slice_index = s;
        pair.dose_tag = dose_tag(doses[di]);
        pairs.push_back(std::move(pair));
      }
    const auto rep_l = eval::evaluate(lomae, pairs);
    const auto rep_s = eval::evaluate(scratch, pairs);
    DoseCurvePoint point;
    point.dose = doses[di];
    point.ssim_lomae = rep_l.ssim_mean;
    point.ssim_scratch = rep_s.ssim_mean;
    point.ssim_noisy = rep_l.ssim_noisy_mean;
    point.rmse_lomae = rep_l.rmse_mean;
    point.rmse_scratch = rep_s.rmse_mean;
    report.points.push_back(point);
  }
  return report;
}

DeskRunResult run_desk_experiment(const DeskExperimentSpec& spec, bool with_dose_sweep) {
  const auto pairs = simulate_desk_dataset(spec.data);
  const auto pools = build_pools(spec, pairs, default_labeled_k(spec));

  // stage 1: masked self-pretraining on the full (unlabeled) train pool
  models::ModelConfig pre_cfg = spec.model;
  pre_cfg.use_front_to_end_shortcut = false;
  models::Model pre_model(pre_cfg, derive_seed(spec.seed, kStreamPretrainInit));
  train::TrainConfig pre_train = spec.pretrain;
  pre_train.seed = derive_seed(spec.seed, kStreamPretrain);
  const auto pre_result = train::pretrain(pre_model, pools.train_pool, pre_train);

  // stage 2: supervised finetune on the labeled subset, shortcut reconnected
  train::TrainConfig fine_train = spec.finetune;
  fine_train.seed = derive_seed(spec.seed, kStreamFinetune);
  auto lomae_result = train::finetune(pre_result.checkpoint, pools.labeled_pool, fine_train);

  // baseline: identical supervised run from random init
  models::ModelConfig scratch_cfg = spec.model;
  scratch_cfg.use_front_to_end_shortcut = true;
  models::Model scratch_model(scratch_cfg, derive_seed(spec.seed, kStreamScratchInit));
  auto scratch_result = train::train_supervised(scratch_model, pools.labeled_pool, fine_train);

  const models::Model lomae_model = model_from_checkpoint(lomae_result.checkpoint);
  const models::Model scratch_eval_model = model_from_checkpoint(scratch_result.checkpoint);

  DeskRunResult out;
  const auto rep_l = eval::evaluate(lomae_model, pools.test_pairs);
  const auto rep_s = eval::evaluate(scratch_eval_model, pools.test_pairs);
  out.test_ssim_lomae = rep_l.ssim_mean;
  out.test_ssim_scratch = rep_s.ssim_mean;
  out.test_ssim_noisy = rep_l.ssim_noisy_mean;
  out.test_rmse_lomae = rep_l.rmse_mean;
  out.test_rmse_scratch = rep_s.rmse_mean;
  out.pretrain_audit = pre_result.audit;
  out.finetune_audit = lomae_result.audit;
  out.lomae_checkpoint = std::move(lomae_result.checkpoint);
  out.scratch_checkpoint = std::move(scratch_result.checkpoint);
  if (with_dose_sweep)
    out.dose_sweep = dose_sweep(lomae_model, scratch_eval_model, spec.data,
                                pools.test_patient_indices, spec.sweep_doses, spec.seed);
  return out;
}

DependencyReport dependency_sweep(const DeskExperimentSpec& spec,
                                  const std::vector<int>& labeled_counts) {
  if (labeled_counts.empty())
    throw std::invalid_argument("dependency_sweep: empty labeled count list");
  const auto pairs = simulate_desk_dataset(spec.data);
  const auto pools = build_pools(spec, pairs, 0);
  for (int k : labeled_counts)
    if (k < 1 || k > static_cast<int>(pools.train_patients.size()))
      throw std::invalid_argument("dependency_sweep: labeled count " + std::to_string(k) +
                                  " exceeds available train patients");

  // one shared pretrained checkpoint: the unlabeled pool does not change with k
  models::ModelConfig pre_cfg = spec.model;
  pre_cfg.use_front_to_end_shortcut = false;
  models::Model pre_model(pre_cfg, derive_seed(spec.seed, kStreamPretrainInit));
  train::TrainConfig pre_train = spec.pretrain;
  pre_train.seed = derive_seed(spec.seed, kStreamPretrain);
  const auto pre_result = train::pretrain(pre_model, pools.train_pool, pre_train);

  data::PairPool all(pairs);
  DependencyReport report;
  for (int k : labeled_counts) {
    const std::vector<std::string> labeled(pools.train_patients.begin(),
                                           pools.train_patients.begin() + k);
    data::PairPool labeled_pool = all.filter_patients(labeled);

    train::TrainConfig fine_train = spec.finetune;
    fine_train.seed = derive_seed(spec.seed, kStreamFinetune + static_cast<uint64_t>(k));
    auto lomae_result = train::finetune(pre_result.checkpoint, labeled_pool, fine_train);

    models::ModelConfig scratch_cfg = spec.model;
    scratch_cfg.use_front_to_end_shortcut = true;
    models::Model scratch_model(scratch_cfg,
                                derive_seed(spec.seed, kStreamScratchInit + static_cast<uint64_t>(k)));
    auto scratch_result = train::train_supervised(scratch_model, labeled_pool, fine_train);

    const auto rep_l = eval::evaluate(model_from_checkpoint(lomae_result.checkpoint), pools.test_pairs);
    const auto rep_s =
        eval::evaluate(model_from_checkpoint(scratch_result.checkpoint), pools.test_pairs);
    DependencyPoint point;
    point.labeled_patients = k;
    point.ssim_lomae = rep_l.ssim_mean;
    point.ssim_scratch = rep_s.ssim_mean;
    point.rmse_lomae = rep_l.rmse_mean;
    point.rmse_scratch = rep_s.rmse_mean;
    report.points.push_back(point);
  }
  return report;
}

}  // namespace lomae::experiments
