#pragma once

#include <string>
#include <vector>

#include "lomae/eval.hpp"
#include "lomae/tomo.hpp"

namespace lomae::experiments {

// Desk-scale simulated cohort: ellipse-soup phantoms grouped into patients,
// projected at a sharpened parallel geometry and reconstructed with the ramp
// filter at the training dose.
struct DeskDataSpec {
  int n_patients = 20;
  int slices_per_patient = 10;
  int image_n = 64;
  int n_views = 96;
  double detector_pitch_div = 12.0;  // detector pitch = pixel / this
  double train_dose = tomo::quarter_dose_intensity();
  double electronic_variance = 10.0;
  tomo::FbpFilter filter = tomo::FbpFilter::ramp;
  uint64_t seed = 0;

  tomo::ProjectionGeometry geometry() const;
  tomo::Phantom phantom_for(int patient, int slice) const;
  std::string patient_id(int patient) const;
};

std::vector<data::SlicePair> simulate_desk_dataset(const DeskDataSpec& spec);

struct DeskExperimentSpec {
  DeskDataSpec data;
  models::ModelConfig model;     // desk defaults from desk_model_config()
  train::TrainConfig pretrain;   // epochs/lr for the masked stage
  train::TrainConfig finetune;   // epochs/lr shared by finetune and scratch
  double labeled_fraction = 0.25;  // fraction of train patients with labels
  int n_folds = 5;                 // fold 0 is used (4 of 20 patients test)
  std::vector<double> sweep_doses = tomo::standard_dose_series();
  uint64_t seed = 0;

  DeskExperimentSpec();
};

models::ModelConfig desk_model_config();

struct DoseCurvePoint {
  double dose = 0.0;
  double ssim_lomae = 0.0, ssim_scratch = 0.0, ssim_noisy = 0.0;
  double rmse_lomae = 0.0, rmse_scratch = 0.0;
};

struct DoseSweepReport {
  std::vector<DoseCurvePoint> points;
  std::string to_csv() const;
};

struct DeskRunResult {
  double test_ssim_lomae = 0.0, test_ssim_scratch = 0.0, test_ssim_noisy = 0.0;
  double test_rmse_lomae = 0.0, test_rmse_scratch = 0.0;
  train::TrainAudit pretrain_audit;
  train::TrainAudit finetune_audit;
  DoseSweepReport dose_sweep;
  models::Checkpoint lomae_checkpoint, scratch_checkpoint;
};

// One seeded run of the central comparison: LoMAE (masked pretrain on the
// full noisy pool, supervised finetune on the labeled fraction) against an
// identically-trained scratch model, plus the optional dose sweep.
DeskRunResult run_desk_experiment(const DeskExperimentSpec& spec, bool with_dose_sweep);

// Evaluates two trained models over re-simulated noisy inputs at each dose.
DoseSweepReport dose_sweep(const models::Model& lomae, const models::Model& scratch,
                           const DeskDataSpec& data, const std::vector<int>& test_patients,
                           const std::vector<double>& doses, uint64_t seed);

struct DependencyPoint {
  int labeled_patients = 0;
  double ssim_lomae = 0.0, ssim_scratch = 0.0;
  double rmse_lomae = 0.0, rmse_scratch = 0.0;
};

struct DependencyReport {
  std::vector<DependencyPoint> points;
  std::string to_csv() const;
};

// Ground-truth-dependency sweep: for each labeled patient count k, train a
// scratch model and a LoMAE finetune (sharing one pretrained checkpoint) on
// k patients' pairs and evaluate both on the held-out fold.
DependencyReport dependency_sweep(const DeskExperimentSpec& spec,
                                  const std::vector<int>& labeled_counts);

}  // namespace lomae::experiments
