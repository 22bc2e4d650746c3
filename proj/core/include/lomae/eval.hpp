#pragma once

#include <string>
#include <vector>

#include "lomae/data.hpp"
#include "lomae/models.hpp"
#include "lomae/train.hpp"

namespace lomae::eval {

// Same window/constants as the training-time SSIM term.
double ssim_metric(const Slice& a, const Slice& b, const train::SsimOptions& opt = {});
// Root mean squared error; optionally scaled into display-window units
// (scale = window width) so reported magnitudes are self-describing.
double rmse_metric(const Slice& a, const Slice& b);

struct EvalRow {
  std::string patient_id;
  int slice_index = 0;
  std::string dose_tag;
  double ssim = 0.0;
  double rmse = 0.0;
  double ssim_noisy = 0.0;  // noisy-vs-clean baseline
  double rmse_noisy = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double ssim_mean = 0.0, ssim_std = 0.0;
  double rmse_mean = 0.0, rmse_std = 0.0;
  double ssim_noisy_mean = 0.0, rmse_noisy_mean = 0.0;
  double ssim_improvement = 0.0;  // ssim_mean - ssim_noisy_mean
  std::string config_fingerprint;
  std::string rmse_units;  // unit convention note carried into every report
  uint64_t seed = 0;

  std::string to_csv() const;
  std::string summary() const;
};

struct EvalOptions {
  train::SsimOptions ssim;
  // When > 0, RMSE is reported in display-window-scaled units (multiply
  // normalized RMSE by this width).
  double rmse_unit_scale = 0.0;
  uint64_t seed = 0;
};

EvalReport evaluate(const models::Model& model, const std::vector<data::SlicePair>& test_set,
                    const EvalOptions& opt = {});

// Reference results reported for the clinical dataset; recorded for context
// only, not reproducible at desk scale.
namespace refvals {
struct MetricRef {
  const char* method;
  double ssim, ssim_std, rmse, rmse_std;
};
inline constexpr MetricRef kLdct{"LDCT", 0.9359, 0.0, 10.4833, 0.0};
inline constexpr MetricRef kRedcnn{"REDCNN", 0.9501, 0.0012, 7.8016, 0.0834};
inline constexpr MetricRef kMapnn{"MAPNN", 0.9504, 0.0019, 7.5357, 0.1342};
inline constexpr MetricRef kSunet{"SUNet", 0.9555, 0.0010, 7.3147, 0.1084};
inline constexpr MetricRef kSunetLomae{"SUNet+LoMAE", 0.9601, 0.0009, 6.8352, 0.1022};
inline constexpr MetricRef kSwinir{"SwinIR", 0.9546, 0.0011, 7.2232, 0.0981};
inline constexpr MetricRef kSwinirLomae{"SwinIR+LoMAE", 0.9609, 0.0007, 6.7355, 0.0800};
inline constexpr MetricRef kRestormer{"Restormer", 0.9552, 0.0010, 7.4543, 0.1084};
inline constexpr MetricRef kRestormerLomae{"Restormer+LoMAE", 0.9582, 0.0009, 6.9881, 0.1022};
// SUNet finetuned without the front-to-end shortcut (ablation).
inline constexpr MetricRef kSunetNoShortcut{"SUNet (no shortcut)", 0.9571, 0.0012, 7.0627, 0.1000};
// CKA between the 2e4 and 1e5 dose feature maps.
inline constexpr double kCkaRawSwinir = 0.24;
inline constexpr double kCkaLomae = 0.76;

const std::vector<MetricRef>& table();
}  // namespace refvals

}  // namespace lomae::eval
