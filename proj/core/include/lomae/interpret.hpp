#pragma once

#include <string>
#include <vector>

#include "lomae/models.hpp"

namespace lomae::interpret {

struct PatchRegion {
  int row = 0;   // top-left pixel row
  int col = 0;   // top-left pixel col
  int size = 8;  // square side in pixels
};

struct SaliencyMap {
  Tensor values;  // input-resolution, non-negative
  PatchRegion target_patch;
  std::string layer_tag;
};

// GradCAM driven by the regional L1 reconstruction loss: channel weights are
// the spatial means of d L1(pred_p, target_p) / d A at the tapped layer, the
// map is ReLU(sum_k w_k A_k) replicated up to pixel resolution.
SaliencyMap mae_gradcam(const models::Model& model, const Slice& masked_input, const Slice& target,
                        const PatchRegion& region, const std::string& layer_selector = "middle");

// The GradCAM reduction alone: activations and their loss gradients in
// spatial order [gh*gw, d] (or any layout whose leading dims flatten to
// gh*gw) -> ReLU(sum_k mean_uv(dL/dA_k) * A_k) as a [gh, gw] map.
Tensor gradcam_reduce(const Tensor& activations, const Tensor& gradients, int grid_h, int grid_w);

// Biased HSIC estimator on square Gram matrices: vec(HKH) . vec(HLH) / (m-1)^2.
double hsic(const Tensor& k, const Tensor& l);

// HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L)) with linear-kernel Grams. Throws
// DegenerateFeaturesError when either self-HSIC vanishes (constant features).
double cka(const Tensor& x1, const Tensor& x2);

class DegenerateFeaturesError : public std::invalid_argument {
 public:
  explicit DegenerateFeaturesError(const std::string& what) : std::invalid_argument(what) {}
};

struct CkaMatrix {
  Tensor values;  // [n_doses, n_doses]
  std::vector<std::string> labels;
  std::string to_csv() const;
};

// Pairwise CKA of tapped features across dose levels. slices_per_dose[d][i]
// must hold the same slice identity i at every dose d.
CkaMatrix cka_across_doses(const models::Model& model,
                           const std::vector<std::vector<Slice>>& slices_per_dose,
                           const std::vector<std::string>& labels,
                           const std::string& layer_selector = "last");

struct NpsMap {
  Tensor values;  // power spectrum, DC bin at the center
};

// Ensemble average of |DFT2(residual - mean)|^2 over denoised/clean pairs.
NpsMap nps_map(const std::vector<Slice>& denoised, const std::vector<Slice>& clean);

// Sum of the (DC-centered) NPS along rows/columns; the Fig-10 style 1-D view.
std::vector<double> nps_axis_sum(const NpsMap& map, bool along_vertical);

enum class ProfileAxis { horizontal, vertical };

std::vector<double> intensity_profile(const Slice& slice, ProfileAxis axis, int index);
double profile_mae(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lomae::interpret
