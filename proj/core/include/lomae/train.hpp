#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lomae/config.hpp"
#include "lomae/data.hpp"
#include "lomae/models.hpp"

namespace lomae::train {

struct MaskSpec {
  int patch_size = 8;
  double mask_ratio = 0.75;
  uint64_t seed = 0;
  int grid_h = 0, grid_w = 0;
  std::vector<uint8_t> masked;  // row-major over patches, 1 = masked

  int masked_count() const;
  bool is_masked(int gr, int gc) const {
    return masked[static_cast<size_t>(gr) * grid_w + gc] != 0;
  }
};

// Uniform random mask without replacement; exactly round(ratio * n_patches)
// patches masked, deterministic per seed.
MaskSpec make_mask(int image_h, int image_w, int patch_size, double mask_ratio, uint64_t seed);

// Masked patches are replaced by `fill` (0 in normalized units); unmasked
// pixels pass through bit-exactly.
Slice apply_mask(const Slice& slice, const MaskSpec& mask, double fill = 0.0);

struct LossWeights {
  double alpha = 1.0;  // L1 weight
  double beta = 0.1;   // (1 - SSIM) weight
  void validate() const;
};

struct SsimOptions {
  int window = 11;
  double gaussian_sigma = 1.5;
  double c1 = 1e-4;  // (0.01 * L)^2 with L = 1
  double c2 = 9e-4;  // (0.03 * L)^2
};

// Mean absolute difference over pixels.
ag::Var loss_l1(const ag::Var& pred, const ag::Var& target);
// Local-window SSIM averaged over the image, computed on the autograd tape.
// Inputs are [H, W] or [B, 1, H, W].
ag::Var ssim_value(const ag::Var& a, const ag::Var& b, const SsimOptions& opt = {});
// alpha * L1 + beta * (1 - SSIM).
ag::Var loss_combined(const ag::Var& pred, const ag::Var& target, const LossWeights& weights,
                      const SsimOptions& opt = {});

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void attach(const nn::ParamList& params);
  void zero_grad();
  void step(double lr);
  int64_t steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<ag::Var> params_;
  std::vector<Tensor> m_, v_;
};

struct TrainConfig {
  int epochs = 50;
  double lr0 = 1.5e-4;
  int decay_every = 3000;       // iterations
  double decay_factor = 0.5;
  uint64_t seed = 0;
  LossWeights weights;          // supervised loss only
  SsimOptions ssim;
  double mask_ratio = 0.75;     // pretraining only
  int mask_patch = 8;
  std::string loss_csv_path;    // when set, writes "iteration,loss,lr" rows
};

// Stepped decay: lr0 * decay_factor^(floor(iteration / decay_every)).
double lr_at(int64_t iteration, const TrainConfig& cfg);

struct TrainAudit {
  int64_t noisy_reads = 0;
  int64_t clean_reads = 0;
  int64_t masks_built = 0;
};

struct LossPoint {
  int64_t iteration;
  double loss;
  double lr;
};

struct TrainResult {
  models::Checkpoint checkpoint;
  std::vector<LossPoint> curve;
  TrainAudit audit;
};

// Masked self-pretraining on noisy slices only (the pool's clean reads are
// audited and must stay zero). The model must be built without the
// front-to-end shortcut.
TrainResult pretrain(models::Model& model, const data::PairPool& pool, const TrainConfig& cfg);

// Supervised noisy->clean training of an already-built model. No masking.
TrainResult train_supervised(models::Model& model, const data::PairPool& pool,
                             const TrainConfig& cfg);

// Transfers the pretrained weights into a shortcut-enabled twin and runs
// supervised training. The checkpoint stage must be "pretrained".
TrainResult finetune(const models::Checkpoint& pretrained, const data::PairPool& pool,
                     const TrainConfig& cfg);

void write_loss_csv(const std::string& path, const std::vector<LossPoint>& curve);

// Reads mask_ratio/alpha/beta/lr/decay_every/decay_factor/epochs/seed keys
// from a flat config file.
TrainConfig train_config_from_flat(const FlatConfig& cfg);

}  // namespace lomae::train
