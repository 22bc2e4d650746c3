#include "lomae/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "lomae/rng.hpp"

namespace lomae::train {

int MaskSpec::masked_count() const {
  int n = 0;
  for (uint8_t m : masked) n += m;
  return n;
}

MaskSpec make_mask(int image_h, int image_w, int patch_size, double mask_ratio, uint64_t seed) {
  if (patch_size < 1 || image_h % patch_size != 0 || image_w % patch_size != 0)
    throw std::invalid_argument("make_mask: image size not divisible by patch size");
  if (mask_ratio < 0.0 || mask_ratio > 1.0)
    throw std::invalid_argument("make_mask: ratio must be in [0, 1]");
  MaskSpec spec;
  spec.patch_size = patch_size;
  spec.mask_ratio = mask_ratio;
  spec.seed = seed;
  spec.grid_h = image_h / patch_size;
  spec.grid_w = image_w / patch_size;
  const int n_patches = spec.grid_h * spec.grid_w;
  const int n_masked = static_cast<int>(std::lround(mask_ratio * n_patches));
  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  spec.masked.assign(static_cast<size_t>(n_patches), 0);
  for (int i = 0; i < n_masked; ++i) spec.masked[static_cast<size_t>(order[static_cast<size_t>(i)])] = 1;
  return spec;
}

Slice apply_mask(const Slice& slice, const MaskSpec& mask, double fill) {
  if (slice.rank() != 2 || slice.dim(0) != static_cast<int64_t>(mask.grid_h) * mask.patch_size ||
      slice.dim(1) != static_cast<int64_t>(mask.grid_w) * mask.patch_size)
    throw std::invalid_argument("apply_mask: slice shape does not match mask");
  Slice out = slice;
  for (int gr = 0; gr < mask.grid_h; ++gr)
    for (int gc = 0; gc < mask.grid_w; ++gc) {
      if (!mask.is_masked(gr, gc)) continue;
      for (int r = 0; r < mask.patch_size; ++r)
        for (int c = 0; c < mask.patch_size; ++c)
          out.at(static_cast<int64_t>(gr) * mask.patch_size + r,
                 static_cast<int64_t>(gc) * mask.patch_size + c) = fill;
    }
  return out;
}

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || alpha + beta <= 0.0)
    throw std::invalid_argument("loss weights: alpha, beta >= 0 and alpha + beta > 0 required");
}

ag::Var loss_l1(const ag::Var& pred, const ag::Var& target) {
  return ag::mean_all(ag::abs(ag::sub(pred, target)));
}

namespace {

ag::Var as_nchw(const ag::Var& x) {
  const auto& s = x->value.shape();
  if (s.size() == 4) return x;
  if (s.size() == 2) return ag::reshape(x, {1, 1, s[0], s[1]});
  throw std::invalid_argument("ssim: input must be [H, W] or [B, 1, H, W]");
}

ag::Var gaussian_kernel_var(const SsimOptions& opt) {
  const int k = opt.window;
  const int half = k / 2;
  Tensor kt({1, 1, k, k});
  double sum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - half, dj = j - half;
      const double v = std::exp(-(di * di + dj * dj) / (2.0 * opt.gaussian_sigma * opt.gaussian_sigma));
      kt.at(static_cast<int64_t>(i), j) = v;  // rank-4 but contiguous [k,k] tail
      sum += v;
    }
  for (int64_t i = 0; i < kt.size(); ++i) kt[i] /= sum;
  return ag::constant(std::move(kt));
}

}  // namespace

ag::Var ssim_value(const ag::Var& a_in, const ag::Var& b_in, const SsimOptions& opt) {
  if (!a_in->value.same_shape(b_in->value))
    throw std::invalid_argument("ssim: shape mismatch " + a_in->value.shape_str() + " vs " +
                                b_in->value.shape_str());
  if (opt.c1 <= 0.0 || opt.c2 <= 0.0) throw std::invalid_argument("ssim: c1, c2 must be positive");
  auto a = as_nchw(a_in);
  auto b = as_nchw(b_in);
  if (a->value.dim(2) < opt.window || a->value.dim(3) < opt.window)
    throw std::invalid_argument("ssim: image smaller than the ssim window");
  auto g = gaussian_kernel_var(opt);
  const auto pad = ag::Pad::valid;

  auto mu_a = ag::conv2d(a, g, {}, pad);
  auto mu_b = ag::conv2d(b, g, {}, pad);
  auto mu_aa = ag::mul(mu_a, mu_a);
  auto mu_bb = ag::mul(mu_b, mu_b);
  auto mu_ab = ag::mul(mu_a, mu_b);
  auto var_a = ag::sub(ag::conv2d(ag::mul(a, a), g, {}, pad), mu_aa);
  auto var_b = ag::sub(ag::conv2d(ag::mul(b, b), g, {}, pad), mu_bb);
  auto cov = ag::sub(ag::conv2d(ag::mul(a, b), g, {}, pad), mu_ab);

  auto num = ag::mul(ag::add_scalar(ag::mul_scalar(mu_ab, 2.0), opt.c1),
                     ag::add_scalar(ag::mul_scalar(cov, 2.0), opt.c2));
  auto den = ag::mul(ag::add_scalar(ag::add(mu_aa, mu_bb), opt.c1),
                     ag::add_scalar(ag::add(var_a, var_b), opt.c2));
  return ag::mean_all(ag::div(num, den));
}

ag::Var loss_combined(const ag::Var& pred, const ag::Var& target, const LossWeights& weights,
                      const SsimOptions& opt) {
  weights.validate();
  auto l1 = loss_l1(pred, target);
  if (weights.beta == 0.0) return ag::mul_scalar(l1, weights.alpha);
  // SSIM enters as 1 - SSIM so the combined objective is minimizable
  auto ssim_term = ag::add_scalar(ag::mul_scalar(ssim_value(pred, target, opt), -1.0), 1.0);
  return ag::add(ag::mul_scalar(l1, weights.alpha), ag::mul_scalar(ssim_term, weights.beta));
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::attach(const nn::ParamList& params) {
  params_.clear();
  m_.clear();
  v_.clear();
  for (const auto& p : params) {
    params_.push_back(p.var);
    m_.emplace_back(p.var->value.shape());
    v_.emplace_back(p.var->value.shape());
  }
  t_ = 0;
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (p->grad.size() > 0) p->grad.fill(0.0);
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    if (p.grad.size() != p.value.size()) continue;  // parameter untouched this step
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double lr_at(int64_t iteration, const TrainConfig& cfg) {
  const int64_t stages = cfg.decay_every > 0 ? iteration / cfg.decay_every : 0;
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(stages));
}

void write_loss_csv(const std::string& path, const std::vector<LossPoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss curve: " + path);
  out << "iteration,loss,lr\n";
  for (const auto& p : curve) out << p.iteration << "," << p.loss << "," << p.lr << "\n";
}

namespace {

struct LoopStats {
  std::vector<LossPoint> curve;
  int64_t masks_built = 0;
};

// Shared single-image-batch training loop. step_fn builds the loss graph for
// one pool index and returns the loss node.
template <class StepFn>
LoopStats run_loop(models::Model& model, const data::PairPool& pool, const TrainConfig& cfg,
                   StepFn&& step_fn) {
  if (pool.empty()) throw std::invalid_argument("training: empty data pool");
  Adam opt;
  opt.attach(model.params());
  LoopStats stats;
  int64_t iteration = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int64_t idx : pool.epoch_order(cfg.seed, epoch)) {
      const double lr = lr_at(iteration, cfg);
      opt.zero_grad();
      ag::Var loss = step_fn(idx, iteration);
      ag::backward(loss);
      opt.step(lr);
      stats.curve.push_back({iteration, loss->value[0], lr});
      ++iteration;
    }
  }
  if (!cfg.loss_csv_path.empty()) write_loss_csv(cfg.loss_csv_path, stats.curve);
  return stats;
}

ag::Var slice_input(const Slice& s) {
  return ag::constant(s.reshaped({1, 1, s.dim(0), s.dim(1)}));
}

}  // namespace

TrainResult pretrain(models::Model& model, const data::PairPool& pool, const TrainConfig& cfg) {
  if (model.config().use_front_to_end_shortcut)
    throw std::invalid_argument(
        "pretrain: model must be built without the front-to-end shortcut");
  pool.reset_audit();
  int64_t masks_built = 0;
  auto stats = run_loop(model, pool, cfg, [&](int64_t idx, int64_t iteration) {
    const Slice& noisy = pool.noisy(idx);
    const MaskSpec mask = make_mask(static_cast<int>(noisy.dim(0)), static_cast<int>(noisy.dim(1)),
                                    cfg.mask_patch, cfg.mask_ratio,
                                    derive_seed(cfg.seed, 0xa5ced1ull + static_cast<uint64_t>(iteration)));
    ++masks_built;
    auto input = slice_input(apply_mask(noisy, mask));
    auto target = slice_input(noisy);
    return loss_l1(model.forward(input), target);
  });

  TrainResult result;
  result.checkpoint = models::make_checkpoint(model, "pretrained", cfg.epochs);
  result.curve = std::move(stats.curve);
  result.audit.noisy_reads = pool.audit().noisy_reads;
  result.audit.clean_reads = pool.audit().clean_reads;
  result.audit.masks_built = masks_built;
  return result;
}

TrainResult train_supervised(models::Model& model, const data::PairPool& pool,
                             const TrainConfig& cfg) {
  cfg.weights.validate();
  pool.reset_audit();
  auto stats = run_loop(model, pool, cfg, [&](int64_t idx, int64_t) {
    auto input = slice_input(pool.noisy(idx));
    auto target = slice_input(pool.clean(idx));
    return loss_combined(model.forward(input), target, cfg.weights, cfg.ssim);
  });

  TrainResult result;
  result.checkpoint = models::make_checkpoint(model, "finetuned", cfg.epochs);
  result.curve = std::move(stats.curve);
  result.audit.noisy_reads = pool.audit().noisy_reads;
  result.audit.clean_reads = pool.audit().clean_reads;
  result.audit.masks_built = 0;
  return result;
}

TrainResult finetune(const models::Checkpoint& pretrained, const data::PairPool& pool,
                     const TrainConfig& cfg) {
  if (pretrained.stage != "pretrained")
    throw std::invalid_argument("finetune: checkpoint stage is '" + pretrained.stage +
                                "', expected 'pretrained'");
  models::ModelConfig finetune_cfg = pretrained.config;
  finetune_cfg.use_front_to_end_shortcut = true;  // reconnect the shortcut
  models::Model model = models::transfer_weights(pretrained, finetune_cfg);
  TrainResult result = train_supervised(model, pool, cfg);
  result.checkpoint.init = "pretrained";
  return result;
}

TrainConfig train_config_from_flat(const FlatConfig& cfg) {
  TrainConfig out;
  out.epochs = static_cast<int>(cfg.get_int("epochs", out.epochs));
  out.lr0 = cfg.get_double("lr", out.lr0);
  out.decay_every = static_cast<int>(cfg.get_int("decay_every", out.decay_every));
  out.decay_factor = cfg.get_double("decay_factor", out.decay_factor);
  out.seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
  out.weights.alpha = cfg.get_double("alpha", out.weights.alpha);
  out.weights.beta = cfg.get_double("beta", out.weights.beta);
  out.mask_ratio = cfg.get_double("mask_ratio", out.mask_ratio);
  out.mask_patch = static_cast<int>(cfg.get_int("mask_patch", out.mask_patch));
  out.weights.validate();
  return out;
}

}  // namespace lomae::train
