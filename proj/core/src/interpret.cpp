#include "lomae/interpret.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lomae/fft.hpp"
#include "lomae/train.hpp"

namespace lomae::interpret {

SaliencyMap mae_gradcam(const models::Model& model, const Slice& masked_input, const Slice& target,
                        const PatchRegion& region, const std::string& layer_selector) {
  if (!masked_input.same_shape(target))
    throw std::invalid_argument("mae_gradcam: input/target shape mismatch");
  const int64_t h = masked_input.dim(0), w = masked_input.dim(1);
  if (region.row < 0 || region.col < 0 || region.size < 1 || region.row + region.size > h ||
      region.col + region.size > w)
    throw std::out_of_range("mae_gradcam: patch region out of bounds");

  auto input = ag::constant(masked_input.reshaped({1, 1, h, w}));
  auto target_var = ag::constant(target.reshaped({1, 1, h, w}));

  models::ForwardTaps taps;
  auto pred = model.forward(input, &taps);
  const std::string tag = taps.selected_tag(layer_selector);
  const auto& tap = taps.select(layer_selector);

  auto pred_region = ag::crop2d(pred, region.row, region.col, region.size, region.size);
  auto target_region = ag::crop2d(target_var, region.row, region.col, region.size, region.size);
  auto loss = train::loss_l1(pred_region, target_region);
  ag::backward(loss);

  const int64_t d = tap.tokens->value.shape().back();
  const int gh = tap.grid_h, gw = tap.grid_w;
  const Tensor acts = swin::unpartition_tensor(tap.tokens->value, 1, gh, gw, tap.window);
  const Tensor grads = tap.tokens->grad.size() == tap.tokens->value.size()
                           ? swin::unpartition_tensor(tap.tokens->grad, 1, gh, gw, tap.window)
                           : Tensor({1, static_cast<int64_t>(gh) * gw, d});
  const Tensor token_map = gradcam_reduce(acts, grads, gh, gw);

  // area replication up to input resolution
  if (h % gh != 0 || w % gw != 0)
    throw std::runtime_error("mae_gradcam: tapped grid does not tile the input");
  const int64_t fr = h / gh, fc = w / gw;
  SaliencyMap out;
  out.values = Tensor({h, w});
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c) out.values.at(r, c) = token_map.at(r / fr, c / fc);
  out.target_patch = region;
  out.layer_tag = tag;
  return out;
}

Tensor gradcam_reduce(const Tensor& activations, const Tensor& gradients, int grid_h, int grid_w) {
  if (!activations.same_shape(gradients))
    throw std::invalid_argument("gradcam_reduce: activation/gradient shape mismatch");
  const int64_t d = activations.shape().back();
  const int64_t n_tokens = static_cast<int64_t>(grid_h) * grid_w;
  if (activations.size() != n_tokens * d)
    throw std::invalid_argument("gradcam_reduce: grid does not match activation count");

  // channel weights: spatial mean of the loss gradient
  std::vector<double> weights(static_cast<size_t>(d), 0.0);
  for (int64_t t = 0; t < n_tokens; ++t)
    for (int64_t c = 0; c < d; ++c) weights[static_cast<size_t>(c)] += gradients[t * d + c];
  for (auto& v : weights) v /= static_cast<double>(n_tokens);

  Tensor token_map({grid_h, grid_w});
  for (int64_t t = 0; t < n_tokens; ++t) {
    double v = 0.0;
    for (int64_t c = 0; c < d; ++c) v += weights[static_cast<size_t>(c)] * activations[t * d + c];
    token_map[t] = std::max(0.0, v);
  }
  return token_map;
}

namespace {

using EMat = Eigen::MatrixXd;

EMat centered_gram(const Tensor& k) {
  const int64_t m = k.dim(0);
  Eigen::Map<const EMat> km(k.data(), m, m);  // symmetric, layout-agnostic
  EMat h = EMat::Identity(m, m) - EMat::Constant(m, m, 1.0 / static_cast<double>(m));
  return h * km * h;
}

}  // namespace

double hsic(const Tensor& k, const Tensor& l) {
  if (k.rank() != 2 || k.dim(0) != k.dim(1)) throw std::invalid_argument("hsic: K must be square");
  if (!k.same_shape(l)) throw std::invalid_argument("hsic: K and L sizes differ");
  const int64_t m = k.dim(0);
  if (m < 2) throw std::invalid_argument("hsic: need at least 2 samples");
  const EMat kc = centered_gram(k);
  const EMat lc = centered_gram(l);
  const double dot = (kc.array() * lc.array()).sum();
  const double denom = static_cast<double>(m - 1) * static_cast<double>(m - 1);
  return dot / denom;
}

double cka(const Tensor& x1, const Tensor& x2) {
  if (x1.rank() != 2 || x2.rank() != 2) throw std::invalid_argument("cka: feature matrices required");
  if (x1.dim(0) != x2.dim(0)) throw std::invalid_argument("cka: row counts differ");
  const int64_t m = x1.dim(0);
  if (m < 2) throw std::invalid_argument("cka: need at least 2 rows");
  Eigen::Map<const EMat> a(x1.data(), x1.dim(1), m);  // column view of row-major [m, d]
  Eigen::Map<const EMat> b(x2.data(), x2.dim(1), m);
  // linear-kernel Grams X X^T
  EMat ka = a.transpose() * a;
  EMat kb = b.transpose() * b;
  Tensor kt = Tensor::from({m, m}, std::vector<double>(ka.data(), ka.data() + m * m));
  Tensor lt = Tensor::from({m, m}, std::vector<double>(kb.data(), kb.data() + m * m));
  const double kk = hsic(kt, kt);
  const double ll = hsic(lt, lt);
  // degenerate when the centered energy is pure roundoff relative to the
  // raw Gram energy (constant features center to ~0)
  const double denom = static_cast<double>(m - 1) * static_cast<double>(m - 1);
  const double k_scale = (ka.array() * ka.array()).sum() / denom;
  const double l_scale = (kb.array() * kb.array()).sum() / denom;
  if (kk <= 1e-24 * k_scale || ll <= 1e-24 * l_scale)
    throw DegenerateFeaturesError("cka: degenerate (constant) features, self-HSIC vanishes");
  return hsic(kt, lt) / std::sqrt(kk * ll);
}

std::string CkaMatrix::to_csv() const {
  std::ostringstream os;
  os << "dose";
  for (const auto& l : labels) os << "," << l;
  os << "\n";
  const int64_t n = values.dim(0);
  for (int64_t r = 0; r < n; ++r) {
    os << labels[static_cast<size_t>(r)];
    for (int64_t c = 0; c < n; ++c) os << "," << values.at(r, c);
    os << "\n";
  }
  return os.str();
}

CkaMatrix cka_across_doses(const models::Model& model,
                           const std::vector<std::vector<Slice>>& slices_per_dose,
                           const std::vector<std::string>& labels,
                           const std::string& layer_selector) {
  const size_t n_doses = slices_per_dose.size();
  if (n_doses < 2) throw std::invalid_argument("cka_across_doses: need at least two dose levels");
  if (labels.size() != n_doses)
    throw std::invalid_argument("cka_across_doses: one label per dose required");
  const size_t n_slices = slices_per_dose.front().size();
  if (n_slices < 2)
    throw std::invalid_argument("cka_across_doses: need at least two slices per dose");
  for (const auto& v : slices_per_dose)
    if (v.size() != n_slices)
      throw std::invalid_argument("cka_across_doses: same slice identities required per dose");

  ag::NoGradGuard no_grad;
  std::vector<Tensor> features;  // [m, d_feat] per dose
  for (const auto& dose_slices : slices_per_dose) {
    Tensor feat;
    for (size_t i = 0; i < n_slices; ++i) {
      const Slice& s = dose_slices[i];
      auto input = ag::constant(s.reshaped({1, 1, s.dim(0), s.dim(1)}));
      models::ForwardTaps taps;
      model.forward(input, &taps);
      const auto& tap = taps.select(layer_selector);
      const Tensor& tok = tap.tokens->value;
      if (feat.size() == 0) feat = Tensor({static_cast<int64_t>(n_slices), tok.size()});
      for (int64_t j = 0; j < tok.size(); ++j) feat[static_cast<int64_t>(i) * tok.size() + j] = tok[j];
    }
    features.push_back(std::move(feat));
  }

  CkaMatrix out;
  out.labels = labels;
  out.values = Tensor({static_cast<int64_t>(n_doses), static_cast<int64_t>(n_doses)});
  for (size_t i = 0; i < n_doses; ++i)
    for (size_t j = i; j < n_doses; ++j) {
      const double v = cka(features[i], features[j]);
      out.values.at(static_cast<int64_t>(i), static_cast<int64_t>(j)) = v;
      out.values.at(static_cast<int64_t>(j), static_cast<int64_t>(i)) = v;
    }
  return out;
}

NpsMap nps_map(const std::vector<Slice>& denoised, const std::vector<Slice>& clean) {
  if (denoised.empty() || denoised.size() != clean.size())
    throw std::invalid_argument("nps_map: paired non-empty sets required");
  const int64_t h = denoised.front().dim(0), w = denoised.front().dim(1);
  Tensor acc({h, w});
  for (size_t i = 0; i < denoised.size(); ++i) {
    if (!denoised[i].same_shape(clean[i]) || denoised[i].dim(0) != h || denoised[i].dim(1) != w)
      throw std::invalid_argument("nps_map: inconsistent slice shapes");
    std::vector<double> residual(static_cast<size_t>(h * w));
    double mean = 0.0;
    for (int64_t j = 0; j < h * w; ++j) {
      residual[static_cast<size_t>(j)] = denoised[i][j] - clean[i][j];
      mean += residual[static_cast<size_t>(j)];
    }
    mean /= static_cast<double>(h * w);
    for (auto& v : residual) v -= mean;
    const auto ps = power_spectrum_2d(residual, static_cast<int>(h), static_cast<int>(w));
    for (int64_t j = 0; j < h * w; ++j) acc[j] += ps[static_cast<size_t>(j)];
  }
  const double inv = 1.0 / static_cast<double>(denoised.size());
  // shift DC to the center
  NpsMap out;
  out.values = Tensor({h, w});
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      out.values.at(r, c) = acc.at((r + (h + 1) / 2) % h, (c + (w + 1) / 2) % w) * inv;
  return out;
}

std::vector<double> nps_axis_sum(const NpsMap& map, bool along_vertical) {
  const int64_t h = map.values.dim(0), w = map.values.dim(1);
  std::vector<double> out(static_cast<size_t>(along_vertical ? w : h), 0.0);
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      out[static_cast<size_t>(along_vertical ? c : r)] += map.values.at(r, c);
  return out;
}

std::vector<double> intensity_profile(const Slice& slice, ProfileAxis axis, int index) {
  const int64_t h = slice.dim(0), w = slice.dim(1);
  if (axis == ProfileAxis::horizontal) {
    if (index < 0 || index >= h) throw std::out_of_range("intensity_profile: row out of range");
    std::vector<double> out(static_cast<size_t>(w));
    for (int64_t c = 0; c < w; ++c) out[static_cast<size_t>(c)] = slice.at(index, c);
    return out;
  }
  if (index < 0 || index >= w) throw std::out_of_range("intensity_profile: column out of range");
  std::vector<double> out(static_cast<size_t>(h));
  for (int64_t r = 0; r < h; ++r) out[static_cast<size_t>(r)] = slice.at(r, index);
  return out;
}

double profile_mae(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("profile_mae: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

}  // namespace lomae::interpret
