#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lomae/rng.hpp"
#include "lomae/train.hpp"

using namespace lomae;
using namespace lomae::train;

namespace {

Slice random_slice(int n, uint64_t seed) {
  Rng rng(seed);
  Slice s({n, n});
  for (int64_t i = 0; i < s.size(); ++i) s[i] = rng.uniform();
  return s;
}

models::ModelConfig tiny_model(bool shortcut) {
  models::ModelConfig cfg;
  cfg.arch = models::Arch::swinir_style;
  cfg.depths = {1};
  cfg.embed_dim = 8;
  cfg.n_heads = 2;
  cfg.patch_size = 8;
  cfg.window_size = 2;
  cfg.shallow_channels = 2;
  cfg.input_size = 32;
  cfg.use_front_to_end_shortcut = shortcut;
  return cfg;
}

data::PairPool tiny_pool(int n_pairs, int n = 32) {
  std::vector<data::SlicePair> pairs;
  for (int i = 0; i < n_pairs; ++i) {
    data::SlicePair p;
    p.clean = random_slice(n, 100 + static_cast<uint64_t>(i));
    p.noisy = p.clean;
    Rng rng(200 + static_cast<uint64_t>(i));
    for (int64_t j = 0; j < p.noisy.size(); ++j) p.noisy[j] += rng.normal() * 0.05;
    p.patient_id = "P" + std::to_string(i % 4);
    p.slice_index = i;
    pairs.push_back(std::move(p));
  }
  return data::PairPool(std::move(pairs));
}

}  // namespace

TEST_CASE("masks have the exact count, per seed, and reject bad sizes") {
  const MaskSpec spec = make_mask(64, 64, 8, 0.75, 1);
  CHECK(spec.grid_h == 8);
  CHECK(spec.grid_w == 8);
  CHECK(static_cast<int>(spec.masked.size()) == 64);
  CHECK(spec.masked_count() == 48);  // exactly 75% of 64

  // exact-count property over many random specs
  for (uint64_t s = 0; s < 100; ++s) CHECK(make_mask(64, 64, 8, 0.75, s).masked_count() == 48);

  const MaskSpec again = make_mask(64, 64, 8, 0.75, 1);
  CHECK(again.masked == spec.masked);
  const MaskSpec other = make_mask(64, 64, 8, 0.75, 2);
  CHECK(other.masked != spec.masked);

  CHECK(make_mask(64, 64, 8, 0.0, 3).masked_count() == 0);
  CHECK(make_mask(64, 64, 8, 1.0, 3).masked_count() == 64);
  CHECK(make_mask(48, 48, 8, 0.5, 3).masked_count() == 18);

  CHECK_THROWS_AS(make_mask(60, 60, 8, 0.75, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_mask(64, 64, 8, 1.5, 0), std::invalid_argument);
}

TEST_CASE("apply_mask zero-fills masked patches and passes the rest through") {
  const Slice s = random_slice(64, 7);
  const MaskSpec spec = make_mask(64, 64, 8, 0.75, 9);
  const Slice masked = apply_mask(s, spec);

  double unmasked_sum = 0.0;
  for (int gr = 0; gr < 8; ++gr)
    for (int gc = 0; gc < 8; ++gc)
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
          const double v = masked.at(gr * 8 + r, gc * 8 + c);
          if (spec.is_masked(gr, gc)) {
            CHECK(v == 0.0);
          } else {
            CHECK(v == s.at(gr * 8 + r, gc * 8 + c));  // bit-exact passthrough
            unmasked_sum += v;
          }
        }
  // per-mask direct computation of the output mean
  CHECK(masked.mean() == doctest::Approx(unmasked_sum / (64.0 * 64.0)).epsilon(1e-12));

  // and the coarse 0.25 * mean(input) relation, bounded by patch-mean spread
  std::vector<double> patch_means;
  for (int gr = 0; gr < 8; ++gr)
    for (int gc = 0; gc < 8; ++gc) {
      double m = 0.0;
      for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) m += s.at(gr * 8 + r, gc * 8 + c);
      patch_means.push_back(m / 64.0);
    }
  const auto [mn, mx] = std::minmax_element(patch_means.begin(), patch_means.end());
  CHECK(std::fabs(masked.mean() - 0.25 * s.mean()) <= 0.25 * (*mx - *mn) + 1e-12);

  // ratio 0: apply_mask is the identity
  const Slice untouched = apply_mask(s, make_mask(64, 64, 8, 0.0, 1));
  CHECK(bit_identical(untouched, s));
  // all masked: all fill
  const Slice blank = apply_mask(s, make_mask(64, 64, 8, 1.0, 1));
  CHECK(blank.max() == 0.0);

  CHECK_THROWS_AS(apply_mask(random_slice(32, 1), spec), std::invalid_argument);
}

TEST_CASE("l1 loss: trivial values and a brute-force oracle") {
  const Slice a = random_slice(16, 11);
  CHECK(loss_l1(ag::constant(a), ag::constant(a))->value[0] == 0.0);

  Slice b = a;
  for (int64_t i = 0; i < b.size(); ++i) b[i] += 0.5;
  CHECK(loss_l1(ag::constant(b), ag::constant(a))->value[0] == doctest::Approx(0.5).epsilon(1e-12));

  const Slice c = random_slice(16, 12);
  double brute = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) brute += std::fabs(a[i] - c[i]);
  brute /= static_cast<double>(a.size());
  CHECK(loss_l1(ag::constant(a), ag::constant(c))->value[0] ==
        doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("ssim: identity, constant-image closed form, ordering") {
  const Slice a = random_slice(32, 13);
  CHECK(ssim_value(ag::constant(a), ag::constant(a))->value[0] == 1.0);

  const double va = 0.3, vb = 0.7, c1 = 1e-4, c2 = 9e-4;
  const Slice ca({32, 32}, va), cb({32, 32}, vb);
  const double expected = (2.0 * va * vb + c1) * c2 / ((va * va + vb * vb + c1) * c2);
  CHECK(ssim_value(ag::constant(ca), ag::constant(cb))->value[0] ==
        doctest::Approx(expected).epsilon(1e-9));

  // binary half-plane against its inversion scores below self-similarity
  Slice half({32, 32});
  for (int64_t r = 0; r < 32; ++r)
    for (int64_t c = 0; c < 32; ++c) half.at(r, c) = r < 16 ? 1.0 : 0.0;
  Slice inverted = half;
  for (int64_t i = 0; i < inverted.size(); ++i) inverted[i] = 1.0 - inverted[i];
  CHECK(ssim_value(ag::constant(half), ag::constant(inverted))->value[0] <
        ssim_value(ag::constant(half), ag::constant(half))->value[0]);

  CHECK_THROWS_AS(ssim_value(ag::constant(a), ag::constant(random_slice(16, 1))),
                  std::invalid_argument);
}

TEST_CASE("combined loss: zero at identity, beta=0 reduces to alpha*l1") {
  const Slice a = random_slice(32, 14);
  const Slice b = random_slice(32, 15);
  LossWeights w{0.7, 0.0};
  const double combined = loss_combined(ag::constant(a), ag::constant(b), w)->value[0];
  const double l1 = loss_l1(ag::constant(a), ag::constant(b))->value[0];
  CHECK(combined == doctest::Approx(0.7 * l1).epsilon(1e-12));

  LossWeights both{1.0, 0.1};
  CHECK(loss_combined(ag::constant(a), ag::constant(a), both)->value[0] == 0.0);

  CHECK_THROWS_AS(LossWeights({-1.0, 0.5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(LossWeights({0.0, 0.0}).validate(), std::invalid_argument);
}

TEST_CASE("loss gradients match finite differences on 16x16 toys") {
  const Slice target = random_slice(16, 16);
  Slice pred = random_slice(16, 17);
  for (int64_t i = 0; i < pred.size(); ++i)
    if (std::fabs(pred[i] - target[i]) < 0.02) pred[i] += 0.05;  // stay off the |.| kink

  struct Case {
    const char* name;
    std::function<ag::Var(const ag::Var&, const ag::Var&)> loss;
  };
  SsimOptions ssim_opt;
  const std::vector<Case> cases{
      {"l1", [](const ag::Var& p, const ag::Var& t) { return loss_l1(p, t); }},
      {"ssim",
       [&](const ag::Var& p, const ag::Var& t) { return ssim_value(p, t, ssim_opt); }},
      {"combined",
       [&](const ag::Var& p, const ag::Var& t) {
         return loss_combined(p, t, {1.0, 0.1}, ssim_opt);
       }},
  };
  for (const auto& c : cases) {
    auto pv = ag::param(pred);
    auto loss = c.loss(pv, ag::constant(target));
    ag::backward(loss);
    const Tensor fd = ag::finite_difference(
        [&](const Tensor& x) {
          ag::NoGradGuard no_grad;
          return c.loss(ag::leaf(x, false), ag::leaf(target, false))->value[0];
        },
        pred);
    INFO(c.name);
    CHECK(ag::relative_error(pv->grad, fd) < 1e-6);
  }
}

TEST_CASE("learning-rate schedule decays by half every decay_every iterations") {
  TrainConfig cfg;
  cfg.lr0 = 1.5e-4;
  cfg.decay_every = 3000;
  cfg.decay_factor = 0.5;
  CHECK(lr_at(0, cfg) == doctest::Approx(1.5e-4));
  CHECK(lr_at(2999, cfg) == doctest::Approx(1.5e-4));
  CHECK(lr_at(3000, cfg) == doctest::Approx(0.75e-4));  // after 3000 iterations
  CHECK(lr_at(6000, cfg) == doctest::Approx(0.375e-4));
  CHECK(lr_at(9001, cfg) == doctest::Approx(1.5e-4 / 8.0));
}

TEST_CASE("adam reduces a quadratic") {
  auto w = ag::param(Tensor::from({2}, {3.0, -2.0}));
  nn::ParamList params{{"w", w}};
  Adam adam;
  adam.attach(params);
  for (int i = 0; i < 400; ++i) {
    adam.zero_grad();
    auto loss = ag::sum_all(ag::mul(w, w));
    ag::backward(loss);
    adam.step(0.05);
  }
  CHECK(std::fabs(w->value[0]) < 0.05);
  CHECK(std::fabs(w->value[1]) < 0.05);
}

TEST_CASE("pretraining learns, stays label-free, and rejects shortcut models") {
  auto pool = tiny_pool(10);
  models::Model model(tiny_model(false), 21);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.lr0 = 2e-3;
  cfg.decay_every = 100000;
  cfg.seed = 3;
  cfg.mask_patch = 8;
  cfg.mask_ratio = 0.75;
  const TrainResult result = pretrain(model, pool, cfg);

  REQUIRE(result.curve.size() == 80);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += result.curve[static_cast<size_t>(i)].loss;
    last += result.curve[result.curve.size() - 10 + static_cast<size_t>(i)].loss;
  }
  CHECK(last < first);  // masked reconstruction improves

  CHECK(result.audit.clean_reads == 0);  // label-free contract
  CHECK(result.audit.noisy_reads >= 80);
  CHECK(result.audit.masks_built == 80);
  CHECK(result.checkpoint.stage == "pretrained");

  // learning-rate column follows the declared schedule
  TrainConfig decay_cfg = cfg;
  decay_cfg.epochs = 2;
  decay_cfg.decay_every = 7;
  models::Model m2(tiny_model(false), 22);
  const TrainResult r2 = pretrain(m2, pool, decay_cfg);
  for (const auto& point : r2.curve)
    CHECK(point.lr == doctest::Approx(lr_at(point.iteration, decay_cfg)));

  models::Model shortcut_model(tiny_model(true), 23);
  CHECK_THROWS_AS(pretrain(shortcut_model, pool, cfg), std::invalid_argument);
}

TEST_CASE("finetune transfers, trains without masks, and polices stages") {
  auto pool = tiny_pool(8);
  models::Model pre_model(tiny_model(false), 25);
  TrainConfig pre_cfg;
  pre_cfg.epochs = 2;
  pre_cfg.seed = 5;
  const TrainResult pre = pretrain(pre_model, pool, pre_cfg);

  TrainConfig fine_cfg;
  fine_cfg.epochs = 6;
  fine_cfg.lr0 = 2e-3;
  fine_cfg.seed = 6;
  const TrainResult fine = finetune(pre.checkpoint, pool, fine_cfg);
  CHECK(fine.audit.masks_built == 0);  // masking disabled during finetuning
  CHECK(fine.audit.clean_reads > 0);   // supervised stage may read labels
  CHECK(fine.checkpoint.stage == "finetuned");
  CHECK(fine.checkpoint.init == "pretrained");
  CHECK(fine.checkpoint.config.use_front_to_end_shortcut);

  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) {
    first += fine.curve[static_cast<size_t>(i)].loss;
    last += fine.curve[fine.curve.size() - 5 + static_cast<size_t>(i)].loss;
  }
  CHECK(last < first);

  // a finetuned checkpoint cannot seed another finetune
  CHECK_THROWS_AS(finetune(fine.checkpoint, pool, fine_cfg), std::invalid_argument);

  // empty paired pool is rejected
  data::PairPool empty;
  CHECK_THROWS_AS(finetune(pre.checkpoint, empty, fine_cfg), std::invalid_argument);
}

TEST_CASE("epoch-zero identity: zeroed body head makes the first loss L_f(x, y)") {
  auto pool = tiny_pool(4);
  models::Model pre_model(tiny_model(false), 27);
  for (const auto& p : pre_model.params())
    if (p.name.rfind("recon", 0) == 0) p.var->value.fill(0.0);
  const models::Checkpoint ckpt = models::make_checkpoint(pre_model, "pretrained", 0);

  models::ModelConfig fine_cfg = tiny_model(true);
  models::Model fine = models::transfer_weights(ckpt, fine_cfg);
  const Slice& x = pool.noisy(0);
  const Slice& y = pool.clean(0);
  // prediction equals the input through the reconnected shortcut
  CHECK(bit_identical(fine.denoise(x), x));
  const double expected =
      loss_combined(ag::constant(x), ag::constant(y), {1.0, 0.1})->value[0];
  const double actual =
      loss_combined(ag::constant(fine.denoise(x)), ag::constant(y), {1.0, 0.1})->value[0];
  CHECK(actual == expected);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  auto pool = tiny_pool(6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  models::Model a(tiny_model(false), 31);
  models::Model b(tiny_model(false), 31);
  const TrainResult ra = pretrain(a, pool, cfg);
  pool.reset_audit();
  const TrainResult rb = pretrain(b, pool, cfg);
  for (const auto& [name, t] : ra.checkpoint.tensors)
    CHECK(bit_identical(t, rb.checkpoint.tensors.at(name)));
  for (size_t i = 0; i < ra.curve.size(); ++i) CHECK(ra.curve[i].loss == rb.curve[i].loss);
}
