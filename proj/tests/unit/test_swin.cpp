#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lomae/swin.hpp"

using namespace lomae;
using namespace lomae::swin;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * scale;
  return t;
}

TokenGrid random_grid(int batch, int gh, int gw, int window, int d, uint64_t seed) {
  auto tokens = ag::param(random_tensor({batch, static_cast<int64_t>(gh) * gw, d}, seed));
  return partition(tokens, batch, gh, gw, window);
}

}  // namespace

TEST_CASE("partition and unpartition are inverse") {
  const Tensor src = random_tensor({2, 8 * 8, 5}, 1);
  auto grid = partition(ag::constant(src), 2, 8, 8, 4);
  CHECK(grid.n_windows() == 4);
  CHECK(grid.tokens_per_window() == 16);
  auto back = unpartition(grid);
  CHECK(bit_identical(back->value, src));
  CHECK(bit_identical(unpartition_tensor(grid.tokens->value, 2, 8, 8, 4), src));
}

TEST_CASE("patch embedding: shapes, zero linearity, patch locality") {
  Rng rng(3);
  PatchEmbed embed;
  embed.init(1, 8, 12, rng);

  const Tensor img = random_tensor({1, 1, 64, 64}, 4);
  auto grid = patch_embed(ag::constant(img), embed, 8);
  CHECK(grid.grid_h == 8);
  CHECK(grid.grid_w == 8);
  CHECK(grid.n_windows() * grid.tokens_per_window() == 64);
  CHECK(grid.dim() == 12);

  // zero image with zero bias embeds to zero tokens
  embed.proj.b->value.fill(0.0);
  auto zero_grid = patch_embed(ag::constant(Tensor({1, 1, 64, 64})), embed, 8);
  CHECK(zero_grid.tokens->value.max() == 0.0);
  CHECK(zero_grid.tokens->value.min() == 0.0);

  // swapping two input patches swaps exactly the corresponding tokens
  Tensor swapped = img;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c)
      std::swap(swapped[static_cast<int64_t>(r) * 64 + c],          // patch (0,0)
                swapped[(24 + r) * 64 + (40 + c)]);                 // patch (3,5)
  auto base = unpartition(patch_embed(ag::constant(img), embed, 8))->value;
  auto perm = unpartition(patch_embed(ag::constant(swapped), embed, 8))->value;
  const int64_t d = 12;
  for (int64_t t = 0; t < 64; ++t) {
    int64_t expect_from = t;
    if (t == 0) expect_from = 3 * 8 + 5;
    if (t == 3 * 8 + 5) expect_from = 0;
    for (int64_t c = 0; c < d; ++c) CHECK(perm[t * d + c] == base[expect_from * d + c]);
  }

  CHECK_THROWS_AS(patch_embed(ag::constant(random_tensor({1, 1, 60, 60}, 5)), embed, 8),
                  std::invalid_argument);
}

TEST_CASE("single-token window attends only to itself") {
  Rng rng(7);
  WindowAttention attn;
  attn.init(6, 2, 1, rng);  // window of one token
  auto grid = random_grid(1, 2, 2, 1, 6, 8);
  Tensor probs;
  auto out = wmha(grid, attn, &probs);
  CHECK(out.tokens->value.same_shape(grid.tokens->value));
  for (int64_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == 1.0);
}

TEST_CASE("attention rows sum to one") {
  Rng rng(9);
  WindowAttention attn;
  attn.init(8, 4, 4, rng);
  auto grid = random_grid(2, 8, 8, 4, 8, 10);
  Tensor probs;
  wmha(grid, attn, &probs);
  const auto& s = probs.shape();  // [B, W, h, n, n]
  const int64_t rows = probs.size() / s.back();
  for (int64_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int64_t c = 0; c < s.back(); ++c) sum += probs[r * s.back() + c];
    CHECK(std::fabs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("zero bias and identical tokens give uniform attention") {
  Rng rng(11);
  WindowAttention attn;
  attn.init(6, 3, 2, rng);
  attn.bias_table->value.fill(0.0);
  // every token identical -> equal logits -> 1/n per row
  Tensor same({1, 16, 6});
  for (int64_t t = 0; t < 16; ++t)
    for (int64_t c = 0; c < 6; ++c) same[t * 6 + c] = 0.3 * static_cast<double>(c) - 0.5;
  auto grid = partition(ag::constant(same), 1, 4, 4, 2);
  Tensor probs;
  wmha(grid, attn, &probs);
  for (int64_t i = 0; i < probs.size(); ++i) CHECK(probs[i] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("cyclic shift: inverse, identity and range checks") {
  auto grid = random_grid(1, 8, 8, 4, 5, 13);
  auto shifted = cyclic_shift(grid, 2);
  CHECK(shifted.shift == 2);
  CHECK_FALSE(bit_identical(shifted.tokens->value, grid.tokens->value));
  auto back = cyclic_unshift(shifted, 2);
  CHECK(back.shift == 0);
  CHECK(bit_identical(back.tokens->value, grid.tokens->value));

  auto same = cyclic_shift(grid, 0);
  CHECK(bit_identical(same.tokens->value, grid.tokens->value));

  CHECK_THROWS_AS(cyclic_shift(grid, 4), std::invalid_argument);
  CHECK_THROWS_AS(cyclic_shift(grid, -1), std::invalid_argument);
}

TEST_CASE("cyclic shift rolls the spatial grid by (-offset, -offset)") {
  // tokens encode their own spatial coordinates, so the roll is checkable
  const int gh = 8, gw = 8;
  Tensor coords({1, gh * gw, 2});
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      coords[(static_cast<int64_t>(r) * gw + c) * 2] = r;
      coords[(static_cast<int64_t>(r) * gw + c) * 2 + 1] = c;
    }
  auto grid = partition(ag::constant(coords), 1, gh, gw, 4);
  auto rolled = unpartition(cyclic_shift(grid, 3))->value;
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw; ++c) {
      CHECK(rolled[(static_cast<int64_t>(r) * gw + c) * 2] == (r + 3) % gh);
      CHECK(rolled[(static_cast<int64_t>(r) * gw + c) * 2 + 1] == (c + 3) % gw);
    }
}

TEST_CASE("shifted-window wrap mask blocks exactly the cross-boundary pairs") {
  const int gh = 8, gw = 8, window = 4, shift = 2;
  Rng rng(17);
  WindowAttention attn;
  attn.init(8, 2, window, rng);
  auto grid = cyclic_shift(random_grid(1, gh, gw, window, 8, 18), shift);
  Tensor probs;
  wmha(grid, attn, &probs);  // [1, W, h, n, n]

  const int wins_w = gw / window;
  const int n = window * window;
  const int heads = 2;
  // oracle: a rolled position wrapped iff its pre-shift source came from the
  // other side of the torus seam
  auto wrapped = [&](int rolled_r, int rolled_c) {
    return std::pair<bool, bool>{rolled_r >= gh - shift, rolled_c >= gw - shift};
  };
  int blocked = 0, open = 0;
  for (int w = 0; w < (gh / window) * wins_w; ++w) {
    const int wr = w / wins_w, wc = w % wins_w;
    for (int t1 = 0; t1 < n; ++t1)
      for (int t2 = 0; t2 < n; ++t2) {
        const auto reg1 = wrapped(wr * window + t1 / window, wc * window + t1 % window);
        const auto reg2 = wrapped(wr * window + t2 / window, wc * window + t2 % window);
        const bool allowed = reg1 == reg2;
        for (int h = 0; h < heads; ++h) {
          const double p =
              probs[((static_cast<int64_t>(w) * heads + h) * n + t1) * n + t2];
          if (allowed) {
            CHECK(p > 0.0);
            ++open;
          } else {
            CHECK(p == 0.0);  // exact zero, not merely small
            ++blocked;
          }
        }
      }
  }
  CHECK(blocked > 0);
  CHECK(open > 0);
}

TEST_CASE("block pair with zeroed output projections is the identity") {
  Rng rng(19);
  SwinBlockPair pair;
  pair.init(8, 2, 4, 2.0, rng);
  for (SwinBlock* blk : {&pair.w_block, &pair.sw_block}) {
    blk->attn.out.w->value.fill(0.0);
    blk->attn.out.b->value.fill(0.0);
    blk->mlp.fc2.w->value.fill(0.0);
    blk->mlp.fc2.b->value.fill(0.0);
  }
  auto grid = random_grid(1, 8, 8, 4, 8, 20);
  auto out = swin_block_pair(grid, pair);
  CHECK(bit_identical(out.tokens->value, grid.tokens->value));
}

TEST_CASE("block pair preserves shape and passes a finite-difference check") {
  Rng rng(23);
  const int d = 6;
  SwinBlockPair pair;
  pair.init(d, 2, 2, 2.0, rng);

  // two-window toy grid (4 x 2 tokens, window 2)
  const Tensor x0 = random_tensor({1, 8, d}, 24, 0.5);
  const Tensor readout = random_tensor({1, 8, d}, 25);

  auto forward_scalar = [&](const Tensor& x) {
    auto grid = partition(ag::leaf(x, false), 1, 4, 2, 2);
    auto out = swin_block_pair(grid, pair);
    return ag::mean_all(ag::mul(unpartition(out), ag::constant(readout)))->value[0];
  };

  auto leafv = ag::param(x0);
  auto grid = partition(leafv, 1, 4, 2, 2);
  auto out = swin_block_pair(grid, pair);
  CHECK(out.tokens->value.same_shape(grid.tokens->value));
  auto loss = ag::mean_all(ag::mul(unpartition(out), ag::constant(readout)));
  ag::backward(loss);

  const Tensor fd = ag::finite_difference(
      [&](const Tensor& x) {
        ag::NoGradGuard no_grad;
        return forward_scalar(x);
      },
      x0);
  CHECK(ag::relative_error(leafv->grad, fd) < 1e-7);
}

TEST_CASE("patch merge and expand: shapes, averaging init, parity errors") {
  Rng rng(29);
  const int d = 6;
  PatchMerge merge;
  merge.init(d, rng);
  PatchExpand expand;
  expand.init(2 * d, rng);

  auto grid = random_grid(1, 8, 8, 4, d, 30);
  auto merged = patch_merge(grid, merge, 4);
  CHECK(merged.grid_h == 4);
  CHECK(merged.grid_w == 4);
  CHECK(merged.dim() == 2 * d);

  auto expanded = patch_expand(merged, expand, 4);
  CHECK(expanded.grid_h == 8);
  CHECK(expanded.grid_w == 8);
  CHECK(expanded.dim() == d);
  CHECK(expanded.tokens->value.same_shape(grid.tokens->value));

  // averaging init keeps a constant token field constant
  merge.set_averaging_init(d);
  Tensor constant_field({1, 64, d});
  for (int64_t t = 0; t < 64; ++t)
    for (int64_t c = 0; c < d; ++c) constant_field[t * d + c] = 0.1 * static_cast<double>(c) + 0.2;
  auto cgrid = partition(ag::constant(constant_field), 1, 8, 8, 4);
  auto cmerged = patch_merge(cgrid, merge, 4);
  for (int64_t t = 0; t < 16; ++t)
    for (int64_t c = 0; c < 2 * d; ++c)
      CHECK(cmerged.tokens->value[t * 2 * d + c] ==
            doctest::Approx(0.1 * static_cast<double>(c % d) + 0.2).epsilon(1e-12));

  auto odd = random_grid(1, 6, 6, 3, d, 31);
  odd.grid_h = 5;  // simulate an odd grid
  CHECK_THROWS_AS(patch_merge(odd, merge, 2), std::invalid_argument);
}

TEST_CASE("batch permutation equivariance") {
  Rng rng(37);
  SwinBlockPair pair;
  pair.init(6, 2, 2, 2.0, rng);
  const Tensor a = random_tensor({1, 16, 6}, 38);
  const Tensor b = random_tensor({1, 16, 6}, 39);
  Tensor ab({2, 16, 6}), ba({2, 16, 6});
  for (int64_t i = 0; i < a.size(); ++i) {
    ab[i] = a[i];
    ab[a.size() + i] = b[i];
    ba[i] = b[i];
    ba[a.size() + i] = a[i];
  }
  auto out_ab = swin_block_pair(partition(ag::constant(ab), 2, 4, 4, 2), pair);
  auto out_ba = swin_block_pair(partition(ag::constant(ba), 2, 4, 4, 2), pair);
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(out_ab.tokens->value[i] == out_ba.tokens->value[a.size() + i]);
    CHECK(out_ab.tokens->value[a.size() + i] == out_ba.tokens->value[i]);
  }
}
