#pragma once

#include "lomae/layers.hpp"

namespace lomae::swin {

// Token stack in window-partitioned form: [batch, n_windows, tokens_per_window,
// dim]. Windows tile the grid row-major; tokens inside a window are row-major
// too. `shift` records the cyclic offset currently applied to the grid.
struct TokenGrid {
  ag::Var tokens;
  int batch = 0;
  int grid_h = 0;
  int grid_w = 0;
  int window = 0;
  int shift = 0;

  int n_windows() const { return (grid_h / window) * (grid_w / window); }
  int tokens_per_window() const { return window * window; }
  int64_t dim() const { return tokens->value.shape().back(); }
};

// [B, N, d] (row-major grid order) <-> partitioned TokenGrid.
TokenGrid partition(const ag::Var& tokens_bnd, int batch, int grid_h, int grid_w, int window);
ag::Var unpartition(const TokenGrid& grid);
// Plain-tensor variant used on recorded activations/gradients.
Tensor unpartition_tensor(const Tensor& tokens, int batch, int grid_h, int grid_w, int window);

// Torus roll of the token grid by (-offset, -offset); sets grid.shift.
TokenGrid cyclic_shift(const TokenGrid& grid, int offset);
// Inverse roll; clears grid.shift.
TokenGrid cyclic_unshift(const TokenGrid& grid, int offset);

// Additive attention mask for a shifted grid: 0 where both tokens of a window
// pair come from the same pre-shift region, -inf across the wrap boundary.
// Shape [n_windows, n, n]; empty when shift == 0.
Tensor shift_attention_mask(int grid_h, int grid_w, int window, int shift);

struct PatchEmbed {
  nn::Linear proj;  // [in_ch * patch^2, d]
  int patch = 0;
  int in_ch = 1;
  void init(int in_ch, int patch, int d, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Non-overlapping patches -> linear tokens, returned window-partitioned.
TokenGrid patch_embed(const ag::Var& images, const PatchEmbed& embed, int window);
// Inverse: tokens -> [B, out_ch, H, W] through a d -> out_ch*patch^2 linear.
ag::Var patch_unembed(const TokenGrid& grid, const nn::Linear& proj, int out_ch, int patch);

struct WindowAttention {
  nn::Linear q, k, v, out;
  ag::Var bias_table;  // [(2*window-1)^2, n_heads], learned
  int n_heads = 0;
  int window = 0;
  void init(int d, int n_heads, int window, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// softmax(Q K^T / sqrt(d_k) + B [+ mask]) V within each window. When
// attn_probs is non-null the attention tensor [B, W, h, n, n] is copied out.
TokenGrid wmha(const TokenGrid& grid, const WindowAttention& params,
               Tensor* attn_probs = nullptr);

struct SwinBlock {
  nn::LayerNorm ln1, ln2;
  WindowAttention attn;
  nn::Mlp mlp;
  bool shifted = false;  // second half of the Eq-8 style pair
  void init(int d, int n_heads, int window, double mlp_ratio, bool shifted, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Pre-norm attention + MLP with residuals; shifted blocks roll by window/2,
// attend under the wrap mask, and roll back.
TokenGrid swin_block(const TokenGrid& grid, const SwinBlock& block);

struct SwinBlockPair {
  SwinBlock w_block;   // plain windows
  SwinBlock sw_block;  // shifted windows
  void init(int d, int n_heads, int window, double mlp_ratio, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// The four-line recurrence: WMHA then S-WMHA halves, each with pre-norm and
// residual MLP.
TokenGrid swin_block_pair(const TokenGrid& grid, const SwinBlockPair& pair);

struct PatchMerge {
  nn::Linear reduce;  // [4d, 2d]
  void init(int d, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
  // Test/initialization helper: output channel j = mean of the four
  // neighbours' channel (j mod d); a constant token field stays constant.
  void set_averaging_init(int d);
};

// Concatenates each 2x2 token neighbourhood and maps 4d -> 2d; grid halves.
TokenGrid patch_merge(const TokenGrid& grid, const PatchMerge& merge, int out_window);

struct PatchExpand {
  nn::Linear expand;  // [d, 2d]
  void init(int d, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Inverse shape transform of patch_merge: d -> 2d, then shuffled into a 2x
// grid of d/2 tokens.
TokenGrid patch_expand(const TokenGrid& grid, const PatchExpand& expand, int out_window);

}  // namespace lomae::swin
