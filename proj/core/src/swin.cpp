#include "lomae/swin.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace lomae::nn {

void Linear::init(int in, int out, Rng& rng, bool bias, double init_std) {
  Tensor wt({in, out});
  for (int64_t i = 0; i < wt.size(); ++i) wt[i] = rng.truncated_normal(init_std);
  w = ag::param(std::move(wt));
  b = bias ? ag::param(Tensor({out})) : ag::Var{};
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  if (b) out.push_back({prefix + ".b", b});
}

void LayerNorm::init(int d) {
  gamma = ag::param(Tensor({d}, 1.0));
  beta = ag::param(Tensor({d}));
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

void Conv2d::init(int in_ch, int out_ch, int k, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch) * k * k);
  Tensor wt({out_ch, in_ch, k, k});
  for (int64_t i = 0; i < wt.size(); ++i) wt[i] = rng.uniform(-bound, bound);
  Tensor bt({out_ch});
  for (int64_t i = 0; i < bt.size(); ++i) bt[i] = rng.uniform(-bound, bound);
  w = ag::param(std::move(wt));
  b = ag::param(std::move(bt));
}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

void Mlp::init(int d, int hidden, Rng& rng) {
  fc1.init(d, hidden, rng);
  fc2.init(hidden, d, rng);
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

}  // namespace lomae::nn

namespace lomae::swin {

namespace {

void check_grid(int grid_h, int grid_w, int window, const char* op) {
  if (window <= 0 || grid_h <= 0 || grid_w <= 0)
    throw std::invalid_argument(std::string(op) + ": bad grid/window");
  if (grid_h % window != 0 || grid_w % window != 0)
    throw std::invalid_argument(std::string(op) + ": grid " + std::to_string(grid_h) + "x" +
                                std::to_string(grid_w) + " not divisible by window " +
                                std::to_string(window));
}

// Flat index into [B, N, d] for spatial (r, c).
inline int64_t spatial_index(int64_t b, int64_t r, int64_t c, int64_t gw, int64_t d,
                             int64_t n_tokens) {
  return (b * n_tokens + r * gw + c) * d;
}

// Gather map moving [B, N, d] (optionally rolled by `roll`) into partitioned
// [B, nW, n, d] order.
ag::IndexMap partition_map(int batch, int grid_h, int grid_w, int window, int64_t d, int roll) {
  const int64_t n_tokens = static_cast<int64_t>(grid_h) * grid_w;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->resize(static_cast<size_t>(batch * n_tokens * d));
  const int wins_w = grid_w / window;
  int64_t out = 0;
  for (int64_t b = 0; b < batch; ++b)
    for (int wr = 0; wr < grid_h / window; ++wr)
      for (int wc = 0; wc < wins_w; ++wc)
        for (int i = 0; i < window; ++i)
          for (int j = 0; j < window; ++j) {
            const int r = (wr * window + i + roll + grid_h) % grid_h;
            const int c = (wc * window + j + roll + grid_w) % grid_w;
            const int64_t src = spatial_index(b, r, c, grid_w, d, n_tokens);
            for (int64_t ch = 0; ch < d; ++ch) (*map)[static_cast<size_t>(out++)] = src + ch;
          }
  return map;
}

// Inverse: moving partitioned tokens back into [B, N, d] spatial order, with
// optional roll applied on the way out.
ag::IndexMap unpartition_map(int batch, int grid_h, int grid_w, int window, int64_t d, int roll) {
  const int64_t n_tokens = static_cast<int64_t>(grid_h) * grid_w;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->resize(static_cast<size_t>(batch * n_tokens * d));
  const int wins_w = grid_w / window;
  for (int64_t b = 0; b < batch; ++b)
    for (int r = 0; r < grid_h; ++r)
      for (int c = 0; c < grid_w; ++c) {
        const int rr = (r + roll + grid_h) % grid_h;
        const int cc = (c + roll + grid_w) % grid_w;
        const int64_t win = static_cast<int64_t>(rr / window) * wins_w + cc / window;
        const int64_t tok = static_cast<int64_t>(rr % window) * window + cc % window;
        const int64_t src = ((b * (n_tokens / (window * window)) + win) *
                                 static_cast<int64_t>(window) * window +
                             tok) *
                            d;
        const int64_t dst = spatial_index(b, r, c, grid_w, d, n_tokens);
        for (int64_t ch = 0; ch < d; ++ch) (*map)[static_cast<size_t>(dst + ch)] = src + ch;
      }
  return map;
}

}  // namespace

TokenGrid partition(const ag::Var& tokens_bnd, int batch, int grid_h, int grid_w, int window) {
  check_grid(grid_h, grid_w, window, "partition");
  const int64_t d = tokens_bnd->value.shape().back();
  auto map = partition_map(batch, grid_h, grid_w, window, d, 0);
  TokenGrid g;
  g.tokens = ag::gather(tokens_bnd, map,
                        {batch, (grid_h / window) * (grid_w / window),
                         static_cast<int64_t>(window) * window, d});
  g.batch = batch;
  g.grid_h = grid_h;
  g.grid_w = grid_w;
  g.window = window;
  g.shift = 0;
  return g;
}

ag::Var unpartition(const TokenGrid& grid) {
  const int64_t d = grid.dim();
  auto map = unpartition_map(grid.batch, grid.grid_h, grid.grid_w, grid.window, d, 0);
  return ag::gather(grid.tokens, map,
                    {grid.batch, static_cast<int64_t>(grid.grid_h) * grid.grid_w, d});
}

Tensor unpartition_tensor(const Tensor& tokens, int batch, int grid_h, int grid_w, int window) {
  const int64_t d = tokens.shape().back();
  auto map = unpartition_map(batch, grid_h, grid_w, window, d, 0);
  Tensor out({batch, static_cast<int64_t>(grid_h) * grid_w, d});
  for (int64_t i = 0; i < out.size(); ++i) out[i] = tokens[(*map)[static_cast<size_t>(i)]];
  return out;
}

TokenGrid cyclic_shift(const TokenGrid& grid, int offset) {
  if (offset < 0 || offset >= grid.window)
    throw std::invalid_argument("cyclic_shift: offset must be in [0, window)");
  if (offset == 0) return grid;
  const int64_t d = grid.dim();
  // partitioned -> (roll by -offset) -> partitioned, as one gather
  auto map = partition_map(grid.batch, grid.grid_h, grid.grid_w, grid.window, d, offset);
  // compose with the partitioned->spatial layout of the source
  auto composed = std::make_shared<std::vector<int64_t>>(map->size());
  auto src_spatial =
      unpartition_map(grid.batch, grid.grid_h, grid.grid_w, grid.window, d, 0);
  // src_spatial maps spatial index -> partitioned source index; partition_map
  // yields spatial source indices, so chain them.
  for (size_t i = 0; i < map->size(); ++i)
    (*composed)[i] = (*src_spatial)[static_cast<size_t>((*map)[i])];
  TokenGrid out = grid;
  out.tokens = ag::gather(grid.tokens, composed, grid.tokens->value.shape());
  out.shift = offset;
  return out;
}

TokenGrid cyclic_unshift(const TokenGrid& grid, int offset) {
  if (offset < 0 || offset >= grid.window)
    throw std::invalid_argument("cyclic_unshift: offset must be in [0, window)");
  if (offset == 0) return grid;
  const int64_t d = grid.dim();
  auto map = partition_map(grid.batch, grid.grid_h, grid.grid_w, grid.window, d, -offset);
  auto src_spatial =
      unpartition_map(grid.batch, grid.grid_h, grid.grid_w, grid.window, d, 0);
  auto composed = std::make_shared<std::vector<int64_t>>(map->size());
  for (size_t i = 0; i < map->size(); ++i)
    (*composed)[i] = (*src_spatial)[static_cast<size_t>((*map)[i])];
  TokenGrid out = grid;
  out.tokens = ag::gather(grid.tokens, composed, grid.tokens->value.shape());
  out.shift = 0;
  return out;
}

Tensor shift_attention_mask(int grid_h, int grid_w, int window, int shift) {
  check_grid(grid_h, grid_w, window, "shift_attention_mask");
  if (shift <= 0) return Tensor{};
  const int n = window * window;
  const int wins_h = grid_h / window, wins_w = grid_w / window;
  const int n_win = wins_h * wins_w;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Tensor mask({n_win, n, n});
  // Position r in the rolled frame holds original row (r + shift) % grid_h;
  // it wrapped around iff r >= grid_h - shift. Tokens may only attend within
  // the same (row-wrap, col-wrap) region.
  auto region = [&](int r, int c) {
    return (r >= grid_h - shift ? 2 : 0) + (c >= grid_w - shift ? 1 : 0);
  };
  for (int wr = 0; wr < wins_h; ++wr)
    for (int wc = 0; wc < wins_w; ++wc) {
      const int w = wr * wins_w + wc;
      for (int t1 = 0; t1 < n; ++t1) {
        const int r1 = wr * window + t1 / window, c1 = wc * window + t1 % window;
        for (int t2 = 0; t2 < n; ++t2) {
          const int r2 = wr * window + t2 / window, c2 = wc * window + t2 % window;
          if (region(r1, c1) != region(r2, c2))
            mask[static_cast<int64_t>(w) * n * n + static_cast<int64_t>(t1) * n + t2] = neg_inf;
        }
      }
    }
  return mask;
}

void PatchEmbed::init(int in_channels, int patch_size, int d, Rng& rng) {
  in_ch = in_channels;
  patch = patch_size;
  proj.init(in_ch * patch * patch, d, rng);
}

void PatchEmbed::collect(const std::string& prefix, nn::ParamList& out) const {
  proj.collect(prefix + ".proj", out);
}

namespace {

// [B, C, H, W] -> [B, n_patches, C*p*p] gather map (patch pixels channel-major).
ag::IndexMap embed_map(int batch, int ch, int h, int w, int p) {
  const int gh = h / p, gw = w / p;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(batch) * ch * h * w);
  for (int64_t b = 0; b < batch; ++b)
    for (int gr = 0; gr < gh; ++gr)
      for (int gc = 0; gc < gw; ++gc)
        for (int c = 0; c < ch; ++c)
          for (int pi = 0; pi < p; ++pi)
            for (int pj = 0; pj < p; ++pj)
              map->push_back(((b * ch + c) * static_cast<int64_t>(h) + gr * p + pi) * w +
                             gc * p + pj);
  return map;
}

// Inverse of embed_map: [B, n_patches, C*p*p] -> [B, C, H, W].
ag::IndexMap unembed_map(int batch, int ch, int h, int w, int p) {
  const int gw = w / p;
  const int64_t pp = static_cast<int64_t>(p) * p;
  auto map = std::make_shared<std::vector<int64_t>>();
  map->resize(static_cast<size_t>(batch) * ch * h * w);
  for (int64_t b = 0; b < batch; ++b)
    for (int c = 0; c < ch; ++c)
      for (int r = 0; r < h; ++r)
        for (int q = 0; q < w; ++q) {
          const int64_t patch_idx = static_cast<int64_t>(r / p) * gw + q / p;
          const int64_t inner = (static_cast<int64_t>(c) * p + r % p) * p + q % p;
          const int64_t src = (b * (static_cast<int64_t>(h / p) * gw) + patch_idx) * (ch * pp) +
                              inner;
          (*map)[static_cast<size_t>(((b * ch + c) * h + r) * w + q)] = src;
        }
  return map;
}

}  // namespace

TokenGrid patch_embed(const ag::Var& images, const PatchEmbed& embed, int window) {
  const auto& s = images->value.shape();
  if (s.size() != 4) throw std::invalid_argument("patch_embed: [B, C, H, W] input required");
  const int batch = static_cast<int>(s[0]);
  const int ch = static_cast<int>(s[1]);
  const int h = static_cast<int>(s[2]);
  const int w = static_cast<int>(s[3]);
  if (ch != embed.in_ch) throw std::invalid_argument("patch_embed: channel mismatch");
  if (h % embed.patch != 0 || w % embed.patch != 0)
    throw std::invalid_argument("patch_embed: image size not divisible by patch size");
  const int gh = h / embed.patch, gw = w / embed.patch;
  auto patches = ag::gather(images, embed_map(batch, ch, h, w, embed.patch),
                            {batch, static_cast<int64_t>(gh) * gw,
                             static_cast<int64_t>(ch) * embed.patch * embed.patch});
  return partition(embed.proj.apply(patches), batch, gh, gw, window);
}

ag::Var patch_unembed(const TokenGrid& grid, const nn::Linear& proj, int out_ch, int patch) {
  auto tokens = unpartition(grid);
  auto pixels = proj.apply(tokens);  // [B, N, out_ch*p*p]
  const int h = grid.grid_h * patch, w = grid.grid_w * patch;
  return ag::gather(pixels, unembed_map(grid.batch, out_ch, h, w, patch),
                    {grid.batch, out_ch, h, w});
}

void WindowAttention::init(int d, int heads, int win, Rng& rng) {
  if (d % heads != 0)
    throw std::invalid_argument("WindowAttention: embed dim not divisible by head count");
  n_heads = heads;
  window = win;
  q.init(d, d, rng);
  k.init(d, d, rng);
  v.init(d, d, rng);
  out.init(d, d, rng);
  const int span = 2 * win - 1;
  Tensor table({static_cast<int64_t>(span) * span, heads});
  for (int64_t i = 0; i < table.size(); ++i) table[i] = rng.truncated_normal(0.02);
  bias_table = ag::param(std::move(table));
}

void WindowAttention::collect(const std::string& prefix, nn::ParamList& outp) const {
  q.collect(prefix + ".q", outp);
  k.collect(prefix + ".k", outp);
  v.collect(prefix + ".v", outp);
  out.collect(prefix + ".out", outp);
  outp.push_back({prefix + ".bias_table", bias_table});
}

namespace {

ag::IndexMap head_split_map(int64_t rows, int64_t n, int64_t heads, int64_t dk) {
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(rows * heads * n * dk));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t c = 0; c < dk; ++c)
          map->push_back((r * n + i) * (heads * dk) + h * dk + c);
  return map;
}

ag::IndexMap head_merge_map(int64_t rows, int64_t n, int64_t heads, int64_t dk) {
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(rows * heads * n * dk));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t i = 0; i < n; ++i)
      for (int64_t h = 0; h < heads; ++h)
        for (int64_t c = 0; c < dk; ++c)
          map->push_back(((r * heads + h) * n + i) * dk + c);
  return map;
}

// Relative-position index per in-window token pair.
std::vector<int64_t> relative_index(int window) {
  const int n = window * window;
  const int span = 2 * window - 1;
  std::vector<int64_t> rel(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    const int ri = i / window, ci = i % window;
    for (int j = 0; j < n; ++j) {
      const int rj = j / window, cj = j % window;
      rel[static_cast<size_t>(i) * n + j] =
          static_cast<int64_t>(ri - rj + window - 1) * span + (ci - cj + window - 1);
    }
  }
  return rel;
}

}  // namespace

TokenGrid wmha(const TokenGrid& grid, const WindowAttention& params, Tensor* attn_probs) {
  if (params.window != grid.window)
    throw std::invalid_argument("wmha: params built for window " + std::to_string(params.window) +
                                ", grid has " + std::to_string(grid.window));
  const int64_t d = grid.dim();
  const int64_t heads = params.n_heads;
  const int64_t dk = d / heads;
  const int64_t nw = grid.n_windows();
  const int64_t n = grid.tokens_per_window();
  const int64_t rows = static_cast<int64_t>(grid.batch) * nw;

  auto x = ag::reshape(grid.tokens, {rows, n, d});
  auto qh = ag::gather(params.q.apply(x), head_split_map(rows, n, heads, dk),
                       {rows * heads, n, dk});
  auto kh = ag::gather(params.k.apply(x), head_split_map(rows, n, heads, dk),
                       {rows * heads, n, dk});
  auto vh = ag::gather(params.v.apply(x), head_split_map(rows, n, heads, dk),
                       {rows * heads, n, dk});

  auto scores = ag::mul_scalar(ag::matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dk)));
  auto scores5 = ag::reshape(scores, {grid.batch, nw, heads, n, n});

  // learned relative-position bias, gathered per token pair
  const auto rel = relative_index(grid.window);
  auto bias_map = std::make_shared<std::vector<int64_t>>();
  bias_map->reserve(static_cast<size_t>(heads * n * n));
  for (int64_t h = 0; h < heads; ++h)
    for (int64_t ij = 0; ij < n * n; ++ij)
      bias_map->push_back(rel[static_cast<size_t>(ij)] * heads + h);
  auto bias3 = ag::gather(params.bias_table, bias_map, {heads, n, n});

  const Tensor mask = grid.shift > 0
                          ? shift_attention_mask(grid.grid_h, grid.grid_w, grid.window, grid.shift)
                          : Tensor{};
  auto probs5 = ag::softmax_lastdim(ag::add_attention_bias(scores5, bias3, mask));
  if (attn_probs) *attn_probs = probs5->value;

  auto probs = ag::reshape(probs5, {rows * heads, n, n});
  auto ctx = ag::matmul_nn(probs, vh);
  auto merged = ag::gather(ctx, head_merge_map(rows, n, heads, dk), {rows, n, d});
  auto out = params.out.apply(merged);

  TokenGrid result = grid;
  result.tokens = ag::reshape(out, grid.tokens->value.shape());
  return result;
}

void SwinBlock::init(int d, int n_heads, int window, double mlp_ratio, bool shifted_half,
                     Rng& rng) {
  ln1.init(d);
  ln2.init(d);
  attn.init(d, n_heads, window, rng);
  mlp.init(d, std::max(1, static_cast<int>(std::lround(d * mlp_ratio))), rng);
  shifted = shifted_half;
}

void SwinBlock::collect(const std::string& prefix, nn::ParamList& out) const {
  ln1.collect(prefix + ".ln1", out);
  attn.collect(prefix + ".attn", out);
  ln2.collect(prefix + ".ln2", out);
  mlp.collect(prefix + ".mlp", out);
}

TokenGrid swin_block(const TokenGrid& grid, const SwinBlock& block) {
  const int shift_size = block.shifted ? grid.window / 2 : 0;

  TokenGrid normed = grid;
  normed.tokens = block.ln1.apply(grid.tokens);
  TokenGrid attn_out;
  if (shift_size > 0) {
    attn_out = cyclic_unshift(wmha(cyclic_shift(normed, shift_size), block.attn), shift_size);
  } else {
    attn_out = wmha(normed, block.attn);
  }
  auto h = ag::add(grid.tokens, attn_out.tokens);

  auto m = block.mlp.apply(block.ln2.apply(h));
  TokenGrid out = grid;
  out.tokens = ag::add(h, m);
  return out;
}

void SwinBlockPair::init(int d, int n_heads, int window, double mlp_ratio, Rng& rng) {
  w_block.init(d, n_heads, window, mlp_ratio, false, rng);
  sw_block.init(d, n_heads, window, mlp_ratio, true, rng);
}

void SwinBlockPair::collect(const std::string& prefix, nn::ParamList& out) const {
  w_block.collect(prefix + ".w", out);
  sw_block.collect(prefix + ".sw", out);
}

TokenGrid swin_block_pair(const TokenGrid& grid, const SwinBlockPair& pair) {
  return swin_block(swin_block(grid, pair.w_block), pair.sw_block);
}

void PatchMerge::init(int d, Rng& rng) { reduce.init(4 * d, 2 * d, rng, /*bias=*/false); }

void PatchMerge::collect(const std::string& prefix, nn::ParamList& out) const {
  reduce.collect(prefix + ".reduce", out);
}

void PatchMerge::set_averaging_init(int d) {
  Tensor wt({4 * d, 2 * d});
  for (int q = 0; q < 4; ++q)
    for (int j = 0; j < 2 * d; ++j) wt.at(static_cast<int64_t>(q) * d + j % d, j) = 0.25;
  reduce.w = ag::param(std::move(wt));
}

TokenGrid patch_merge(const TokenGrid& grid, const PatchMerge& merge, int out_window) {
  if (grid.grid_h % 2 != 0 || grid.grid_w % 2 != 0)
    throw std::invalid_argument("patch_merge: grid dims must be even");
  const int64_t d = grid.dim();
  const int gh = grid.grid_h, gw = grid.grid_w;
  auto tokens = unpartition(grid);  // [B, N, d]
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(tokens->value.size()));
  for (int64_t b = 0; b < grid.batch; ++b)
    for (int r = 0; r < gh / 2; ++r)
      for (int c = 0; c < gw / 2; ++c)
        for (int q = 0; q < 4; ++q) {
          const int sr = 2 * r + q / 2, sc = 2 * c + q % 2;
          const int64_t src = (b * static_cast<int64_t>(gh) * gw +
                               static_cast<int64_t>(sr) * gw + sc) *
                              d;
          for (int64_t ch = 0; ch < d; ++ch) map->push_back(src + ch);
        }
  auto grouped = ag::gather(tokens, map,
                            {grid.batch, static_cast<int64_t>(gh / 2) * (gw / 2), 4 * d});
  return partition(merge.reduce.apply(grouped), grid.batch, gh / 2, gw / 2, out_window);
}

void PatchExpand::init(int d, Rng& rng) { expand.init(d, 2 * d, rng, /*bias=*/false); }

void PatchExpand::collect(const std::string& prefix, nn::ParamList& out) const {
  expand.collect(prefix + ".expand", out);
}

TokenGrid patch_expand(const TokenGrid& grid, const PatchExpand& expand, int out_window) {
  const int64_t d = grid.dim();
  if (d % 2 != 0) throw std::invalid_argument("patch_expand: dim must be even");
  const int gh = grid.grid_h, gw = grid.grid_w;
  auto expanded = expand.expand.apply(unpartition(grid));  // [B, N, 2d]
  const int64_t dq = d / 2;  // output token dim
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(expanded->value.size()));
  for (int64_t b = 0; b < grid.batch; ++b)
    for (int r = 0; r < 2 * gh; ++r)
      for (int c = 0; c < 2 * gw; ++c) {
        const int sr = r / 2, sc = c / 2;
        const int q = (r % 2) * 2 + c % 2;
        const int64_t src = (b * static_cast<int64_t>(gh) * gw +
                             static_cast<int64_t>(sr) * gw + sc) *
                                (2 * d) +
                            static_cast<int64_t>(q) * dq;
        for (int64_t ch = 0; ch < dq; ++ch) map->push_back(src + ch);
      }
  auto shuffled = ag::gather(expanded, map,
                             {grid.batch, static_cast<int64_t>(2 * gh) * (2 * gw), dq});
  return partition(shuffled, grid.batch, 2 * gh, 2 * gw, out_window);
}

}  // namespace lomae::swin
