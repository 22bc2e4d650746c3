#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lomae/tensor.hpp"

namespace lomae::ag {

// Reverse-mode tape over Tensor. Graphs are built per forward pass; leaves
// (parameters, inputs) outlive the graph, interior nodes are freed when the
// root goes out of scope. Nodes only reference their parents, so parameters
// never keep graphs alive.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;  // scatter node.grad into parents

  Tensor& ensure_grad();
  void add_grad(const Tensor& g);
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var param(Tensor value);

// Runs reverse-mode accumulation from a scalar root (size-1 tensor).
void backward(const Var& root);

// While a NoGradGuard is alive, ops produce detached constants: no parents,
// no closures. Used for evaluation paths.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

using IndexMap = std::shared_ptr<const std::vector<int64_t>>;

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var abs(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);

// ---- reductions ----
Var mean_all(const Var& a);
Var sum_all(const Var& a);

// ---- linear algebra ----
// x: [..., d_in] -> [..., d_out]; w: [d_in, d_out]; b: [d_out] or null.
Var linear(const Var& x, const Var& w, const Var& b);
// Batched matmul; leading dims must match. a: [*, m, k], b: [*, k, n].
Var matmul_nn(const Var& a, const Var& b);
// a: [*, m, k], b: [*, n, k] -> [*, m, n] (i.e. a @ b^T).
Var matmul_nt(const Var& a, const Var& b);

// ---- normalization / attention ----
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Softmax over the last dim. -inf logits produce exactly-zero weights.
Var softmax_lastdim(const Var& x);
// scores: [B, W, h, n, n]; bias: [h, n, n] (learned, broadcast over B and W);
// mask: empty or [W, n, n] additive constants (0 / -inf), broadcast over B, h.
Var add_attention_bias(const Var& scores, const Var& bias, const Tensor& mask);

// ---- convolution ----
enum class Pad { same_zero, valid };
// x: [B, C, H, W]; w: [O, C, k, k]; b: [O] or null.
Var conv2d(const Var& x, const Var& w, const Var& b, Pad pad);

// ---- data movement ----
// out.flat[i] = x.flat[(*map)[i]]. Backward scatter-adds, so maps with
// repeated source indices (table gathers) are fine.
Var gather(const Var& x, IndexMap map, std::vector<int64_t> out_shape);
Var reshape(const Var& x, std::vector<int64_t> new_shape);
// Row/col crop of the last two dims of a [H, W] or [B, C, H, W] tensor.
Var crop2d(const Var& x, int64_t r0, int64_t c0, int64_t h, int64_t w);
// Concatenate along the last dim; leading dims must match.
Var concat_lastdim(const Var& a, const Var& b);

// Finite-difference gradient of f with respect to `at` (central differences).
Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& at,
                         double h = 1e-5);
// ||a-b|| / max(||a||, ||b||, eps).
double relative_error(const Tensor& a, const Tensor& b, double eps = 1e-12);

}  // namespace lomae::ag
