#include "lomae/autograd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

namespace lomae::ag {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

namespace {
thread_local int g_no_grad_depth = 0;

Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_no_grad_depth == 0) {
    bool req = false;
    for (const auto& p : parents) req = req || p->requires_grad;
    if (req) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backprop = std::move(bp);
    }
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->value.shape_str() +
                                " vs " + b->value.shape_str());
}
}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor& Node::ensure_grad() {
  if (grad.size() != value.size()) grad = Tensor(value.shape());
  return grad;
}

void Node::add_grad(const Tensor& g) {
  ensure_grad();
  for (int64_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_no_grad_depth == 0;
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }
Var param(Tensor value) { return leaf(std::move(value), true); }

void backward(const Var& root) {
  if (root->value.size() != 1)
    throw std::invalid_argument("backward: root must be a scalar, got " + root->value.shape_str());
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited{root.get()};
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    Node* n = stack.back().first;
    size_t& i = stack.back().second;
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop && (*it)->grad.size() == (*it)->value.size()) (*it)->backprop(**it);
  }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value + b->value;
  return make(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k)
      if (n.parents[k]->requires_grad) n.parents[k]->add_grad(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value - b->value;
  return make(std::move(out), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) n.parents[0]->add_grad(n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor& g = n.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) {
      Tensor& g = A.ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * B.value[i];
    }
    if (B.requires_grad) {
      Tensor& g = B.ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * A.value[i];
    }
  });
}

Var div(const Var& a, const Var& b) {
  check_same_shape(a, b, "div");
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] /= b->value[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) {
      Tensor& g = A.ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / B.value[i];
    }
    if (B.requires_grad) {
      Tensor& g = B.ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i)
        g[i] -= n.grad[i] * A.value[i] / (B.value[i] * B.value[i]);
    }
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
  return make(std::move(out), {a}, [](Node& n) { n.parents[0]->add_grad(n.grad); });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = s * a->value;
  return make(std::move(out), {a}, [s](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s * n.grad[i];
  });
}

Var abs(const Var& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
  return make(std::move(out), {a}, [](Node& n) {
    Node& A = *n.parents[0];
    Tensor& g = A.ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) {
      const double x = A.value[i];
      // subgradient 0 at x == 0
      g[i] += n.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var relu(const Var& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make(std::move(out), {a}, [](Node& n) {
    Node& A = *n.parents[0];
    Tensor& g = A.ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i)
      if (A.value[i] > 0.0) g[i] += n.grad[i];
  });
}

Var gelu(const Var& a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
  }
  return make(std::move(out), {a}, [](Node& n) {
    Node& A = *n.parents[0];
    Tensor& g = A.ensure_grad();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (int64_t i = 0; i < g.size(); ++i) {
      const double x = A.value[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      g[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Var sum_all(const Var& a) {
  Tensor out = Tensor::scalar(a->value.sum());
  return make(std::move(out), {a}, [](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const double s = n.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

Var mean_all(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->value.size());
  Tensor out = Tensor::scalar(a->value.sum() * inv);
  return make(std::move(out), {a}, [inv](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const double s = n.grad[0] * inv;
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& xs = x->value.shape();
  if (xs.empty() || w->value.rank() != 2)
    throw std::invalid_argument("linear: bad ranks");
  const int64_t d_in = xs.back();
  const int64_t d_out = w->value.dim(1);
  if (w->value.dim(0) != d_in)
    throw std::invalid_argument("linear: weight " + w->value.shape_str() + " vs input " +
                                x->value.shape_str());
  if (b && b->value.size() != d_out) throw std::invalid_argument("linear: bias size mismatch");
  const int64_t rows = x->value.size() / d_in;

  std::vector<int64_t> out_shape = xs;
  out_shape.back() = d_out;
  Tensor out(out_shape);
  {
    ECMap X(x->value.data(), rows, d_in);
    ECMap W(w->value.data(), d_in, d_out);
    EMap Y(out.data(), rows, d_out);
    Y.noalias() = X * W;
    if (b) {
      const double* bias = b->value.data();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d_out; ++c) out[r * d_out + c] += bias[c];
    }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make(std::move(out), std::move(parents), [rows, d_in, d_out](Node& n) {
    Node& X = *n.parents[0];
    Node& W = *n.parents[1];
    ECMap dY(n.grad.data(), rows, d_out);
    if (X.requires_grad) {
      EMap dX(X.ensure_grad().data(), rows, d_in);
      ECMap Wm(W.value.data(), d_in, d_out);
      dX.noalias() += dY * Wm.transpose();
    }
    if (W.requires_grad) {
      EMap dW(W.ensure_grad().data(), d_in, d_out);
      ECMap Xm(X.value.data(), rows, d_in);
      dW.noalias() += Xm.transpose() * dY;
    }
    if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
      Tensor& db = n.parents[2]->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d_out; ++c) db[c] += n.grad[r * d_out + c];
    }
  });
}

namespace {
struct BatchDims {
  int64_t batch, m, k, n;
};

BatchDims check_matmul(const Var& a, const Var& b, bool transpose_b, const char* op) {
  const auto& as = a->value.shape();
  const auto& bs = b->value.shape();
  if (as.size() < 2 || as.size() != bs.size())
    throw std::invalid_argument(std::string(op) + ": rank mismatch");
  for (size_t i = 0; i + 2 < as.size(); ++i)
    if (as[i] != bs[i]) throw std::invalid_argument(std::string(op) + ": batch dim mismatch");
  BatchDims d;
  d.m = as[as.size() - 2];
  d.k = as.back();
  const int64_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  d.n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (bk != d.k) throw std::invalid_argument(std::string(op) + ": inner dim mismatch");
  d.batch = a->value.size() / (d.m * d.k);
  return d;
}
}  // namespace

Var matmul_nn(const Var& a, const Var& b) {
  const BatchDims d = check_matmul(a, b, false, "matmul_nn");
  std::vector<int64_t> out_shape = a->value.shape();
  out_shape.back() = d.n;
  Tensor out(out_shape);
  for (int64_t t = 0; t < d.batch; ++t) {
    ECMap A(a->value.data() + t * d.m * d.k, d.m, d.k);
    ECMap B(b->value.data() + t * d.k * d.n, d.k, d.n);
    EMap C(out.data() + t * d.m * d.n, d.m, d.n);
    C.noalias() = A * B;
  }
  return make(std::move(out), {a, b}, [d](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    for (int64_t t = 0; t < d.batch; ++t) {
      ECMap dC(n.grad.data() + t * d.m * d.n, d.m, d.n);
      if (A.requires_grad) {
        EMap dA(A.ensure_grad().data() + t * d.m * d.k, d.m, d.k);
        ECMap Bm(B.value.data() + t * d.k * d.n, d.k, d.n);
        dA.noalias() += dC * Bm.transpose();
      }
      if (B.requires_grad) {
        EMap dB(B.ensure_grad().data() + t * d.k * d.n, d.k, d.n);
        ECMap Am(A.value.data() + t * d.m * d.k, d.m, d.k);
        dB.noalias() += Am.transpose() * dC;
      }
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const BatchDims d = check_matmul(a, b, true, "matmul_nt");
  std::vector<int64_t> out_shape = a->value.shape();
  out_shape.back() = d.n;
  Tensor out(out_shape);
  for (int64_t t = 0; t < d.batch; ++t) {
    ECMap A(a->value.data() + t * d.m * d.k, d.m, d.k);
    ECMap B(b->value.data() + t * d.n * d.k, d.n, d.k);
    EMap C(out.data() + t * d.m * d.n, d.m, d.n);
    C.noalias() = A * B.transpose();
  }
  return make(std::move(out), {a, b}, [d](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    for (int64_t t = 0; t < d.batch; ++t) {
      ECMap dC(n.grad.data() + t * d.m * d.n, d.m, d.n);
      if (A.requires_grad) {
        EMap dA(A.ensure_grad().data() + t * d.m * d.k, d.m, d.k);
        ECMap Bm(B.value.data() + t * d.n * d.k, d.n, d.k);
        dA.noalias() += dC * Bm;
      }
      if (B.requires_grad) {
        EMap dB(B.ensure_grad().data() + t * d.n * d.k, d.n, d.k);
        ECMap Am(A.value.data() + t * d.m * d.k, d.m, d.k);
        dB.noalias() += dC.transpose() * Am;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// normalization / attention
// ---------------------------------------------------------------------------

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int64_t d = x->value.shape().back();
  if (gamma->value.size() != d || beta->value.size() != d)
    throw std::invalid_argument("layer_norm: affine param size mismatch");
  const int64_t rows = x->value.size() / d;
  Tensor out(x->value.shape());
  // cache normalized values and inverse stddev for the backward pass
  auto xhat = std::make_shared<Tensor>(x->value.shape());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += xr[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t i = 0; i < d; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = is;
    for (int64_t i = 0; i < d; ++i) {
      const double xh = (xr[i] - mu) * is;
      (*xhat)[r * d + i] = xh;
      out[r * d + i] = gamma->value[i] * xh + beta->value[i];
    }
  }
  return make(std::move(out), {x, gamma, beta}, [rows, d, xhat, inv_std](Node& n) {
    Node& X = *n.parents[0];
    Node& G = *n.parents[1];
    Node& B = *n.parents[2];
    if (G.requires_grad) {
      Tensor& dg = G.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < d; ++i) dg[i] += n.grad[r * d + i] * (*xhat)[r * d + i];
    }
    if (B.requires_grad) {
      Tensor& db = B.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < d; ++i) db[i] += n.grad[r * d + i];
    }
    if (X.requires_grad) {
      Tensor& dx = X.ensure_grad();
      const double inv_d = 1.0 / static_cast<double>(d);
      for (int64_t r = 0; r < rows; ++r) {
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (int64_t i = 0; i < d; ++i) {
          const double dxh = n.grad[r * d + i] * G.value[i];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * (*xhat)[r * d + i];
        }
        mean_dxh *= inv_d;
        mean_dxh_xh *= inv_d;
        const double is = (*inv_std)[static_cast<size_t>(r)];
        for (int64_t i = 0; i < d; ++i) {
          const double dxh = n.grad[r * d + i] * G.value[i];
          dx[r * d + i] += is * (dxh - mean_dxh - (*xhat)[r * d + i] * mean_dxh_xh);
        }
      }
    }
  });
}

Var softmax_lastdim(const Var& x) {
  const int64_t d = x->value.shape().back();
  const int64_t rows = x->value.size() / d;
  Tensor out(x->value.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x->value.data() + r * d;
    double m = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < d; ++i) m = std::max(m, xr[i]);
    double z = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      // exp(-inf - m) underflows to exactly 0, which is what masking needs
      const double e = std::exp(xr[i] - m);
      out[r * d + i] = e;
      z += e;
    }
    const double inv_z = 1.0 / z;
    for (int64_t i = 0; i < d; ++i) out[r * d + i] *= inv_z;
  }
  return make(std::move(out), {x}, [rows, d](Node& n) {
    Node& X = *n.parents[0];
    Tensor& dx = X.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (int64_t i = 0; i < d; ++i) dot += n.grad[r * d + i] * n.value[r * d + i];
      for (int64_t i = 0; i < d; ++i)
        dx[r * d + i] += n.value[r * d + i] * (n.grad[r * d + i] - dot);
    }
  });
}

Var add_attention_bias(const Var& scores, const Var& bias, const Tensor& mask) {
  const auto& s = scores->value.shape();
  if (s.size() != 5) throw std::invalid_argument("add_attention_bias: scores must be 5-D");
  const int64_t B = s[0], W = s[1], H = s[2], n1 = s[3], n2 = s[4];
  if (bias->value.shape() != std::vector<int64_t>{H, n1, n2})
    throw std::invalid_argument("add_attention_bias: bias shape mismatch");
  const bool masked = mask.size() > 0;
  if (masked && mask.shape() != std::vector<int64_t>{W, n1, n2})
    throw std::invalid_argument("add_attention_bias: mask shape mismatch");

  Tensor out = scores->value;
  const int64_t nn = n1 * n2;
  for (int64_t b = 0; b < B; ++b)
    for (int64_t w = 0; w < W; ++w)
      for (int64_t h = 0; h < H; ++h) {
        double* o = out.data() + (((b * W + w) * H + h) * nn);
        const double* bi = bias->value.data() + h * nn;
        const double* mk = masked ? mask.data() + w * nn : nullptr;
        for (int64_t i = 0; i < nn; ++i) o[i] += bi[i] + (mk ? mk[i] : 0.0);
      }
  return make(std::move(out), {scores, bias}, [B, W, H, nn](Node& n) {
    Node& S = *n.parents[0];
    Node& Bi = *n.parents[1];
    if (S.requires_grad) S.add_grad(n.grad);
    if (Bi.requires_grad) {
      Tensor& db = Bi.ensure_grad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t w = 0; w < W; ++w)
          for (int64_t h = 0; h < H; ++h) {
            const double* g = n.grad.data() + (((b * W + w) * H + h) * nn);
            double* d = db.data() + h * nn;
            for (int64_t i = 0; i < nn; ++i) d[i] += g[i];
          }
    }
  });
}

// ---------------------------------------------------------------------------
// convolution
// ---------------------------------------------------------------------------

namespace {
struct ConvDims {
  int64_t B, C, H, W, O, k, pad, Ho, Wo;
};

void im2col(const double* x, const ConvDims& d, int64_t b, double* cols) {
  // cols: [C*k*k, Ho*Wo]
  const int64_t plane = d.H * d.W;
  int64_t row = 0;
  for (int64_t c = 0; c < d.C; ++c) {
    const double* xc = x + (b * d.C + c) * plane;
    for (int64_t dr = 0; dr < d.k; ++dr)
      for (int64_t dc = 0; dc < d.k; ++dc, ++row) {
        double* out_row = cols + row * d.Ho * d.Wo;
        for (int64_t r = 0; r < d.Ho; ++r) {
          const int64_t sr = r + dr - d.pad;
          for (int64_t q = 0; q < d.Wo; ++q) {
            const int64_t sc = q + dc - d.pad;
            out_row[r * d.Wo + q] = (sr >= 0 && sr < d.H && sc >= 0 && sc < d.W)
                                        ? xc[sr * d.W + sc]
                                        : 0.0;
          }
        }
      }
  }
}

void col2im_add(const double* cols, const ConvDims& d, int64_t b, double* dx) {
  const int64_t plane = d.H * d.W;
  int64_t row = 0;
  for (int64_t c = 0; c < d.C; ++c) {
    double* xc = dx + (b * d.C + c) * plane;
    for (int64_t dr = 0; dr < d.k; ++dr)
      for (int64_t dc = 0; dc < d.k; ++dc, ++row) {
        const double* in_row = cols + row * d.Ho * d.Wo;
        for (int64_t r = 0; r < d.Ho; ++r) {
          const int64_t sr = r + dr - d.pad;
          if (sr < 0 || sr >= d.H) continue;
          for (int64_t q = 0; q < d.Wo; ++q) {
            const int64_t sc = q + dc - d.pad;
            if (sc >= 0 && sc < d.W) xc[sr * d.W + sc] += in_row[r * d.Wo + q];
          }
        }
      }
  }
}
}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, Pad pad) {
  const auto& xs = x->value.shape();
  const auto& ws = w->value.shape();
  if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv2d: need 4-D x and w");
  ConvDims d;
  d.B = xs[0];
  d.C = xs[1];
  d.H = xs[2];
  d.W = xs[3];
  d.O = ws[0];
  d.k = ws[2];
  if (ws[1] != d.C || ws[3] != d.k) throw std::invalid_argument("conv2d: weight shape mismatch");
  if (pad == Pad::same_zero && d.k % 2 == 0)
    throw std::invalid_argument("conv2d: same padding needs odd kernel");
  d.pad = pad == Pad::same_zero ? d.k / 2 : 0;
  d.Ho = d.H + 2 * d.pad - d.k + 1;
  d.Wo = d.W + 2 * d.pad - d.k + 1;
  if (d.Ho <= 0 || d.Wo <= 0) throw std::invalid_argument("conv2d: kernel larger than input");
  if (b && b->value.size() != d.O) throw std::invalid_argument("conv2d: bias size mismatch");

  const int64_t ckk = d.C * d.k * d.k;
  const int64_t npos = d.Ho * d.Wo;
  Tensor out({d.B, d.O, d.Ho, d.Wo});
  std::vector<double> cols(static_cast<size_t>(ckk * npos));
  for (int64_t t = 0; t < d.B; ++t) {
    im2col(x->value.data(), d, t, cols.data());
    ECMap Wm(w->value.data(), d.O, ckk);
    ECMap Cm(cols.data(), ckk, npos);
    EMap Ym(out.data() + t * d.O * npos, d.O, npos);
    Ym.noalias() = Wm * Cm;
    if (b)
      for (int64_t o = 0; o < d.O; ++o) {
        const double bo = b->value[o];
        double* yp = out.data() + (t * d.O + o) * npos;
        for (int64_t i = 0; i < npos; ++i) yp[i] += bo;
      }
  }

  std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
  return make(std::move(out), std::move(parents), [d, ckk, npos](Node& n) {
    Node& X = *n.parents[0];
    Node& Wn = *n.parents[1];
    std::vector<double> cols(static_cast<size_t>(ckk * npos));
    for (int64_t t = 0; t < d.B; ++t) {
      ECMap dY(n.grad.data() + t * d.O * npos, d.O, npos);
      if (Wn.requires_grad) {
        im2col(X.value.data(), d, t, cols.data());
        ECMap Cm(cols.data(), ckk, npos);
        EMap dW(Wn.ensure_grad().data(), d.O, ckk);
        dW.noalias() += dY * Cm.transpose();
      }
      if (X.requires_grad) {
        ECMap Wm(Wn.value.data(), d.O, ckk);
        EMap Cm(cols.data(), ckk, npos);
        Cm.noalias() = Wm.transpose() * dY;
        col2im_add(cols.data(), d, t, X.ensure_grad().data());
      }
    }
    if (n.parents.size() == 3 && n.parents[2]->requires_grad) {
      Tensor& db = n.parents[2]->ensure_grad();
      for (int64_t t = 0; t < d.B; ++t)
        for (int64_t o = 0; o < d.O; ++o) {
          const double* g = n.grad.data() + (t * d.O + o) * npos;
          for (int64_t i = 0; i < npos; ++i) db[o] += g[i];
        }
    }
  });
}

// ---------------------------------------------------------------------------
// data movement
// ---------------------------------------------------------------------------

Var gather(const Var& x, IndexMap map, std::vector<int64_t> out_shape) {
  const int64_t n_out = shape_numel(out_shape);
  if (static_cast<int64_t>(map->size()) != n_out)
    throw std::invalid_argument("gather: map size does not match output shape");
  Tensor out(std::move(out_shape));
  const auto& m = *map;
  for (int64_t i = 0; i < n_out; ++i) out[i] = x->value[m[static_cast<size_t>(i)]];
  return make(std::move(out), {x}, [map](Node& n) {
    Tensor& g = n.parents[0]->ensure_grad();
    const auto& m = *map;
    for (int64_t i = 0; i < n.grad.size(); ++i) g[m[static_cast<size_t>(i)]] += n.grad[i];
  });
}

Var reshape(const Var& x, std::vector<int64_t> new_shape) {
  Tensor out = x->value.reshaped(std::move(new_shape));
  return make(std::move(out), {x}, [](Node& n) {
    Tensor g = n.grad.reshaped(n.parents[0]->value.shape());
    n.parents[0]->add_grad(g);
  });
}

Var crop2d(const Var& x, int64_t r0, int64_t c0, int64_t h, int64_t w) {
  const auto& xs = x->value.shape();
  if (xs.size() != 2 && xs.size() != 4) throw std::invalid_argument("crop2d: rank must be 2 or 4");
  const int64_t H = xs[xs.size() - 2], W = xs.back();
  if (r0 < 0 || c0 < 0 || r0 + h > H || c0 + w > W)
    throw std::out_of_range("crop2d: region out of bounds");
  const int64_t planes = x->value.size() / (H * W);
  auto map = std::make_shared<std::vector<int64_t>>();
  map->reserve(static_cast<size_t>(planes * h * w));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c < w; ++c) map->push_back(p * H * W + (r0 + r) * W + (c0 + c));
  std::vector<int64_t> out_shape = xs;
  out_shape[out_shape.size() - 2] = h;
  out_shape.back() = w;
  return gather(x, map, std::move(out_shape));
}

Var concat_lastdim(const Var& a, const Var& b) {
  const auto& as = a->value.shape();
  const auto& bs = b->value.shape();
  if (as.size() != bs.size() || as.empty())
    throw std::invalid_argument("concat_lastdim: rank mismatch");
  for (size_t i = 0; i + 1 < as.size(); ++i)
    if (as[i] != bs[i]) throw std::invalid_argument("concat_lastdim: leading dim mismatch");
  const int64_t da = as.back(), db = bs.back();
  const int64_t rows = a->value.size() / da;
  std::vector<int64_t> out_shape = as;
  out_shape.back() = da + db;
  Tensor out(out_shape);
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < da; ++i) out[r * (da + db) + i] = a->value[r * da + i];
    for (int64_t i = 0; i < db; ++i) out[r * (da + db) + da + i] = b->value[r * db + i];
  }
  return make(std::move(out), {a, b}, [rows, da, db](Node& n) {
    Node& A = *n.parents[0];
    Node& B = *n.parents[1];
    if (A.requires_grad) {
      Tensor& g = A.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < da; ++i) g[r * da + i] += n.grad[r * (da + db) + i];
    }
    if (B.requires_grad) {
      Tensor& g = B.ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t i = 0; i < db; ++i) g[r * db + i] += n.grad[r * (da + db) + da + i];
    }
  });
}

// ---------------------------------------------------------------------------
// testing helpers
// ---------------------------------------------------------------------------

Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& at,
                         double h) {
  Tensor g(at.shape());
  Tensor x = at;
  for (int64_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double relative_error(const Tensor& a, const Tensor& b, double eps) {
  if (!a.same_shape(b)) throw std::invalid_argument("relative_error: shape mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), eps});
}

}  // namespace lomae::ag
