#pragma once

#include <string>
#include <vector>

#include "lomae/autograd.hpp"
#include "lomae/rng.hpp"

namespace lomae::nn {

struct ParamEntry {
  std::string name;
  ag::Var var;
};
using ParamList = std::vector<ParamEntry>;

struct Linear {
  ag::Var w;  // [in, out]
  ag::Var b;  // [out] or null
  void init(int in, int out, Rng& rng, bool bias = true, double init_std = 0.02);
  ag::Var apply(const ag::Var& x) const { return ag::linear(x, w, b); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  ag::Var gamma, beta;
  void init(int d);
  ag::Var apply(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
  ag::Var w;  // [out_ch, in_ch, k, k]
  ag::Var b;  // [out_ch]
  void init(int in_ch, int out_ch, int k, Rng& rng);
  ag::Var apply(const ag::Var& x) const { return ag::conv2d(x, w, b, ag::Pad::same_zero); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Mlp {
  Linear fc1, fc2;
  void init(int d, int hidden, Rng& rng);
  ag::Var apply(const ag::Var& x) const { return fc2.apply(ag::gelu(fc1.apply(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace lomae::nn
