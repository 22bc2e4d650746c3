#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lomae/image.hpp"
#include "lomae/swin.hpp"

namespace lomae::models {

enum class Arch { swinir_style, sunet_style };
std::string arch_name(Arch a);
Arch arch_from_string(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::swinir_style;
  std::vector<int> depths{4, 4, 4, 4};
  int embed_dim = 60;
  int n_heads = 6;
  int patch_size = 8;
  int window_size = 8;  // in tokens
  double mlp_ratio = 2.0;
  int shallow_channels = 4;  // width of the swinir conv stem
  bool use_front_to_end_shortcut = true;
  int input_size = 64;

  void validate() const;  // throws std::invalid_argument on bad dims
  // Identifies the weight-compatible architecture; the (parameter-free)
  // shortcut flag is deliberately excluded.
  std::string fingerprint() const;
};

// Activations recorded during a forward pass, in window-partitioned form.
struct ForwardTaps {
  struct Entry {
    ag::Var tokens;  // [B, n_windows, n, d]
    int grid_h = 0, grid_w = 0, window = 0;
  };
  std::vector<std::pair<std::string, Entry>> entries;

  // Selector: "middle" (block floor(n/2)), "last", an explicit recorded tag
  // like "blocks.3", or a non-negative block index in string form.
  const Entry& select(const std::string& selector) const;
  const std::string& selected_tag(const std::string& selector) const;
};

class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  // input: [B, 1, H, W]. Applies the body, plus the input itself when the
  // front-to-end shortcut is enabled.
  ag::Var forward(const ag::Var& input, ForwardTaps* taps = nullptr) const;

  // No-grad convenience: denoise a single [H, W] slice.
  Slice denoise(const Slice& slice) const;

  const ModelConfig& config() const { return cfg_; }
  const nn::ParamList& params() const { return params_; }
  int64_t param_count() const;

  std::map<std::string, Tensor> named_tensors() const;
  // Bit-exact assignment by name; throws on missing or shape-mismatched names.
  void load_tensors(const std::map<std::string, Tensor>& tensors);

 private:
  struct Body;
  ModelConfig cfg_;
  std::shared_ptr<Body> body_;
  nn::ParamList params_;
};

struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  ModelConfig config;
  std::string stage;  // "pretrained" | "finetuned"
  std::string init = "random";
  int epoch = 0;
  std::string rng_state;
  std::string fingerprint;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

Checkpoint make_checkpoint(const Model& model, const std::string& stage, int epoch,
                           const std::string& rng_state = "");

// Rebuilds the model under finetune_cfg and copies every tensor bit-exactly.
// Fingerprints must match up to the shortcut flag.
Model transfer_weights(const Checkpoint& pretrained, const ModelConfig& finetune_cfg);

}  // namespace lomae::models

namespace lomae {
class FlatConfig;
namespace models {
// Reads arch/depths/embed_dim/heads/... keys from a flat config file,
// falling back to the defaults above.
ModelConfig model_config_from_flat(const FlatConfig& cfg);
}  // namespace models
}  // namespace lomae
