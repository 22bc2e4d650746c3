#include "lomae/models.hpp"

#include <json.hpp>

#include "lomae/config.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lomae::models {

using nlohmann::json;

std::string arch_name(Arch a) {
  return a == Arch::swinir_style ? "swinir_style" : "sunet_style";
}

Arch arch_from_string(const std::string& s) {
  if (s == "swinir_style" || s == "swinir") return Arch::swinir_style;
  if (s == "sunet_style" || s == "sunet") return Arch::sunet_style;
  throw std::invalid_argument("unknown arch: " + s);
}

namespace {

int stage_window(const ModelConfig& cfg, int grid) {
  const int win = std::min(cfg.window_size, grid);
  if (win < 1 || grid % win != 0)
    throw std::invalid_argument("model config: grid " + std::to_string(grid) +
                                " not tileable by window " + std::to_string(win));
  return win;
}

}  // namespace

void ModelConfig::validate() const {
  if (depths.empty()) throw std::invalid_argument("model config: depths must be non-empty");
  for (int d : depths)
    if (d < 1) throw std::invalid_argument("model config: every depth must be >= 1");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0)
    throw std::invalid_argument("model config: embed_dim must be divisible by n_heads");
  if (patch_size < 1 || input_size < patch_size || input_size % patch_size != 0)
    throw std::invalid_argument("model config: input_size must be divisible by patch_size");
  if (window_size < 1) throw std::invalid_argument("model config: window_size must be >= 1");
  if (mlp_ratio <= 0.0) throw std::invalid_argument("model config: mlp_ratio must be positive");
  if (shallow_channels < 1)
    throw std::invalid_argument("model config: shallow_channels must be >= 1");

  const int grid = input_size / patch_size;
  if (arch == Arch::swinir_style) {
    stage_window(*this, grid);
  } else {
    const int merges = static_cast<int>(depths.size()) - 1;
    int g = grid;
    for (int i = 0; i <= merges; ++i) {
      stage_window(*this, g);
      if (i < merges) {
        if (g % 2 != 0)
          throw std::invalid_argument(
              "model config: depths imply more merge levels than the token grid supports");
        g /= 2;
      }
    }
  }
}

std::string ModelConfig::fingerprint() const {
  std::ostringstream os;
  os << arch_name(arch) << "|depths=";
  for (size_t i = 0; i < depths.size(); ++i) os << (i ? "," : "") << depths[i];
  os << "|dim=" << embed_dim << "|heads=" << n_heads << "|patch=" << patch_size
     << "|win=" << window_size << "|mlp=" << mlp_ratio << "|cs=" << shallow_channels
     << "|in=" << input_size;
  return os.str();
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"arch", arch_name(c.arch)},
              {"depths", c.depths},
              {"embed_dim", c.embed_dim},
              {"n_heads", c.n_heads},
              {"patch_size", c.patch_size},
              {"window_size", c.window_size},
              {"mlp_ratio", c.mlp_ratio},
              {"shallow_channels", c.shallow_channels},
              {"use_front_to_end_shortcut", c.use_front_to_end_shortcut},
              {"input_size", c.input_size}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.depths = j.at("depths").get<std::vector<int>>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.window_size = j.at("window_size").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.shallow_channels = j.at("shallow_channels").get<int>();
  c.use_front_to_end_shortcut = j.at("use_front_to_end_shortcut").get<bool>();
  c.input_size = j.at("input_size").get<int>();
  return c;
}

}  // namespace

const ForwardTaps::Entry& ForwardTaps::select(const std::string& selector) const {
  const std::string& tag = selected_tag(selector);
  for (const auto& [t, e] : entries)
    if (t == tag) return e;
  throw std::logic_error("ForwardTaps::select: tag vanished");
}

const std::string& ForwardTaps::selected_tag(const std::string& selector) const {
  if (entries.empty()) throw std::runtime_error("no activations were recorded");
  if (selector == "last") return entries.back().first;
  if (selector == "middle") return entries[entries.size() / 2].first;
  for (const auto& [tag, entry] : entries)
    if (tag == selector) return tag;
  // bare numeric index
  try {
    const size_t idx = static_cast<size_t>(std::stoul(selector));
    if (idx < entries.size()) return entries[idx].first;
  } catch (...) {
  }
  throw std::invalid_argument("unknown layer selector: " + selector);
}

struct Model::Body {
  // swinir-style
  nn::Conv2d stem, recon;
  struct Group {
    std::vector<swin::SwinBlock> blocks;
  };
  std::vector<Group> groups;
  nn::Linear body_proj;
  // sunet-style
  std::vector<std::vector<swin::SwinBlock>> enc_stages;
  std::vector<swin::PatchMerge> merges;
  std::vector<swin::SwinBlock> bottleneck;
  std::vector<swin::PatchExpand> expands;
  std::vector<nn::Linear> skip_projs;
  std::vector<std::vector<swin::SwinBlock>> dec_stages;
  // shared
  swin::PatchEmbed embed;
  nn::Linear unembed;
  std::vector<int> windows;  // per resolution level
};

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  body_ = std::make_shared<Body>();
  Rng rng(seed);
  const int grid = cfg_.input_size / cfg_.patch_size;
  const int d = cfg_.embed_dim;

  if (cfg_.arch == Arch::swinir_style) {
    const int win = stage_window(cfg_, grid);
    body_->windows = {win};
    body_->stem.init(1, cfg_.shallow_channels, 3, rng);
    body_->embed.init(cfg_.shallow_channels, cfg_.patch_size, d, rng);
    body_->groups.resize(cfg_.depths.size());
    for (size_t g = 0; g < cfg_.depths.size(); ++g) {
      body_->groups[g].blocks.resize(static_cast<size_t>(cfg_.depths[g]));
      for (int b = 0; b < cfg_.depths[g]; ++b)
        body_->groups[g].blocks[static_cast<size_t>(b)].init(d, cfg_.n_heads, win,
                                                             cfg_.mlp_ratio, b % 2 == 1, rng);
    }
    body_->body_proj.init(d, d, rng);
    body_->unembed.init(d, cfg_.shallow_channels * cfg_.patch_size * cfg_.patch_size, rng);
    body_->recon.init(cfg_.shallow_channels, 1, 3, rng);
  } else {
    const int stages = static_cast<int>(cfg_.depths.size());
    body_->windows.resize(static_cast<size_t>(stages));
    int g = grid;
    for (int i = 0; i < stages; ++i) {
      body_->windows[static_cast<size_t>(i)] = stage_window(cfg_, g);
      if (i + 1 < stages) g /= 2;
    }
    body_->embed.init(1, cfg_.patch_size, d, rng);
    const int enc_stages = stages - 1;
    body_->enc_stages.resize(static_cast<size_t>(enc_stages));
    body_->merges.resize(static_cast<size_t>(enc_stages));
    for (int i = 0; i < enc_stages; ++i) {
      const int di = d << i;
      body_->enc_stages[static_cast<size_t>(i)].resize(static_cast<size_t>(cfg_.depths[static_cast<size_t>(i)]));
      for (int b = 0; b < cfg_.depths[static_cast<size_t>(i)]; ++b)
        body_->enc_stages[static_cast<size_t>(i)][static_cast<size_t>(b)].init(
            di, cfg_.n_heads, body_->windows[static_cast<size_t>(i)], cfg_.mlp_ratio, b % 2 == 1,
            rng);
      body_->merges[static_cast<size_t>(i)].init(di, rng);
    }
    const int db = d << enc_stages;
    body_->bottleneck.resize(static_cast<size_t>(cfg_.depths.back()));
    for (int b = 0; b < cfg_.depths.back(); ++b)
      body_->bottleneck[static_cast<size_t>(b)].init(db, cfg_.n_heads,
                                                     body_->windows.back(), cfg_.mlp_ratio,
                                                     b % 2 == 1, rng);
    body_->expands.resize(static_cast<size_t>(enc_stages));
    body_->skip_projs.resize(static_cast<size_t>(enc_stages));
    body_->dec_stages.resize(static_cast<size_t>(enc_stages));
    for (int i = enc_stages - 1; i >= 0; --i) {
      const int di = d << i;
      body_->expands[static_cast<size_t>(i)].init(2 * di, rng);
      body_->skip_projs[static_cast<size_t>(i)].init(2 * di, di, rng);
      body_->dec_stages[static_cast<size_t>(i)].resize(
          static_cast<size_t>(cfg_.depths[static_cast<size_t>(i)]));
      for (int b = 0; b < cfg_.depths[static_cast<size_t>(i)]; ++b)
        body_->dec_stages[static_cast<size_t>(i)][static_cast<size_t>(b)].init(
            di, cfg_.n_heads, body_->windows[static_cast<size_t>(i)], cfg_.mlp_ratio, b % 2 == 1,
            rng);
    }
    body_->unembed.init(d, cfg_.patch_size * cfg_.patch_size, rng);
  }

  // parameter registry, in construction order
  if (cfg_.arch == Arch::swinir_style) {
    body_->stem.collect("stem", params_);
    body_->embed.collect("embed", params_);
    for (size_t g = 0; g < body_->groups.size(); ++g)
      for (size_t b = 0; b < body_->groups[g].blocks.size(); ++b)
        body_->groups[g].blocks[b].collect(
            "groups." + std::to_string(g) + ".blocks." + std::to_string(b), params_);
    body_->body_proj.collect("body_proj", params_);
    body_->unembed.collect("unembed", params_);
    body_->recon.collect("recon", params_);
  } else {
    body_->embed.collect("embed", params_);
    for (size_t i = 0; i < body_->enc_stages.size(); ++i) {
      for (size_t b = 0; b < body_->enc_stages[i].size(); ++b)
        body_->enc_stages[i][b].collect(
            "enc." + std::to_string(i) + ".blocks." + std::to_string(b), params_);
      body_->merges[i].collect("merge." + std::to_string(i), params_);
    }
    for (size_t b = 0; b < body_->bottleneck.size(); ++b)
      body_->bottleneck[b].collect("bottleneck.blocks." + std::to_string(b), params_);
    for (size_t i = 0; i < body_->dec_stages.size(); ++i) {
      body_->expands[i].collect("expand." + std::to_string(i), params_);
      body_->skip_projs[i].collect("skip." + std::to_string(i), params_);
      for (size_t b = 0; b < body_->dec_stages[i].size(); ++b)
        body_->dec_stages[i][b].collect(
            "dec." + std::to_string(i) + ".blocks." + std::to_string(b), params_);
    }
    body_->unembed.collect("unembed", params_);
  }
}

namespace {

void record_tap(ForwardTaps* taps, int* counter, const swin::TokenGrid& grid) {
  if (!taps) {
    ++*counter;
    return;
  }
  ForwardTaps::Entry e;
  e.tokens = grid.tokens;
  e.grid_h = grid.grid_h;
  e.grid_w = grid.grid_w;
  e.window = grid.window;
  taps->entries.emplace_back("blocks." + std::to_string((*counter)++), std::move(e));
}

}  // namespace

ag::Var Model::forward(const ag::Var& input, ForwardTaps* taps) const {
  const auto& s = input->value.shape();
  if (s.size() != 4 || s[1] != 1)
    throw std::invalid_argument("Model::forward: input must be [B, 1, H, W]");
  if (s[2] != cfg_.input_size || s[3] != cfg_.input_size)
    throw std::invalid_argument("Model::forward: input is " + input->value.shape_str() +
                                ", config expects " + std::to_string(cfg_.input_size));
  const Body& b = *body_;
  int tap_counter = 0;
  ag::Var body_out;

  if (cfg_.arch == Arch::swinir_style) {
    auto feat = b.stem.apply(input);
    auto t0 = swin::patch_embed(feat, b.embed, b.windows[0]);
    swin::TokenGrid t = t0;
    for (const auto& group : b.groups) {
      auto group_in = t.tokens;
      for (const auto& blk : group.blocks) {
        t = swin::swin_block(t, blk);
        record_tap(taps, &tap_counter, t);
      }
      t.tokens = ag::add(t.tokens, group_in);
    }
    t.tokens = ag::add(b.body_proj.apply(t.tokens), t0.tokens);
    auto pix = swin::patch_unembed(t, b.unembed, cfg_.shallow_channels, cfg_.patch_size);
    body_out = b.recon.apply(pix);
  } else {
    swin::TokenGrid t = swin::patch_embed(input, b.embed, b.windows[0]);
    std::vector<swin::TokenGrid> skips;
    for (size_t i = 0; i < b.enc_stages.size(); ++i) {
      for (const auto& blk : b.enc_stages[i]) {
        t = swin::swin_block(t, blk);
        record_tap(taps, &tap_counter, t);
      }
      skips.push_back(t);
      t = swin::patch_merge(t, b.merges[i], b.windows[i + 1]);
    }
    for (const auto& blk : b.bottleneck) {
      t = swin::swin_block(t, blk);
      record_tap(taps, &tap_counter, t);
    }
    for (size_t ri = b.dec_stages.size(); ri-- > 0;) {
      t = swin::patch_expand(t, b.expands[ri], b.windows[ri]);
      t.tokens = b.skip_projs[ri].apply(ag::concat_lastdim(t.tokens, skips[ri].tokens));
      for (const auto& blk : b.dec_stages[ri]) {
        t = swin::swin_block(t, blk);
        record_tap(taps, &tap_counter, t);
      }
    }
    body_out = swin::patch_unembed(t, b.unembed, 1, cfg_.patch_size);
  }

  return cfg_.use_front_to_end_shortcut ? ag::add(body_out, input) : body_out;
}

Slice Model::denoise(const Slice& slice) const {
  ag::NoGradGuard no_grad;
  const int64_t h = slice.dim(0), w = slice.dim(1);
  auto input = ag::constant(slice.reshaped({1, 1, h, w}));
  return forward(input)->value.reshaped({h, w});
}

int64_t Model::param_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

std::map<std::string, Tensor> Model::named_tensors() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out[p.name] = p.var->value;
  return out;
}

void Model::load_tensors(const std::map<std::string, Tensor>& tensors) {
  if (tensors.size() != params_.size())
    throw std::invalid_argument("load_tensors: tensor count mismatch (" +
                                std::to_string(tensors.size()) + " vs " +
                                std::to_string(params_.size()) + " parameters)");
  for (auto& p : params_) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end())
      throw std::invalid_argument("load_tensors: missing tensor '" + p.name + "'");
    if (!it->second.same_shape(p.var->value))
      throw std::invalid_argument("load_tensors: shape mismatch for '" + p.name + "'");
    p.var->value = it->second;
  }
}

// ---------------------------------------------------------------------------
// checkpoint IO: text header + named little-endian f64 records
// ---------------------------------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  json manifest{{"stage", stage},          {"init", init},
                {"epoch", epoch},          {"rng_state", rng_state},
                {"fingerprint", fingerprint}, {"config", config_to_json(config)},
                {"n_tensors", tensors.size()}};
  out << "LOMAE-CKPT v1\n" << manifest.dump() << "\n";
  for (const auto& [name, t] : tensors) {
    out << name << "\n";
    out << "dtype=f64 shape=";
    for (int i = 0; i < t.rank(); ++i) out << (i ? "," : "") << t.dim(i);
    out << "\n";
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
  }
  if (!out) throw std::runtime_error("short checkpoint write: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "LOMAE-CKPT v1")
    throw std::runtime_error("not a checkpoint file: " + path);
  if (!std::getline(in, line)) throw std::runtime_error("missing checkpoint manifest: " + path);
  const json manifest = json::parse(line);

  Checkpoint ckpt;
  ckpt.stage = manifest.at("stage").get<std::string>();
  ckpt.init = manifest.value("init", "random");
  ckpt.epoch = manifest.at("epoch").get<int>();
  ckpt.rng_state = manifest.value("rng_state", "");
  ckpt.fingerprint = manifest.at("fingerprint").get<std::string>();
  ckpt.config = config_from_json(manifest.at("config"));

  const size_t n_tensors = manifest.at("n_tensors").get<size_t>();
  for (size_t i = 0; i < n_tensors; ++i) {
    std::string name;
    if (!std::getline(in, name)) throw std::runtime_error("truncated checkpoint: " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("dtype=f64 shape=", 0) != 0)
      throw std::runtime_error("bad tensor header in checkpoint: " + path);
    std::vector<int64_t> shape;
    std::stringstream dims(header.substr(16));
    std::string dstr;
    while (std::getline(dims, dstr, ',')) shape.push_back(std::stoll(dstr));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())))
      throw std::runtime_error("truncated tensor '" + name + "' in checkpoint: " + path);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

Checkpoint make_checkpoint(const Model& model, const std::string& stage, int epoch,
                           const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.tensors = model.named_tensors();
  ckpt.config = model.config();
  ckpt.stage = stage;
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  ckpt.fingerprint = model.config().fingerprint();
  return ckpt;
}

Model transfer_weights(const Checkpoint& pretrained, const ModelConfig& finetune_cfg) {
  if (pretrained.fingerprint != finetune_cfg.fingerprint())
    throw std::invalid_argument("transfer_weights: architecture fingerprints differ\n  have: " +
                                pretrained.fingerprint + "\n  want: " + finetune_cfg.fingerprint());
  Model model(finetune_cfg, /*seed=*/0);
  model.load_tensors(pretrained.tensors);
  return model;
}

ModelConfig model_config_from_flat(const FlatConfig& cfg) {
  ModelConfig out;
  out.arch = arch_from_string(cfg.get_str("arch", arch_name(out.arch)));
  out.depths = cfg.get_int_list("depths", out.depths);
  out.embed_dim = static_cast<int>(cfg.get_int("embed_dim", out.embed_dim));
  out.n_heads = static_cast<int>(cfg.get_int("heads", out.n_heads));
  out.patch_size = static_cast<int>(cfg.get_int("patch_size", out.patch_size));
  out.window_size = static_cast<int>(cfg.get_int("window_size", out.window_size));
  out.mlp_ratio = cfg.get_double("mlp_ratio", out.mlp_ratio);
  out.shallow_channels = static_cast<int>(cfg.get_int("shallow_channels", out.shallow_channels));
  out.use_front_to_end_shortcut = cfg.get_bool("shortcut", out.use_front_to_end_shortcut);
  out.input_size = static_cast<int>(cfg.get_int("input_size", out.input_size));
  out.validate();
  return out;
}

}  // namespace lomae::models
