#include "lomae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "lomae/rng.hpp"

namespace lomae::data {

Slice normalize_window(const Slice& slice, double low, double high) {
  if (!(low < high)) throw std::invalid_argument("normalize_window: degenerate window");
  Slice out = slice;
  const double inv = 1.0 / (high - low);
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp((out[i] - low) * inv, 0.0, 1.0);
  return out;
}

Slice resize_area(const Slice& slice, int target_n) {
  if (slice.rank() != 2) throw std::invalid_argument("resize_area: rank-2 slice required");
  const int64_t src = slice.dim(0);
  if (slice.dim(1) != src) throw std::invalid_argument("resize_area: square slice required");
  if (target_n <= 0) throw std::invalid_argument("resize_area: bad target");
  if (target_n > src) throw std::invalid_argument("resize_area: upscaling is out of scope");
  if (target_n == src) return slice;

  const double ratio = static_cast<double>(src) / static_cast<double>(target_n);
  Slice out({target_n, target_n});
  // overlap-weighted box average; exact block mean when ratio is an integer
  auto spans = [&](int64_t t) {
    return std::pair<double, double>{static_cast<double>(t) * ratio,
                                     static_cast<double>(t + 1) * ratio};
  };
  for (int64_t r = 0; r < target_n; ++r) {
    const auto [r0, r1] = spans(r);
    for (int64_t c = 0; c < target_n; ++c) {
      const auto [c0, c1] = spans(c);
      double acc = 0.0;
      for (int64_t sr = static_cast<int64_t>(std::floor(r0));
           sr < src && static_cast<double>(sr) < r1; ++sr) {
        const double wr =
            std::min(r1, static_cast<double>(sr + 1)) - std::max(r0, static_cast<double>(sr));
        if (wr <= 0.0) continue;
        for (int64_t sc = static_cast<int64_t>(std::floor(c0));
             sc < src && static_cast<double>(sc) < c1; ++sc) {
          const double wc =
              std::min(c1, static_cast<double>(sc + 1)) - std::max(c0, static_cast<double>(sc));
          if (wc <= 0.0) continue;
          acc += wr * wc * slice.at(sr, sc);
        }
      }
      out.at(r, c) = acc / (ratio * ratio);
    }
  }
  return out;
}

AugmentOp augment_from_string(const std::string& s) {
  if (s == "none") return AugmentOp::none;
  if (s == "rot90") return AugmentOp::rot90;
  if (s == "rot180") return AugmentOp::rot180;
  if (s == "rot270") return AugmentOp::rot270;
  if (s == "flip_h") return AugmentOp::flip_h;
  if (s == "flip_v") return AugmentOp::flip_v;
  throw std::invalid_argument("unknown augment op: " + s);
}

std::string augment_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::none: return "none";
    case AugmentOp::rot90: return "rot90";
    case AugmentOp::rot180: return "rot180";
    case AugmentOp::rot270: return "rot270";
    case AugmentOp::flip_h: return "flip_h";
    case AugmentOp::flip_v: return "flip_v";
  }
  return "none";
}

const std::vector<AugmentOp>& all_augment_ops() {
  static const std::vector<AugmentOp> ops{AugmentOp::none,   AugmentOp::rot90,
                                          AugmentOp::rot180, AugmentOp::rot270,
                                          AugmentOp::flip_h, AugmentOp::flip_v};
  return ops;
}

Slice augment_slice(const Slice& slice, AugmentOp op) {
  if (slice.rank() != 2 || slice.dim(0) != slice.dim(1))
    throw std::invalid_argument("augment: square slice required");
  const int64_t n = slice.dim(0);
  Slice out({n, n});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < n; ++c) {
      double v = 0.0;
      switch (op) {
        case AugmentOp::none: v = slice.at(r, c); break;
        case AugmentOp::rot90: v = slice.at(c, n - 1 - r); break;  // 90 deg CCW
        case AugmentOp::rot180: v = slice.at(n - 1 - r, n - 1 - c); break;
        case AugmentOp::rot270: v = slice.at(n - 1 - c, r); break;
        case AugmentOp::flip_h: v = slice.at(r, n - 1 - c); break;  // mirror columns
        case AugmentOp::flip_v: v = slice.at(n - 1 - r, c); break;  // mirror rows
      }
      out.at(r, c) = v;
    }
  return out;
}

SlicePair augment(const SlicePair& pair, AugmentOp op) {
  SlicePair out = pair;
  out.noisy = augment_slice(pair.noisy, op);
  out.clean = augment_slice(pair.clean, op);
  return out;
}

SplitPlan make_split(std::vector<std::string> patients, int n_folds, int labeled_k,
                     uint64_t seed) {
  if (patients.empty()) throw std::invalid_argument("make_split: no patients");
  if (n_folds < 2 || n_folds > static_cast<int>(patients.size()))
    throw std::invalid_argument("make_split: n_folds must be in [2, n_patients]");
  std::sort(patients.begin(), patients.end());
  Rng rng(seed);
  rng.shuffle(patients);

  SplitPlan plan;
  plan.folds.resize(static_cast<size_t>(n_folds));
  for (size_t i = 0; i < patients.size(); ++i)
    plan.folds[i % static_cast<size_t>(n_folds)].test_patients.push_back(patients[i]);
  for (auto& fold : plan.folds) {
    std::unordered_set<std::string> test(fold.test_patients.begin(), fold.test_patients.end());
    for (const auto& p : patients)
      if (!test.count(p)) fold.train_patients.push_back(p);
    if (labeled_k > static_cast<int>(fold.train_patients.size()))
      throw std::invalid_argument("make_split: labeled_k exceeds available train patients");
  }
  plan.labeled_train_patients = labeled_k;
  return plan;
}

std::vector<std::string> SplitPlan::labeled_patients(int fold) const {
  const auto& train = folds.at(static_cast<size_t>(fold)).train_patients;
  const int k =
      labeled_train_patients > 0 ? labeled_train_patients : static_cast<int>(train.size());
  return {train.begin(), train.begin() + std::min<size_t>(static_cast<size_t>(k), train.size())};
}

std::vector<int64_t> PairPool::epoch_order(uint64_t seed, int epoch) const {
  std::vector<int64_t> order(pairs_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x9d0cull + static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

PairPool PairPool::filter_patients(const std::vector<std::string>& patients) const {
  std::unordered_set<std::string> keep(patients.begin(), patients.end());
  std::vector<SlicePair> out;
  for (const auto& p : pairs_)
    if (keep.count(p.patient_id)) out.push_back(p);
  return PairPool(std::move(out));
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  out << "# lomae-manifest v1\n";
  out << "# geometry: " << geometry << "\n";
  out << "# patient_id\tslice_index\tdose\tseed\tnoisy\tclean\n";
  for (const auto& r : records)
    out << r.patient_id << "\t" << r.slice_index << "\t" << r.dose_tag << "\t" << r.seed << "\t"
        << r.noisy_path << "\t" << r.clean_path << "\n";
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  const std::string geo_tag = "# geometry: ";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind(geo_tag, 0) == 0) {
      m.geometry = line.substr(geo_tag.size());
      continue;
    }
    if (line[0] == '#') continue;
    std::stringstream ss(line);
    ManifestRecord r;
    std::string idx, seed;
    if (!std::getline(ss, r.patient_id, '\t') || !std::getline(ss, idx, '\t') ||
        !std::getline(ss, r.dose_tag, '\t') || !std::getline(ss, seed, '\t') ||
        !std::getline(ss, r.noisy_path, '\t') || !std::getline(ss, r.clean_path))
      throw std::runtime_error("malformed manifest record: " + line);
    r.slice_index = std::stoi(idx);
    r.seed = std::stoull(seed);
    m.records.push_back(std::move(r));
  }
  return m;
}

std::vector<SlicePair> load_pairs(const Manifest& manifest, const std::string& base_dir) {
  std::vector<SlicePair> pairs;
  pairs.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    SlicePair p;
    p.patient_id = r.patient_id;
    p.slice_index = r.slice_index;
    p.dose_tag = r.dose_tag;
    p.seed = r.seed;
    p.noisy = read_tensor_f32(base_dir + "/" + r.noisy_path);
    p.clean = read_tensor_f32(base_dir + "/" + r.clean_path);
    if (!p.noisy.same_shape(p.clean))
      throw std::runtime_error("pair shape mismatch for " + r.patient_id + "/" +
                               std::to_string(r.slice_index));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace lomae::data
