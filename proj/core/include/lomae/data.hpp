#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lomae/image.hpp"

namespace lomae::data {

struct SlicePair {
  Slice noisy;
  Slice clean;
  std::string patient_id;
  int slice_index = 0;
  std::string dose_tag;  // e.g. "2.5e+05"
  uint64_t seed = 0;
};

// Affine map of [low, high] onto [0, 1], clipped outside. Units are whatever
// the caller stores (HU for clinical data, normalized attenuation for
// simulated slices).
Slice normalize_window(const Slice& slice, double low, double high);

// Pixel-area-weighted downsampling to target_n x target_n. Upscaling is out
// of scope and rejected.
Slice resize_area(const Slice& slice, int target_n);

enum class AugmentOp { none, rot90, rot180, rot270, flip_h, flip_v };
AugmentOp augment_from_string(const std::string& s);
std::string augment_name(AugmentOp op);
const std::vector<AugmentOp>& all_augment_ops();

Slice augment_slice(const Slice& slice, AugmentOp op);
// Same op applied to both members.
SlicePair augment(const SlicePair& pair, AugmentOp op);

struct SplitPlan {
  struct Fold {
    std::vector<std::string> train_patients;
    std::vector<std::string> test_patients;
  };
  std::vector<Fold> folds;
  int labeled_train_patients = 0;
  // The first labeled_train_patients of the fold's train list (seed-shuffled
  // order); this is the finetune pool, the pretrain pool is the full list.
  std::vector<std::string> labeled_patients(int fold) const;
};

// Deterministic patient-wise folds: patients are shuffled by seed and dealt
// round-robin into n_folds disjoint test sets.
SplitPlan make_split(std::vector<std::string> patients, int n_folds, int labeled_k, uint64_t seed);

// Read-audited pair container. Readers go through noisy()/clean() so label
// access during training is observable.
class PairPool {
 public:
  struct Audit {
    int64_t noisy_reads = 0;
    int64_t clean_reads = 0;
  };

  PairPool() = default;
  explicit PairPool(std::vector<SlicePair> pairs) : pairs_(std::move(pairs)) {}

  int64_t size() const { return static_cast<int64_t>(pairs_.size()); }
  bool empty() const { return pairs_.empty(); }

  const Slice& noisy(int64_t i) const {
    ++audit_.noisy_reads;
    return pairs_[static_cast<size_t>(i)].noisy;
  }
  const Slice& clean(int64_t i) const {
    ++audit_.clean_reads;
    return pairs_[static_cast<size_t>(i)].clean;
  }
  // Metadata only; does not count as an image read.
  const SlicePair& meta(int64_t i) const { return pairs_[static_cast<size_t>(i)]; }

  const Audit& audit() const { return audit_; }
  void reset_audit() const { audit_ = Audit{}; }

  // Deterministic per-epoch iteration order.
  std::vector<int64_t> epoch_order(uint64_t seed, int epoch) const;

  PairPool filter_patients(const std::vector<std::string>& patients) const;

 private:
  std::vector<SlicePair> pairs_;
  mutable Audit audit_;
};

struct ManifestRecord {
  std::string patient_id;
  int slice_index = 0;
  std::string dose_tag;
  uint64_t seed = 0;
  std::string noisy_path;
  std::string clean_path;
};

struct Manifest {
  std::string geometry;  // one human-readable geometry line
  std::vector<ManifestRecord> records;

  void save(const std::string& path) const;
  static Manifest load(const std::string& path);
};

// Loads every record's tensors; paths are resolved relative to base_dir.
std::vector<SlicePair> load_pairs(const Manifest& manifest, const std::string& base_dir);

}  // namespace lomae::data
