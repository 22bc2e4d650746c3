#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "lomae/data.hpp"
#include "lomae/rng.hpp"

using namespace lomae;
using namespace lomae::data;

namespace {

Slice random_slice(int n, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Slice s({n, n});
  for (int64_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(lo, hi);
  return s;
}

}  // namespace

TEST_CASE("normalize_window maps endpoints, midpoint and clips") {
  Slice s = Tensor::from({1, 5}, {-160.0, 240.0, 40.0, -500.0, 900.0});
  const Slice out = normalize_window(s, -160.0, 240.0);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 1.0);
  CHECK(out[2] == doctest::Approx(0.5));  // midpoint of the display window
  CHECK(out[3] == 0.0);                   // clipped below
  CHECK(out[4] == 1.0);                   // clipped above
  CHECK_THROWS_AS(normalize_window(s, 100.0, 100.0), std::invalid_argument);
}

TEST_CASE("resize_area: constants, checkerboard and block-mean oracle") {
  Slice constant({64, 64}, 0.625);
  const Slice down = resize_area(constant, 32);
  CHECK(down.dim(0) == 32);
  for (int64_t i = 0; i < down.size(); ++i) CHECK(down[i] == doctest::Approx(0.625).epsilon(1e-12));

  Slice checker({4, 4});
  for (int64_t r = 0; r < 4; ++r)
    for (int64_t c = 0; c < 4; ++c) checker.at(r, c) = static_cast<double>((r + c) % 2);
  const Slice half = resize_area(checker, 2);
  for (int64_t i = 0; i < half.size(); ++i) CHECK(half[i] == doctest::Approx(0.5).epsilon(1e-12));

  // integer-ratio downsampling equals the brute-force block mean
  const Slice src = random_slice(64, 5);
  const Slice dst = resize_area(src, 32);
  double src_mean = 0.0, dst_mean = 0.0;
  for (int64_t r = 0; r < 32; ++r)
    for (int64_t c = 0; c < 32; ++c) {
      const double block = 0.25 * (src.at(2 * r, 2 * c) + src.at(2 * r, 2 * c + 1) +
                                   src.at(2 * r + 1, 2 * c) + src.at(2 * r + 1, 2 * c + 1));
      CHECK(dst.at(r, c) == doctest::Approx(block).epsilon(1e-12));
    }
  src_mean = src.mean();
  dst_mean = dst.mean();
  CHECK(std::fabs(src_mean - dst_mean) < 1e-6);

  // non-integer ratios still conserve the mean
  const Slice odd = random_slice(48, 9);
  const Slice odd_down = resize_area(odd, 20);
  CHECK(odd_down.mean() == doctest::Approx(odd.mean()).epsilon(1e-9));

  CHECK_THROWS_AS(resize_area(dst, 64), std::invalid_argument);  // upscaling rejected
}

TEST_CASE("augment ops compose like the restricted dihedral group") {
  const Slice s = random_slice(16, 3);
  Slice r = s;
  for (int i = 0; i < 4; ++i) r = augment_slice(r, AugmentOp::rot90);
  CHECK(bit_identical(r, s));

  CHECK(bit_identical(augment_slice(augment_slice(s, AugmentOp::flip_h), AugmentOp::flip_h), s));
  CHECK(bit_identical(augment_slice(augment_slice(s, AugmentOp::flip_v), AugmentOp::flip_v), s));
  CHECK(bit_identical(augment_slice(augment_slice(s, AugmentOp::rot90), AugmentOp::rot90),
                      augment_slice(s, AugmentOp::rot180)));
  CHECK(bit_identical(augment_slice(augment_slice(s, AugmentOp::rot180), AugmentOp::rot90),
                      augment_slice(s, AugmentOp::rot270)));
  CHECK(bit_identical(augment_slice(s, AugmentOp::none), s));
}

TEST_CASE("augment preserves the pixel multiset and pairs move together") {
  const Slice s = random_slice(16, 4);
  for (AugmentOp op : all_augment_ops()) {
    const Slice t = augment_slice(s, op);
    std::vector<double> a(s.vec()), b(t.vec());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);  // histogram preserved exactly
  }

  SlicePair pair;
  pair.noisy = random_slice(16, 5);
  pair.clean = random_slice(16, 6);
  const SlicePair rot = augment(pair, AugmentOp::rot270);
  CHECK(bit_identical(rot.noisy, augment_slice(pair.noisy, AugmentOp::rot270)));
  CHECK(bit_identical(rot.clean, augment_slice(pair.clean, AugmentOp::rot270)));
}

TEST_CASE("ten patients, ten folds: one test patient each, folds partition") {
  std::vector<std::string> patients;
  for (int i = 0; i < 10; ++i) patients.push_back("L" + std::to_string(i));
  const SplitPlan plan = make_split(patients, 10, 2, 77);
  REQUIRE(plan.folds.size() == 10);
  std::set<std::string> seen;
  for (const auto& fold : plan.folds) {
    CHECK(fold.test_patients.size() == 1);
    CHECK(fold.train_patients.size() == 9);
    for (const auto& p : fold.test_patients) {
      CHECK(seen.insert(p).second);  // test sets are disjoint
      CHECK(std::find(fold.train_patients.begin(), fold.train_patients.end(), p) ==
            fold.train_patients.end());
    }
  }
  CHECK(seen.size() == 10);
}

TEST_CASE("labeled subset restricts the finetune pool only") {
  std::vector<std::string> patients;
  for (int i = 0; i < 10; ++i) patients.push_back("L" + std::to_string(i));

  const SplitPlan full = make_split(patients, 5, 8, 13);
  CHECK(full.labeled_patients(0).size() == 8);  // equals the whole train list

  const SplitPlan two = make_split(patients, 5, 2, 13);
  CHECK(two.labeled_patients(0).size() == 2);
  // pretrain pool (train_patients) is unchanged by labeled_k
  CHECK(two.folds[0].train_patients == full.folds[0].train_patients);

  CHECK_THROWS_AS(make_split(patients, 5, 9, 13), std::invalid_argument);
  CHECK_THROWS_AS(make_split(patients, 1, 1, 13), std::invalid_argument);
}

TEST_CASE("splits are deterministic per seed") {
  std::vector<std::string> patients{"a", "b", "c", "d", "e", "f"};
  const SplitPlan p1 = make_split(patients, 3, 2, 5);
  const SplitPlan p2 = make_split(patients, 3, 2, 5);
  const SplitPlan p3 = make_split(patients, 3, 2, 6);
  CHECK(p1.folds[0].test_patients == p2.folds[0].test_patients);
  bool differs = false;
  for (size_t f = 0; f < 3; ++f)
    differs = differs || p1.folds[f].test_patients != p3.folds[f].test_patients;
  CHECK(differs);
}

TEST_CASE("pair pool audits reads and iterates deterministically") {
  std::vector<SlicePair> pairs;
  for (int i = 0; i < 6; ++i) {
    SlicePair p;
    p.noisy = random_slice(16, 10 + i);
    p.clean = random_slice(16, 20 + i);
    p.patient_id = "P" + std::to_string(i % 3);
    p.slice_index = i;
    pairs.push_back(std::move(p));
  }
  PairPool pool(pairs);
  CHECK(pool.audit().noisy_reads == 0);
  pool.noisy(0);
  pool.noisy(1);
  pool.clean(2);
  CHECK(pool.audit().noisy_reads == 2);
  CHECK(pool.audit().clean_reads == 1);
  pool.reset_audit();
  CHECK(pool.audit().clean_reads == 0);

  const auto o1 = pool.epoch_order(4, 0);
  const auto o2 = pool.epoch_order(4, 0);
  const auto o3 = pool.epoch_order(4, 1);
  CHECK(o1 == o2);
  CHECK(o1 != o3);
  std::vector<int64_t> sorted = o1;
  std::sort(sorted.begin(), sorted.end());
  for (int64_t i = 0; i < 6; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);

  const PairPool sub = pool.filter_patients({"P1"});
  CHECK(sub.size() == 2);
  for (int64_t i = 0; i < sub.size(); ++i) CHECK(sub.meta(i).patient_id == "P1");
}

TEST_CASE("no test patient ever shows up in a training pool") {
  std::vector<std::string> patients;
  std::vector<SlicePair> pairs;
  for (int i = 0; i < 8; ++i) {
    patients.push_back("P" + std::to_string(i));
    for (int s = 0; s < 3; ++s) {
      SlicePair p;
      p.noisy = random_slice(16, static_cast<uint64_t>(i * 10 + s));
      p.clean = p.noisy;
      p.patient_id = patients.back();
      p.slice_index = s;
      pairs.push_back(std::move(p));
    }
  }
  const SplitPlan plan = make_split(patients, 4, 2, 3);
  PairPool all(pairs);
  for (size_t f = 0; f < plan.folds.size(); ++f) {
    const PairPool train = all.filter_patients(plan.folds[f].train_patients);
    std::set<std::string> test(plan.folds[f].test_patients.begin(),
                               plan.folds[f].test_patients.end());
    for (int epoch = 0; epoch < 2; ++epoch)
      for (int64_t idx : train.epoch_order(9, epoch))
        CHECK(test.count(train.meta(idx).patient_id) == 0);
  }
}

TEST_CASE("manifest and pair IO round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lomae_test_data";
  fs::create_directories(dir);

  Manifest m;
  m.geometry = "parallel views=16 n_det=49 pitch=10.6256 mu=0.2";
  std::vector<SlicePair> pairs;
  for (int i = 0; i < 3; ++i) {
    SlicePair p;
    p.noisy = random_slice(16, 40 + i);
    p.clean = random_slice(16, 50 + i);
    p.patient_id = "P0" + std::to_string(i);
    p.slice_index = i;
    p.dose_tag = "2.5e+05";
    p.seed = 99 + static_cast<uint64_t>(i);
    const std::string noisy_name = "noisy_" + std::to_string(i) + ".f32";
    const std::string clean_name = "clean_" + std::to_string(i) + ".f32";
    write_tensor_f32((dir / noisy_name).string(), p.noisy);
    write_tensor_f32((dir / clean_name).string(), p.clean);
    m.records.push_back({p.patient_id, p.slice_index, p.dose_tag, p.seed, noisy_name, clean_name});
    pairs.push_back(std::move(p));
  }
  m.save((dir / "manifest.tsv").string());

  const Manifest loaded = Manifest::load((dir / "manifest.tsv").string());
  CHECK(loaded.geometry == m.geometry);
  REQUIRE(loaded.records.size() == 3);
  CHECK(loaded.records[1].patient_id == "P01");
  CHECK(loaded.records[2].seed == 101);

  const auto round = load_pairs(loaded, dir.string());
  REQUIRE(round.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    // containers are f32, so compare at float precision
    CHECK(max_abs_diff(round[i].noisy, pairs[i].noisy) < 1e-6);
    CHECK(round[i].dose_tag == "2.5e+05");
  }
  fs::remove_all(dir);
}
