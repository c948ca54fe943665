#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lantern/rng.hpp"
#include "lantern/vision.hpp"

using namespace lantern;

namespace {

GridImage solid_grid(int rows, int cols, int px, int shape, int color) {
  GridImage img;
  img.cell_rows = rows;
  img.cell_cols = cols;
  img.cell_px = px;
  img.cells.assign(std::size_t(rows) * cols, {});
  for (auto& c : img.cells) c = {shape, color};
  render(img);
  return img;
}

double vec_dist(const double* a, const double* b, int d) {
  double s = 0;
  for (int i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

FeatureMapT<double> random_map(int rows, int cols, int d, std::uint64_t seed) {
  FeatureMapT<double> m;
  m.rows = rows;
  m.cols = cols;
  m.dim = d;
  m.values.resize(std::size_t(rows) * cols * d);
  Prng rng(seed);
  for (auto& v : m.values) v = rng.gauss();
  return m;
}

}  // namespace

TEST_CASE("encoder locality: equal patches give equal features") {
  PatchEncoderT<double> enc(42, 8, 16);
  auto a = solid_grid(2, 2, 8, 0, 0);
  auto b = solid_grid(2, 2, 8, 0, 0);
  b.cell(1, 1) = {1, 3};
  render(b);
  const auto fa = enc.encode(a);
  const auto fb = enc.encode(b);
  // patch (0,0) identical in both images
  for (int j = 0; j < 16; ++j) CHECK(fa.at(0, 0)[j] == fb.at(0, 0)[j]);
  // patch (1,1) differs
  CHECK(vec_dist(fa.at(1, 1), fb.at(1, 1), 16) > 0.0);
}

TEST_CASE("encoder is bit-deterministic across instances with one seed") {
  PatchEncoderT<double> e1(7, 8, 24);
  PatchEncoderT<double> e2(7, 8, 24);
  CHECK(e1.fingerprint() == e2.fingerprint());
  const auto img = solid_grid(3, 3, 8, 2, 5);
  const auto m1 = e1.encode(img);
  const auto m2 = e2.encode(img);
  CHECK(m1.values == m2.values);
  PatchEncoderT<double> e3(8, 8, 24);
  CHECK(e3.fingerprint() != e1.fingerprint());
}

TEST_CASE("distinct colors separate further than equal colors") {
  PatchEncoderT<double> enc(42, 8, 32);
  const int n_colors = static_cast<int>(color_palette().size());
  std::vector<FeatureMapT<double>> maps;
  for (int c = 0; c < n_colors; ++c) maps.push_back(enc.encode(solid_grid(1, 1, 8, 0, c)));
  double min_inter = 1e300;
  for (int a = 0; a < n_colors; ++a)
    for (int b = a + 1; b < n_colors; ++b)
      min_inter = std::min(min_inter, vec_dist(maps[std::size_t(a)].at(0, 0),
                                               maps[std::size_t(b)].at(0, 0), 32));
  // same color twice is exactly zero distance; different colors keep a margin
  const auto again = enc.encode(solid_grid(1, 1, 8, 0, 0));
  CHECK(vec_dist(again.at(0, 0), maps[0].at(0, 0), 32) == 0.0);
  CHECK(min_inter > 0.1);
}

TEST_CASE("extract_roi: full box is identity, one patch is that feature") {
  PatchEncoderT<double> enc(9, 8, 12);
  const auto img = solid_grid(3, 4, 8, 1, 2);
  const auto map = enc.encode(img);

  const auto full = extract_roi(map, BoundingBox{0, 0, img.width(), img.height()}, 8);
  CHECK(full.values == map.values);

  const auto one = extract_roi(map, BoundingBox{16, 8, 24, 16}, 8);
  CHECK(one.rows == 1);
  CHECK(one.cols == 1);
  for (int j = 0; j < 12; ++j) CHECK(one.at(0, 0)[j] == map.at(1, 2)[j]);
}

TEST_CASE("extract_roi equals a brute-force index slice") {
  const auto map = random_map(5, 7, 6, 11);
  const BoundingBox box{2 * 8, 1 * 8, 5 * 8, 3 * 8};  // cols 2..5, rows 1..3
  const auto sub = extract_roi(map, box, 8);
  REQUIRE(sub.rows == 2);
  REQUIRE(sub.cols == 3);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 6; ++j) CHECK(sub.at(r, c)[j] == map.at(1 + r, 2 + c)[j]);
}

TEST_CASE("extract_roi rejects non-aligned and out-of-bounds boxes") {
  const auto map = random_map(4, 4, 4, 3);
  CHECK_THROWS(extract_roi(map, BoundingBox{1, 0, 9, 8}, 8));
  CHECK_THROWS(extract_roi(map, BoundingBox{0, 0, 48, 8}, 8));
}

TEST_CASE("roi-of-encode equals encode-of-crop for aligned crops") {
  PatchEncoderT<double> enc(21, 8, 16);
  const auto v = Vocabulary::build(4, 4);
  const auto s = generate_sample(77, TaskFamily::DirectAttribution, {4, 4, 8, 0.6}, v);
  const auto map = enc.encode(s.image);
  const BoundingBox box{8, 16, 32, 32};  // cols 1..4, rows 2..4
  const auto sub = extract_roi(map, box, 8);

  GridImage crop;
  crop.cell_rows = 2;
  crop.cell_cols = 3;
  crop.cell_px = 8;
  crop.cells.assign(6, {});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) crop.cell(r, c) = s.image.cell(2 + r, 1 + c);
  render(crop);
  const auto direct = enc.encode(crop, /*grid_row0=*/2, /*grid_col0=*/1);
  REQUIRE(direct.values.size() == sub.values.size());
  for (std::size_t i = 0; i < sub.values.size(); ++i)
    CHECK(direct.values[i] == doctest::Approx(sub.values[i]).epsilon(1e-12));
}

TEST_CASE("pool_to_k: constant map maps to the constant") {
  FeatureMapT<double> m;
  m.rows = 3;
  m.cols = 3;
  m.dim = 4;
  m.values.assign(36, 2.5);
  for (int k : {1, 2, 4, 8, 16, 32}) {
    const auto z = pool_to_k(m, k);
    CHECK(z.k == k);
    for (double v : z.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
  }
}

TEST_CASE("pool_to_k: P=4, K=2 averages adjacent pairs") {
  FeatureMapT<double> m;
  m.rows = 1;
  m.cols = 4;
  m.dim = 1;
  m.values = {1.0, 2.0, 3.0, 4.0};
  const auto z = pool_to_k(m, 2);
  CHECK(z.values[0] == doctest::Approx(1.5));
  CHECK(z.values[1] == doctest::Approx(3.5));
}

TEST_CASE("pool_to_k matches a brute-force grouping oracle, including P<K") {
  Prng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + int(rng.below(5));
    const int cols = 1 + int(rng.below(5));
    const int k = 1 + int(rng.below(36));
    const int d = 1 + int(rng.below(6));
    auto m = random_map(rows, cols, d, 1000 + std::uint64_t(trial));
    m.dim = d;
    m.values.resize(std::size_t(rows) * cols * d);
    const int p = rows * cols;

    const auto z = pool_to_k(m, k);

    // oracle: sizes ceil/floor with larger groups first; repetition if P<K
    std::vector<std::vector<int>> groups;
    if (p < k) {
      for (int i = 0; i < k; ++i) groups.push_back({std::min(i, p - 1)});
    } else {
      const int q = p / k, r = p % k;
      int start = 0;
      for (int g = 0; g < k; ++g) {
        const int len = g < r ? q + 1 : q;
        std::vector<int> ids;
        for (int i = 0; i < len; ++i) ids.push_back(start + i);
        groups.push_back(ids);
        start += len;
      }
    }
    REQUIRE(static_cast<int>(groups.size()) == k);
    for (int g = 0; g < k; ++g) {
      for (int j = 0; j < d; ++j) {
        double s = 0;
        for (int idx : groups[std::size_t(g)]) s += m.values[std::size_t(idx) * d + j];
        s /= double(groups[std::size_t(g)].size());
        CHECK(z.vec(g)[j] == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pool_to_k partition of unity: K dividing P preserves the mean") {
  for (int k : {1, 2, 3, 4, 6, 12}) {
    auto m = random_map(3, 4, 5, 7);
    const auto z = pool_to_k(m, k);
    for (int j = 0; j < 5; ++j) {
      double all = 0;
      for (int i = 0; i < 12; ++i) all += m.values[std::size_t(i) * 5 + j];
      all /= 12.0;
      double pooled = 0;
      for (int g = 0; g < k; ++g) pooled += z.vec(g)[j];
      pooled /= double(k);
      CHECK(pooled == doctest::Approx(all).epsilon(1e-12));
    }
  }
}

TEST_CASE("pool_to_k accepts the ablation grid and rejects K<=0") {
  auto m = random_map(4, 4, 8, 5);
  for (int k : {4, 8, 16, 32}) CHECK_NOTHROW(pool_to_k(m, k));
  CHECK_THROWS(pool_to_k(m, 0));
  CHECK_THROWS(pool_to_k(m, -3));
}

TEST_CASE("adaptive 2-d pooling covers every patch exactly once when shapes divide") {
  auto m = random_map(4, 4, 3, 13);
  const auto z = pool_to_k(m, 4, PoolMode::Adaptive2D);
  // 2x2 windows over a 4x4 map: each output is the mean of a quadrant
  for (int j = 0; j < 3; ++j) {
    double q = 0;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) q += m.at(r, c)[j];
    CHECK(z.vec(0)[j] == doctest::Approx(q / 4.0).epsilon(1e-12));
  }
}

TEST_CASE("latent_targets produces one block per trace step") {
  PatchEncoderT<double> enc(5, 8, 16);
  const auto v = Vocabulary::build(4, 4);
  const auto s = generate_sample(3, TaskFamily::RelativePosition, {4, 4, 8, 0.5}, v);
  const auto blocks = latent_targets(enc, s, 8, PoolMode::Flatten1D);
  CHECK(blocks.size() == 2);
  for (const auto& b : blocks) {
    CHECK(b.k == 8);
    CHECK(b.dim == 16);
  }
}
