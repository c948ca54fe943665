#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lantern/corpus.hpp"
#include "lantern/crc32.hpp"
#include "lantern/rng.hpp"

namespace lantern {

template <class T>
struct FeatureMapT {
  int rows = 0, cols = 0, dim = 0;
  std::vector<T> values;  // rows*cols*dim, row-major patches

  const T* at(int r, int c) const {
    return values.data() + (std::size_t(r) * cols + c) * dim;
  }
  T* at(int r, int c) { return values.data() + (std::size_t(r) * cols + c) * dim; }
  int patches() const { return rows * cols; }
};

// Z_target: K pooled vectors of dimension d.
template <class T>
struct LatentTargetBlockT {
  int k = 0, dim = 0;
  std::vector<T> values;  // k*dim

  const T* vec(int i) const { return values.data() + std::size_t(i) * dim; }
  T* vec(int i) { return values.data() + std::size_t(i) * dim; }
};

enum class PoolMode : std::uint8_t {
  Flatten1D = 0,   // contiguous groups over row-major flattened patches
  Adaptive2D = 1,  // adaptive 2-d window grid
};

// Frozen featurizer: per patch, a seeded affine projection of the flattened
// pixels plus a fixed sinusoidal 2-d position code. Weights are generated in
// double precision from the seed and cast, so float and double encoders agree
// on the underlying parameters. Never trained.
template <class T>
class PatchEncoderT {
 public:
  PatchEncoderT(std::uint64_t seed, int patch_size, int dim)
      : seed_(seed), patch_(patch_size), dim_(dim) {
    const int in = patch_ * patch_ * 3;
    Prng rng(mix_seed(seed, 0xEBC0DE));
    const double sigma = 2.0 / std::sqrt(static_cast<double>(in));
    w_.resize(std::size_t(dim_) * in);
    b_.resize(std::size_t(dim_));
    for (auto& v : w_) v = static_cast<T>(rng.gauss() * sigma);
    for (auto& v : b_) v = static_cast<T>(rng.gauss() * 0.1);
  }

  int patch_size() const { return patch_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  // CRC over the raw parameter bytes; used by the frozenness assertion.
  std::uint32_t fingerprint() const {
    std::uint32_t c = crc32(w_.data(), w_.size() * sizeof(T));
    return crc32(b_.data(), b_.size() * sizeof(T), c);
  }

  // grid_row0/grid_col0 shift the position code; encoding a patch-aligned
  // crop with its origin offset reproduces the corresponding sub-map.
  FeatureMapT<T> encode(const GridImage& img, int grid_row0 = 0, int grid_col0 = 0) const {
    if (img.width() % patch_ != 0 || img.height() % patch_ != 0)
      throw std::runtime_error("encode: image dims not divisible by patch size");
    FeatureMapT<T> map;
    map.rows = img.height() / patch_;
    map.cols = img.width() / patch_;
    map.dim = dim_;
    map.values.assign(std::size_t(map.rows) * map.cols * dim_, T(0));
    const int in = patch_ * patch_ * 3;
    std::vector<T> px(static_cast<std::size_t>(in), T(0));
    for (int pr = 0; pr < map.rows; ++pr) {
      for (int pc = 0; pc < map.cols; ++pc) {
        int t = 0;
        for (int i = 0; i < patch_; ++i)
          for (int j = 0; j < patch_; ++j)
            for (int ch = 0; ch < 3; ++ch)
              px[std::size_t(t++)] =
                  static_cast<T>(img.pixel(pr * patch_ + i, pc * patch_ + j, ch)) -
                  T(0.45);
        T* f = map.at(pr, pc);
        for (int o = 0; o < dim_; ++o) {
          const T* wrow = w_.data() + std::size_t(o) * in;
          T s = b_[std::size_t(o)];
          for (int q = 0; q < in; ++q) s += wrow[q] * px[std::size_t(q)];
          f[o] = s + pos_code(pr + grid_row0, pc + grid_col0, o);
        }
      }
    }
    return map;
  }

  T pos_code(int row, int col, int o) const {
    // interleaved sin/cos bands, first half row-driven, second half col-driven
    const int half = dim_ / 2;
    const bool is_row = o < half;
    const int i = is_row ? o : o - half;
    const double pos = static_cast<double>(is_row ? row : col);
    const double band = std::pow(100.0, static_cast<double>(i / 2) /
                                            std::max(1.0, half / 2.0));
    const double x = pos / band;
    const double v = (i % 2 == 0) ? std::sin(x) : std::cos(x);
    return static_cast<T>(0.7 * v);
  }

 private:
  std::uint64_t seed_;
  int patch_, dim_;
  std::vector<T> w_, b_;
};

// sub-map of the patches covered by a patch-aligned box
template <class T>
FeatureMapT<T> extract_roi(const FeatureMapT<T>& map, const BoundingBox& box,
                           int patch_size) {
  if (box.x0 % patch_size || box.y0 % patch_size || box.x1 % patch_size ||
      box.y1 % patch_size)
    throw std::runtime_error("extract_roi: box is not patch-aligned");
  const int c0 = box.x0 / patch_size, c1 = box.x1 / patch_size;
  const int r0 = box.y0 / patch_size, r1 = box.y1 / patch_size;
  if (c0 < 0 || r0 < 0 || c1 > map.cols || r1 > map.rows || c0 >= c1 || r0 >= r1)
    throw std::runtime_error("extract_roi: box out of bounds");
  FeatureMapT<T> sub;
  sub.rows = r1 - r0;
  sub.cols = c1 - c0;
  sub.dim = map.dim;
  sub.values.resize(std::size_t(sub.rows) * sub.cols * sub.dim);
  for (int r = 0; r < sub.rows; ++r)
    for (int c = 0; c < sub.cols; ++c)
      std::copy_n(map.at(r0 + r, c0 + c), map.dim, sub.at(r, c));
  return sub;
}

// Average-pools P=rows*cols patch vectors down to exactly K vectors.
// Flatten1D: row-major flatten, then K contiguous groups of size ceil(P/K) or
// floor(P/K), larger groups first; if P < K the last vector repeats.
// Adaptive2D: a kr x kc window grid with kr*kc == K.
template <class T>
LatentTargetBlockT<T> pool_to_k(const FeatureMapT<T>& sub, int k,
                                PoolMode mode = PoolMode::Flatten1D) {
  if (k <= 0) throw std::runtime_error("pool_to_k: K must be >= 1");
  const int p = sub.patches();
  if (p == 0) throw std::runtime_error("pool_to_k: empty feature map");
  const int d = sub.dim;

  LatentTargetBlockT<T> out;
  out.k = k;
  out.dim = d;
  out.values.assign(std::size_t(k) * d, T(0));

  if (mode == PoolMode::Flatten1D) {
    if (p < k) {
      for (int i = 0; i < k; ++i) {
        const int src = std::min(i, p - 1);
        std::copy_n(sub.values.data() + std::size_t(src) * d, d, out.vec(i));
      }
      return out;
    }
    const int q = p / k, r = p % k;
    int start = 0;
    for (int g = 0; g < k; ++g) {
      const int len = g < r ? q + 1 : q;
      T* dst = out.vec(g);
      for (int i = 0; i < len; ++i) {
        const T* src = sub.values.data() + std::size_t(start + i) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
      for (int j = 0; j < d; ++j) dst[j] /= T(len);
      start += len;
    }
    return out;
  }

  // Adaptive2D: pick the divisor pair kr*kc == K whose aspect is closest to
  // the map's; windows follow the usual adaptive rule and may repeat rows or
  // columns when K exceeds the extent.
  int best_kr = 1;
  double best_score = 1e300;
  for (int kr = 1; kr <= k; ++kr) {
    if (k % kr) continue;
    const int kc = k / kr;
    const double score = std::abs(std::log(double(kr) / kc) -
                                  std::log(double(sub.rows) / sub.cols));
    if (score < best_score) {
      best_score = score;
      best_kr = kr;
    }
  }
  const int kr = best_kr, kc = k / best_kr;
  auto window = [](int i, int n, int extent, int& lo, int& hi) {
    lo = (i * extent) / n;
    hi = ((i + 1) * extent + n - 1) / n;
    if (hi <= lo) hi = lo + 1;
  };
  for (int gr = 0; gr < kr; ++gr) {
    for (int gc = 0; gc < kc; ++gc) {
      int r0, r1, c0, c1;
      window(gr, kr, sub.rows, r0, r1);
      window(gc, kc, sub.cols, c0, c1);
      T* dst = out.vec(gr * kc + gc);
      int count = 0;
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) {
          const T* src = sub.at(r, c);
          for (int j = 0; j < d; ++j) dst[j] += src[j];
          ++count;
        }
      for (int j = 0; j < d; ++j) dst[j] /= T(count);
    }
  }
  return out;
}

// encode -> roi -> pool for every trace step of a sample
template <class T>
std::vector<LatentTargetBlockT<T>> latent_targets(const PatchEncoderT<T>& enc,
                                                  const SyntheticSample& sample, int k,
                                                  PoolMode mode) {
  const auto map = enc.encode(sample.image);
  std::vector<LatentTargetBlockT<T>> out;
  out.reserve(sample.trace.size());
  for (const auto& step : sample.trace)
    out.push_back(pool_to_k(extract_roi(map, step.roi, enc.patch_size()), k, mode));
  return out;
}

}  // namespace lantern
