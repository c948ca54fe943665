#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lantern/vocab.hpp"

namespace lantern {

// Half-open pixel box, 0 <= x0 < x1 <= width, 0 <= y0 < y1 <= height.
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const BoundingBox&) const = default;
};

struct GridImage {
  int cell_rows = 0, cell_cols = 0, cell_px = 0;
  struct Cell {
    int shape = -1, color = -1;  // -1 = empty
    bool operator==(const Cell&) const = default;
  };
  std::vector<Cell> cells;     // row-major [cell_rows * cell_cols]
  std::vector<float> pixels;   // [height * width * 3], values in [0,1]

  int width() const { return cell_cols * cell_px; }
  int height() const { return cell_rows * cell_px; }
  Cell& cell(int r, int c) { return cells[std::size_t(r) * cell_cols + c]; }
  const Cell& cell(int r, int c) const { return cells[std::size_t(r) * cell_cols + c]; }
  float pixel(int y, int x, int ch) const {
    return pixels[(std::size_t(y) * width() + x) * 3 + ch];
  }
  BoundingBox cell_box(int r, int c) const {
    return {c * cell_px, r * cell_px, (c + 1) * cell_px, (r + 1) * cell_px};
  }
  bool operator==(const GridImage&) const = default;
};

enum class TaskFamily : std::uint8_t {
  DirectAttribution = 0,
  RelativePosition = 1,
  ObjectLocalization = 2,
};

const char* family_name(TaskFamily f);
const char* family_tag(TaskFamily f);           // "da" / "rp" / "ol"
TaskFamily family_from_tag(const std::string&); // throws on unknown tag

struct TraceStep {
  std::vector<int> pre_text;
  BoundingBox roi;
  std::vector<int> post_text;
  bool operator==(const TraceStep&) const = default;
};

struct SyntheticSample {
  GridImage image;
  std::vector<int> question;
  std::vector<int> answer;
  std::vector<TraceStep> trace;
  TaskFamily family = TaskFamily::DirectAttribution;
  std::uint64_t seed = 0;
  bool operator==(const SyntheticSample&) const = default;
};

struct GridConfig {
  int rows = 4;
  int cols = 4;
  int cell_px = 8;
  double occupancy = 0.5;  // distractor fill probability
};

// exact u8/255 palette so pixel data round-trips bit-for-bit through files
struct Rgb {
  unsigned char r, g, b;
};
const std::vector<Rgb>& color_palette();
Rgb background_color();

// Fills image.pixels from the object table. Deterministic.
void render(GridImage& image);

// Deterministic: the same (seed, family, config) always yields the same
// sample. The answer is decidable from the pixels inside the trace ROIs and
// is sampled independently of the question text.
SyntheticSample generate_sample(std::uint64_t seed, TaskFamily family,
                                const GridConfig& cfg, const Vocabulary& vocab);

// analytic chance level of a family's answer class set
double chance_accuracy(TaskFamily family, const GridConfig& cfg);

struct DatasetError : std::runtime_error {
  enum class Kind { BadMagic, Version, Truncated, Checksum };
  DatasetError(Kind k, std::string msg, int rec = -1)
      : std::runtime_error(std::move(msg)), kind(k), record(rec) {}
  Kind kind;
  int record;
};

// File layout: magic "LNT1", u32 record count, then per record a u64 payload
// length, the payload, and a u32 CRC of the payload. A plain-text index
// sidecar is written next to the file.
void write_dataset(const std::vector<SyntheticSample>& samples, const std::string& path);
std::vector<SyntheticSample> read_dataset(const std::string& path);

}  // namespace lantern
