#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "lantern/corpus.hpp"
#include "lantern/vocab.hpp"

using namespace lantern;

namespace {

GridConfig grid4() { return GridConfig{4, 4, 8, 0.5}; }

Vocabulary vocab4() { return Vocabulary::build(4, 4); }

// per-cell mean over non-background pixels recovers the palette color exactly
int classify_cell_color(const GridImage& img, int r, int c) {
  const Rgb bg = background_color();
  const float bgf[3] = {bg.r / 255.0f, bg.g / 255.0f, bg.b / 255.0f};
  double sum[3] = {0, 0, 0};
  long count = 0;
  const auto box = img.cell_box(r, c);
  for (int y = box.y0; y < box.y1; ++y)
    for (int x = box.x0; x < box.x1; ++x) {
      const float p0 = img.pixel(y, x, 0), p1 = img.pixel(y, x, 1), p2 = img.pixel(y, x, 2);
      if (p0 == bgf[0] && p1 == bgf[1] && p2 == bgf[2]) continue;
      sum[0] += p0;
      sum[1] += p1;
      sum[2] += p2;
      ++count;
    }
  if (count == 0) return -1;
  const auto& pal = color_palette();
  for (int k = 0; k < static_cast<int>(pal.size()); ++k) {
    if (float(sum[0] / count) == pal[std::size_t(k)].r / 255.0f &&
        float(sum[1] / count) == pal[std::size_t(k)].g / 255.0f &&
        float(sum[2] / count) == pal[std::size_t(k)].b / 255.0f)
      return k;
  }
  return -2;
}

// answers each family's question from the ROI pixels (and box geometry) alone
int pixel_oracle_answer(const SyntheticSample& s, const Vocabulary& v) {
  const int px = s.image.cell_px;
  auto roi_cell = [&](const BoundingBox& b) {
    return std::pair<int, int>{b.y0 / px, b.x0 / px};
  };
  switch (s.family) {
    case TaskFamily::DirectAttribution: {
      auto [r, c] = roi_cell(s.trace[0].roi);
      return v.id(Vocabulary::color_names()[std::size_t(classify_cell_color(s.image, r, c))]);
    }
    case TaskFamily::ObjectLocalization: {
      auto [r, c] = roi_cell(s.trace[0].roi);
      return v.id("cell_" + std::to_string(r) + "_" + std::to_string(c));
    }
    case TaskFamily::RelativePosition: {
      auto [ra, ca] = roi_cell(s.trace[0].roi);
      auto [rb, cb] = roi_cell(s.trace[1].roi);
      if (ra == rb) return v.id(ca < cb ? "left" : "right");
      return v.id(ra < rb ? "above" : "below");
    }
  }
  return -1;
}

}  // namespace

TEST_CASE("direct attribution sample has the promised structure") {
  const auto v = vocab4();
  const auto s = generate_sample(7, TaskFamily::DirectAttribution, grid4(), v);

  REQUIRE(s.trace.size() == 1);
  REQUIRE(s.answer.size() == 1);

  // question names a row and a col; the ROI covers exactly that cell
  const std::string q = v.decode(s.question);
  CHECK(q.rfind("what color is the shape at row ", 0) == 0);
  const auto& roi = s.trace[0].roi;
  const int r = roi.y0 / s.image.cell_px, c = roi.x0 / s.image.cell_px;
  CHECK(roi == s.image.cell_box(r, c));
  CHECK(q.find("row " + std::to_string(r) + " col " + std::to_string(c)) != std::string::npos);

  // the answer is that cell's color token
  const auto& cell = s.image.cell(r, c);
  REQUIRE(cell.shape >= 0);
  CHECK(s.answer[0] == v.id(Vocabulary::color_names()[std::size_t(cell.color)]));
}

TEST_CASE("identical seed gives identical samples") {
  const auto v = vocab4();
  for (auto fam : {TaskFamily::DirectAttribution, TaskFamily::RelativePosition,
                   TaskFamily::ObjectLocalization}) {
    const auto a = generate_sample(7, fam, grid4(), v);
    const auto b = generate_sample(7, fam, grid4(), v);
    CHECK(a == b);
  }
}

TEST_CASE("ROIs lie inside the image and on cell boundaries") {
  const auto v = vocab4();
  const auto cfg = grid4();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    for (auto fam : {TaskFamily::DirectAttribution, TaskFamily::RelativePosition,
                     TaskFamily::ObjectLocalization}) {
      const auto s = generate_sample(seed, fam, cfg, v);
      for (const auto& st : s.trace) {
        CHECK(st.roi.x0 >= 0);
        CHECK(st.roi.y0 >= 0);
        CHECK(st.roi.x1 <= s.image.width());
        CHECK(st.roi.y1 <= s.image.height());
        CHECK(st.roi.x0 < st.roi.x1);
        CHECK(st.roi.y0 < st.roi.y1);
        CHECK(st.roi.x0 % cfg.cell_px == 0);
        CHECK(st.roi.y0 % cfg.cell_px == 0);
        CHECK(st.roi.x1 % cfg.cell_px == 0);
        CHECK(st.roi.y1 % cfg.cell_px == 0);
      }
    }
  }
}

TEST_CASE("answer distribution is near uniform per family") {
  const auto v = vocab4();
  const auto cfg = grid4();
  const int n = 1000;
  for (auto fam : {TaskFamily::DirectAttribution, TaskFamily::RelativePosition,
                   TaskFamily::ObjectLocalization}) {
    std::map<int, int> counts;
    for (int i = 0; i < n; ++i) {
      const auto s = generate_sample(std::uint64_t(10000 + i), fam, cfg, v);
      counts[s.answer[0]]++;
    }
    const int classes = fam == TaskFamily::DirectAttribution ? 8
                        : fam == TaskFamily::RelativePosition ? 4
                                                              : 16;
    CHECK(static_cast<int>(counts.size()) == classes);
    for (auto [tok, cnt] : counts) {
      const double frac = double(cnt) / n;
      CHECK(std::abs(frac - 1.0 / classes) < 0.05);
    }
  }
}

TEST_CASE("information completeness: pixel oracle is exact") {
  const auto v = vocab4();
  const auto cfg = grid4();
  for (std::uint64_t seed = 500; seed < 800; ++seed) {
    for (auto fam : {TaskFamily::DirectAttribution, TaskFamily::RelativePosition,
                     TaskFamily::ObjectLocalization}) {
      const auto s = generate_sample(seed, fam, cfg, v);
      CHECK(pixel_oracle_answer(s, v) == s.answer[0]);
    }
  }
}

TEST_CASE("render: empty table gives uniform background") {
  GridImage img;
  img.cell_rows = 2;
  img.cell_cols = 3;
  img.cell_px = 8;
  img.cells.assign(6, {});
  render(img);
  const Rgb bg = background_color();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      CHECK(img.pixel(y, x, 0) == bg.r / 255.0f);
      CHECK(img.pixel(y, x, 1) == bg.g / 255.0f);
      CHECK(img.pixel(y, x, 2) == bg.b / 255.0f);
    }
}

TEST_CASE("render: red square fills the cell interior with the red constant") {
  GridImage img;
  img.cell_rows = 2;
  img.cell_cols = 2;
  img.cell_px = 8;
  img.cells.assign(4, {});
  img.cell(0, 0) = {0 /*square*/, 0 /*red*/};
  render(img);
  const Rgb red = color_palette()[0];
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) {
      CHECK(img.pixel(y, x, 0) == red.r / 255.0f);
      CHECK(img.pixel(y, x, 1) == red.g / 255.0f);
      CHECK(img.pixel(y, x, 2) == red.b / 255.0f);
    }
}

TEST_CASE("render round-trip: mean-color classifier recovers the object table") {
  const auto v = vocab4();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = generate_sample(seed, TaskFamily::DirectAttribution, grid4(), v);
    for (int r = 0; r < s.image.cell_rows; ++r)
      for (int c = 0; c < s.image.cell_cols; ++c) {
        const int got = classify_cell_color(s.image, r, c);
        const auto& cell = s.image.cell(r, c);
        if (cell.shape < 0)
          CHECK(got == -1);
        else
          CHECK(got == cell.color);
      }
  }
}

TEST_CASE("relative position is rejected on a 1x1 grid") {
  const auto v = vocab4();
  GridConfig tiny{1, 1, 8, 0.5};
  CHECK_THROWS(generate_sample(3, TaskFamily::RelativePosition, tiny, v));
  // the other families still work
  CHECK_NOTHROW(generate_sample(3, TaskFamily::DirectAttribution, tiny, v));
}

TEST_CASE("dataset round-trip preserves every field") {
  const auto v = vocab4();
  const auto cfg = grid4();
  std::vector<SyntheticSample> samples;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    samples.push_back(generate_sample(
        seed,
        static_cast<TaskFamily>(seed % 3),
        cfg, v));

  const std::string path = "test_corpus_roundtrip.lnt";
  write_dataset(samples, path);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(back[i] == samples[i]);
  std::remove(path.c_str());
  std::remove((path + ".idx").c_str());
}

TEST_CASE("empty dataset is a valid file with zero records") {
  const std::string path = "test_corpus_empty.lnt";
  write_dataset({}, path);
  CHECK(read_dataset(path).empty());
  std::remove(path.c_str());
  std::remove((path + ".idx").c_str());
}

TEST_CASE("corrupted byte raises a checksum error naming the record") {
  const auto v = vocab4();
  std::vector<SyntheticSample> samples;
  for (std::uint64_t seed = 0; seed < 3; ++seed)
    samples.push_back(generate_sample(seed, TaskFamily::DirectAttribution, grid4(), v));
  const std::string path = "test_corpus_corrupt.lnt";
  write_dataset(samples, path);

  // flip one byte inside the second record's payload
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(0, std::ios::end);
  const auto size = static_cast<long>(f.tellg());
  const long pos = size / 2;
  f.seekg(pos);
  char b;
  f.read(&b, 1);
  b = char(b ^ 0x40);
  f.seekp(pos);
  f.write(&b, 1);
  f.close();

  try {
    read_dataset(path);
    FAIL("expected checksum failure");
  } catch (const DatasetError& e) {
    CHECK(e.kind == DatasetError::Kind::Checksum);
    CHECK(e.record >= 0);
    CHECK(std::string(e.what()).find(std::to_string(e.record)) != std::string::npos);
  }
  std::remove(path.c_str());
  std::remove((path + ".idx").c_str());
}

TEST_CASE("bad magic and truncation are distinct error kinds") {
  const std::string path = "test_corpus_bad.lnt";
  {
    std::ofstream f(path, std::ios::binary);
    f << "NOPE1234";
  }
  try {
    read_dataset(path);
    FAIL("expected magic failure");
  } catch (const DatasetError& e) {
    CHECK(e.kind == DatasetError::Kind::BadMagic);
  }

  const auto v = vocab4();
  write_dataset({generate_sample(1, TaskFamily::DirectAttribution, grid4(), v)}, path);
  {
    // chop off the tail
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), std::streamsize(all.size() / 2));
  }
  try {
    read_dataset(path);
    FAIL("expected truncation failure");
  } catch (const DatasetError& e) {
    CHECK(e.kind == DatasetError::Kind::Truncated);
  }
  std::remove(path.c_str());
  std::remove((path + ".idx").c_str());
}

TEST_CASE("token stream is a pure function of the template fields") {
  // two OL samples whose target sits in different cells but shares color and
  // shape produce identical questions; only answer and ROI differ
  const auto v = vocab4();
  const auto cfg = grid4();
  std::vector<SyntheticSample> found;
  for (std::uint64_t seed = 0; found.size() < 2 && seed < 5000; ++seed) {
    auto s = generate_sample(seed, TaskFamily::ObjectLocalization, cfg, v);
    if (found.empty()) {
      found.push_back(s);
    } else if (s.question == found[0].question && s.answer != found[0].answer) {
      found.push_back(s);
    }
  }
  REQUIRE(found.size() == 2);
  CHECK(found[0].question == found[1].question);
  CHECK(found[0].trace[0].pre_text == found[1].trace[0].pre_text);
  CHECK(found[0].trace[0].post_text == found[1].trace[0].post_text);
  CHECK(found[0].trace[0].roi != found[1].trace[0].roi);
}

TEST_CASE("vocabulary is deterministic and control ids are distinct") {
  const auto a = Vocabulary::build(4, 4);
  const auto b = Vocabulary::build(4, 4);
  CHECK(a.tokens() == b.tokens());
  std::set<int> ids = {a.lvr_start, a.lvr_sep, a.lvr_end, a.lvr_pad, a.think_open,
                       a.think_close, a.answer_open, a.answer_close, a.pad, a.eos, a.img};
  CHECK(ids.size() == 11);
  CHECK(a.color_ids.size() == 8);
  CHECK(a.direction_ids.size() == 4);
  CHECK(a.cell_ids.size() == 16);
}
