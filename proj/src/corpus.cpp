#include "lantern/corpus.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "lantern/crc32.hpp"
#include "lantern/rng.hpp"

namespace lantern {

namespace {

const std::vector<Rgb> kPalette = {
    {220, 40, 40},   // red
    {40, 200, 40},   // green
    {40, 70, 220},   // blue
    {235, 220, 40},  // yellow
    {160, 40, 210},  // purple
    {240, 150, 40},  // orange
    {40, 210, 210},  // cyan
    {230, 40, 180},  // magenta
};
constexpr Rgb kBackground = {120, 120, 120};

enum Shape { kSquare = 0, kCircle = 1, kTriangle = 2, kDiamond = 3 };

// integer point-in-shape tests over local (i=row, j=col) in an s x s cell
bool shape_covers(int shape, int i, int j, int s) {
  switch (shape) {
    case kSquare:
      return i >= 1 && i < s - 1 && j >= 1 && j < s - 1;
    case kCircle: {
      const int di = 2 * i - (s - 1);
      const int dj = 2 * j - (s - 1);
      return di * di + dj * dj <= (s - 2) * (s - 2);
    }
    case kTriangle:
      return i >= 1 && i < s - 1 && std::abs(2 * j - (s - 1)) <= 2 * (i - 1) + 1;
    case kDiamond:
      return std::abs(2 * i - (s - 1)) + std::abs(2 * j - (s - 1)) <= s - 2;
    default:
      return false;
  }
}

std::string itos(int v) { return std::to_string(v); }

}  // namespace

const std::vector<Rgb>& color_palette() { return kPalette; }
Rgb background_color() { return kBackground; }

const char* family_name(TaskFamily f) {
  switch (f) {
    case TaskFamily::DirectAttribution: return "DirectAttribution";
    case TaskFamily::RelativePosition: return "RelativePosition";
    case TaskFamily::ObjectLocalization: return "ObjectLocalization";
  }
  return "?";
}

const char* family_tag(TaskFamily f) {
  switch (f) {
    case TaskFamily::DirectAttribution: return "da";
    case TaskFamily::RelativePosition: return "rp";
    case TaskFamily::ObjectLocalization: return "ol";
  }
  return "?";
}

TaskFamily family_from_tag(const std::string& tag) {
  if (tag == "da") return TaskFamily::DirectAttribution;
  if (tag == "rp") return TaskFamily::RelativePosition;
  if (tag == "ol") return TaskFamily::ObjectLocalization;
  throw std::runtime_error("unknown task family tag '" + tag + "' (expected da, rp or ol)");
}

void render(GridImage& img) {
  const int w = img.width(), h = img.height(), s = img.cell_px;
  img.pixels.assign(std::size_t(w) * h * 3, 0.0f);
  const float bg[3] = {kBackground.r / 255.0f, kBackground.g / 255.0f,
                       kBackground.b / 255.0f};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.pixels[(std::size_t(y) * w + x) * 3 + ch] = bg[ch];

  for (int r = 0; r < img.cell_rows; ++r) {
    for (int c = 0; c < img.cell_cols; ++c) {
      const auto& cell = img.cell(r, c);
      if (cell.shape < 0) continue;
      const Rgb col = kPalette[std::size_t(cell.color)];
      const float fg[3] = {col.r / 255.0f, col.g / 255.0f, col.b / 255.0f};
      for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
          if (!shape_covers(cell.shape, i, j, s)) continue;
          const int y = r * s + i, x = c * s + j;
          for (int ch = 0; ch < 3; ++ch)
            img.pixels[(std::size_t(y) * w + x) * 3 + ch] = fg[ch];
        }
      }
    }
  }
}

double chance_accuracy(TaskFamily family, const GridConfig& cfg) {
  switch (family) {
    case TaskFamily::DirectAttribution:
      return 1.0 / static_cast<double>(kPalette.size());
    case TaskFamily::RelativePosition: {
      int dirs = 0;
      if (cfg.cols >= 2) dirs += 2;
      if (cfg.rows >= 2) dirs += 2;
      return dirs > 0 ? 1.0 / dirs : 0.0;
    }
    case TaskFamily::ObjectLocalization:
      return 1.0 / static_cast<double>(cfg.rows * cfg.cols);
  }
  return 0.0;
}

SyntheticSample generate_sample(std::uint64_t seed, TaskFamily family,
                                const GridConfig& cfg, const Vocabulary& vocab) {
  if (cfg.rows < 1 || cfg.cols < 1 || cfg.cell_px < 4)
    throw std::runtime_error("generate_sample: invalid grid config");
  const int n_shapes = static_cast<int>(Vocabulary::shape_names().size());
  const int n_colors = static_cast<int>(kPalette.size());

  SyntheticSample s;
  s.seed = seed;
  s.family = family;
  s.image.cell_rows = cfg.rows;
  s.image.cell_cols = cfg.cols;
  s.image.cell_px = cfg.cell_px;
  s.image.cells.assign(std::size_t(cfg.rows) * cfg.cols, {});

  Prng rng(mix_seed(seed, static_cast<std::uint64_t>(family) + 101));

  auto color_tok = [&](int color) { return vocab.id(Vocabulary::color_names()[std::size_t(color)]); };
  auto shape_word = [&](int shape) { return Vocabulary::shape_names()[std::size_t(shape)]; };

  switch (family) {
    case TaskFamily::DirectAttribution: {
      const int qr = static_cast<int>(rng.below(std::uint64_t(cfg.rows)));
      const int qc = static_cast<int>(rng.below(std::uint64_t(cfg.cols)));
      for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c)
          if ((r == qr && c == qc) || rng.coin(cfg.occupancy))
            s.image.cell(r, c) = {static_cast<int>(rng.below(std::uint64_t(n_shapes))),
                                  static_cast<int>(rng.below(std::uint64_t(n_colors)))};
      const auto& target = s.image.cell(qr, qc);
      s.question = vocab.encode("what color is the shape at row " + itos(qr) +
                                " col " + itos(qc));
      s.answer = {color_tok(target.color)};
      TraceStep step;
      step.pre_text = vocab.encode("i will look at row " + itos(qr) + " col " + itos(qc));
      step.roi = s.image.cell_box(qr, qc);
      step.post_text = vocab.encode("i can now answer");
      s.trace.push_back(std::move(step));
      break;
    }

    case TaskFamily::RelativePosition: {
      const bool horiz_ok = cfg.cols >= 2, vert_ok = cfg.rows >= 2;
      if (!horiz_ok && !vert_ok)
        throw std::runtime_error("RelativePosition unsupported on a 1x1 grid");
      std::vector<std::string> feasible;
      if (horiz_ok) {
        feasible.push_back("left");
        feasible.push_back("right");
      }
      if (vert_ok) {
        feasible.push_back("above");
        feasible.push_back("below");
      }
      const std::string dir = feasible[rng.below(feasible.size())];
      const int shape_a = static_cast<int>(rng.below(std::uint64_t(n_shapes)));
      int shape_b = static_cast<int>(rng.below(std::uint64_t(n_shapes - 1)));
      if (shape_b >= shape_a) ++shape_b;

      int ra, ca, rb, cb;
      if (dir == "left" || dir == "right") {
        ra = rb = static_cast<int>(rng.below(std::uint64_t(cfg.rows)));
        int c1 = static_cast<int>(rng.below(std::uint64_t(cfg.cols)));
        int c2 = static_cast<int>(rng.below(std::uint64_t(cfg.cols - 1)));
        if (c2 >= c1) ++c2;
        ca = std::min(c1, c2);
        cb = std::max(c1, c2);
        if (dir == "right") std::swap(ca, cb);
      } else {
        ca = cb = static_cast<int>(rng.below(std::uint64_t(cfg.cols)));
        int r1 = static_cast<int>(rng.below(std::uint64_t(cfg.rows)));
        int r2 = static_cast<int>(rng.below(std::uint64_t(cfg.rows - 1)));
        if (r2 >= r1) ++r2;
        ra = std::min(r1, r2);
        rb = std::max(r1, r2);
        if (dir == "below") std::swap(ra, rb);
      }
      s.image.cell(ra, ca) = {shape_a, static_cast<int>(rng.below(std::uint64_t(n_colors)))};
      s.image.cell(rb, cb) = {shape_b, static_cast<int>(rng.below(std::uint64_t(n_colors)))};
      // distractors use the two unused shapes so each referenced shape is unique
      std::vector<int> other;
      for (int sh = 0; sh < n_shapes; ++sh)
        if (sh != shape_a && sh != shape_b) other.push_back(sh);
      for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
          if ((r == ra && c == ca) || (r == rb && c == cb)) continue;
          if (!other.empty() && rng.coin(cfg.occupancy))
            s.image.cell(r, c) = {other[rng.below(other.size())],
                                  static_cast<int>(rng.below(std::uint64_t(n_colors)))};
        }

      s.question = vocab.encode("which direction is the " + shape_word(shape_a) +
                                " relative to the " + shape_word(shape_b));
      s.answer = {vocab.id(dir)};
      TraceStep st1, st2;
      st1.pre_text = vocab.encode("first i find the " + shape_word(shape_a));
      st1.roi = s.image.cell_box(ra, ca);
      st2.pre_text = vocab.encode("then i find the " + shape_word(shape_b));
      st2.roi = s.image.cell_box(rb, cb);
      st2.post_text = vocab.encode("i can now answer");
      s.trace.push_back(std::move(st1));
      s.trace.push_back(std::move(st2));
      break;
    }

    case TaskFamily::ObjectLocalization: {
      const int tr = static_cast<int>(rng.below(std::uint64_t(cfg.rows)));
      const int tc = static_cast<int>(rng.below(std::uint64_t(cfg.cols)));
      const int tshape = static_cast<int>(rng.below(std::uint64_t(n_shapes)));
      const int tcolor = static_cast<int>(rng.below(std::uint64_t(n_colors)));
      s.image.cell(tr, tc) = {tshape, tcolor};
      for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) {
          if (r == tr && c == tc) continue;
          if (!rng.coin(cfg.occupancy)) continue;
          // distractors never duplicate the queried (color, shape) pair
          int sh, co;
          do {
            sh = static_cast<int>(rng.below(std::uint64_t(n_shapes)));
            co = static_cast<int>(rng.below(std::uint64_t(n_colors)));
          } while (sh == tshape && co == tcolor);
          s.image.cell(r, c) = {sh, co};
        }
      const std::string color_word = Vocabulary::color_names()[std::size_t(tcolor)];
      s.question = vocab.encode("where is the " + color_word + " " + shape_word(tshape));
      s.answer = {vocab.id("cell_" + itos(tr) + "_" + itos(tc))};
      TraceStep step;
      step.pre_text = vocab.encode("i will search for the " + color_word + " " +
                                   shape_word(tshape));
      step.roi = s.image.cell_box(tr, tc);
      step.post_text = vocab.encode("i can now answer");
      s.trace.push_back(std::move(step));
      break;
    }
  }

  render(s.image);
  return s;
}

// ---------------------------------------------------------------------------
// dataset files
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'N', 'T', '1'};
constexpr std::uint32_t kRecordVersion = 1;

void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(char(v & 0xFF));
  b.push_back(char(v >> 8));
}
void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(char((v >> (8 * i)) & 0xFF));
}
void put_i32(std::string& b, std::int32_t v) { put_u32(b, std::uint32_t(v)); }
void put_ids(std::string& b, const std::vector<int>& ids) {
  put_u16(b, std::uint16_t(ids.size()));
  for (int id : ids) put_u16(b, std::uint16_t(id));
}

struct Reader {
  const unsigned char* p;
  std::size_t n;
  std::size_t off = 0;
  int record;

  void need(std::size_t k) const {
    if (off + k > n)
      throw DatasetError(DatasetError::Kind::Truncated,
                         "dataset record " + std::to_string(record) + " is truncated",
                         record);
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(p[off]) | std::uint16_t(p[off + 1]) << 8;
    off += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[off + std::size_t(i)]) << (8 * i);
    off += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[off + std::size_t(i)]) << (8 * i);
    off += 8;
    return v;
  }
  std::int32_t i32() { return std::int32_t(u32()); }
  unsigned char u8() {
    need(1);
    return p[off++];
  }
  std::vector<int> ids() {
    const int k = u16();
    std::vector<int> out(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < k; ++i) out[std::size_t(i)] = u16();
    return out;
  }
};

std::string encode_record(const SyntheticSample& s) {
  std::string b;
  put_u32(b, kRecordVersion);
  put_u64(b, s.seed);
  b.push_back(char(static_cast<std::uint8_t>(s.family)));
  put_u16(b, std::uint16_t(s.image.cell_rows));
  put_u16(b, std::uint16_t(s.image.cell_cols));
  put_u16(b, std::uint16_t(s.image.cell_px));
  std::uint16_t objs = 0;
  for (const auto& c : s.image.cells)
    if (c.shape >= 0) ++objs;
  put_u16(b, objs);
  for (int r = 0; r < s.image.cell_rows; ++r)
    for (int c = 0; c < s.image.cell_cols; ++c) {
      const auto& cell = s.image.cell(r, c);
      if (cell.shape < 0) continue;
      put_u16(b, std::uint16_t(r));
      put_u16(b, std::uint16_t(c));
      b.push_back(char(cell.shape));
      b.push_back(char(cell.color));
    }
  for (float v : s.image.pixels)
    b.push_back(char(static_cast<unsigned char>(std::lround(v * 255.0f))));
  put_ids(b, s.question);
  put_ids(b, s.answer);
  put_u16(b, std::uint16_t(s.trace.size()));
  for (const auto& st : s.trace) {
    put_ids(b, st.pre_text);
    put_i32(b, st.roi.x0);
    put_i32(b, st.roi.y0);
    put_i32(b, st.roi.x1);
    put_i32(b, st.roi.y1);
    put_ids(b, st.post_text);
  }
  return b;
}

SyntheticSample decode_record(const std::string& payload, int record) {
  Reader rd{reinterpret_cast<const unsigned char*>(payload.data()), payload.size(), 0,
            record};
  const std::uint32_t ver = rd.u32();
  if (ver != kRecordVersion)
    throw DatasetError(DatasetError::Kind::Version,
                       "dataset record " + std::to_string(record) + " has version " +
                           std::to_string(ver) + ", expected " +
                           std::to_string(kRecordVersion),
                       record);
  SyntheticSample s;
  s.seed = rd.u64();
  s.family = static_cast<TaskFamily>(rd.u8());
  s.image.cell_rows = rd.u16();
  s.image.cell_cols = rd.u16();
  s.image.cell_px = rd.u16();
  s.image.cells.assign(std::size_t(s.image.cell_rows) * s.image.cell_cols, {});
  const int objs = rd.u16();
  for (int i = 0; i < objs; ++i) {
    const int r = rd.u16(), c = rd.u16();
    const int sh = rd.u8(), co = rd.u8();
    s.image.cell(r, c) = {sh, co};
  }
  const std::size_t npix = std::size_t(s.image.width()) * s.image.height() * 3;
  s.image.pixels.resize(npix);
  for (std::size_t i = 0; i < npix; ++i)
    s.image.pixels[i] = float(rd.u8()) / 255.0f;
  s.question = rd.ids();
  s.answer = rd.ids();
  const int steps = rd.u16();
  for (int i = 0; i < steps; ++i) {
    TraceStep st;
    st.pre_text = rd.ids();
    st.roi.x0 = rd.i32();
    st.roi.y0 = rd.i32();
    st.roi.x1 = rd.i32();
    st.roi.y1 = rd.i32();
    st.post_text = rd.ids();
    s.trace.push_back(std::move(st));
  }
  return s;
}

}  // namespace

void write_dataset(const std::vector<SyntheticSample>& samples, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  std::ofstream idx(path + ".idx", std::ios::trunc);
  if (!idx) throw std::runtime_error("cannot open '" + path + ".idx' for writing");

  out.write(kMagic, 4);
  const std::uint32_t count = std::uint32_t(samples.size());
  char hdr[4];
  for (int i = 0; i < 4; ++i) hdr[i] = char((count >> (8 * i)) & 0xFF);
  out.write(hdr, 4);

  idx << "# record offset length seed family\n";
  std::uint64_t offset = 8;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string payload = encode_record(samples[i]);
    std::string framed;
    put_u64(framed, payload.size());
    framed += payload;
    put_u32(framed, crc32(payload.data(), payload.size()));
    out.write(framed.data(), std::streamsize(framed.size()));
    idx << i << ' ' << offset << ' ' << framed.size() << ' ' << samples[i].seed << ' '
        << family_tag(samples[i].family) << '\n';
    offset += framed.size();
  }
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::vector<SyntheticSample> read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (all.size() < 8 || std::memcmp(all.data(), kMagic, 4) != 0)
    throw DatasetError(DatasetError::Kind::BadMagic, "'" + path + "' is not a dataset file");
  std::uint32_t count = 0;
  for (int i = 0; i < 4; ++i)
    count |= std::uint32_t(static_cast<unsigned char>(all[4 + std::size_t(i)])) << (8 * i);

  std::vector<SyntheticSample> samples;
  samples.reserve(count);
  std::size_t off = 8;
  for (std::uint32_t rec = 0; rec < count; ++rec) {
    if (off + 8 > all.size())
      throw DatasetError(DatasetError::Kind::Truncated,
                         "dataset truncated at record " + std::to_string(rec), int(rec));
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i)
      len |= std::uint64_t(static_cast<unsigned char>(all[off + std::size_t(i)])) << (8 * i);
    off += 8;
    if (off + len + 4 > all.size())
      throw DatasetError(DatasetError::Kind::Truncated,
                         "dataset truncated at record " + std::to_string(rec), int(rec));
    const std::string payload = all.substr(off, len);
    off += len;
    std::uint32_t stored = 0;
    for (int i = 0; i < 4; ++i)
      stored |= std::uint32_t(static_cast<unsigned char>(all[off + std::size_t(i)])) << (8 * i);
    off += 4;
    const std::uint32_t actual = crc32(payload.data(), payload.size());
    if (stored != actual)
      throw DatasetError(DatasetError::Kind::Checksum,
                         "checksum mismatch in record " + std::to_string(rec), int(rec));
    samples.push_back(decode_record(payload, int(rec)));
  }
  return samples;
}

}  // namespace lantern
