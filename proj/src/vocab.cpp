#include "lantern/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace lantern {

namespace {

const std::vector<std::string> kColors = {"red",    "green", "blue", "yellow",
                                          "purple", "orange", "cyan", "magenta"};
const std::vector<std::string> kShapes = {"square", "circle", "triangle", "diamond"};
const std::vector<std::string> kDirections = {"left", "right", "above", "below"};

const std::vector<std::string> kWords = {
    "what", "color", "is", "the", "shape", "at", "row", "col", "where",
    "which", "direction", "relative", "to", "i", "will", "look", "search",
    "for", "can", "now", "answer", "first", "then", "find", "of"};

}  // namespace

const std::vector<std::string>& Vocabulary::color_names() { return kColors; }
const std::vector<std::string>& Vocabulary::shape_names() { return kShapes; }
const std::vector<std::string>& Vocabulary::direction_names() { return kDirections; }

Vocabulary Vocabulary::build(int max_rows, int max_cols, int pad_to) {
  std::vector<std::string> toks = {
      "<|pad|>",       "<|eos|>",     "<|img|>",    "<|lvr_start|>",
      "<|lvr_sep|>",   "<|lvr_end|>", "<|lvr_pad|>", "<think>",
      "</think>",      "<answer>",    "</answer>"};
  toks.insert(toks.end(), kWords.begin(), kWords.end());
  const int max_axis = std::max(max_rows, max_cols);
  for (int d = 0; d < max_axis; ++d) toks.push_back(std::to_string(d));
  toks.insert(toks.end(), kColors.begin(), kColors.end());
  toks.insert(toks.end(), kShapes.begin(), kShapes.end());
  toks.insert(toks.end(), kDirections.begin(), kDirections.end());
  for (int r = 0; r < max_rows; ++r)
    for (int c = 0; c < max_cols; ++c)
      toks.push_back("cell_" + std::to_string(r) + "_" + std::to_string(c));
  if (pad_to > 0) {
    if (static_cast<int>(toks.size()) > pad_to)
      throw std::runtime_error("vocabulary: pad_to smaller than base vocabulary (" +
                               std::to_string(toks.size()) + ")");
    int filler = 0;
    while (static_cast<int>(toks.size()) < pad_to)
      toks.push_back("<|reserved_" + std::to_string(filler++) + "|>");
  }
  return from_tokens(std::move(toks));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (int i = 0; i < static_cast<int>(v.tokens_.size()); ++i) {
    auto [it, inserted] = v.lookup_.emplace(v.tokens_[std::size_t(i)], i);
    if (!inserted)
      throw std::runtime_error("vocabulary: duplicate token '" + v.tokens_[std::size_t(i)] + "'");
  }
  v.index_specials();
  return v;
}

void Vocabulary::index_specials() {
  pad = id("<|pad|>");
  eos = id("<|eos|>");
  img = id("<|img|>");
  lvr_start = id("<|lvr_start|>");
  lvr_sep = id("<|lvr_sep|>");
  lvr_end = id("<|lvr_end|>");
  lvr_pad = id("<|lvr_pad|>");
  think_open = id("<think>");
  think_close = id("</think>");
  answer_open = id("<answer>");
  answer_close = id("</answer>");
  color_ids.clear();
  shape_ids.clear();
  direction_ids.clear();
  cell_ids.clear();
  for (const auto& c : kColors)
    if (contains(c)) color_ids.push_back(id(c));
  for (const auto& s : kShapes)
    if (contains(s)) shape_ids.push_back(id(s));
  for (const auto& d : kDirections)
    if (contains(d)) direction_ids.push_back(id(d));
  for (int i = 0; i < size(); ++i)
    if (tokens_[std::size_t(i)].rfind("cell_", 0) == 0) cell_ids.push_back(i);
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: id out of range");
  return tokens_[std::size_t(id)];
}

int Vocabulary::id(const std::string& tok) const {
  auto it = lookup_.find(tok);
  if (it == lookup_.end())
    throw std::runtime_error("vocabulary: unknown token '" + tok + "'");
  return it->second;
}

bool Vocabulary::contains(const std::string& tok) const {
  return lookup_.count(tok) > 0;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

bool Vocabulary::is_control(int tid) const {
  return tid == lvr_start || tid == lvr_sep || tid == lvr_end || tid == lvr_pad ||
         tid == think_open || tid == think_close || tid == answer_open ||
         tid == answer_close || tid == pad || tid == img;
}

}  // namespace lantern
