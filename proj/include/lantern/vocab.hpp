#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace lantern {

// Closed word-level vocabulary covering the control tokens, structural tags
// and every template word the sample generator can emit. Construction is a
// pure function of the grid extents, so token ids are stable across runs and
// checkpoint round-trips.
class Vocabulary {
 public:
  // pad_to, when positive, appends reserved filler tokens up to an exact size
  static Vocabulary build(int max_rows, int max_cols, int pad_to = 0);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  int id(const std::string& tok) const;          // throws on unknown token
  bool contains(const std::string& tok) const;

  std::vector<int> encode(const std::string& text) const;  // whitespace split
  std::string decode(const std::vector<int>& ids) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool is_control(int id) const;  // lvr/think/answer/pad machinery

  // special ids
  int pad = -1, eos = -1, img = -1;
  int lvr_start = -1, lvr_sep = -1, lvr_end = -1, lvr_pad = -1;
  int think_open = -1, think_close = -1;
  int answer_open = -1, answer_close = -1;

  // closed answer classes
  std::vector<int> color_ids, shape_ids, direction_ids, cell_ids;

  static const std::vector<std::string>& color_names();
  static const std::vector<std::string>& shape_names();
  static const std::vector<std::string>& direction_names();

 private:
  void index_specials();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
};

}  // namespace lantern
