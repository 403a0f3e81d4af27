#include "cloze/vocab.hpp"

#include <algorithm>
#include <set>

#include "cloze/corpus.hpp"

namespace cloze {

Vocab Vocab::from_pieces(std::vector<std::string> pieces) {
  Vocab v;
  v.pieces_ = std::move(pieces);
  for (int i = 0; i < static_cast<int>(v.pieces_.size()); ++i)
    v.index_[v.pieces_[i]] = i;
  if (v.size() < 3 || v.pieces_[kPad] != "[PAD]" || v.pieces_[kUnk] != "[UNK]" ||
      v.pieces_[kMask] != "[MASK]")
    throw ValidationError("vocabulary missing special pieces");
  return v;
}

Vocab Vocab::build(const std::vector<ClozeTask>& tasks) {
  std::set<std::string> entries;
  for (const ClozeTask& task : tasks) {
    for (const Token& t : reconstruct_text(task)) {
      const std::string word = lowercase(t.surface);
      entries.insert(word);
      for (char c : word) {
        entries.insert(std::string(1, c));
        entries.insert("##" + std::string(1, c));
      }
    }
  }
  std::vector<std::string> pieces = {"[PAD]", "[UNK]", "[MASK]"};
  pieces.insert(pieces.end(), entries.begin(), entries.end());
  return from_pieces(std::move(pieces));
}

int Vocab::find(const std::string& piece) const {
  auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> Vocab::encode_word(const std::string& surface) const {
  const std::string word = lowercase(surface);
  if (word.empty()) return {kUnk};
  const int whole = find(word);
  if (whole >= 0) return {whole};

  std::vector<int> out;
  size_t pos = 0;
  while (pos < word.size()) {
    int matched = -1;
    size_t matched_end = pos;
    for (size_t end = word.size(); end > pos; --end) {
      const std::string candidate =
          pos == 0 ? word.substr(0, end) : "##" + word.substr(pos, end - pos);
      const int id = find(candidate);
      if (id >= 0) {
        matched = id;
        matched_end = end;
        break;
      }
    }
    if (matched < 0) return {kUnk};  // character never seen
    out.push_back(matched);
    pos = matched_end;
  }
  return out;
}

Vocab::Encoded Vocab::encode_words(const std::vector<std::string>& surfaces) const {
  Encoded enc;
  for (const std::string& s : surfaces) {
    enc.first_subword.push_back(static_cast<int>(enc.ids.size()));
    for (int id : encode_word(s)) enc.ids.push_back(id);
  }
  return enc;
}

}  // namespace cloze
