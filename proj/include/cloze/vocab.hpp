#ifndef CLOZE_VOCAB_HPP_
#define CLOZE_VOCAB_HPP_

#include <string>
#include <unordered_map>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

// Word-piece vocabulary built from a task collection: every lowercased word
// of the reconstructed passages, plus single characters (bare and "##"
// continuation forms) so unseen words decompose instead of vanishing.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;

  static Vocab build(const std::vector<ClozeTask>& tasks);
  static Vocab from_pieces(std::vector<std::string> pieces);

  // Greedy longest-match decomposition of one lowercased word; a word with
  // a character the vocabulary has never seen becomes a single [UNK].
  std::vector<int> encode_word(const std::string& surface) const;

  struct Encoded {
    std::vector<int> ids;
    std::vector<int> first_subword;  // per word: index into ids
    int pieces_of(int word) const {
      const int next = word + 1 < static_cast<int>(first_subword.size())
                           ? first_subword[word + 1]
                           : static_cast<int>(ids.size());
      return next - first_subword[word];
    }
  };

  Encoded encode_words(const std::vector<std::string>& surfaces) const;

  int find(const std::string& piece) const;  // -1 when absent
  const std::string& piece(int id) const { return pieces_[id]; }
  int size() const { return static_cast<int>(pieces_.size()); }
  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace cloze

#endif  // CLOZE_VOCAB_HPP_
