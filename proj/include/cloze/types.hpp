#ifndef CLOZE_TYPES_HPP_
#define CLOZE_TYPES_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cloze {

// Error raised for malformed input files (carries line context where known).
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Error raised when a domain invariant is violated.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One word of a passage, pre-annotated upstream (the toolkit performs no
// parsing itself).  `dep_head` is the 0-based index of the token's head in
// the dependency graph; a root token points at itself.  `lemma` is optional
// in the file format; empty means unset.
struct Token {
  int index = 0;
  std::string surface;
  std::string pos;       // Universal Dependencies tag
  int dep_head = 0;
  std::string lemma;
};

// A deleted position and every string accepted as a correct fill.  The first
// answer is the intended target and is what reconstruction inserts.
struct Gap {
  int position = 0;
  std::vector<std::string> answers;
};

// A tokenized passage with its gold gaps: the unit of training/evaluation.
struct ClozeTask {
  std::string id;
  std::vector<Token> tokens;
  std::vector<Gap> gaps;

  std::vector<int> gap_positions() const {
    std::vector<int> out;
    out.reserve(gaps.size());
    for (const auto& g : gaps) out.push_back(g.position);
    return out;
  }
};

// Probability distribution over PoS tags. Probabilities are >= 0 and sum to
// 1 within 1e-9.
struct PosDistribution {
  std::map<std::string, double> probs;

  double prob(const std::string& tag) const {
    auto it = probs.find(tag);
    return it == probs.end() ? 0.0 : it->second;
  }
};

// One expert judgement (good/bad plus reason label) on one proposed gap.
struct AnnotationRecord {
  std::string task_id;
  int gap_position = 0;
  std::string annotator;
  bool good = false;
  std::string reason;    // one of the 11 annotation labels
  std::optional<std::string> comment;
};

// The 11 labels available to annotators. "Good" pairs with a good judgement;
// every other label explains a bad one.
const std::vector<std::string>& annotation_labels();

// Per-token gap-class probability for one task, word-aligned (one entry per
// word of the passage, regardless of subword expansion).
struct GapScores {
  std::string task_id;
  std::vector<double> confidences;
};

// Ordered set of chosen gap positions with confidences; positions strictly
// increasing.
struct GapSelection {
  std::string task_id;
  std::vector<std::pair<int, double>> picks; // (position, confidence)

  std::vector<int> positions() const {
    std::vector<int> out;
    out.reserve(picks.size());
    for (const auto& p : picks) out.push_back(p.first);
    return out;
  }
};

// Per-token classification losses (cross-entropy), all entries >= 0.
struct TokenLoss {
  std::vector<double> per_token;
};

void validate_task(const ClozeTask& task, std::vector<std::string>* warnings = nullptr);
void validate_distribution(const PosDistribution& dist);
void validate_selection(const GapSelection& sel);
void validate_annotation(const AnnotationRecord& rec);

std::string lowercase(const std::string& s);

}  // namespace cloze

#endif  // CLOZE_TYPES_HPP_
