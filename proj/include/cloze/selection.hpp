#ifndef CLOZE_SELECTION_HPP_
#define CLOZE_SELECTION_HPP_

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

struct SelectionMode {
  enum Kind { kThreshold, kNBest } kind = kThreshold;
  double threshold = 0.5;
  int n = 0;

  static SelectionMode Threshold(double theta) { return {kThreshold, theta, 0}; }
  static SelectionMode NBest(int n) { return {kNBest, 0.0, n}; }
};

// Threshold mode keeps every position with confidence > theta; n-best keeps
// the n highest-confidence positions, ties broken toward the lower position.
// Positions in `exclude` (e.g. punctuation) are never selected. Picks come
// back sorted by position.
GapSelection select(const GapScores& scores, const SelectionMode& mode,
                    const std::set<int>& exclude = {});

// Positions of tokens that may never be gapped (PoS == PUNCT).
std::set<int> ineligible_positions(const std::vector<Token>& tokens);

// Minimum over consecutive picks of the number of words strictly between
// them. Requires at least two picks.
int min_pairwise_distance(const GapSelection& selection);

// KL(p || q) = sum_t p(t) ln(p(t)/q(t)) with 0 ln 0 = 0. q is smoothed over
// the union support (epsilon 1e-8 added to every mass, then renormalized) so
// tags unseen in q never yield an infinite divergence.
double kl_divergence(const PosDistribution& p, const PosDistribution& q);

// Distribution of PoS tags over the selected positions.
PosDistribution selection_pos_distribution(const GapSelection& selection,
                                           const std::vector<Token>& tokens);

struct SelectionConstraints {
  int min_words_between = 4;
  bool allow_repeats = false;
  bool compare_lemmas = false;  // repetition check on lemma instead of surface
  PosDistribution target_pos;
  std::uint64_t rng_seed = 0;
};

// One accepted replacement, recorded for audit: the re-ranker's acceptance
// conditions can be re-checked from these fields alone.
struct SwapEvent {
  int removed_position = 0;
  int added_position = 0;
  double kl_before = 0.0;
  double kl_after = 0.0;
};

struct PostprocessResult {
  GapSelection selection;
  // Picks still gapping a word that another pick also gaps, after every
  // replacement attempt failed. Reported, not an error.
  std::vector<int> unresolved_repeats;
  std::vector<SwapEvent> swaps;
};

// Re-ranks a selection to repair repeated gapped words. While repeats exist,
// one repeated gap is chosen uniformly at random (seeded) and unselected
// candidates are scanned in descending confidence (top 50). A candidate
// replaces it only if 1) its word repeats no other gapped word, 2) its
// distance to the other selected gaps meets min_words_between or exceeds the
// original selection's min pairwise distance, and 3) the new selection's
// gapped-PoS distribution is strictly closer (KL) to the target. Tokens must
// already be reconstructed (gap surfaces replaced by first answers).
// Cardinality is preserved and the result is deterministic given rng_seed.
PostprocessResult postprocess(const GapSelection& selection, const GapScores& scores,
                              const std::vector<Token>& tokens,
                              const SelectionConstraints& constraints);

}  // namespace cloze

#endif  // CLOZE_SELECTION_HPP_
