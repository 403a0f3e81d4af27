#ifndef CLOZE_BASELINES_HPP_
#define CLOZE_BASELINES_HPP_

#include <cstdint>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

struct RandomBaselineResult {
  GapSelection selection;
  int shortfall = 0;             // n minus what the passage could supply
  std::vector<int> draw_order;   // positions in the order they were drawn
};

// Draws a PoS tag from `pos_dist`, then a uniformly random unselected token
// of that tag, until n gaps are chosen or no eligible token remains. A drawn
// tag with no available token is skipped and sampling continues. Punctuation
// is never eligible. Each pick's confidence is the sampling probability of
// its drawn tag. Deterministic given rng_seed.
RandomBaselineResult random_baseline(const ClozeTask& task, int n,
                                     const PosDistribution& pos_dist,
                                     std::uint64_t rng_seed);

}  // namespace cloze

#endif  // CLOZE_BASELINES_HPP_
