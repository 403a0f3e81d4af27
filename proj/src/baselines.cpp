#include "cloze/baselines.hpp"

#include <algorithm>
#include <map>
#include <random>

namespace cloze {

namespace {

// 53-bit uniform in [0,1); fully determined by the mt19937_64 stream.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

RandomBaselineResult random_baseline(const ClozeTask& task, int n,
                                     const PosDistribution& pos_dist,
                                     std::uint64_t rng_seed) {
  if (n < 1) throw ValidationError("random_baseline: n must be >= 1");
  validate_distribution(pos_dist);

  // tag -> unselected token positions, punctuation excluded.
  std::map<std::string, std::vector<int>> available;
  for (const Token& t : task.tokens) {
    if (t.pos == "PUNCT") continue;
    if (pos_dist.prob(t.pos) <= 0.0) continue;
    available[t.pos].push_back(t.index);
  }

  std::mt19937_64 rng(rng_seed);
  RandomBaselineResult result;
  result.selection.task_id = task.id;

  while (static_cast<int>(result.draw_order.size()) < n) {
    bool any_eligible = false;
    for (const auto& [tag, positions] : available)
      if (!positions.empty()) {
        any_eligible = true;
        break;
      }
    if (!any_eligible) break;

    // CDF inversion over the tag map (ordered, hence deterministic).
    const double u = uniform01(rng);
    double cumulative = 0.0;
    std::string drawn;
    for (const auto& [tag, p] : pos_dist.probs) {
      cumulative += p;
      if (u < cumulative) {
        drawn = tag;
        break;
      }
    }
    if (drawn.empty()) drawn = pos_dist.probs.rbegin()->first;

    auto it = available.find(drawn);
    if (it == available.end() || it->second.empty()) continue;  // skip exhausted tag

    auto& positions = it->second;
    const size_t at = static_cast<size_t>(rng() % positions.size());
    const int pos = positions[at];
    positions.erase(positions.begin() + static_cast<long>(at));

    result.draw_order.push_back(pos);
    result.selection.picks.emplace_back(pos, pos_dist.prob(drawn));
  }

  std::sort(result.selection.picks.begin(), result.selection.picks.end());
  result.shortfall = n - static_cast<int>(result.draw_order.size());
  return result;
}

}  // namespace cloze
