#include "cloze/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

namespace cloze {

namespace {

constexpr int kCandidatePoolCap = 50;
constexpr double kSmoothingEps = 1e-8;

// The word a pick would gap, as compared for repetition.
std::string repetition_key(const Token& token, bool compare_lemmas) {
  if (compare_lemmas && !token.lemma.empty()) return lowercase(token.lemma);
  return lowercase(token.surface);
}

std::vector<int> repeated_positions(const std::vector<std::pair<int, double>>& picks,
                                    const std::vector<Token>& tokens,
                                    bool compare_lemmas) {
  std::map<std::string, int> counts;
  for (const auto& [pos, conf] : picks)
    counts[repetition_key(tokens[pos], compare_lemmas)] += 1;
  std::vector<int> out;
  for (const auto& [pos, conf] : picks)
    if (counts[repetition_key(tokens[pos], compare_lemmas)] >= 2) out.push_back(pos);
  return out;  // already sorted: picks are position-ordered
}

int min_distance_to(const std::vector<std::pair<int, double>>& picks, int position) {
  int best = std::numeric_limits<int>::max();
  for (const auto& [pos, conf] : picks)
    best = std::min(best, std::abs(pos - position) - 1);
  return best;
}

}  // namespace

std::set<int> ineligible_positions(const std::vector<Token>& tokens) {
  std::set<int> out;
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].pos == "PUNCT") out.insert(static_cast<int>(i));
  return out;
}

GapSelection select(const GapScores& scores, const SelectionMode& mode,
                    const std::set<int>& exclude) {
  const int n_tokens = static_cast<int>(scores.confidences.size());
  GapSelection out;
  out.task_id = scores.task_id;

  if (mode.kind == SelectionMode::kThreshold) {
    for (int i = 0; i < n_tokens; ++i)
      if (scores.confidences[i] > mode.threshold && !exclude.count(i))
        out.picks.emplace_back(i, scores.confidences[i]);
    return out;
  }

  if (mode.n > n_tokens)
    throw ValidationError("select " + scores.task_id + ": n-best " +
                          std::to_string(mode.n) + " exceeds token count " +
                          std::to_string(n_tokens));
  std::vector<int> order;
  for (int i = 0; i < n_tokens; ++i)
    if (!exclude.count(i)) order.push_back(i);
  // Ties break toward the lower position.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores.confidences[a] > scores.confidences[b];
  });
  const int take = std::min<int>(mode.n, static_cast<int>(order.size()));
  order.resize(take);
  std::sort(order.begin(), order.end());
  for (int i : order) out.picks.emplace_back(i, scores.confidences[i]);
  return out;
}

int min_pairwise_distance(const GapSelection& selection) {
  if (selection.picks.size() < 2)
    throw ValidationError("min_pairwise_distance needs at least 2 picks, got " +
                          std::to_string(selection.picks.size()));
  int best = std::numeric_limits<int>::max();
  for (size_t k = 1; k < selection.picks.size(); ++k)
    best = std::min(best,
                    selection.picks[k].first - selection.picks[k - 1].first - 1);
  return best;
}

double kl_divergence(const PosDistribution& p, const PosDistribution& q) {
  // Union support; every q mass gets epsilon, then q is renormalized.
  std::map<std::string, double> smoothed;
  for (const auto& [tag, mass] : q.probs) smoothed[tag] = mass;
  for (const auto& [tag, mass] : p.probs) smoothed.emplace(tag, 0.0);
  double total = 0.0;
  for (auto& [tag, mass] : smoothed) {
    mass += kSmoothingEps;
    total += mass;
  }
  double kl = 0.0;
  for (const auto& [tag, mass] : p.probs) {
    if (mass <= 0.0) continue;
    kl += mass * std::log(mass / (smoothed[tag] / total));
  }
  return kl;
}

PosDistribution selection_pos_distribution(const GapSelection& selection,
                                           const std::vector<Token>& tokens) {
  PosDistribution dist;
  if (selection.picks.empty()) return dist;
  const double w = 1.0 / static_cast<double>(selection.picks.size());
  for (const auto& [pos, conf] : selection.picks) dist.probs[tokens[pos].pos] += w;
  return dist;
}

PostprocessResult postprocess(const GapSelection& selection, const GapScores& scores,
                              const std::vector<Token>& tokens,
                              const SelectionConstraints& constraints) {
  validate_selection(selection);
  if (scores.confidences.size() != tokens.size())
    throw ValidationError("postprocess " + selection.task_id + ": scores length " +
                          std::to_string(scores.confidences.size()) +
                          " != token count " + std::to_string(tokens.size()));
  for (const auto& [pos, conf] : selection.picks)
    if (pos < 0 || pos >= static_cast<int>(tokens.size()))
      throw ValidationError("postprocess " + selection.task_id + ": position " +
                            std::to_string(pos) + " out of range");

  PostprocessResult result;
  result.selection = selection;
  if (constraints.allow_repeats || selection.picks.size() < 2) {
    result.unresolved_repeats.clear();
    return result;
  }
  validate_distribution(constraints.target_pos);

  auto& picks = result.selection.picks;
  const int orig_min = min_pairwise_distance(selection);
  const std::set<int> punct = ineligible_positions(tokens);
  std::mt19937_64 rng(constraints.rng_seed);

  std::set<int> unresolvable;
  while (true) {
    std::vector<int> repeated =
        repeated_positions(picks, tokens, constraints.compare_lemmas);
    std::erase_if(repeated, [&](int p) { return unresolvable.count(p) > 0; });
    if (repeated.empty()) break;

    const int victim = repeated[static_cast<size_t>(rng() % repeated.size())];
    std::vector<std::pair<int, double>> others;
    for (const auto& pick : picks)
      if (pick.first != victim) others.push_back(pick);

    const double current_kl = kl_divergence(
        selection_pos_distribution(result.selection, tokens), constraints.target_pos);

    // Unselected candidates by descending confidence, bounded pool.
    std::set<int> selected;
    for (const auto& [pos, conf] : picks) selected.insert(pos);
    std::vector<int> candidates;
    for (int i = 0; i < static_cast<int>(tokens.size()); ++i)
      if (!selected.count(i) && !punct.count(i)) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
      return scores.confidences[a] > scores.confidences[b];
    });
    if (candidates.size() > kCandidatePoolCap) candidates.resize(kCandidatePoolCap);

    bool accepted = false;
    for (int cand : candidates) {
      const std::string key = repetition_key(tokens[cand], constraints.compare_lemmas);
      bool repeats_other = false;
      for (const auto& [pos, conf] : others)
        if (repetition_key(tokens[pos], constraints.compare_lemmas) == key) {
          repeats_other = true;
          break;
        }
      if (repeats_other) continue;

      const int cand_min = min_distance_to(others, cand);
      if (!(cand_min >= constraints.min_words_between || cand_min > orig_min)) continue;

      GapSelection trial;
      trial.task_id = selection.task_id;
      trial.picks = others;
      trial.picks.emplace_back(cand, scores.confidences[cand]);
      std::sort(trial.picks.begin(), trial.picks.end());
      const double trial_kl = kl_divergence(selection_pos_distribution(trial, tokens),
                                            constraints.target_pos);
      if (!(trial_kl < current_kl)) continue;

      result.swaps.push_back({victim, cand, current_kl, trial_kl});
      picks = trial.picks;
      accepted = true;
      break;
    }
    if (!accepted) unresolvable.insert(victim);
  }

  result.unresolved_repeats =
      repeated_positions(picks, tokens, constraints.compare_lemmas);
  return result;
}

}  // namespace cloze
