#ifndef CLOZE_TESTS_SYNTHETIC_HPP_
#define CLOZE_TESTS_SYNTHETIC_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cloze/selection.hpp"
#include "cloze/types.hpp"

namespace synth {

// Rule-planted corpus for learning tests: every "target" function word is a
// gap, every "distractor" function word is not, fillers never are. Both
// kinds share the ADP tag, so telling them apart needs the word identity,
// which is exactly what a trainable tagger can pick up and a tag-guided
// random baseline cannot.
inline const std::vector<std::string>& target_words() {
  static const std::vector<std::string> w = {"of", "in", "at", "as", "with"};
  return w;
}

inline const std::vector<std::string>& distractor_words() {
  static const std::vector<std::string> w = {"on", "by", "from", "up", "off"};
  return w;
}

inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w = {
      "river", "stone", "market", "garden", "window",
      "door",  "table", "mountain", "harbor", "letter"};
  return w;
}

// Each slot contributes "<filler> <function word> <filler>"; a final period
// closes the passage. Roughly half the slots carry a target (gap).
inline std::vector<cloze::ClozeTask> make_function_word_corpus(int n_tasks, int slots,
                                                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<cloze::ClozeTask> tasks;
  tasks.reserve(static_cast<size_t>(n_tasks));
  for (int t = 0; t < n_tasks; ++t) {
    cloze::ClozeTask task;
    task.id = "synth-" + std::to_string(seed) + "-" + std::to_string(t);
    bool has_gap = false;
    for (int s = 0; s < slots; ++s) {
      const int base = static_cast<int>(task.tokens.size());
      const bool is_target = s + 1 == slots && !has_gap ? true : rng() % 2 == 0;
      const auto& pool = is_target ? target_words() : distractor_words();
      const std::string func = pool[rng() % pool.size()];
      const std::string left = filler_words()[rng() % filler_words().size()];
      const std::string right = filler_words()[rng() % filler_words().size()];

      task.tokens.push_back(
          {base, left, "NOUN", base == 0 ? 0 : base - 1, ""});
      task.tokens.push_back({base + 1, func, "ADP", base + 2, ""});
      task.tokens.push_back({base + 2, right, "NOUN", base, ""});
      if (is_target) {
        task.gaps.push_back({base + 1, {func}});
        has_gap = true;
      }
    }
    const int last = static_cast<int>(task.tokens.size());
    task.tokens.push_back({last, ".", "PUNCT", 0, ""});
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// Random re-ranker fixture: a small surface pool makes repeated words
// likely, tags cover several classes, scores are arbitrary, and the initial
// selection is a genuine n-best pick.
struct ReRankFixture {
  cloze::ClozeTask task;
  std::vector<cloze::Token> tokens;  // reconstructed
  cloze::GapScores scores;
  cloze::GapSelection selection;
  cloze::SelectionConstraints constraints;
};

inline ReRankFixture make_rerank_fixture(std::mt19937_64& rng) {
  static const std::vector<std::string> surfaces = {
      "the", "of", "cat", "ran", "with", "dog", "big", "."};
  static const std::vector<std::string> tags = {"DET", "ADP", "NOUN",
                                                "VERB", "ADP", "NOUN",
                                                "ADJ", "PUNCT"};
  ReRankFixture fx;
  const int n = 10 + static_cast<int>(rng() % 31);  // 10..40 tokens
  fx.task.id = "fixture";
  for (int i = 0; i < n; ++i) {
    // The first two tokens stay gappable so a 2-pick selection always exists.
    const size_t w = i < 2 ? rng() % (surfaces.size() - 1) : rng() % surfaces.size();
    fx.task.tokens.push_back({i, surfaces[w], tags[w],
                              i == 0 ? 0 : static_cast<int>(rng() % i), ""});
  }
  fx.tokens = fx.task.tokens;
  fx.scores.task_id = fx.task.id;
  for (int i = 0; i < n; ++i)
    fx.scores.confidences.push_back(
        static_cast<double>(rng() % 1000) / 999.0);

  const std::set<int> punct = cloze::ineligible_positions(fx.tokens);
  int eligible = n - static_cast<int>(punct.size());
  int k = 2 + static_cast<int>(rng() % 6);  // 2..7 picks
  if (k > eligible) k = eligible;
  fx.selection = cloze::select(fx.scores, cloze::SelectionMode::NBest(k), punct);

  fx.constraints.min_words_between = 4;
  fx.constraints.rng_seed = rng();
  double masses[4] = {0, 0, 0, 0};
  double total = 0;
  for (double& m : masses) {
    m = 1.0 + static_cast<double>(rng() % 100);
    total += m;
  }
  fx.constraints.target_pos.probs = {{"DET", masses[0] / total},
                                     {"ADP", masses[1] / total},
                                     {"NOUN", masses[2] / total},
                                     {"VERB", masses[3] / total}};
  return fx;
}

}  // namespace synth

#endif  // CLOZE_TESTS_SYNTHETIC_HPP_
