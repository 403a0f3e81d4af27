#ifndef CLOZE_CORPUS_HPP_
#define CLOZE_CORPUS_HPP_

#include <iosfwd>
#include <string>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

struct LoadResult {
  std::vector<ClozeTask> tasks;
  // Soft-invariant notices (token count over 300, gap count outside 8..16).
  // Research data may vary, so these warn instead of rejecting.
  std::vector<std::string> warnings;
};

// Reads one validated ClozeTask per JSONL line:
//   {"id": str,
//    "tokens": [{"surface": str, "pos": str, "dep_head": int}, ...],
//    "gaps":   [{"position": int, "answers": [str, ...]}, ...]}
// Token indices are implied by array order. Gaps are sorted by position.
// Throws ParseError (with line number) on malformed JSON and ValidationError
// (naming task id and field) on invariant violations.
LoadResult load_tasks(const std::string& path);
LoadResult load_tasks(std::istream& in, const std::string& origin = "<stream>");

void save_tasks(const std::vector<ClozeTask>& tasks, const std::string& path);
void save_tasks(const std::vector<ClozeTask>& tasks, std::ostream& out);

// The passage as its author wrote it: each gap's surface replaced by the
// gap's first answer. Token count and annotations are unchanged.
std::vector<Token> reconstruct_text(const ClozeTask& task);

struct RenderedCloze {
  std::string test_text;
  // (gap number, accepted answers); numbers run 1..n left to right.
  std::vector<std::pair<int, std::vector<std::string>>> answer_key;
};

// Renders an exam-style test: each selected token becomes "(n) ____",
// numbered in positional order. Selected positions that coincide with a gold
// gap list that gap's full answer set in the key; any other position lists
// the reconstructed surface it replaced.
RenderedCloze render_cloze(const ClozeTask& task, const GapSelection& selection);

// Joins token surfaces with exam-style spacing (no space before trailing
// punctuation or after an opening bracket).
std::string join_tokens(const std::vector<std::string>& surfaces);

// Uniform average over tasks of each task's gapped-PoS distribution, so long
// tasks do not dominate. Every task must have at least one gap.
PosDistribution reference_pos_distribution(const std::vector<ClozeTask>& tasks);

struct StatsReport {
  long tasks = 0;
  long tokens = 0;
  long gaps = 0;
  std::map<int, long> gaps_per_task;   // gap count -> number of tasks
  std::map<int, long> answers_per_gap; // answer count -> number of gaps
};

StatsReport dataset_stats(const std::vector<ClozeTask>& tasks);

}  // namespace cloze

#endif  // CLOZE_CORPUS_HPP_
