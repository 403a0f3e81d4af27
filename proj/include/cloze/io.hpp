#ifndef CLOZE_IO_HPP_
#define CLOZE_IO_HPP_

#include <string>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

// Pipeline stages communicate only through these documented formats; any
// external scorer or gap generator can enter the pipeline by emitting them.

// Predictions file: JSONL {"task_id": str, "confidences": [float, ...]}
std::vector<GapScores> load_scores(const std::string& path);
void save_scores(const std::vector<GapScores>& scores, const std::string& path);

// Selection file: JSONL {"task_id": str,
//                        "picks": [{"position": int, "confidence": float}, ...],
//                        "unresolved_repeats": [int, ...]}
struct SelectionRecord {
  GapSelection selection;
  std::vector<int> unresolved_repeats;
};

std::vector<SelectionRecord> load_selections(const std::string& path);
void save_selections(const std::vector<SelectionRecord>& records,
                     const std::string& path);

// Annotation file: JSONL of AnnotationRecord fields; judgement is
// "good"/"bad" and comment may be absent.
std::vector<AnnotationRecord> load_annotations(const std::string& path);
void save_annotations(const std::vector<AnnotationRecord>& records,
                      const std::string& path);

// Reference distribution: single JSON object {"probs": {tag: prob, ...}}
PosDistribution load_pos_distribution(const std::string& path);
void save_pos_distribution(const PosDistribution& dist, const std::string& path);

}  // namespace cloze

#endif  // CLOZE_IO_HPP_
