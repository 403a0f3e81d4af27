#ifndef CLOZE_EVALUATION_HPP_
#define CLOZE_EVALUATION_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "cloze/types.hpp"

namespace cloze {

struct MatchReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long true_positives = 0;
  long false_positives = 0;
  long false_negatives = 0;
};

// Strict matching of predicted positions against gold positions.
MatchReport strict_match(const GapSelection& pred, const std::set<int>& gold);
MatchReport match_from_counts(long tp, long fp, long fn);

// Forces the predicted gap count to |gold| (n-best by confidence), which
// makes precision, recall and F1 identical.
MatchReport restricted_eval(const GapScores& scores, const std::set<int>& gold);

struct StructureReport {
  long repeated_gaps = 0;   // picks whose gapped word another pick also gaps
  long adjacent_gaps = 0;   // consecutive pairs with fewer than 4 words between
  long distance_histogram[4] = {0, 0, 0, 0};
  double pos_kl = 0.0;
};

// Structural quality of one selection. Tokens must be reconstructed text.
StructureReport structure_report(const GapSelection& selection,
                                 const std::vector<Token>& tokens,
                                 const PosDistribution& target_pos);

// Per-PoS match reports; a prediction counts toward the tag of the token it
// gaps. Micro-aggregating the per-tag counts reproduces strict_match.
std::map<std::string, MatchReport> pos_breakdown(const GapSelection& pred,
                                                 const std::set<int>& gold,
                                                 const std::vector<Token>& tokens);

struct Correlation {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
};

// Product-moment and rank correlation (average ranks on ties). Requires at
// least 3 paired values and non-constant inputs.
Correlation correlation(const std::vector<double>& xs, const std::vector<double>& ys);

struct AgreementReport {
  double percent_agreement = 0.0;           // mean pairwise agreement per item
  double randolph_kappa = 0.0;              // (P_o - 1/k)/(1 - 1/k), k = 2
  std::map<std::string, double> per_annotator_accuracy;  // fraction judged good
  std::map<std::string, long> reason_frequencies;
  long items = 0;
  long annotators = 0;
};

// Inter-annotator agreement over good/bad judgements. Every (task, position)
// item must be judged by every annotator; missing cells are an error listing
// the gaps.
AgreementReport agreement(const std::vector<AnnotationRecord>& annotations);

// Per-task accuracy derived from annotations, for correlating human
// judgement with automatic scores. "mean" averages the three annotators'
// good-fractions; "majority" scores a gap 1 when most annotators call it
// good.
std::map<std::string, double> per_task_accuracy(
    const std::vector<AnnotationRecord>& annotations, const std::string& variant);

}  // namespace cloze

#endif  // CLOZE_EVALUATION_HPP_
