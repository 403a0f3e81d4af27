#include "cloze/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cloze/selection.hpp"

namespace cloze {

MatchReport match_from_counts(long tp, long fp, long fn) {
  MatchReport r;
  r.true_positives = tp;
  r.false_positives = fp;
  r.false_negatives = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  // Count form of the harmonic mean: when the denominators of precision and
  // recall coincide, all three values are literally the same division.
  r.f1 = 2 * tp + fp + fn > 0
             ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
             : 0.0;
  return r;
}

MatchReport strict_match(const GapSelection& pred, const std::set<int>& gold) {
  if (gold.empty()) throw ValidationError("strict_match: empty gold set");
  long tp = 0;
  for (const auto& [pos, conf] : pred.picks) tp += gold.count(pos) ? 1 : 0;
  const long fp = static_cast<long>(pred.picks.size()) - tp;
  const long fn = static_cast<long>(gold.size()) - tp;
  return match_from_counts(tp, fp, fn);
}

MatchReport restricted_eval(const GapScores& scores, const std::set<int>& gold) {
  const GapSelection picked =
      select(scores, SelectionMode::NBest(static_cast<int>(gold.size())));
  return strict_match(picked, gold);
}

StructureReport structure_report(const GapSelection& selection,
                                 const std::vector<Token>& tokens,
                                 const PosDistribution& target_pos) {
  validate_selection(selection);
  StructureReport report;
  const auto& picks = selection.picks;

  std::map<std::string, long> word_counts;
  for (const auto& [pos, conf] : picks) word_counts[lowercase(tokens[pos].surface)] += 1;
  for (const auto& [pos, conf] : picks)
    if (word_counts[lowercase(tokens[pos].surface)] >= 2) report.repeated_gaps += 1;

  for (size_t k = 1; k < picks.size(); ++k) {
    const int between = picks[k].first - picks[k - 1].first - 1;
    if (between >= 0 && between < 4) {
      report.distance_histogram[between] += 1;
      report.adjacent_gaps += 1;
    }
  }

  report.pos_kl =
      kl_divergence(selection_pos_distribution(selection, tokens), target_pos);
  return report;
}

std::map<std::string, MatchReport> pos_breakdown(const GapSelection& pred,
                                                 const std::set<int>& gold,
                                                 const std::vector<Token>& tokens) {
  std::map<std::string, long> tp, fp, fn;
  std::set<int> predicted;
  for (const auto& [pos, conf] : pred.picks) {
    predicted.insert(pos);
    const std::string& tag = tokens[pos].pos;
    if (gold.count(pos))
      tp[tag] += 1;
    else
      fp[tag] += 1;
  }
  for (int pos : gold)
    if (!predicted.count(pos)) fn[tokens[pos].pos] += 1;

  std::set<std::string> tags;
  for (const auto& [t, c] : tp) tags.insert(t);
  for (const auto& [t, c] : fp) tags.insert(t);
  for (const auto& [t, c] : fn) tags.insert(t);

  std::map<std::string, MatchReport> out;
  for (const std::string& tag : tags)
    out[tag] = match_from_counts(tp[tag], fp[tag], fn[tag]);
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

Correlation correlation(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw ValidationError("correlation: length mismatch");
  if (xs.size() < 3)
    throw ValidationError("correlation: need at least 3 pairs, got " +
                          std::to_string(xs.size()));
  auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys))
    throw ValidationError("correlation: undefined for a constant input vector");

  Correlation c;
  c.pearson_r = pearson(xs, ys);
  c.spearman_rho = pearson(average_ranks(xs), average_ranks(ys));
  return c;
}

AgreementReport agreement(const std::vector<AnnotationRecord>& annotations) {
  if (annotations.empty()) throw ValidationError("agreement: no annotations");

  std::set<std::string> annotators;
  std::map<std::pair<std::string, int>, std::map<std::string, bool>> items;
  AgreementReport report;
  for (const AnnotationRecord& rec : annotations) {
    validate_annotation(rec);
    annotators.insert(rec.annotator);
    auto& cell = items[{rec.task_id, rec.gap_position}];
    if (cell.count(rec.annotator))
      throw ValidationError("agreement: duplicate judgement by " + rec.annotator +
                            " on " + rec.task_id + ":" +
                            std::to_string(rec.gap_position));
    cell[rec.annotator] = rec.good;
    report.reason_frequencies[rec.reason] += 1;
  }

  std::vector<std::string> missing;
  for (const auto& [item, cells] : items)
    for (const std::string& a : annotators)
      if (!cells.count(a))
        missing.push_back(item.first + ":" + std::to_string(item.second) + " by " + a);
  if (!missing.empty()) {
    std::string msg = "agreement: incomplete annotation matrix, missing";
    for (const auto& m : missing) msg += " [" + m + "]";
    throw ValidationError(msg);
  }

  const long k_annotators = static_cast<long>(annotators.size());
  if (k_annotators < 2)
    throw ValidationError("agreement: need at least 2 annotators");

  double agreement_sum = 0.0;
  std::map<std::string, long> good_counts;
  for (const auto& [item, cells] : items) {
    long good = 0;
    for (const auto& [annotator, judgement] : cells) {
      if (judgement) {
        ++good;
        good_counts[annotator] += 1;
      }
    }
    const long bad = k_annotators - good;
    const double pairs = static_cast<double>(k_annotators * (k_annotators - 1)) / 2.0;
    const double agreeing =
        static_cast<double>(good * (good - 1) + bad * (bad - 1)) / 2.0;
    agreement_sum += agreeing / pairs;
  }

  report.items = static_cast<long>(items.size());
  report.annotators = k_annotators;
  report.percent_agreement = agreement_sum / static_cast<double>(items.size());
  // Free-marginal kappa with k = 2 judgement categories.
  report.randolph_kappa = (report.percent_agreement - 0.5) / (1.0 - 0.5);
  for (const std::string& a : annotators)
    report.per_annotator_accuracy[a] =
        static_cast<double>(good_counts[a]) / static_cast<double>(items.size());
  return report;
}

std::map<std::string, double> per_task_accuracy(
    const std::vector<AnnotationRecord>& annotations, const std::string& variant) {
  if (variant != "mean" && variant != "majority")
    throw ValidationError("per_task_accuracy: variant must be mean|majority");

  // task -> position -> (good votes, total votes)
  std::map<std::string, std::map<int, std::pair<long, long>>> votes;
  for (const AnnotationRecord& rec : annotations) {
    auto& v = votes[rec.task_id][rec.gap_position];
    v.first += rec.good ? 1 : 0;
    v.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [task_id, positions] : votes) {
    double score = 0.0;
    for (const auto& [pos, v] : positions) {
      if (variant == "mean")
        score += static_cast<double>(v.first) / static_cast<double>(v.second);
      else
        score += 2 * v.first > v.second ? 1.0 : 0.0;
    }
    out[task_id] = score / static_cast<double>(positions.size());
  }
  return out;
}

}  // namespace cloze
