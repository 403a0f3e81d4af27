// Release gate: one line per criterion, [PASS]/[FAIL]/[SKIP], nonzero exit on
// any failure. Each criterion carries its own runtime budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cloze/baselines.hpp"
#include "cloze/corpus.hpp"
#include "cloze/evaluation.hpp"
#include "cloze/model.hpp"
#include "cloze/selection.hpp"
#include "cloze/types.hpp"
#include "cloze/vocab.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace {

using namespace cloze;

struct SkipCriterion {
  std::string why;
};

void require(bool condition, const std::string& why) {
  if (!condition) throw std::runtime_error(why);
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << x;
  return out.str();
}

int g_failures = 0;

void run_criterion(const std::string& name, double budget_seconds,
                   const std::function<std::string()>& body) {
  const auto start = std::chrono::steady_clock::now();
  std::string status = "PASS";
  std::string detail;
  try {
    detail = body();
  } catch (const SkipCriterion& skip) {
    status = "SKIP";
    detail = skip.why;
  } catch (const std::exception& e) {
    status = "FAIL";
    detail = e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (status == "PASS" && budget_seconds > 0.0 && seconds > budget_seconds) {
    status = "FAIL";
    detail += " [exceeded " + fmt(budget_seconds, 0) + "s budget]";
  }
  if (status == "FAIL") ++g_failures;
  std::cout << "[" << status << "] " << name << ": " << detail << " ("
            << fmt(seconds, 2) << "s)" << std::endl;
}

// ---------------------------------------------------------------------------
// Loss shaping: weight must equal penalty/d for 0 < d < window, 1 otherwise,
// with d the distance to the nearest gap, exact to 1e-9.

std::string check_loss_shaping() {
  const double kTol = 1e-9;

  // Closed-form anchors: unit loss at distance 1 becomes 3.0, at 2 becomes 1.5.
  {
    TokenLoss unit;
    unit.per_token = {1.0, 1.0, 1.0, 1.0};
    TokenLoss shaped = shape_loss(unit, {0}, 3.0, 3);
    require(std::abs(shaped.per_token[1] - 3.0) <= kTol, "anchor d=1 != 3.0");
    require(std::abs(shaped.per_token[2] - 1.5) <= kTol, "anchor d=2 != 1.5");
    require(std::abs(shaped.per_token[3] - 1.0) <= kTol, "anchor d=3 changed");
    require(std::abs(shaped.per_token[0] - 1.0) <= kTol, "gap token changed");
  }

  // Exhaustive grid: every single gap and gap pair in passages up to 12
  // tokens, checked against an independent linear-scan distance.
  long fixtures = 0;
  double worst = 0.0;
  auto check_fixture = [&](int n, const std::set<int>& gaps, double penalty,
                           int window) {
    TokenLoss losses;
    for (int i = 0; i < n; ++i) losses.per_token.push_back(0.31 * (i + 1));
    TokenLoss shaped = shape_loss(losses, gaps, penalty, window);
    for (int i = 0; i < n; ++i) {
      long d = n + 1;
      for (int g : gaps) d = std::min<long>(d, std::abs(i - g));
      const double expected = d > 0 && d < window
                                  ? losses.per_token[i] * penalty / double(d)
                                  : losses.per_token[i];
      const double err = std::abs(shaped.per_token[i] - expected);
      worst = std::max(worst, err);
      require(err <= kTol, "deviation " + fmt(err, 12) + " at n=" +
                               std::to_string(n) + " i=" + std::to_string(i));
    }
    ++fixtures;
  };

  for (int n = 1; n <= 12; ++n) {
    for (int g = 0; g < n; ++g) {
      check_fixture(n, {g}, 3.0, 3);
      check_fixture(n, {g}, 3.0, 1);  // window 1 never reweights
      for (int g2 = g + 1; g2 < n; ++g2) check_fixture(n, {g, g2}, 3.0, 3);
    }
  }
  return std::to_string(fixtures) + " fixtures exact within 1e-9 (worst " +
         fmt(worst, 12) + ")";
}

// ---------------------------------------------------------------------------
// Re-ranking: 200 randomized selections audited against a brute-force replay
// of the acceptance conditions, plus determinism under the seed.

bool same_result(const PostprocessResult& a, const PostprocessResult& b) {
  if (a.selection.picks != b.selection.picks) return false;
  if (a.unresolved_repeats != b.unresolved_repeats) return false;
  if (a.swaps.size() != b.swaps.size()) return false;
  for (size_t k = 0; k < a.swaps.size(); ++k)
    if (a.swaps[k].removed_position != b.swaps[k].removed_position ||
        a.swaps[k].added_position != b.swaps[k].added_position ||
        a.swaps[k].kl_before != b.swaps[k].kl_before ||
        a.swaps[k].kl_after != b.swaps[k].kl_after)
      return false;
  return true;
}

std::string check_reranking() {
  std::mt19937_64 rng(424242);
  long swaps = 0;
  long unresolved = 0;
  for (int i = 0; i < 200; ++i) {
    synth::ReRankFixture fx = synth::make_rerank_fixture(rng);
    PostprocessResult result =
        postprocess(fx.selection, fx.scores, fx.tokens, fx.constraints);
    PostprocessResult replay =
        postprocess(fx.selection, fx.scores, fx.tokens, fx.constraints);
    require(same_result(result, replay),
            "fixture " + std::to_string(i) + ": two runs under one seed differ");
    oracle::CheckResult audit = oracle::check_postprocess(
        fx.selection, result, fx.scores, fx.tokens, fx.constraints);
    require(audit.ok, "fixture " + std::to_string(i) + ": " + audit.detail);
    swaps += static_cast<long>(result.swaps.size());
    unresolved += static_cast<long>(result.unresolved_repeats.size());
  }
  return "200 fixtures audited (cardinality, repeats, distances, KL descent, "
         "determinism); " +
         std::to_string(swaps) + " swaps, " + std::to_string(unresolved) +
         " unresolved repeats";
}

// ---------------------------------------------------------------------------
// Metric identities on 100 random fixtures, all bit-exact.

std::string check_metric_identities() {
  std::mt19937_64 rng(31337);
  static const char* kTags[] = {"DET", "ADP", "NOUN", "VERB", "ADJ", "PUNCT"};
  for (int i = 0; i < 100; ++i) {
    const int n = 5 + static_cast<int>(rng() % 56);

    GapScores scores;
    scores.task_id = "fx";
    for (int t = 0; t < n; ++t)
      scores.confidences.push_back(static_cast<double>(rng() % 1000) / 999.0);

    std::set<int> gold;
    const int n_gold = 1 + static_cast<int>(rng() % std::min(n, 12));
    while (static_cast<int>(gold.size()) < n_gold)
      gold.insert(static_cast<int>(rng() % n));

    MatchReport restricted = restricted_eval(scores, gold);
    require(restricted.precision == restricted.recall &&
                restricted.recall == restricted.f1,
            "fixture " + std::to_string(i) + ": restricted P/R/F1 not identical");
    require(restricted.true_positives + restricted.false_positives ==
                static_cast<long>(gold.size()),
            "fixture " + std::to_string(i) + ": restricted pick count wrong");

    std::vector<Token> tokens;
    for (int t = 0; t < n; ++t) {
      const char* tag = kTags[rng() % 6];
      tokens.push_back({t, std::string("w") + std::to_string(rng() % 9), tag, 0, ""});
    }
    GapSelection pred;
    pred.task_id = "fx";
    std::set<int> pred_set;
    const int n_pred = static_cast<int>(rng() % (n / 2 + 1));
    while (static_cast<int>(pred_set.size()) < n_pred)
      pred_set.insert(static_cast<int>(rng() % n));
    for (int p : pred_set) pred.picks.emplace_back(p, 0.5);

    MatchReport direct = strict_match(pred, gold);
    auto by_tag = pos_breakdown(pred, gold, tokens);
    long tp = 0, fp = 0, fn = 0;
    for (const auto& [tag, rep] : by_tag) {
      tp += rep.true_positives;
      fp += rep.false_positives;
      fn += rep.false_negatives;
    }
    MatchReport micro = match_from_counts(tp, fp, fn);
    require(tp == direct.true_positives && fp == direct.false_positives &&
                fn == direct.false_negatives,
            "fixture " + std::to_string(i) + ": per-tag counts do not sum");
    require(micro.precision == direct.precision && micro.recall == direct.recall &&
                micro.f1 == direct.f1,
            "fixture " + std::to_string(i) + ": micro aggregation drifts");

    if (pred_set.size() >= 2) {
      PosDistribution target;
      for (const char* tag : kTags) target.probs[tag] = 1.0 / 6.0;
      StructureReport sr = structure_report(pred, tokens, target);
      std::vector<int> positions = pred.positions();
      require(sr.adjacent_gaps == oracle::adjacent_pairs(positions),
              "fixture " + std::to_string(i) + ": adjacency count disagrees");
      std::vector<long> hist = oracle::distance_histogram(positions);
      for (int d = 0; d < 4; ++d)
        require(sr.distance_histogram[d] == hist[d],
                "fixture " + std::to_string(i) + ": histogram bin " +
                    std::to_string(d) + " disagrees");
    }
  }
  return "100 fixtures: restricted P=R=F1 bitwise, per-tag micro equals "
         "strict, histograms match the quadratic oracle";
}

// ---------------------------------------------------------------------------
// Agreement anchor: a 20000-item matrix built to have P_o = 0.7593 must give
// kappa 0.5186 +- 0.0001 through the production code path.

std::string check_agreement_anchor() {
  std::vector<AnnotationRecord> records;
  records.reserve(60000);
  auto add = [&](int item, const char* who, bool good) {
    AnnotationRecord rec;
    rec.task_id = "t" + std::to_string(item / 16);
    rec.gap_position = item % 16;
    rec.annotator = who;
    rec.good = good;
    rec.reason = good ? "Good" : "Phantom gap";
    records.push_back(std::move(rec));
  };
  const int kUnanimous = 12779;  // + 7221 split 2-1 => P_o = 15186/20000
  for (int item = 0; item < 20000; ++item) {
    if (item < kUnanimous) {
      const bool good = item % 2 == 0;
      add(item, "a1", good);
      add(item, "a2", good);
      add(item, "a3", good);
    } else {
      add(item, "a1", true);
      add(item, "a2", true);
      add(item, "a3", false);
    }
  }
  AgreementReport rep = agreement(records);
  require(rep.items == 20000 && rep.annotators == 3, "matrix shape wrong");
  require(std::abs(rep.percent_agreement - 0.7593) <= 1e-9,
          "P_o = " + fmt(rep.percent_agreement, 6) + ", expected 0.7593");
  require(std::abs(rep.randolph_kappa - 0.5186) <= 1e-4,
          "kappa = " + fmt(rep.randolph_kappa, 6) + ", expected 0.5186 +- 1e-4");
  require(std::round(rep.randolph_kappa * 100.0) / 100.0 == 0.52,
          "kappa does not round to 0.52");
  return "P_o " + fmt(rep.percent_agreement, 4) + " -> kappa " +
         fmt(rep.randolph_kappa, 4) + ", rounds to 0.52";
}

// ---------------------------------------------------------------------------
// Dataset anchor: counts of the released evaluation split, when present.

std::string check_dataset_anchor() {
  std::string path;
  if (const char* env = std::getenv("CLOZEGEN_DATA_FILE")) {
    path = env;
  } else {
    path = std::string(CLOZE_SOURCE_DIR) + "/data/released_test.jsonl";
  }
  if (!std::filesystem::exists(path))
    throw SkipCriterion{"released evaluation split not found (looked at " + path +
                        "; point CLOZEGEN_DATA_FILE at it to enable this check)"};

  LoadResult loaded = load_tasks(path);
  StatsReport stats = dataset_stats(loaded.tasks);
  require(stats.tasks == 36,
          "tasks = " + std::to_string(stats.tasks) + ", expected 36");
  require(stats.tokens == 6621,
          "tokens = " + std::to_string(stats.tokens) + ", expected 6621");
  require(stats.gaps == 360,
          "gaps = " + std::to_string(stats.gaps) + ", expected 360");
  const std::map<int, long> gaps_expected = {{9, 9}, {10, 18}, {11, 9}};
  require(stats.gaps_per_task == gaps_expected, "gaps-per-task histogram differs");
  const std::map<int, long> answers_expected = {
      {1, 296}, {2, 45}, {3, 16}, {4, 2}, {5, 1}};
  require(stats.answers_per_gap == answers_expected,
          "answers-per-gap histogram differs");
  return "36 tasks / 6621 tokens / 360 gaps; both histograms match";
}

// ---------------------------------------------------------------------------
// Learning sanity: the from-scratch tagger must overfit 20 rule-planted
// tasks to strict F1 >= 0.95 within 200 epochs and beat the random baseline
// by >= 0.30 F1 on 10 held-out tasks.

GapTagger make_synth_model(const std::vector<ClozeTask>& train, int hidden,
                           std::uint64_t init_seed) {
  Vocab vocab = Vocab::build(train);
  EncoderConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.hidden_dim = hidden;
  cfg.num_heads = 4;
  cfg.num_layers = 2;
  cfg.max_sequence = 300;
  return GapTagger(cfg, std::move(vocab), init_seed);
}

double mean_strict_f1(GapTagger& model, const std::vector<ClozeTask>& tasks) {
  double sum = 0.0;
  for (const ClozeTask& task : tasks) {
    GapScores scores = model.predict(task);
    GapSelection sel = select(scores, SelectionMode::Threshold(0.5));
    const auto gold_vec = task.gap_positions();
    sum += strict_match(sel, {gold_vec.begin(), gold_vec.end()}).f1;
  }
  return sum / static_cast<double>(tasks.size());
}

double mean_restricted_f1(GapTagger& model, const std::vector<ClozeTask>& tasks) {
  double sum = 0.0;
  for (const ClozeTask& task : tasks) {
    const auto gold_vec = task.gap_positions();
    sum += restricted_eval(model.predict(task), {gold_vec.begin(), gold_vec.end()}).f1;
  }
  return sum / static_cast<double>(tasks.size());
}

std::string check_learning_sanity() {
  const auto train = synth::make_function_word_corpus(20, 6, 101);
  const auto held = synth::make_function_word_corpus(10, 6, 202);

  GapTagger model = make_synth_model(train, 32, 11);
  TrainingConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 10;

  int epochs_used = 0;
  double train_f1 = 0.0;
  for (int round = 0; round < 20; ++round) {
    cfg.seed = 1000 + round;
    train_model(model, train, cfg);
    epochs_used += cfg.epochs;
    train_f1 = mean_strict_f1(model, train);
    if (train_f1 >= 0.95) break;
  }
  require(train_f1 >= 0.95, "train strict F1 " + fmt(train_f1) + " after " +
                                std::to_string(epochs_used) +
                                " epochs, needed >= 0.95 within 200");

  const double model_f1 = mean_restricted_f1(model, held);

  const PosDistribution reference = reference_pos_distribution(train);
  double baseline_sum = 0.0;
  int baseline_runs = 0;
  std::uint64_t baseline_seed = 5000;
  for (const ClozeTask& task : held) {
    const auto gold_vec = task.gap_positions();
    const std::set<int> gold(gold_vec.begin(), gold_vec.end());
    for (int s = 0; s < 5; ++s) {
      RandomBaselineResult base = random_baseline(
          task, static_cast<int>(gold.size()), reference, ++baseline_seed);
      baseline_sum += strict_match(base.selection, gold).f1;
      ++baseline_runs;
    }
  }
  const double baseline_f1 = baseline_sum / baseline_runs;
  const double margin = model_f1 - baseline_f1;
  require(margin >= 0.30, "held-out margin " + fmt(margin) + " (model " +
                              fmt(model_f1) + " vs baseline " + fmt(baseline_f1) +
                              "), needed >= 0.30");
  return "train F1 " + fmt(train_f1) + " after " + std::to_string(epochs_used) +
         " epochs; held-out model " + fmt(model_f1) + " vs random " +
         fmt(baseline_f1) + " (margin " + fmt(margin) + ")";
}

// ---------------------------------------------------------------------------
// Gradient check: analytic gradients of the combined loss vs central finite
// differences, relative error <= 1e-3 over >= 50 probed parameters.

std::string check_gradients() {
  const auto tasks = synth::make_function_word_corpus(2, 2, 77);
  GapTagger model = [&] {
    Vocab vocab = Vocab::build(tasks);
    EncoderConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.hidden_dim = 8;
    cfg.num_heads = 2;
    cfg.num_layers = 2;
    cfg.max_sequence = 300;
    return GapTagger(cfg, std::move(vocab), 3);
  }();

  TrainingConfig cfg;
  cfg.mask_source = TrainingConfig::MaskSource::kGold;  // mask set fixed => smooth loss
  const ClozeTask& task = tasks[0];

  model.zero_grads();
  model.accumulate_gradients(task, cfg);

  const double h = 1e-5;
  int probed = 0;
  double worst = 0.0;
  std::string worst_name;
  for (const ParamRef& p : model.parameters()) {
    const int entries = std::min<int>(2, static_cast<int>(p.value->size()));
    for (int e = 0; e < entries; ++e) {
      double* cell = p.value->data() + e;
      const double keep = *cell;
      *cell = keep + h;
      const double up = model.evaluate_loss(task, cfg).total;
      *cell = keep - h;
      const double down = model.evaluate_loss(task, cfg).total;
      *cell = keep;
      const double fd = (up - down) / (2.0 * h);
      const double analytic = *(p.grad->data() + e);
      const double rel = std::abs(fd - analytic) /
                         std::max({1e-8, std::abs(fd), std::abs(analytic)});
      if (rel > worst) {
        worst = rel;
        worst_name = p.name + "[" + std::to_string(e) + "]";
      }
      ++probed;
    }
  }
  require(probed >= 50, "only " + std::to_string(probed) + " parameters probed");
  require(worst <= 1e-3, "worst relative error " + fmt(worst, 8) + " at " +
                             worst_name + ", needed <= 1e-3");
  return std::to_string(probed) + " parameters probed, worst relative error " +
         fmt(worst, 8) + " (" + worst_name + ")";
}

// ---------------------------------------------------------------------------
// Ablation direction: over 5 seeds, mean held-out F1 with the generation
// objective on must not trail the off arm by more than 0.02.

std::string check_ablation() {
  const auto train = synth::make_function_word_corpus(20, 6, 101);
  const auto held = synth::make_function_word_corpus(10, 6, 202);

  double sum_on = 0.0, sum_off = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const bool aux : {true, false}) {
      GapTagger model = make_synth_model(train, 32, seed * 31);
      TrainingConfig cfg;
      cfg.learning_rate = 1e-3;
      cfg.epochs = 60;
      cfg.seed = seed;
      cfg.auxiliary_objective = aux;
      train_model(model, train, cfg);
      (aux ? sum_on : sum_off) += mean_restricted_f1(model, held);
    }
  }
  const double mean_on = sum_on / 5.0;
  const double mean_off = sum_off / 5.0;
  require(mean_on >= mean_off - 0.02,
          "aux-on mean F1 " + fmt(mean_on) + " trails aux-off " + fmt(mean_off) +
              " by more than 0.02");
  return "5 seeds: aux-on mean F1 " + fmt(mean_on) + " vs aux-off " +
         fmt(mean_off);
}

// ---------------------------------------------------------------------------
// Random baseline law: Monte-Carlo tag frequencies over 10k draws must pass
// a chi-square test at alpha = 0.01 against the sampling distribution.

std::string check_baseline_law() {
  ClozeTask task;
  task.id = "mc";
  for (int i = 0; i < 400; ++i) {
    const bool adp = i % 2 == 0;
    task.tokens.push_back({i, adp ? "of" : "the", adp ? "ADP" : "DET", 0, ""});
  }
  PosDistribution dist;
  dist.probs = {{"ADP", 0.75}, {"DET", 0.25}};

  const int kDraws = 10000;
  long adp_count = 0;
  for (int s = 0; s < kDraws; ++s) {
    RandomBaselineResult r = random_baseline(task, 1, dist, 90000 + s);
    require(r.draw_order.size() == 1, "draw " + std::to_string(s) + " failed");
    if (task.tokens[r.draw_order[0]].pos == "ADP") ++adp_count;
  }
  const double expected_adp = 0.75 * kDraws;
  const double expected_det = 0.25 * kDraws;
  const double det_count = kDraws - adp_count;
  const double chi2 =
      (adp_count - expected_adp) * (adp_count - expected_adp) / expected_adp +
      (det_count - expected_det) * (det_count - expected_det) / expected_det;
  const double frac = static_cast<double>(adp_count) / kDraws;
  require(chi2 < 6.635, "chi-square " + fmt(chi2, 3) +
                            " >= 6.635 (1 dof, alpha 0.01); ADP fraction " +
                            fmt(frac));
  require(std::abs(frac - 0.75) <= 0.02,
          "ADP fraction " + fmt(frac) + " strays past 0.75 +- 0.02");
  return "ADP fraction " + fmt(frac) + " over 10k draws, chi-square " +
         fmt(chi2, 3) + " < 6.635";
}

}  // namespace

int main() {
  std::cout << "clozegen acceptance gate" << std::endl;
  run_criterion("loss-shaping exactness", 1.0, check_loss_shaping);
  run_criterion("re-ranking invariants", 30.0, check_reranking);
  run_criterion("metric identities", 10.0, check_metric_identities);
  run_criterion("agreement anchor", 1.0, check_agreement_anchor);
  run_criterion("dataset anchor", 0.0, check_dataset_anchor);
  run_criterion("learning sanity", 600.0, check_learning_sanity);
  run_criterion("gradient check", 120.0, check_gradients);
  run_criterion("ablation direction", 0.0, check_ablation);
  run_criterion("random baseline law", 0.0, check_baseline_law);
  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
