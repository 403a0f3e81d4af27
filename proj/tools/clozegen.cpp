#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cloze/baselines.hpp"
#include "cloze/corpus.hpp"
#include "cloze/evaluation.hpp"
#include "cloze/io.hpp"
#include "cloze/manifest.hpp"
#include "cloze/model.hpp"
#include "cloze/selection.hpp"
#include "cloze/types.hpp"
#include "cloze/vocab.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string fmt_double(double x) { return json(x).dump(); }

std::vector<cloze::ClozeTask> load_tasks_or_die(const std::string& path) {
  cloze::LoadResult result = cloze::load_tasks(path);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  return result.tasks;
}

std::map<std::string, const cloze::ClozeTask*> index_tasks(
    const std::vector<cloze::ClozeTask>& tasks) {
  std::map<std::string, const cloze::ClozeTask*> by_id;
  for (const cloze::ClozeTask& t : tasks)
    if (!by_id.emplace(t.id, &t).second)
      throw cloze::ValidationError("duplicate task id " + t.id);
  return by_id;
}

const cloze::ClozeTask& find_task(
    const std::map<std::string, const cloze::ClozeTask*>& by_id,
    const std::string& id) {
  auto it = by_id.find(id);
  if (it == by_id.end())
    throw cloze::ValidationError("task " + id + " is not in the task file");
  return *it->second;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw cloze::ParseError("cannot open for writing: " + path);
  out << content;
  if (!out) throw cloze::ParseError("failed writing: " + path);
}

json match_to_json(const cloze::MatchReport& m) {
  return {{"precision", m.precision}, {"recall", m.recall},     {"f1", m.f1},
          {"tp", m.true_positives},   {"fp", m.false_positives}, {"fn", m.false_negatives}};
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::string tasks_path;
};

void run_validate(const ValidateArgs& args) {
  cloze::LoadResult result = cloze::load_tasks(args.tasks_path);
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  const cloze::StatsReport stats = cloze::dataset_stats(result.tasks);

  cloze::RunManifest manifest;
  manifest.command = "validate";
  manifest.add_input(args.tasks_path);

  std::cout << "tasks " << stats.tasks << "\n"
            << "tokens " << stats.tokens << "\n"
            << "gaps " << stats.gaps << "\n"
            << "warnings " << result.warnings.size() << "\n"
            << "manifest " << manifest.manifest_hash() << "\n";
}

// ------------------------------------------------------------------- stats

struct StatsArgs {
  std::string tasks_path;
  std::string out_path;
  std::string out_ref_dist;
};

void run_stats(const StatsArgs& args) {
  const auto tasks = load_tasks_or_die(args.tasks_path);
  const cloze::StatsReport stats = cloze::dataset_stats(tasks);

  cloze::RunManifest manifest;
  manifest.command = "stats";
  manifest.add_input(args.tasks_path);
  if (!args.out_ref_dist.empty()) manifest.config["out_ref_dist"] = args.out_ref_dist;

  json report;
  report["manifest_hash"] = manifest.manifest_hash();
  report["tasks"] = stats.tasks;
  report["tokens"] = stats.tokens;
  report["gaps"] = stats.gaps;
  json per_task = json::object();
  for (const auto& [count, n] : stats.gaps_per_task) per_task[std::to_string(count)] = n;
  report["gaps_per_task"] = per_task;
  json per_gap = json::object();
  for (const auto& [count, n] : stats.answers_per_gap) per_gap[std::to_string(count)] = n;
  report["answers_per_gap"] = per_gap;

  if (!args.out_ref_dist.empty()) {
    cloze::save_pos_distribution(cloze::reference_pos_distribution(tasks),
                                 args.out_ref_dist);
    manifest.add_output(args.out_ref_dist);
    std::cout << "wrote " << args.out_ref_dist << "\n";
  }
  if (args.out_path.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    write_text(args.out_path, report.dump(2) + "\n");
    manifest.add_output(args.out_path);
    manifest.write(args.out_path);
    std::cout << "wrote " << args.out_path << "\n";
  }
  if (args.out_path.empty() && !args.out_ref_dist.empty())
    manifest.write(args.out_ref_dist);
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string tasks_path;
  std::string config_path;
  std::string out_checkpoint;
  cloze::TrainingConfig training;
  cloze::EncoderConfig encoder;
  std::string mask_source = "predicted";
  bool no_aux = false;
  bool resume = false;
  bool quiet = false;
};

void apply_config_file(const std::string& path, cloze::TrainingConfig* tc,
                       cloze::EncoderConfig* ec, std::string* mask_source) {
  std::ifstream in(path);
  if (!in) throw cloze::ParseError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw cloze::ParseError("invalid config " + path + ": " + e.what());
  }
  try {
    tc->learning_rate = j.value("learning_rate", tc->learning_rate);
    tc->batch_size = j.value("batch_size", tc->batch_size);
    tc->epochs = j.value("epochs", tc->epochs);
    tc->proximity_penalty = j.value("proximity_penalty", tc->proximity_penalty);
    tc->proximity_window = j.value("proximity_window", tc->proximity_window);
    tc->auxiliary_objective = j.value("auxiliary_objective", tc->auxiliary_objective);
    tc->seed = j.value("seed", tc->seed);
    *mask_source = j.value("mask_source", *mask_source);
    ec->hidden_dim = j.value("hidden_dim", ec->hidden_dim);
    ec->num_layers = j.value("num_layers", ec->num_layers);
    ec->num_heads = j.value("num_heads", ec->num_heads);
    ec->max_sequence = j.value("max_sequence", ec->max_sequence);
    ec->pretrained_ref = j.value("pretrained_ref", ec->pretrained_ref);
  } catch (const json::exception& e) {
    throw cloze::ParseError("invalid config " + path + ": " + e.what());
  }
}

void run_train(const TrainArgs& args) {
  cloze::TrainingConfig tc = args.training;
  if (args.mask_source == "gold")
    tc.mask_source = cloze::TrainingConfig::MaskSource::kGold;
  else
    tc.mask_source = cloze::TrainingConfig::MaskSource::kPredicted;
  tc.auxiliary_objective = !args.no_aux;
  tc.validate();

  const auto tasks = load_tasks_or_die(args.tasks_path);
  if (tasks.empty())
    throw cloze::ValidationError("no tasks in " + args.tasks_path);

  cloze::RunManifest manifest;
  manifest.command = "train";
  manifest.add_input(args.tasks_path);
  if (!args.config_path.empty()) manifest.add_input(args.config_path);
  if (!args.encoder.pretrained_ref.empty()) manifest.add_input(args.encoder.pretrained_ref);
  manifest.seeds["training"] = tc.seed;
  manifest.config["learning_rate"] = fmt_double(tc.learning_rate);
  manifest.config["batch_size"] = std::to_string(tc.batch_size);
  manifest.config["epochs"] = std::to_string(tc.epochs);
  manifest.config["proximity_penalty"] = fmt_double(tc.proximity_penalty);
  manifest.config["proximity_window"] = std::to_string(tc.proximity_window);
  manifest.config["auxiliary_objective"] = tc.auxiliary_objective ? "true" : "false";
  manifest.config["mask_source"] = args.mask_source;
  manifest.config["hidden_dim"] = std::to_string(args.encoder.hidden_dim);
  manifest.config["num_layers"] = std::to_string(args.encoder.num_layers);
  manifest.config["num_heads"] = std::to_string(args.encoder.num_heads);
  manifest.config["max_sequence"] = std::to_string(args.encoder.max_sequence);
  manifest.config["pretrained_ref"] = args.encoder.pretrained_ref;

  if (args.resume) {
    const cloze::ResumeCheck check =
        cloze::check_resume(args.out_checkpoint, manifest.input_hashes);
    if (check.state == cloze::ResumeState::kMismatch)
      throw std::runtime_error("resume refused: " + check.detail);
    if (check.state == cloze::ResumeState::kMatch &&
        std::filesystem::exists(args.out_checkpoint)) {
      std::cout << args.out_checkpoint << " already matches these inputs; skipping\n";
      return;
    }
  }

  std::optional<cloze::GapTagger> model;
  if (!args.encoder.pretrained_ref.empty()) {
    model.emplace(cloze::GapTagger::load_checkpoint(args.encoder.pretrained_ref));
    std::cout << "starting from " << args.encoder.pretrained_ref
              << " (its vocabulary and dimensions apply)\n";
  } else {
    cloze::Vocab vocab = cloze::Vocab::build(tasks);
    cloze::EncoderConfig ec = args.encoder;
    ec.vocab_size = vocab.size();
    model.emplace(ec, std::move(vocab), tc.seed);
  }

  cloze::train_model(*model, tasks, tc, args.quiet ? nullptr : &std::cout);
  model->save_checkpoint(args.out_checkpoint);
  manifest.add_output(args.out_checkpoint);
  manifest.write(args.out_checkpoint);
  std::cout << "wrote " << args.out_checkpoint << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string tasks_path;
  std::string checkpoint;
  std::string out_scores;
  std::string out_heatmap;
};

void run_predict(const PredictArgs& args) {
  const auto tasks = load_tasks_or_die(args.tasks_path);

  cloze::RunManifest manifest;
  manifest.command = "predict";
  manifest.add_input(args.tasks_path);
  manifest.add_input(args.checkpoint);

  const char* cache_env = std::getenv("CLOZEGEN_CACHE");
  std::filesystem::path cache_file;
  if (cache_env && *cache_env) {
    std::filesystem::create_directories(cache_env);
    cache_file = std::filesystem::path(cache_env) /
                 ("predict-" + manifest.manifest_hash() + ".jsonl");
  }

  std::vector<cloze::GapScores> scores;
  if (!cache_file.empty() && std::filesystem::exists(cache_file)) {
    scores = cloze::load_scores(cache_file.string());
    std::cout << "reusing cached predictions " << cache_file.string() << "\n";
  } else {
    const cloze::GapTagger model = cloze::GapTagger::load_checkpoint(args.checkpoint);
    scores.reserve(tasks.size());
    for (const cloze::ClozeTask& task : tasks) scores.push_back(model.predict(task));
    if (!cache_file.empty()) cloze::save_scores(scores, cache_file.string());
  }

  cloze::save_scores(scores, args.out_scores);
  manifest.add_output(args.out_scores);

  if (!args.out_heatmap.empty()) {
    json heat;
    heat["manifest_hash"] = manifest.manifest_hash();
    json per_task = json::array();
    for (size_t i = 0; i < tasks.size(); ++i) {
      const cloze::ClozeTask& task = tasks[i];
      std::set<int> gold(task.gap_positions().begin(), task.gap_positions().end());
      json rows = json::array();
      for (size_t w = 0; w < task.tokens.size(); ++w) {
        const double c = scores[i].confidences[w];
        rows.push_back({{"surface", task.tokens[w].surface},
                        {"confidence", c},
                        {"predicted", c > 0.5},
                        {"gold", gold.count(static_cast<int>(w)) > 0}});
      }
      per_task.push_back({{"task_id", task.id}, {"tokens", rows}});
    }
    heat["tasks"] = per_task;
    write_text(args.out_heatmap, heat.dump(2) + "\n");
    manifest.add_output(args.out_heatmap);
    std::cout << "wrote " << args.out_heatmap << "\n";
  }

  manifest.write(args.out_scores);
  std::cout << "wrote " << args.out_scores << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// ------------------------------------------------------------------ select

struct SelectArgs {
  std::string scores_path;
  std::string mode = "threshold:0.5";
  std::string out_selection;
  std::string tasks_path;
};

void run_select(const SelectArgs& args) {
  bool nbest_gold = false;
  cloze::SelectionMode mode;
  if (args.mode == "nbest:gold") {
    nbest_gold = true;
  } else if (args.mode.rfind("nbest:", 0) == 0) {
    const std::string arg = args.mode.substr(6);
    size_t used = 0;
    int n = 0;
    try {
      n = std::stoi(arg, &used);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--mode", "expected nbest:<count> or nbest:gold");
    }
    if (used != arg.size() || n < 1)
      throw CLI::ValidationError("--mode", "expected nbest:<count> or nbest:gold");
    mode = cloze::SelectionMode::NBest(n);
  } else if (args.mode == "threshold" || args.mode.rfind("threshold:", 0) == 0) {
    double theta = 0.5;
    if (args.mode != "threshold") {
      const std::string arg = args.mode.substr(10);
      size_t used = 0;
      try {
        theta = std::stod(arg, &used);
      } catch (const std::exception&) {
        throw CLI::ValidationError("--mode", "expected threshold:<value in [0,1]>");
      }
      if (used != arg.size() || theta < 0.0 || theta > 1.0)
        throw CLI::ValidationError("--mode", "expected threshold:<value in [0,1]>");
    }
    mode = cloze::SelectionMode::Threshold(theta);
  } else {
    throw CLI::ValidationError(
        "--mode", "expected threshold[:theta], nbest:<count>, or nbest:gold");
  }
  if (nbest_gold && args.tasks_path.empty())
    throw CLI::ValidationError("--mode", "nbest:gold needs --tasks for the gold counts");

  const auto scores = cloze::load_scores(args.scores_path);
  std::vector<cloze::ClozeTask> tasks;
  std::map<std::string, const cloze::ClozeTask*> by_id;
  if (!args.tasks_path.empty()) {
    tasks = load_tasks_or_die(args.tasks_path);
    by_id = index_tasks(tasks);
  }

  std::vector<cloze::SelectionRecord> records;
  records.reserve(scores.size());
  for (const cloze::GapScores& s : scores) {
    std::set<int> exclude;
    cloze::SelectionMode task_mode = mode;
    if (!args.tasks_path.empty()) {
      const cloze::ClozeTask& task = find_task(by_id, s.task_id);
      if (task.tokens.size() != s.confidences.size())
        throw cloze::ValidationError(
            "task " + s.task_id + " has " + std::to_string(task.tokens.size()) +
            " tokens but the scores carry " + std::to_string(s.confidences.size()));
      exclude = cloze::ineligible_positions(task.tokens);
      if (nbest_gold)
        task_mode = cloze::SelectionMode::NBest(static_cast<int>(task.gaps.size()));
    }
    records.push_back({cloze::select(s, task_mode, exclude), {}});
  }

  cloze::save_selections(records, args.out_selection);
  cloze::RunManifest manifest;
  manifest.command = "select";
  manifest.add_input(args.scores_path);
  if (!args.tasks_path.empty()) manifest.add_input(args.tasks_path);
  manifest.config["mode"] = args.mode;
  manifest.add_output(args.out_selection);
  manifest.write(args.out_selection);
  std::cout << "wrote " << args.out_selection << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// ------------------------------------------------------------- postprocess

struct PostprocessArgs {
  std::string selection_path;
  std::string scores_path;
  std::string tasks_path;
  std::string ref_dist_path;
  std::string out_selection;
  std::uint64_t seed = 0;
  int min_words_between = 4;
  bool allow_repeats = false;
  bool compare_lemmas = false;
};

void run_postprocess(const PostprocessArgs& args) {
  const auto selections = cloze::load_selections(args.selection_path);
  const auto scores = cloze::load_scores(args.scores_path);
  const auto tasks = load_tasks_or_die(args.tasks_path);
  const auto by_id = index_tasks(tasks);
  std::map<std::string, const cloze::GapScores*> scores_by_id;
  for (const cloze::GapScores& s : scores) scores_by_id[s.task_id] = &s;

  cloze::SelectionConstraints constraints;
  constraints.min_words_between = args.min_words_between;
  constraints.allow_repeats = args.allow_repeats;
  constraints.compare_lemmas = args.compare_lemmas;
  constraints.target_pos = cloze::load_pos_distribution(args.ref_dist_path);
  constraints.rng_seed = args.seed;

  std::vector<cloze::SelectionRecord> out_records;
  out_records.reserve(selections.size());
  for (const cloze::SelectionRecord& record : selections) {
    const cloze::ClozeTask& task = find_task(by_id, record.selection.task_id);
    auto sit = scores_by_id.find(record.selection.task_id);
    if (sit == scores_by_id.end())
      throw cloze::ValidationError("no scores for task " + record.selection.task_id);
    const std::vector<cloze::Token> tokens = cloze::reconstruct_text(task);
    if (tokens.size() != sit->second->confidences.size())
      throw cloze::ValidationError(
          "task " + task.id + " has " + std::to_string(tokens.size()) +
          " tokens but the scores carry " +
          std::to_string(sit->second->confidences.size()));
    const cloze::PostprocessResult result =
        cloze::postprocess(record.selection, *sit->second, tokens, constraints);
    std::cout << task.id << ": " << result.swaps.size() << " swaps, "
              << result.unresolved_repeats.size() << " unresolved repeats\n";
    out_records.push_back({result.selection, result.unresolved_repeats});
  }

  cloze::save_selections(out_records, args.out_selection);
  cloze::RunManifest manifest;
  manifest.command = "postprocess";
  manifest.add_input(args.selection_path);
  manifest.add_input(args.scores_path);
  manifest.add_input(args.tasks_path);
  manifest.add_input(args.ref_dist_path);
  manifest.seeds["postprocess"] = args.seed;
  manifest.config["min_words_between"] = std::to_string(args.min_words_between);
  manifest.config["allow_repeats"] = args.allow_repeats ? "true" : "false";
  manifest.config["compare_lemmas"] = args.compare_lemmas ? "true" : "false";
  manifest.add_output(args.out_selection);
  manifest.write(args.out_selection);
  std::cout << "wrote " << args.out_selection << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// --------------------------------------------------------- baseline-random

struct BaselineArgs {
  std::string tasks_path;
  std::string ref_dist_path;
  std::string n = "gold";
  std::string out_selection;
  std::uint64_t seed = 0;
};

void run_baseline(const BaselineArgs& args) {
  bool use_gold = false;
  int fixed_n = 0;
  if (args.n == "gold") {
    use_gold = true;
  } else {
    size_t used = 0;
    try {
      fixed_n = std::stoi(args.n, &used);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--n", "expected a positive count or 'gold'");
    }
    if (used != args.n.size() || fixed_n < 1)
      throw CLI::ValidationError("--n", "expected a positive count or 'gold'");
  }

  const auto tasks = load_tasks_or_die(args.tasks_path);
  const cloze::PosDistribution dist =
      cloze::load_pos_distribution(args.ref_dist_path);

  std::vector<cloze::SelectionRecord> records;
  records.reserve(tasks.size());
  for (const cloze::ClozeTask& task : tasks) {
    const int n = use_gold ? static_cast<int>(task.gaps.size()) : fixed_n;
    // Independent per-task stream, still reproducible from --seed.
    const std::uint64_t task_seed = args.seed ^ cloze::fnv1a64(task.id);
    const cloze::RandomBaselineResult result =
        cloze::random_baseline(task, n, dist, task_seed);
    if (result.shortfall > 0)
      std::cerr << "warning: task " << task.id << " could supply only "
                << result.selection.picks.size() << " of " << n << " gaps\n";
    records.push_back({result.selection, {}});
  }

  cloze::save_selections(records, args.out_selection);
  cloze::RunManifest manifest;
  manifest.command = "baseline-random";
  manifest.add_input(args.tasks_path);
  manifest.add_input(args.ref_dist_path);
  manifest.seeds["baseline"] = args.seed;
  manifest.config["n"] = args.n;
  manifest.add_output(args.out_selection);
  manifest.write(args.out_selection);
  std::cout << "wrote " << args.out_selection << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string selection_path;
  std::string tasks_path;
  std::string annotations_path;
  std::string ref_dist_path;
  std::string out_report;
  std::string out_pos_csv;
};

void run_evaluate(const EvaluateArgs& args) {
  const auto selections = cloze::load_selections(args.selection_path);
  const auto tasks = load_tasks_or_die(args.tasks_path);
  const auto by_id = index_tasks(tasks);

  cloze::PosDistribution ref_dist;
  if (args.ref_dist_path.empty())
    ref_dist = cloze::reference_pos_distribution(tasks);
  else
    ref_dist = cloze::load_pos_distribution(args.ref_dist_path);

  std::set<std::string> covered;
  long tp = 0, fp = 0, fn = 0;
  long repeated = 0, adjacent = 0;
  long histogram[4] = {0, 0, 0, 0};
  double kl_sum = 0.0;
  std::map<std::string, std::array<long, 3>> tag_counts;
  std::map<std::string, double> task_f1;
  json per_task = json::array();

  for (const cloze::SelectionRecord& record : selections) {
    const cloze::ClozeTask& task = find_task(by_id, record.selection.task_id);
    covered.insert(task.id);
    const auto gold_vec = task.gap_positions();
    const std::set<int> gold(gold_vec.begin(), gold_vec.end());
    const cloze::MatchReport match = cloze::strict_match(record.selection, gold);
    tp += match.true_positives;
    fp += match.false_positives;
    fn += match.false_negatives;
    task_f1[task.id] = match.f1;

    const std::vector<cloze::Token> tokens = cloze::reconstruct_text(task);
    const cloze::StructureReport structure =
        cloze::structure_report(record.selection, tokens, ref_dist);
    repeated += structure.repeated_gaps;
    adjacent += structure.adjacent_gaps;
    for (int d = 0; d < 4; ++d) histogram[d] += structure.distance_histogram[d];
    kl_sum += structure.pos_kl;

    for (const auto& [tag, report] : cloze::pos_breakdown(record.selection, gold, tokens)) {
      auto& counts = tag_counts[tag];
      counts[0] += report.true_positives;
      counts[1] += report.false_positives;
      counts[2] += report.false_negatives;
    }

    json entry = match_to_json(match);
    entry["task_id"] = task.id;
    entry["repeated_gaps"] = structure.repeated_gaps;
    entry["adjacent_gaps"] = structure.adjacent_gaps;
    entry["pos_kl"] = structure.pos_kl;
    entry["unresolved_repeats"] = record.unresolved_repeats;
    per_task.push_back(entry);
  }
  for (const cloze::ClozeTask& task : tasks)
    if (!covered.count(task.id))
      std::cerr << "warning: task " << task.id << " has no selection and is skipped\n";

  cloze::RunManifest manifest;
  manifest.command = "evaluate";
  manifest.add_input(args.selection_path);
  manifest.add_input(args.tasks_path);
  if (!args.annotations_path.empty()) manifest.add_input(args.annotations_path);
  if (!args.ref_dist_path.empty()) manifest.add_input(args.ref_dist_path);

  const cloze::MatchReport micro = cloze::match_from_counts(tp, fp, fn);
  json report;
  report["manifest_hash"] = manifest.manifest_hash();
  report["tasks_evaluated"] = selections.size();
  report["match"] = match_to_json(micro);
  report["per_task"] = per_task;
  report["structure"] = {
      {"repeated_gaps", repeated},
      {"adjacent_gaps", adjacent},
      {"distance_histogram", {histogram[0], histogram[1], histogram[2], histogram[3]}},
      {"mean_pos_kl", selections.empty() ? 0.0 : kl_sum / selections.size()}};
  json breakdown = json::object();
  for (const auto& [tag, counts] : tag_counts)
    breakdown[tag] = match_to_json(cloze::match_from_counts(counts[0], counts[1], counts[2]));
  report["pos_breakdown"] = breakdown;

  if (!args.annotations_path.empty()) {
    const auto annotations = cloze::load_annotations(args.annotations_path);
    const cloze::AgreementReport agree = cloze::agreement(annotations);
    report["agreement"] = {{"percent_agreement", agree.percent_agreement},
                           {"randolph_kappa", agree.randolph_kappa},
                           {"per_annotator_accuracy", agree.per_annotator_accuracy},
                           {"items", agree.items},
                           {"annotators", agree.annotators}};
    report["reason_frequencies"] = agree.reason_frequencies;

    json correlations = json::object();
    for (const std::string variant : {"mean", "majority"}) {
      const auto accuracy = cloze::per_task_accuracy(annotations, variant);
      std::vector<double> xs, ys;
      for (const auto& [id, acc] : accuracy) {
        auto it = task_f1.find(id);
        if (it == task_f1.end()) continue;
        xs.push_back(acc);
        ys.push_back(it->second);
      }
      try {
        const cloze::Correlation c = cloze::correlation(xs, ys);
        correlations[variant] = {{"pearson_r", c.pearson_r},
                                 {"spearman_rho", c.spearman_rho},
                                 {"pairs", xs.size()}};
      } catch (const cloze::ValidationError& e) {
        correlations[variant] = {{"note", e.what()}, {"pairs", xs.size()}};
      }
    }
    report["correlations"] = correlations;
  }

  write_text(args.out_report, report.dump(2) + "\n");
  manifest.add_output(args.out_report);

  if (!args.out_pos_csv.empty()) {
    std::ostringstream csv;
    csv << "pos,precision,recall,f1,tp,fp,fn\n";
    for (const auto& [tag, counts] : tag_counts) {
      const cloze::MatchReport m =
          cloze::match_from_counts(counts[0], counts[1], counts[2]);
      csv << tag << ',' << fmt_double(m.precision) << ',' << fmt_double(m.recall)
          << ',' << fmt_double(m.f1) << ',' << m.true_positives << ','
          << m.false_positives << ',' << m.false_negatives << "\n";
    }
    csv << "ALL," << fmt_double(micro.precision) << ',' << fmt_double(micro.recall)
        << ',' << fmt_double(micro.f1) << ',' << micro.true_positives << ','
        << micro.false_positives << ',' << micro.false_negatives << "\n";
    write_text(args.out_pos_csv, csv.str());
    manifest.add_output(args.out_pos_csv);
    std::cout << "wrote " << args.out_pos_csv << "\n";
  }

  manifest.write(args.out_report);
  std::cout << "P " << micro.precision << " R " << micro.recall << " F1 "
            << micro.f1 << " over " << selections.size() << " tasks\n"
            << "wrote " << args.out_report << " (manifest "
            << manifest.manifest_hash() << ")\n";
}

// ------------------------------------------------------------------ render

struct RenderArgs {
  std::string tasks_path;
  std::string selection_path;
  std::string out_dir;
};

std::string safe_filename(const std::string& id) {
  std::string out;
  for (char c : id)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c
               : '_';
  return out.empty() ? "task" : out;
}

void run_render(const RenderArgs& args) {
  const auto tasks = load_tasks_or_die(args.tasks_path);
  const auto by_id = index_tasks(tasks);
  const auto selections = cloze::load_selections(args.selection_path);

  std::filesystem::create_directories(args.out_dir);
  cloze::RunManifest manifest;
  manifest.command = "render";
  manifest.add_input(args.tasks_path);
  manifest.add_input(args.selection_path);

  json index;
  index["manifest_hash"] = manifest.manifest_hash();
  json files = json::object();
  std::map<std::string, int> used_names;

  for (const cloze::SelectionRecord& record : selections) {
    const cloze::ClozeTask& task = find_task(by_id, record.selection.task_id);
    const cloze::RenderedCloze rendered =
        cloze::render_cloze(task, record.selection);

    std::string name = safe_filename(task.id);
    const int n = ++used_names[name];
    if (n > 1) name += "-" + std::to_string(n);
    name += ".txt";

    std::ostringstream body;
    body << task.id << "\n\n" << rendered.test_text << "\n\nAnswer key:\n";
    for (const auto& [number, answers] : rendered.answer_key) {
      body << "(" << number << ") ";
      for (size_t i = 0; i < answers.size(); ++i) {
        if (i) body << " | ";
        body << answers[i];
      }
      body << "\n";
    }
    const std::string path = (std::filesystem::path(args.out_dir) / name).string();
    write_text(path, body.str());
    manifest.add_output(path);
    files[task.id] = name;
  }

  index["files"] = files;
  const std::string index_path =
      (std::filesystem::path(args.out_dir) / "index.json").string();
  write_text(index_path, index.dump(2) + "\n");
  manifest.add_output(index_path);
  manifest.write((std::filesystem::path(args.out_dir) / "render").string());
  std::cout << "wrote " << selections.size() << " rendered tasks to "
            << args.out_dir << " (manifest " << manifest.manifest_hash() << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clozegen: build and evaluate open cloze tests"};
  app.require_subcommand(1);

  ValidateArgs validate_args;
  CLI::App* validate = app.add_subcommand(
      "validate", "Check a task file against the format contracts");
  validate->add_option("tasks", validate_args.tasks_path, "task JSONL file")
      ->required();
  validate->callback([&] { run_validate(validate_args); });

  StatsArgs stats_args;
  CLI::App* stats = app.add_subcommand(
      "stats", "Dataset statistics: counts and histograms");
  stats->add_option("tasks", stats_args.tasks_path, "task JSONL file")->required();
  stats->add_option("--out", stats_args.out_path, "write the JSON report here");
  stats->add_option("--out-ref-dist", stats_args.out_ref_dist,
                    "write the gapped-PoS reference distribution here");
  stats->callback([&] { run_stats(stats_args); });

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Fine-tune the gap tagger");
  train->add_option("--tasks", train_args.tasks_path, "training task JSONL")->required();
  train->add_option("--config", train_args.config_path, "JSON config file");
  train->add_option("--out-checkpoint", train_args.out_checkpoint, "checkpoint path")
      ->required();
  CLI::Option* opt_lr =
      train->add_option("--learning-rate", train_args.training.learning_rate);
  CLI::Option* opt_batch =
      train->add_option("--batch-size", train_args.training.batch_size);
  CLI::Option* opt_epochs = train->add_option("--epochs", train_args.training.epochs);
  CLI::Option* opt_penalty =
      train->add_option("--penalty", train_args.training.proximity_penalty,
                        "loss multiplier near gaps");
  CLI::Option* opt_window =
      train->add_option("--window", train_args.training.proximity_window,
                        "distance below which the penalty applies");
  CLI::Option* opt_seed = train->add_option("--seed", train_args.training.seed);
  CLI::Option* opt_mask =
      train->add_option("--mask-source", train_args.mask_source)
          ->check(CLI::IsMember({"predicted", "gold"}));
  CLI::Option* opt_hidden =
      train->add_option("--hidden-dim", train_args.encoder.hidden_dim);
  CLI::Option* opt_layers =
      train->add_option("--num-layers", train_args.encoder.num_layers);
  CLI::Option* opt_heads = train->add_option("--num-heads", train_args.encoder.num_heads);
  CLI::Option* opt_maxseq =
      train->add_option("--max-sequence", train_args.encoder.max_sequence);
  CLI::Option* opt_pretrained =
      train->add_option("--pretrained", train_args.encoder.pretrained_ref,
                        "checkpoint supplying the initial weights");
  train->add_flag("--no-aux", train_args.no_aux, "disable the regeneration objective");
  train->add_flag("--resume", train_args.resume,
                  "reuse the checkpoint when its recorded inputs still match");
  train->add_flag("--quiet", train_args.quiet, "suppress per-epoch loss lines");
  train->callback([&] {
    if (!train_args.config_path.empty()) {
      // Flags override the config file; reapply any given explicitly.
      cloze::TrainingConfig file_tc = train_args.training;
      cloze::EncoderConfig file_ec = train_args.encoder;
      std::string file_mask = train_args.mask_source;
      apply_config_file(train_args.config_path, &file_tc, &file_ec, &file_mask);
      if (!opt_lr->count()) train_args.training.learning_rate = file_tc.learning_rate;
      if (!opt_batch->count()) train_args.training.batch_size = file_tc.batch_size;
      if (!opt_epochs->count()) train_args.training.epochs = file_tc.epochs;
      if (!opt_penalty->count())
        train_args.training.proximity_penalty = file_tc.proximity_penalty;
      if (!opt_window->count())
        train_args.training.proximity_window = file_tc.proximity_window;
      if (!opt_seed->count()) train_args.training.seed = file_tc.seed;
      if (!opt_mask->count()) train_args.mask_source = file_mask;
      if (!opt_hidden->count()) train_args.encoder.hidden_dim = file_ec.hidden_dim;
      if (!opt_layers->count()) train_args.encoder.num_layers = file_ec.num_layers;
      if (!opt_heads->count()) train_args.encoder.num_heads = file_ec.num_heads;
      if (!opt_maxseq->count())
        train_args.encoder.max_sequence = file_ec.max_sequence;
      if (!opt_pretrained->count())
        train_args.encoder.pretrained_ref = file_ec.pretrained_ref;
      if (!train_args.no_aux)
        train_args.no_aux = !file_tc.auxiliary_objective;
    }
    run_train(train_args);
  });

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "Score every token of every task");
  predict->add_option("--tasks", predict_args.tasks_path, "task JSONL")->required();
  predict->add_option("--checkpoint", predict_args.checkpoint, "trained checkpoint")
      ->required();
  predict->add_option("--out-scores", predict_args.out_scores, "scores JSONL path")
      ->required();
  predict->add_option("--out-heatmap", predict_args.out_heatmap,
                      "per-token confidence JSON for visualization");
  predict->callback([&] { run_predict(predict_args); });

  SelectArgs select_args;
  CLI::App* select = app.add_subcommand("select", "Turn scores into gap selections");
  select->add_option("--scores", select_args.scores_path, "scores JSONL")->required();
  select->add_option("--mode", select_args.mode,
                     "threshold[:theta], nbest:<count>, or nbest:gold");
  select->add_option("--out-selection", select_args.out_selection, "selection JSONL path")
      ->required();
  select->add_option("--tasks", select_args.tasks_path,
                     "task JSONL (enables nbest:gold and punctuation filtering)");
  select->callback([&] { run_select(select_args); });

  PostprocessArgs post_args;
  CLI::App* post = app.add_subcommand(
      "postprocess", "Repair repeated gapped words by confidence-ranked swaps");
  post->add_option("--selection", post_args.selection_path, "selection JSONL")->required();
  post->add_option("--scores", post_args.scores_path, "scores JSONL")->required();
  post->add_option("--tasks", post_args.tasks_path, "task JSONL")->required();
  post->add_option("--ref-dist", post_args.ref_dist_path,
                   "target gapped-PoS distribution JSON")
      ->required();
  post->add_option("--seed", post_args.seed, "seed for the repeated-gap draw");
  post->add_option("--out-selection", post_args.out_selection, "output selection JSONL")
      ->required();
  post->add_option("--min-words-between", post_args.min_words_between,
                   "distance floor for accepted swaps");
  post->add_flag("--allow-repeats", post_args.allow_repeats,
                 "skip the repair loop entirely");
  post->add_flag("--compare-lemmas", post_args.compare_lemmas,
                 "treat words with equal lemmas as repeats");
  post->callback([&] { run_postprocess(post_args); });

  BaselineArgs baseline_args;
  CLI::App* baseline = app.add_subcommand(
      "baseline-random", "PoS-guided random gap selection");
  baseline->add_option("--tasks", baseline_args.tasks_path, "task JSONL")->required();
  baseline->add_option("--ref-dist", baseline_args.ref_dist_path,
                       "PoS distribution to sample tags from")
      ->required();
  baseline->add_option("--n", baseline_args.n, "gaps per task: a count or 'gold'");
  baseline->add_option("--seed", baseline_args.seed, "sampling seed");
  baseline->add_option("--out-selection", baseline_args.out_selection,
                       "output selection JSONL")
      ->required();
  baseline->callback([&] { run_baseline(baseline_args); });

  EvaluateArgs eval_args;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score selections against gold gaps (and annotations)");
  evaluate->add_option("--selection", eval_args.selection_path, "selection JSONL")
      ->required();
  evaluate->add_option("--tasks", eval_args.tasks_path, "task JSONL with gold gaps")
      ->required();
  evaluate->add_option("--annotations", eval_args.annotations_path,
                       "annotation JSONL for agreement and correlations");
  evaluate->add_option("--ref-dist", eval_args.ref_dist_path,
                       "PoS target for the structure report (default: derived "
                       "from the gold tasks)");
  evaluate->add_option("--out-report", eval_args.out_report, "JSON report path")
      ->required();
  evaluate->add_option("--out-pos-csv", eval_args.out_pos_csv,
                       "per-PoS table as CSV");
  evaluate->callback([&] { run_evaluate(eval_args); });

  RenderArgs render_args;
  CLI::App* render = app.add_subcommand(
      "render", "Write exam-style cloze sheets with answer keys");
  render->add_option("--tasks", render_args.tasks_path, "task JSONL")->required();
  render->add_option("--selection", render_args.selection_path, "selection JSONL")
      ->required();
  render->add_option("--out-dir", render_args.out_dir, "output directory")->required();
  render->callback([&] { run_render(render_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  } catch (const cloze::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const cloze::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
