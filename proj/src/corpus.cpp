#include "cloze/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cloze {

using nlohmann::json;

const std::vector<std::string>& annotation_labels() {
  static const std::vector<std::string> labels = {
      "Good",
      "Too close to other gaps",
      "Too many possible answers",
      "Too many gaps of this type",
      "Answers can change meaning",
      "Answers can have different PoS",
      "Gap depends on another",
      "Repeated gap",
      "Phantom gap",
      "Unacceptable outlier",
      "Other (please specify)",
  };
  return labels;
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

void validate_task(const ClozeTask& task, std::vector<std::string>* warnings) {
  const int n = static_cast<int>(task.tokens.size());
  if (task.id.empty())
    throw ValidationError("task has empty id");
  for (int i = 0; i < n; ++i) {
    const Token& t = task.tokens[i];
    if (t.surface.empty())
      throw ValidationError("task " + task.id + ": token " + std::to_string(i) +
                            " has empty surface");
    if (t.dep_head < 0 || t.dep_head >= n)
      throw ValidationError("task " + task.id + ": token " + std::to_string(i) +
                            " dep_head " + std::to_string(t.dep_head) +
                            " outside passage of length " + std::to_string(n));
  }
  std::set<int> seen;
  for (const Gap& g : task.gaps) {
    if (g.position < 0 || g.position >= n)
      throw ValidationError("task " + task.id + ": gap position " +
                            std::to_string(g.position) + " outside passage of length " +
                            std::to_string(n));
    if (!seen.insert(g.position).second)
      throw ValidationError("task " + task.id + ": duplicate gap position " +
                            std::to_string(g.position));
    if (g.answers.empty())
      throw ValidationError("task " + task.id + ": gap at " + std::to_string(g.position) +
                            " has no answers");
    if (g.answers.size() > 7)
      throw ValidationError("task " + task.id + ": gap at " + std::to_string(g.position) +
                            " has " + std::to_string(g.answers.size()) +
                            " answers (expected 1..7)");
    for (const auto& a : g.answers)
      if (a.empty())
        throw ValidationError("task " + task.id + ": gap at " +
                              std::to_string(g.position) + " has an empty answer");
  }
  if (warnings) {
    if (n > 300)
      warnings->push_back("task " + task.id + ": " + std::to_string(n) +
                          " tokens exceeds the 300-token convention");
    const size_t ng = task.gaps.size();
    if (!task.gaps.empty() && (ng < 8 || ng > 16))
      warnings->push_back("task " + task.id + ": " + std::to_string(ng) +
                          " gaps outside the 8..16 gold range");
  }
}

void validate_distribution(const PosDistribution& dist) {
  double sum = 0.0;
  for (const auto& [tag, p] : dist.probs) {
    if (p < 0.0)
      throw ValidationError("PoS distribution: negative probability for " + tag);
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("PoS distribution sums to " + std::to_string(sum) +
                          ", expected 1");
}

void validate_selection(const GapSelection& sel) {
  int prev = -1;
  for (const auto& [pos, conf] : sel.picks) {
    if (pos <= prev)
      throw ValidationError("selection " + sel.task_id +
                            ": positions must be strictly increasing");
    if (conf < 0.0 || conf > 1.0)
      throw ValidationError("selection " + sel.task_id + ": confidence " +
                            std::to_string(conf) + " outside [0,1]");
    prev = pos;
  }
}

void validate_annotation(const AnnotationRecord& rec) {
  const auto& labels = annotation_labels();
  if (std::find(labels.begin(), labels.end(), rec.reason) == labels.end())
    throw ValidationError("annotation for task " + rec.task_id + ": unknown reason \"" +
                          rec.reason + "\"");
  if (rec.good != (rec.reason == "Good"))
    throw ValidationError("annotation for task " + rec.task_id +
                          ": reason \"" + rec.reason + "\" inconsistent with judgement");
}

namespace {

ClozeTask task_from_json(const json& j) {
  ClozeTask task;
  task.id = j.at("id").get<std::string>();
  int index = 0;
  for (const auto& jt : j.at("tokens")) {
    Token t;
    t.index = index++;
    t.surface = jt.at("surface").get<std::string>();
    t.pos = jt.at("pos").get<std::string>();
    t.dep_head = jt.at("dep_head").get<int>();
    if (jt.contains("lemma")) t.lemma = jt.at("lemma").get<std::string>();
    task.tokens.push_back(std::move(t));
  }
  for (const auto& jg : j.at("gaps")) {
    Gap g;
    g.position = jg.at("position").get<int>();
    g.answers = jg.at("answers").get<std::vector<std::string>>();
    task.gaps.push_back(std::move(g));
  }
  std::sort(task.gaps.begin(), task.gaps.end(),
            [](const Gap& a, const Gap& b) { return a.position < b.position; });
  return task;
}

json task_to_json(const ClozeTask& task) {
  json jt = json::array();
  for (const Token& t : task.tokens) {
    json one{{"surface", t.surface}, {"pos", t.pos}, {"dep_head", t.dep_head}};
    if (!t.lemma.empty()) one["lemma"] = t.lemma;
    jt.push_back(std::move(one));
  }
  json jg = json::array();
  for (const Gap& g : task.gaps)
    jg.push_back({{"position", g.position}, {"answers", g.answers}});
  return json{{"id", task.id}, {"tokens", jt}, {"gaps", jg}};
}

}  // namespace

LoadResult load_tasks(std::istream& in, const std::string& origin) {
  LoadResult result;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
      result.tasks.push_back(task_from_json(j));
    } catch (const json::exception& e) {
      throw ParseError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
    validate_task(result.tasks.back(), &result.warnings);
  }
  return result;
}

LoadResult load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open task file: " + path);
  return load_tasks(in, path);
}

void save_tasks(const std::vector<ClozeTask>& tasks, std::ostream& out) {
  for (const ClozeTask& task : tasks) out << task_to_json(task).dump() << "\n";
}

void save_tasks(const std::vector<ClozeTask>& tasks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  save_tasks(tasks, out);
}

std::vector<Token> reconstruct_text(const ClozeTask& task) {
  std::vector<Token> tokens = task.tokens;
  for (const Gap& g : task.gaps) tokens[g.position].surface = g.answers.front();
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& surfaces) {
  static const std::set<std::string> no_space_before = {
      ",", ".", ";", ":", "!", "?", ")", "]", "}", "%", "...", "n't"};
  static const std::set<std::string> no_space_after = {"(", "[", "{"};
  std::string out;
  for (size_t i = 0; i < surfaces.size(); ++i) {
    const std::string& s = surfaces[i];
    if (i > 0) {
      const bool glue = no_space_before.count(s) > 0 || (!s.empty() && s[0] == '\'') ||
                        no_space_after.count(surfaces[i - 1]) > 0;
      if (!glue) out += ' ';
    }
    out += s;
  }
  return out;
}

RenderedCloze render_cloze(const ClozeTask& task, const GapSelection& selection) {
  validate_selection(selection);
  const int n = static_cast<int>(task.tokens.size());
  std::vector<Token> text = reconstruct_text(task);

  std::map<int, const Gap*> gold;
  for (const Gap& g : task.gaps) gold[g.position] = &g;

  RenderedCloze rendered;
  std::vector<std::string> surfaces;
  surfaces.reserve(text.size());
  for (const Token& t : text) surfaces.push_back(t.surface);

  int number = 0;
  for (const auto& [pos, conf] : selection.picks) {
    (void)conf;
    if (pos < 0 || pos >= n)
      throw ValidationError("render: selection position " + std::to_string(pos) +
                            " outside task " + task.id);
    ++number;
    auto it = gold.find(pos);
    std::vector<std::string> answers =
        it != gold.end() ? it->second->answers
                         : std::vector<std::string>{text[pos].surface};
    rendered.answer_key.emplace_back(number, std::move(answers));
    surfaces[pos] = "(" + std::to_string(number) + ") ____";
  }
  rendered.test_text = join_tokens(surfaces);
  return rendered;
}

PosDistribution reference_pos_distribution(const std::vector<ClozeTask>& tasks) {
  if (tasks.empty())
    throw ValidationError("reference_pos_distribution: empty task list");
  PosDistribution dist;
  const double task_weight = 1.0 / static_cast<double>(tasks.size());
  for (const ClozeTask& task : tasks) {
    if (task.gaps.empty())
      throw ValidationError("reference_pos_distribution: task " + task.id +
                            " has no gaps");
    const double gap_weight = task_weight / static_cast<double>(task.gaps.size());
    for (const Gap& g : task.gaps)
      dist.probs[task.tokens[g.position].pos] += gap_weight;
  }
  double sum = 0.0;
  for (const auto& [tag, p] : dist.probs) sum += p;
  for (auto& [tag, p] : dist.probs) p /= sum;
  return dist;
}

StatsReport dataset_stats(const std::vector<ClozeTask>& tasks) {
  StatsReport report;
  report.tasks = static_cast<long>(tasks.size());
  for (const ClozeTask& task : tasks) {
    report.tokens += static_cast<long>(task.tokens.size());
    report.gaps += static_cast<long>(task.gaps.size());
    report.gaps_per_task[static_cast<int>(task.gaps.size())] += 1;
    for (const Gap& g : task.gaps)
      report.answers_per_gap[static_cast<int>(g.answers.size())] += 1;
  }
  return report;
}

}  // namespace cloze
