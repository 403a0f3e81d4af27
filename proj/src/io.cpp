#include "cloze/io.hpp"

#include <fstream>
#include <functional>

#include <nlohmann/json.hpp>

namespace cloze {

using nlohmann::json;

namespace {

// Applies `parse` to each non-blank line, rethrowing json errors as
// ParseError with file:line context.
void for_each_line(const std::string& path,
                   const std::function<void(const json&)>& parse) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      parse(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open for writing: " + path);
  return out;
}

}  // namespace

std::vector<GapScores> load_scores(const std::string& path) {
  std::vector<GapScores> out;
  for_each_line(path, [&](const json& j) {
    GapScores s;
    s.task_id = j.at("task_id").get<std::string>();
    s.confidences = j.at("confidences").get<std::vector<double>>();
    out.push_back(std::move(s));
  });
  for (const GapScores& s : out)
    for (double c : s.confidences)
      if (c < 0.0 || c > 1.0)
        throw ValidationError("scores " + s.task_id + ": confidence " +
                              std::to_string(c) + " outside [0,1]");
  return out;
}

void save_scores(const std::vector<GapScores>& scores, const std::string& path) {
  auto out = open_out(path);
  for (const GapScores& s : scores)
    out << json{{"task_id", s.task_id}, {"confidences", s.confidences}}.dump() << "\n";
}

std::vector<SelectionRecord> load_selections(const std::string& path) {
  std::vector<SelectionRecord> out;
  for_each_line(path, [&](const json& j) {
    SelectionRecord rec;
    rec.selection.task_id = j.at("task_id").get<std::string>();
    for (const auto& jp : j.at("picks"))
      rec.selection.picks.emplace_back(jp.at("position").get<int>(),
                                       jp.at("confidence").get<double>());
    if (j.contains("unresolved_repeats"))
      rec.unresolved_repeats = j.at("unresolved_repeats").get<std::vector<int>>();
    out.push_back(std::move(rec));
  });
  for (const SelectionRecord& rec : out) validate_selection(rec.selection);
  return out;
}

void save_selections(const std::vector<SelectionRecord>& records,
                     const std::string& path) {
  auto out = open_out(path);
  for (const SelectionRecord& rec : records) {
    json picks = json::array();
    for (const auto& [pos, conf] : rec.selection.picks)
      picks.push_back({{"position", pos}, {"confidence", conf}});
    out << json{{"task_id", rec.selection.task_id},
               {"picks", picks},
               {"unresolved_repeats", rec.unresolved_repeats}}
               .dump()
        << "\n";
  }
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::vector<AnnotationRecord> out;
  for_each_line(path, [&](const json& j) {
    AnnotationRecord rec;
    rec.task_id = j.at("task_id").get<std::string>();
    rec.gap_position = j.at("gap_position").get<int>();
    rec.annotator = j.at("annotator").get<std::string>();
    const std::string judgement = j.at("judgement").get<std::string>();
    if (judgement != "good" && judgement != "bad")
      throw ValidationError("annotation judgement must be good|bad, got " + judgement);
    rec.good = judgement == "good";
    rec.reason = j.at("reason").get<std::string>();
    if (j.contains("comment") && !j.at("comment").is_null())
      rec.comment = j.at("comment").get<std::string>();
    out.push_back(std::move(rec));
  });
  for (const AnnotationRecord& rec : out) validate_annotation(rec);
  return out;
}

void save_annotations(const std::vector<AnnotationRecord>& records,
                      const std::string& path) {
  auto out = open_out(path);
  for (const AnnotationRecord& rec : records) {
    json j{{"task_id", rec.task_id},
           {"gap_position", rec.gap_position},
           {"annotator", rec.annotator},
           {"judgement", rec.good ? "good" : "bad"},
           {"reason", rec.reason}};
    if (rec.comment) j["comment"] = *rec.comment;
    out << j.dump() << "\n";
  }
}

PosDistribution load_pos_distribution(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  PosDistribution dist;
  for (const auto& [tag, p] : j.at("probs").items())
    dist.probs[tag] = p.get<double>();
  validate_distribution(dist);
  return dist;
}

void save_pos_distribution(const PosDistribution& dist, const std::string& path) {
  auto out = open_out(path);
  out << json{{"probs", dist.probs}}.dump(2) << "\n";
}

}  // namespace cloze
