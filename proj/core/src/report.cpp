#include "offrl/report.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"
#include "offrl/stats.hpp"

namespace offrl {

using nlohmann::json;

std::vector<std::string> unimplementedMethods() { return {"GAIL", "DiffusionPolicy", "CLIPReward"}; }

GroupSummary summarize(const RunReport& r, std::string_view level, std::string_view method,
                       std::string_view label_source) {
  GroupSummary g;
  std::vector<double> success;
  for (const auto& c : r.cells) {
    if (c.dataset_level != level || c.method != method || c.label_source != label_source) continue;
    g.seeds.push_back(c.seed);
    g.seed_means.push_back(c.eval.mean_return);
    if (c.eval.success_rate) success.push_back(*c.eval.success_rate);
  }
  if (g.seeds.empty()) {
    throw ContractError("report has no cells for " + std::string(level) + "/" + std::string(method) + "/" +
                        std::string(label_source));
  }
  g.mean = stats::mean(g.seed_means);
  g.std = stats::stddev(g.seed_means);
  if (!success.empty()) g.success_rate = stats::mean(success);
  return g;
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json evalJson(const EvalReport& e) {
  json j = {{"mean_return", e.mean_return}, {"std_return", e.std_return}, {"returns", e.returns}};
  j["success_rate"] = e.success_rate ? json(*e.success_rate) : json(nullptr);
  return j;
}

json cellJson(const ReportCell& c) {
  json j = {{"env", c.env},
            {"dataset_level", c.dataset_level},
            {"method", c.method},
            {"label_source", c.label_source},
            {"seed", c.seed},
            {"eval_seed", c.eval_seed},
            {"eval", evalJson(c.eval)},
            {"dataset_digest", c.dataset_digest},
            {"checkpoint_digests", c.checkpoint_digests},
            {"metrics", c.metrics}};
  j["label_digest"] = c.label_digest ? json(*c.label_digest) : json(nullptr);
  return j;
}

json stageJson(const StageArtifacts& s) {
  return {{"dataset_level", s.dataset_level}, {"dataset_path", s.dataset_path},
          {"dataset_digest", s.dataset_digest}, {"pairs_path", s.pairs_path},
          {"n_pairs", s.n_pairs},               {"label_paths", s.label_paths},
          {"label_digests", s.label_digests},   {"n_trainable", s.n_trainable}};
}

json aggregatesJson(const RunReport& r) {
  std::set<std::tuple<std::string, std::string, std::string>> groups;
  for (const auto& c : r.cells) groups.insert({c.dataset_level, c.method, c.label_source});
  json out = json::array();
  for (const auto& [level, method, source] : groups) {
    const GroupSummary g = summarize(r, level, method, source);
    json j = {{"dataset_level", level}, {"method", method}, {"label_source", source},
              {"seeds", g.seeds},        {"mean_return", g.mean}, {"std_return", g.std}};
    j["success_rate"] = g.success_rate ? json(*g.success_rate) : json(nullptr);
    out.push_back(j);
  }
  return out;
}

template <class T>
T field(const json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw ParseError(std::string(what) + " is missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + "." + key + ": " + e.what());
  }
}

}  // namespace

std::string encodeReportJson(const RunReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) cells.push_back(cellJson(c));
  json stages = json::array();
  for (const auto& s : r.stages) stages.push_back(stageJson(s));
  json config;
  try {
    config = json::parse(r.config);
  } catch (const json::exception&) {
    config = r.config;
  }
  const json j = {{"format_version", kReportFormatVersion},
                  {"kind", r.kind},
                  {"config", config},
                  {"stages", stages},
                  {"cells", cells},
                  {"aggregates", aggregatesJson(r)},
                  {"unimplemented_methods", r.unimplemented_methods}};
  return j.dump(2) + "\n";
}

std::string encodeSummaryCsv(const RunReport& r) {
  std::string out = "env,dataset_level,method,label_source,seed,mean_return,std_return,success_rate\n";
  for (const auto& c : r.cells) {
    out += c.env + "," + c.dataset_level + "," + c.method + "," + c.label_source + "," + std::to_string(c.seed) +
           "," + num(c.eval.mean_return) + "," + num(c.eval.std_return) + "," +
           (c.eval.success_rate ? num(*c.eval.success_rate) : std::string()) + "\n";
  }
  return out;
}

void writeReport(const RunReport& r, const std::filesystem::path& dir) {
  writeFileText(dir / "report.json", encodeReportJson(r));
  writeFileText(dir / "summary.csv", encodeSummaryCsv(r));
}

RunReport decodeReportJson(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("report is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ParseError("report must be a JSON object");
  if (field<int>(j, "format_version", "report") != kReportFormatVersion) {
    throw VersionError("unsupported report format_version");
  }
  RunReport r;
  r.kind = field<std::string>(j, "kind", "report");
  if (!j.contains("config")) throw ParseError("report is missing 'config'");
  r.config = j.at("config").is_string() ? j.at("config").get<std::string>() : j.at("config").dump();
  r.unimplemented_methods = field<std::vector<std::string>>(j, "unimplemented_methods", "report");
  for (const auto& s : field<json>(j, "stages", "report")) {
    StageArtifacts a;
    a.dataset_level = field<std::string>(s, "dataset_level", "stage");
    a.dataset_path = field<std::string>(s, "dataset_path", "stage");
    a.dataset_digest = field<std::string>(s, "dataset_digest", "stage");
    a.pairs_path = field<std::string>(s, "pairs_path", "stage");
    a.n_pairs = field<int>(s, "n_pairs", "stage");
    a.label_paths = field<std::map<std::string, std::string>>(s, "label_paths", "stage");
    a.label_digests = field<std::map<std::string, std::string>>(s, "label_digests", "stage");
    a.n_trainable = field<std::map<std::string, int>>(s, "n_trainable", "stage");
    r.stages.push_back(std::move(a));
  }
  for (const auto& cj : field<json>(j, "cells", "report")) {
    ReportCell c;
    c.env = field<std::string>(cj, "env", "cell");
    c.dataset_level = field<std::string>(cj, "dataset_level", "cell");
    c.method = field<std::string>(cj, "method", "cell");
    c.label_source = field<std::string>(cj, "label_source", "cell");
    c.seed = field<int>(cj, "seed", "cell");
    c.eval_seed = field<std::uint64_t>(cj, "eval_seed", "cell");
    const json e = field<json>(cj, "eval", "cell");
    c.eval.mean_return = field<double>(e, "mean_return", "cell.eval");
    c.eval.std_return = field<double>(e, "std_return", "cell.eval");
    c.eval.returns = field<std::vector<double>>(e, "returns", "cell.eval");
    if (!field<json>(e, "success_rate", "cell.eval").is_null()) {
      c.eval.success_rate = field<double>(e, "success_rate", "cell.eval");
    }
    c.dataset_digest = field<std::string>(cj, "dataset_digest", "cell");
    if (!field<json>(cj, "label_digest", "cell").is_null()) {
      c.label_digest = field<std::string>(cj, "label_digest", "cell");
    }
    c.checkpoint_digests = field<std::map<std::string, std::string>>(cj, "checkpoint_digests", "cell");
    c.metrics = field<std::map<std::string, double>>(cj, "metrics", "cell");
    if (c.env.empty() || c.method.empty() || c.dataset_level.empty()) throw ParseError("cell lacks its key fields");
    if (c.dataset_digest.empty()) throw ParseError("cell lacks its dataset digest");
    if (c.eval.returns.empty()) throw ParseError("cell has no evaluation returns");
    r.cells.push_back(std::move(c));
  }
  return r;
}

RunReport readReport(const std::filesystem::path& dir) { return decodeReportJson(readFileText(dir / "report.json")); }

}  // namespace offrl
