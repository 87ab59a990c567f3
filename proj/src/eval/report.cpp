#include "n2/eval/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <tuple>
#include <sstream>

#include <nlohmann/json.hpp>

#include "n2/error.hpp"

namespace n2 {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.stddev}, {"count", m.count}}; }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_flag(const std::string& s, const fs::path& path) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw DataError("report " + path.string() + ": expected 0 or 1, got '" + s + "'");
}

double parse_real(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("report " + path.string() + ": malformed number '" + s + "'");
}

void sort_records(std::vector<SliceMetricsRecord>& records) {
  std::sort(records.begin(), records.end(), [](const auto& x, const auto& y) {
    return std::tie(x.subject_id, x.slice_index, x.class_id) < std::tie(y.subject_id, y.slice_index, y.class_id);
  });
}

}  // namespace

RunReport evaluate(const TrainedModel& model, const std::vector<VolumeRecord>& subjects, GatingMode mode,
                   double threshold, const std::string& run_id) {
  if (subjects.empty()) throw ConfigError("evaluation split is empty");
  if (run_id.empty() || run_id.find_first_of(",\n/") != std::string::npos)
    throw ConfigError("run id must be nonempty without commas, slashes or newlines");
  RunReport r;
  r.run_id = run_id;
  r.gating_mode = mode;
  r.gating_threshold = threshold;
  r.class_names = model.class_names;
  if (r.class_names.empty())
    for (std::int64_t c = 0; c < model.net->config().num_classes; ++c) r.class_names.push_back("class" + std::to_string(c));
  for (const auto& v : subjects) {
    if (v.subject_id.find(',') != std::string::npos) throw DataError("subject id '" + v.subject_id + "' contains a comma");
    const auto pred = infer_volume(*model.net, v, model.norm, mode, threshold);
    const auto rec = slice_records(v, pred);
    r.records.insert(r.records.end(), rec.begin(), rec.end());
  }
  sort_records(r.records);
  r.summary = summarize(r.records, static_cast<std::int64_t>(r.class_names.size()));
  return r;
}

void write_report_csv(const fs::path& path, const RunReport& report) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write report " + path.string());
  os << "run_id,subject_id,slice_index,class,presence_gt,det_prob,dice_loss,predicted_any,hallucinated\n";
  for (const auto& r : report.records)
    os << report.run_id << "," << r.subject_id << "," << r.slice_index << ","
       << report.class_names.at(static_cast<std::size_t>(r.class_id)) << "," << r.presence_gt << "," << fmt(r.det_prob)
       << "," << fmt(r.dice_loss) << "," << r.predicted_any << "," << r.hallucinated << "\n";
}

void write_summary_json(const fs::path& path, const RunReport& report) {
  const auto& s = report.summary;
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < s.classes.size(); ++c) {
    const auto& cs = s.classes[c];
    per_class.push_back({{"class", report.class_names[c]},
                         {"dice_loss", mean_std_json(cs.dice_loss)},
                         {"dice_loss_absent", mean_std_json(cs.dice_loss_absent)},
                         {"dice_loss_present", mean_std_json(cs.dice_loss_present)},
                         {"absent_slices", cs.absent_slices},
                         {"hallucination_rate", opt(cs.hallucination_rate)},
                         {"detection_auc", opt(cs.detection_auc)}});
  }
  std::set<std::pair<std::string, std::int64_t>> slices;
  for (const auto& r : report.records) slices.insert({r.subject_id, r.slice_index});
  const nlohmann::json j = {{"run_id", report.run_id},
                            {"gating_mode", to_string(report.gating_mode)},
                            {"gating_threshold", report.gating_threshold},
                            {"class_names", report.class_names},
                            {"records", s.records},
                            {"slices", slices.size()},
                            {"per_class", per_class},
                            {"overall",
                             {{"dice_loss", mean_std_json(s.dice_loss)},
                              {"dice_loss_absent", mean_std_json(s.dice_loss_absent)},
                              {"hallucination_rate", opt(s.hallucination_rate)},
                              {"mean_detection_auc", opt(s.mean_detection_auc)}}}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write summary " + path.string());
  os << j.dump(2) << "\n";
}

void write_report(const fs::path& dir, const RunReport& report) {
  fs::create_directories(dir);
  write_report_csv(dir / "report.csv", report);
  write_summary_json(dir / "summary.json", report);
}

RunReport read_report(const fs::path& dir) {
  const auto summary_path = dir / "summary.json", csv_path = dir / "report.csv";
  std::ifstream js(summary_path);
  if (!js) throw DataError("report summary not found: " + summary_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed report summary " + summary_path.string() + ": " + e.what());
  }
  RunReport r;
  r.run_id = j.at("run_id").get<std::string>();
  r.gating_mode = parse_gating_mode(j.at("gating_mode").get<std::string>());
  r.gating_threshold = j.at("gating_threshold").get<double>();
  r.class_names = j.at("class_names").get<std::vector<std::string>>();

  std::ifstream is(csv_path);
  if (!is) throw DataError("report records not found: " + csv_path.string());
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 9) throw DataError("report " + csv_path.string() + ": expected 9 columns in '" + line + "'");
    SliceMetricsRecord rec;
    rec.subject_id = cells[1];
    rec.slice_index = static_cast<std::int64_t>(parse_real(cells[2], csv_path));
    const auto it = std::find(r.class_names.begin(), r.class_names.end(), cells[3]);
    if (it == r.class_names.end()) throw DataError("report " + csv_path.string() + ": unknown class '" + cells[3] + "'");
    rec.class_id = it - r.class_names.begin();
    rec.presence_gt = parse_flag(cells[4], csv_path);
    rec.det_prob = parse_real(cells[5], csv_path);
    rec.dice_loss = parse_real(cells[6], csv_path);
    rec.predicted_any = parse_flag(cells[7], csv_path);
    rec.hallucinated = parse_flag(cells[8], csv_path);
    r.records.push_back(rec);
  }
  sort_records(r.records);
  r.summary = summarize(r.records, static_cast<std::int64_t>(r.class_names.size()));
  return r;
}

}  // namespace n2
