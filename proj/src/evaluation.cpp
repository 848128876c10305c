#include "mopflow/evaluation.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mopflow {

const std::vector<std::pair<std::string, double>>& EvalReport::baselines() {
  static const std::vector<std::pair<std::string, double>> table = {
      {"PCM", 40.1}, {"CVOS", 48.2}, {"KEY", 49.8},
      {"NLC", 55.1}, {"FST", 55.8}, {"PaperOurs", 41.9},
  };
  return table;
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("iou: mask shapes differ");
  long inter = 0, uni = 0;
  for (long y = 0; y < a.rows(); ++y)
    for (long x = 0; x < a.cols(); ++x) {
      const bool av = a(y, x), bv = b(y, x);
      inter += av && bv;
      uni += av || bv;
    }
  if (uni == 0) return 1.0;  // both empty: a correct "no object" prediction
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double evaluate_sequence(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("evaluate_sequence: frame count mismatch");
  if (pred.empty()) throw std::invalid_argument("evaluate_sequence: empty sequence");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += iou(pred[i], gt[i]);
  return sum / static_cast<double>(pred.size());
}

EvalReport evaluate_dataset(
    const std::map<std::string, std::pair<std::vector<BinaryMask>, std::vector<BinaryMask>>>&
        results) {
  if (results.empty()) throw std::invalid_argument("evaluate_dataset: no sequences");
  EvalReport report;
  double sum = 0.0;
  for (const auto& [name, masks] : results) {
    const double s = evaluate_sequence(masks.first, masks.second);
    report.per_sequence[name] = s;
    sum += s;
  }
  report.mean_iou = sum / static_cast<double>(results.size());
  return report;
}

std::string render_table(const EvalReport& report) {
  std::ostringstream out;
  char buf[64];
  out << "Measure";
  for (const auto& [name, value] : EvalReport::baselines()) out << " | " << name;
  out << " | Ours\n";
  out << "Mean IOU";
  for (const auto& [name, value] : EvalReport::baselines()) {
    std::snprintf(buf, sizeof(buf), " | %.1f", value);
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), " | %.1f\n\n", report.mean_iou * 100.0);
  out << buf;
  out << "Per-sequence IoU:\n";
  for (const auto& [name, value] : report.per_sequence) {
    std::snprintf(buf, sizeof(buf), "  %-24s %.4f\n", name.c_str(), value);
    out << buf;
  }
  return out.str();
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_report_csv: cannot open " + path.string());
  f << "sequence,iou\n";
  char buf[80];
  for (const auto& [name, value] : report.per_sequence) {
    std::snprintf(buf, sizeof(buf), ",%.17g\n", value);
    f << name << buf;
  }
  std::snprintf(buf, sizeof(buf), "MEAN,%.17g\n", report.mean_iou);
  f << buf;
}

EvalReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_report_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "sequence,iou")
    throw std::runtime_error("read_report_csv: bad header in " + path.string());
  EvalReport report;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw std::runtime_error("read_report_csv: malformed row: " + line);
    const std::string name = line.substr(0, comma);
    const double value = std::stod(line.substr(comma + 1));
    if (name == "MEAN")
      report.mean_iou = value;
    else
      report.per_sequence[name] = value;
  }
  return report;
}

}  // namespace mopflow
