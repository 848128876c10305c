#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mopflow/types.hpp"

namespace mopflow {

struct EvalReport {
  std::map<std::string, double> per_sequence;  // mean IoU per sequence, in [0,1]
  double mean_iou = 0.0;

  // Reference mean-IoU constants, in percent.
  static const std::vector<std::pair<std::string, double>>& baselines();
};

// |A intersect B| / |A union B|; 1.0 when both masks are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

// Mean of per-frame IoU.
double evaluate_sequence(const std::vector<BinaryMask>& pred, const std::vector<BinaryMask>& gt);

EvalReport evaluate_dataset(
    const std::map<std::string, std::pair<std::vector<BinaryMask>, std::vector<BinaryMask>>>&
        results);

// Plain-text comparison table listing the baselines next to this run.
std::string render_table(const EvalReport& report);

void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report_csv(const std::filesystem::path& path);

}  // namespace mopflow
