#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mopflow/flow_solver.hpp"
#include "mopflow/mop.hpp"
#include "mopflow/segnet_micro.hpp"

namespace mopflow {

// Flat `key = value` configuration with section prefixes
// (energy.lambda, solver.levels, ...). Unknown keys are rejected.
struct PipelineConfig {
  std::string root;
  std::string split;
  std::string out = "out";
  std::string sequences;  // comma-separated filter; empty = all
  std::uint64_t seed = 0;

  // stage plumbing; empty values fall back to paths under `out`
  std::string flows_dir;
  std::string checkpoint;
  std::string pred_dir;
  std::string gt_dir;

  EnergyConfig energy;
  SolverConfig solver;
  MopConfig mop;
  TrainConfig train;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

PipelineConfig parse_config_text(const std::string& text);
PipelineConfig load_config_file(const std::string& path);
std::string dump_config(const PipelineConfig& cfg);

// Worker cap: MOPFLOW_THREADS when set, else hardware concurrency.
int worker_limit();

void run_flow(const PipelineConfig& cfg);
void run_segment(const PipelineConfig& cfg);
void run_train(const PipelineConfig& cfg);
void run_predict(const PipelineConfig& cfg);
int run_eval(const PipelineConfig& cfg, std::ostream& out);
bool run_selftest(const PipelineConfig& cfg, std::ostream& out);

// argv-style entry point shared by the binary and the tests.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mopflow
