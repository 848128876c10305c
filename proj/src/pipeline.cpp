#include "mopflow/pipeline.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "mopflow/dataset_io.hpp"
#include "mopflow/evaluation.hpp"
#include "mopflow/image_codec.hpp"
#include "mopflow/imaging.hpp"
#include "mopflow/selftest.hpp"

namespace mopflow {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: invalid number for " + key + ": " + value);
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: invalid integer for " + key + ": " + value);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: invalid seed for " + key + ": " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw std::invalid_argument("config: expected true/false for " + key + ": " + value);
}

void apply_key(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "root") cfg.root = value;
  else if (key == "split") cfg.split = value;
  else if (key == "out") cfg.out = value;
  else if (key == "sequences") cfg.sequences = value;
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "flows_dir") cfg.flows_dir = value;
  else if (key == "checkpoint") cfg.checkpoint = value;
  else if (key == "pred_dir") cfg.pred_dir = value;
  else if (key == "gt_dir") cfg.gt_dir = value;
  else if (key == "energy.epsilon") cfg.energy.epsilon = parse_double(key, value);
  else if (key == "energy.lambda") cfg.energy.lambda = parse_double(key, value);
  else if (key == "solver.levels") cfg.solver.levels = parse_int(key, value);
  else if (key == "solver.steps_per_level") cfg.solver.steps_per_level = parse_int(key, value);
  else if (key == "solver.step_size") cfg.solver.step_size = parse_double(key, value);
  else if (key == "solver.adam_beta1") cfg.solver.adam_beta1 = parse_double(key, value);
  else if (key == "solver.adam_beta2") cfg.solver.adam_beta2 = parse_double(key, value);
  else if (key == "solver.occlusion_alpha1") cfg.solver.occlusion_alpha1 = parse_double(key, value);
  else if (key == "solver.occlusion_alpha2") cfg.solver.occlusion_alpha2 = parse_double(key, value);
  else if (key == "solver.bidirectional") cfg.solver.bidirectional = parse_bool(key, value);
  else if (key == "mop.threshold_mode") {
    if (value == "otsu") cfg.mop.threshold_mode = MopConfig::ThresholdMode::kOtsu;
    else if (value == "fixed") cfg.mop.threshold_mode = MopConfig::ThresholdMode::kFixed;
    else throw std::invalid_argument("config: mop.threshold_mode must be otsu or fixed");
  }
  else if (key == "mop.fixed_threshold") cfg.mop.fixed_threshold = parse_double(key, value);
  else if (key == "mop.morph_radius") cfg.mop.morph_radius = parse_int(key, value);
  else if (key == "mop.min_area") cfg.mop.min_area = parse_int(key, value);
  else if (key == "train.beta1") cfg.train.beta1 = parse_double(key, value);
  else if (key == "train.beta2") cfg.train.beta2 = parse_double(key, value);
  else if (key == "train.start_lr") cfg.train.start_lr = parse_double(key, value);
  else if (key == "train.decay_factor") cfg.train.decay_factor = parse_double(key, value);
  else if (key == "train.decay_interval") cfg.train.decay_interval = parse_int(key, value);
  else if (key == "train.iterations") cfg.train.iterations = parse_int(key, value);
  else if (key == "train.batch") cfg.train.batch = parse_int(key, value);
  else throw std::invalid_argument("config: unknown key " + key);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename F>
void parallel_for(std::size_t n, F&& body) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_limit()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto run = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// write-temp-then-rename so concurrent readers never see partial files
template <typename WriteFn>
void write_atomic(const fs::path& path, WriteFn&& write_fn) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  write_fn(tmp);
  fs::rename(tmp, path);
}

std::vector<SequenceEntry> select_sequences(const DatasetIndex& index,
                                            const std::string& filter) {
  if (filter.empty()) return index.sequences;
  std::vector<SequenceEntry> out;
  for (const std::string& name : split_csv(filter)) out.push_back(index.sequence(name));
  return out;
}

std::vector<std::string> list_sequence_dirs(const fs::path& root, const std::string& filter) {
  if (!fs::exists(root)) throw std::runtime_error("missing directory " + root.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  if (!filter.empty()) {
    const auto wanted = split_csv(filter);
    std::vector<std::string> filtered;
    for (const auto& name : wanted) {
      if (std::find(names.begin(), names.end(), name) == names.end())
        throw std::runtime_error("sequence " + name + " not found under " + root.string());
      filtered.push_back(name);
    }
    std::sort(filtered.begin(), filtered.end());
    return filtered;
  }
  return names;
}

std::vector<fs::path> list_files(const fs::path& dir, const char* ext) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

fs::path flows_root(const PipelineConfig& cfg) {
  return cfg.flows_dir.empty() ? fs::path(cfg.out) / "flow" : fs::path(cfg.flows_dir);
}

void require_root(const PipelineConfig& cfg, const char* stage) {
  if (cfg.root.empty())
    throw std::invalid_argument(std::string(stage) + ": dataset root not set (--root)");
}

}  // namespace

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value: " + stripped);
    apply_key(cfg, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return cfg;
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  out << "root = " << cfg.root << "\n";
  out << "split = " << cfg.split << "\n";
  out << "out = " << cfg.out << "\n";
  out << "sequences = " << cfg.sequences << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "flows_dir = " << cfg.flows_dir << "\n";
  out << "checkpoint = " << cfg.checkpoint << "\n";
  out << "pred_dir = " << cfg.pred_dir << "\n";
  out << "gt_dir = " << cfg.gt_dir << "\n";
  out << "energy.epsilon = " << fmt_double(cfg.energy.epsilon) << "\n";
  out << "energy.lambda = " << fmt_double(cfg.energy.lambda) << "\n";
  out << "solver.levels = " << cfg.solver.levels << "\n";
  out << "solver.steps_per_level = " << cfg.solver.steps_per_level << "\n";
  out << "solver.step_size = " << fmt_double(cfg.solver.step_size) << "\n";
  out << "solver.adam_beta1 = " << fmt_double(cfg.solver.adam_beta1) << "\n";
  out << "solver.adam_beta2 = " << fmt_double(cfg.solver.adam_beta2) << "\n";
  out << "solver.occlusion_alpha1 = " << fmt_double(cfg.solver.occlusion_alpha1) << "\n";
  out << "solver.occlusion_alpha2 = " << fmt_double(cfg.solver.occlusion_alpha2) << "\n";
  out << "solver.bidirectional = " << (cfg.solver.bidirectional ? "true" : "false") << "\n";
  out << "mop.threshold_mode = "
      << (cfg.mop.threshold_mode == MopConfig::ThresholdMode::kOtsu ? "otsu" : "fixed") << "\n";
  out << "mop.fixed_threshold = " << fmt_double(cfg.mop.fixed_threshold) << "\n";
  out << "mop.morph_radius = " << cfg.mop.morph_radius << "\n";
  out << "mop.min_area = " << cfg.mop.min_area << "\n";
  out << "train.beta1 = " << fmt_double(cfg.train.beta1) << "\n";
  out << "train.beta2 = " << fmt_double(cfg.train.beta2) << "\n";
  out << "train.start_lr = " << fmt_double(cfg.train.start_lr) << "\n";
  out << "train.decay_factor = " << fmt_double(cfg.train.decay_factor) << "\n";
  out << "train.decay_interval = " << cfg.train.decay_interval << "\n";
  out << "train.iterations = " << cfg.train.iterations << "\n";
  out << "train.batch = " << cfg.train.batch << "\n";
  return out.str();
}

int worker_limit() {
  if (const char* env = std::getenv("MOPFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

void run_flow(const PipelineConfig& cfg) {
  require_root(cfg, "flow");
  const DatasetIndex index = load_davis_index(
      cfg.root, cfg.split.empty() ? std::nullopt : std::make_optional<fs::path>(cfg.split));
  const auto sequences = select_sequences(index, cfg.sequences);

  struct Job {
    std::string seq;
    int t;
    std::string stem;
  };
  std::vector<Job> jobs;
  for (const auto& seq : sequences)
    for (int t = 0; t + 1 < static_cast<int>(seq.frames.size()); ++t)
      jobs.push_back({seq.name, t, seq.frames[static_cast<std::size_t>(t) + 1].stem().string()});

  const fs::path out_flow = fs::path(cfg.out) / "flow";
  const fs::path out_viz = fs::path(cfg.out) / "flowviz";
  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    // the flow for frame t+1 maps it onto its predecessor, so frame 0
    // (which has none) carries no flow
    auto [prev, cur] = load_frame_pair(index, job.seq, job.t);
    const Grid i1 = to_grayscale(cur).gray();
    const Grid i2 = to_grayscale(prev).gray();
    FlowField flow;
    if (cfg.solver.bidirectional) {
      flow = solve_bidirectional(i1, i2, cfg.energy, cfg.solver).forward;
    } else {
      flow = solve_pyramid(i1, i2, cfg.energy, cfg.solver);
    }
    write_atomic(out_flow / job.seq / (job.stem + ".flo"),
                 [&](const fs::path& p) { write_flo(p, flow); });
    const Image viz = flow_to_color(flow);
    write_atomic(out_viz / job.seq / (job.stem + ".png"),
                 [&](const fs::path& p) { write_png_rgb(p, viz); });
  });
}

void run_segment(const PipelineConfig& cfg) {
  const fs::path flows = flows_root(cfg);
  const auto seq_names = list_sequence_dirs(flows, cfg.sequences);
  const fs::path out_masks = fs::path(cfg.out) / "masks";

  struct Job {
    std::string seq;
    fs::path flo;
  };
  std::vector<Job> jobs;
  for (const auto& name : seq_names)
    for (const auto& flo : list_files(flows / name, ".flo")) jobs.push_back({name, flo});

  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const FlowField flow = read_flo(job.flo);
    const Grid mag = flow_magnitude(flow);
    const BinaryMask fg = foreground_threshold(mag, cfg.mop);
    const BinaryMask refined = refine_mask(fg, cfg.mop);
    const auto proposals = extract_proposals(refined, flow, cfg.mop);
    BinaryMask mask = BinaryMask::Constant(refined.rows(), refined.cols(), false);
    for (const auto& p : proposals) mask = mask || p.mask;
    write_atomic(out_masks / job.seq / (job.flo.stem().string() + ".png"),
                 [&](const fs::path& p) { write_mask_png(p, mask); });
  });
}

namespace {

// flows paired with same-stem annotations, resized onto the flow grid
std::vector<std::pair<FlowField, BinaryMask>> collect_training_pairs(const PipelineConfig& cfg) {
  require_root(cfg, "train");
  const DatasetIndex index = load_davis_index(
      cfg.root, cfg.split.empty() ? std::nullopt : std::make_optional<fs::path>(cfg.split));
  const fs::path flows = flows_root(cfg);
  const auto seq_names = list_sequence_dirs(flows, cfg.sequences);

  std::vector<std::pair<FlowField, BinaryMask>> pairs;
  for (const auto& name : seq_names) {
    const SequenceEntry& entry = index.sequence(name);
    std::map<std::string, fs::path> ann_by_stem;
    for (const auto& a : entry.annotations) ann_by_stem[a.stem().string()] = a;
    for (const auto& flo : list_files(flows / name, ".flo")) {
      const auto it = ann_by_stem.find(flo.stem().string());
      if (it == ann_by_stem.end())
        throw std::runtime_error("train: no annotation for " + flo.string());
      FlowField flow = read_flo(flo);
      if (flow.height() % 8 != 0 || flow.width() % 8 != 0) {
        const int rh = ((flow.height() + 7) / 8) * 8;
        const int rw = ((flow.width() + 7) / 8) * 8;
        flow = FlowField(resize_bilinear(flow.u, rh, rw), resize_bilinear(flow.v, rh, rw));
      }
      BinaryMask target = binarize_annotation(it->second);
      if (!same_shape(flow.u, target))
        target = resize_nearest(target, flow.height(), flow.width());
      pairs.emplace_back(std::move(flow), std::move(target));
    }
  }
  return pairs;
}

}  // namespace

void run_train(const PipelineConfig& cfg) {
  const auto pairs = collect_training_pairs(cfg);
  auto [params, losses] = train(pairs, cfg.train, cfg.seed);
  const fs::path out(cfg.out);
  write_atomic(out / "checkpoint.bin", [&](const fs::path& p) { save_checkpoint(p, params); });
  write_atomic(out / "train_loss.csv",
               [&](const fs::path& p) { write_loss_trace_csv(p, losses, cfg.train); });
}

void run_predict(const PipelineConfig& cfg) {
  const fs::path checkpoint =
      cfg.checkpoint.empty() ? fs::path(cfg.out) / "checkpoint.bin" : fs::path(cfg.checkpoint);
  const NetParams params = load_checkpoint(checkpoint);
  const fs::path flows = flows_root(cfg);
  const auto seq_names = list_sequence_dirs(flows, cfg.sequences);
  const fs::path out_pred = fs::path(cfg.out) / "pred";

  struct Job {
    std::string seq;
    fs::path flo;
  };
  std::vector<Job> jobs;
  for (const auto& name : seq_names)
    for (const auto& flo : list_files(flows / name, ".flo")) jobs.push_back({name, flo});

  parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const BinaryMask mask = predict_mask(params, read_flo(job.flo));
    write_atomic(out_pred / job.seq / (job.flo.stem().string() + ".png"),
                 [&](const fs::path& p) { write_mask_png(p, mask); });
  });
}

int run_eval(const PipelineConfig& cfg, std::ostream& out) {
  const fs::path pred_root =
      cfg.pred_dir.empty() ? fs::path(cfg.out) / "masks" : fs::path(cfg.pred_dir);
  const auto seq_names = list_sequence_dirs(pred_root, cfg.sequences);

  std::optional<DatasetIndex> index;
  if (cfg.gt_dir.empty()) {
    require_root(cfg, "eval");
    index = load_davis_index(
        cfg.root, cfg.split.empty() ? std::nullopt : std::make_optional<fs::path>(cfg.split));
  }

  std::map<std::string, std::pair<std::vector<BinaryMask>, std::vector<BinaryMask>>> results;
  for (const auto& name : seq_names) {
    std::vector<BinaryMask> pred, gt;
    for (const auto& png : list_files(pred_root / name, ".png")) {
      BinaryMask p = read_mask_png(png);
      BinaryMask g;
      if (!cfg.gt_dir.empty()) {
        const fs::path gt_path = fs::path(cfg.gt_dir) / name / png.filename();
        if (!fs::exists(gt_path))
          throw std::runtime_error("eval: missing ground truth " + gt_path.string());
        g = read_mask_png(gt_path);
      } else {
        const SequenceEntry& entry = index->sequence(name);
        const std::string stem = png.stem().string();
        fs::path ann;
        for (const auto& a : entry.annotations)
          if (a.stem().string() == stem) ann = a;
        if (ann.empty())
          throw std::runtime_error("eval: no annotation with stem " + stem + " in " + name);
        g = read_mask_png(ann);
      }
      if (!same_shape(p, g))
        g = resize_nearest(g, static_cast<int>(p.rows()), static_cast<int>(p.cols()));
      pred.push_back(std::move(p));
      gt.push_back(std::move(g));
    }
    if (pred.empty()) throw std::runtime_error("eval: no masks for sequence " + name);
    results[name] = {std::move(pred), std::move(gt)};
  }

  const EvalReport report = evaluate_dataset(results);
  const fs::path outdir(cfg.out);
  write_atomic(outdir / "report.csv", [&](const fs::path& p) { write_report_csv(p, report); });
  const std::string table = render_table(report);
  write_atomic(outdir / "report.txt", [&](const fs::path& p) {
    std::ofstream f(p);
    f << table;
  });
  out << table;
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"moving-object proposals from variational optical flow"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path, root, split, outdir, sequences;
  std::uint64_t seed = 0;
  auto* opt_config = app.add_option("--config", config_path, "configuration file");
  auto* opt_root = app.add_option("--root", root, "dataset root (DAVIS layout)");
  auto* opt_split = app.add_option("--split", split, "split list file");
  auto* opt_out = app.add_option("--out", outdir, "output directory");
  auto* opt_seed = app.add_option("--seed", seed, "seed for all randomness");
  auto* opt_sequences = app.add_option("--sequences", sequences, "comma-separated sequence filter");

  const char* names[] = {"flow", "segment", "train", "predict", "eval", "selftest"};
  const char* descs[] = {
      "estimate flow per frame pair; writes .flo and color PNG",
      "moving-object masks from flow files",
      "train the micro encoder-decoder on flows + annotations",
      "predict masks from a checkpoint",
      "IoU report from mask directories",
      "run the synthetic oracles",
  };
  for (std::size_t i = 0; i < 6; ++i) app.add_subcommand(names[i], descs[i]);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  std::string stage = "config";
  try {
    PipelineConfig cfg;
    if (opt_config->count()) cfg = load_config_file(config_path);
    if (opt_root->count()) cfg.root = root;
    if (opt_split->count()) cfg.split = split;
    if (opt_out->count()) cfg.out = outdir;
    if (opt_seed->count()) cfg.seed = seed;
    if (opt_sequences->count()) cfg.sequences = sequences;

    const auto subcommands = app.get_subcommands();
    stage = subcommands.at(0)->get_name();
    if (stage == "flow") run_flow(cfg);
    else if (stage == "segment") run_segment(cfg);
    else if (stage == "train") run_train(cfg);
    else if (stage == "predict") run_predict(cfg);
    else if (stage == "eval") return run_eval(cfg, out);
    else if (stage == "selftest") return run_selftest(cfg, out) ? 0 : 1;
    return 0;
  } catch (const std::exception& e) {
    err << "mopflow " << stage << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mopflow
