// stabscore command-line tool: keypoint scoring, ground-truth export, evaluation and experiments.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stabscore/stabscore.hpp"

namespace fs = std::filesystem;
using namespace stabscore;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitShortage = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyTaskSet : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  int n = kDefaultBudget;
  double beta = 2.828;
  int m = kDefaultSamples;
  std::string variant = "sqrt-second-moment";
  std::uint64_t seed = 0;
  double threshold = 3.0;
  double t_salient = 0.01;
  double t_noise = 1e-4;
  int threads = 0;  // 0: STABSCORE_THREADS or hardware concurrency

  std::string image;
  std::string keypoints;
  std::string pairs;
  std::string images;
  std::string out;
  bool strict = false;
  bool baseline = false;
  std::string betas = "1.189,1.414,1.681,2.0,2.378,2.828,3.363,4.0";
  int trials = 100;
  int synthetic = 0;
  int width = 320;
  int height = 240;
  double pair_beta = 2.828;
  double noise = 0.005;
};

int resolve_threads(int requested) {
  const int cap = default_thread_count();
  if (requested <= 0) return cap;
  return std::getenv("STABSCORE_THREADS") ? std::min(requested, cap) : requested;
}

EmeVariant resolve_variant(const std::string& name) {
  const auto v = parse_variant(name);
  if (!v) throw UsageError("unknown --variant '" + name + "'");
  return *v;
}

DetectOptions detect_options(const RunConfig& c) {
  if (c.n < 1) throw UsageError("--n must be >= 1");
  if (c.m < 2) throw UsageError("--m must be >= 2");
  DetectOptions d;
  d.n = c.n;
  d.beta.beta = c.beta;
  d.variant = resolve_variant(c.variant);
  d.samples = c.m;
  d.seed = c.seed;
  d.threads = resolve_threads(c.threads);
  try {
    d.beta.validate();
  } catch (const DomainError& e) {
    throw UsageError(std::string("--beta: ") + e.what());
  }
  return d;
}

ImageGray load_input_image(const std::string& path) {
  if (path.empty()) throw UsageError("--image is required");
  if (!fs::exists(path)) throw UsageError(path + ": image not found");
  try {
    return load_image(path);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("malformed list entry '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json metadata(const std::string& command, const RunConfig& c, int threads) {
  return {{"command", command}, {"timestamp", utc_timestamp()}, {"threads", threads}, {"seed", c.seed},
          {"version", "0.1.0"}};
}

std::string with_extension(const std::string& path, const std::string& ext) {
  return fs::path(path).replace_extension(ext).string();
}

void ensure_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void emit_report(const std::string& command, const ExperimentReport& rep, const RunConfig& c, int threads) {
  const std::string prefix = c.out.empty() ? "report" : c.out;
  ensure_parent(prefix);
  write_report_csv(prefix + ".csv", rep);
  write_report_json(prefix + ".json", rep, metadata(command, c, threads));
  std::cout << rep.experiment << ": " << rep.records.size() << " records";
  if (rep.skipped > 0) std::cout << ", " << rep.skipped << " skipped";
  std::cout << '\n';
  for (const auto& [k, v] : rep.summary) std::cout << "  " << k << " = " << fmt_num(v) << '\n';
  for (const auto& a : rep.aggregates)
    std::cout << "  beta=" << fmt_num(a.beta) << " " << a.variant << ": n=" << a.count
              << " corner_error_median=" << fmt_num(a.corner_error_median)
              << " repeatability_mean=" << fmt_num(a.repeatability_mean) << " mma_mean=" << fmt_num(a.mma_mean)
              << '\n';
  std::cout << "wrote " << prefix << ".csv, " << prefix << ".json\n";
}

std::vector<ImageGray> synthetic_sources(const RunConfig& c) {
  std::vector<ImageGray> out;
  SceneOptions so;
  so.width = c.width;
  so.height = c.height;
  so.shapes = std::max(10, c.width * c.height / 1200);
  so.texture_patches = std::max(2, c.width * c.height / 12000);
  for (int i = 0; i < c.synthetic; ++i) out.push_back(synthetic_scene(combine_ids(c.seed, static_cast<std::uint64_t>(i)), so));
  return out;
}

std::vector<ImagePairTask> gather_tasks(const RunConfig& c) {
  std::vector<ImagePairTask> tasks;
  if (!c.pairs.empty()) tasks = load_pairs(c.pairs);
  const auto sources = synthetic_sources(c);
  for (std::size_t i = 0; i < sources.size(); ++i)
    tasks.push_back(make_synthetic_pair(sources[i], c.pair_beta, c.noise, c.seed, i, "synthetic" + std::to_string(i)));
  if (tasks.empty()) throw EmptyTaskSet("no image pairs (use --pairs DIR or --synthetic N)");
  return tasks;
}

std::vector<ImageGray> gather_sources(const RunConfig& c) {
  std::vector<ImageGray> sources;
  if (!c.pairs.empty())
    for (auto& t : load_pairs(c.pairs)) sources.push_back(std::move(t.a));
  if (!c.images.empty()) {
    if (!fs::is_directory(c.images)) throw IoError(c.images + ": image directory not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(c.images)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".png" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) sources.push_back(load_image(f.string()));
  }
  for (auto& s : synthetic_sources(c)) sources.push_back(std::move(s));
  if (sources.empty()) throw EmptyTaskSet("no source images (use --pairs, --images or --synthetic)");
  return sources;
}

ExperimentOptions experiment_options(const RunConfig& c) {
  ExperimentOptions opt;
  opt.detect = detect_options(c);
  opt.beta_pair = c.pair_beta;
  opt.noise_sigma = c.noise;
  if (!(c.threshold > 0.0)) throw UsageError("--threshold must be > 0");
  opt.threshold = c.threshold;
  opt.ransac.threshold = c.threshold;
  opt.ransac.seed = c.seed;
  return opt;
}

int cmd_detect(const RunConfig& c) {
  const DetectOptions opt = detect_options(c);
  const ImageGray img = load_input_image(c.image);
  const DetectResult res = c.baseline ? detect_shi_tomasi(img, opt) : detect(img, opt);
  const std::string out = c.out.empty() ? "detections.csv" : c.out;
  ensure_parent(out);
  write_detections_csv(out, res.keypoints);
  write_detections_binary(with_extension(out, ".bin"), res.keypoints);
  if (!c.baseline) write_estimates_csv(with_extension(out, ".estimates.csv"), res.keypoints);
  std::cout << res.keypoints.size() << " keypoints written to " << out << '\n';
  if (res.shortage) {
    std::cerr << "warning: only " << res.keypoints.size() << " of " << opt.n << " requested keypoints available\n";
    if (c.strict) return kExitShortage;
  }
  return kExitOk;
}

int cmd_score(const RunConfig& c) {
  const DetectOptions opt = detect_options(c);
  const ImageGray img = load_input_image(c.image);
  if (c.keypoints.empty()) throw UsageError("--keypoints is required");
  if (!fs::exists(c.keypoints)) throw UsageError(c.keypoints + ": keypoint file not found");
  auto kps = read_keypoints_csv(c.keypoints);
  const ScoreMap s = response(img);
  for (auto& k : kps) {
    const int x = static_cast<int>(std::lround(k.pos.x())), y = static_cast<int>(std::lround(k.pos.y()));
    if (x >= 0 && y >= 0 && x < img.width() && y < img.height()) k.s = s(x, y);
  }
  const auto scored = score_keypoints(img, kps, opt);
  const std::string out = c.out.empty() ? "estimates.csv" : c.out;
  ensure_parent(out);
  write_estimates_csv(out, scored);
  std::cout << scored.size() << " of " << kps.size() << " keypoints scored (" << kps.size() - scored.size()
            << " too close to the border), written to " << out << '\n';
  return kExitOk;
}

int cmd_gt_export(const RunConfig& c) {
  const DetectOptions d = detect_options(c);
  GroundTruthOptions opt;
  opt.n = d.n;
  opt.beta = d.beta;
  opt.samples = d.samples;
  opt.seed = d.seed;
  opt.threads = d.threads;
  opt.thresholds = Thresholds{c.t_salient, c.t_noise};
  try {
    opt.thresholds.validate();
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  const ImageGray img = load_input_image(c.image);
  const auto recs = export_ground_truth(img, opt);
  const std::string out = c.out.empty() ? "ground_truth.csv" : c.out;
  ensure_parent(out);
  write_ground_truth_csv(out, recs);
  std::size_t noise = 0;
  for (const auto& r : recs) noise += r.cls == GtClass::kNoise ? 1 : 0;
  std::cout << recs.size() - noise << " salient and " << noise << " noise records (t_salient=" << fmt_num(c.t_salient)
            << ", t_noise=" << fmt_num(c.t_noise) << ") written to " << out << '\n';
  return kExitOk;
}

// Per-pair evaluation: repeatability, MMA, or homography corner error.
int cmd_eval(const std::string& command, const RunConfig& c) {
  const ExperimentOptions opt = experiment_options(c);
  const auto tasks = gather_tasks(c);
  DetectOptions inner = opt.detect;
  inner.threads = 1;
  ExperimentReport rep;
  rep.experiment = command;
  rep.records.resize(tasks.size());
  parallel_for(tasks.size(), opt.detect.threads, [&](std::size_t i) {
    const auto& task = tasks[i];
    auto run = [&](const ImageGray& img) {
      return positions(c.baseline ? detect_shi_tomasi(img, inner).keypoints : detect(img, inner).keypoints);
    };
    const auto ka = run(task.a), kb = run(task.b);
    TrialRecord& r = rep.records[i];
    r.trial = static_cast<int>(i);
    r.task = task.name;
    r.beta = inner.beta.beta;
    r.variant = c.baseline ? "shi-tomasi" : std::string(to_string(inner.variant));
    if (command == "eval-rep") {
      r.repeatability = repeatability(ka, kb, task.h_ab, opt.threshold, {task.a.width(), task.a.height()},
                                      {task.b.width(), task.b.height()});
      return;
    }
    const auto matches = match_ncc(task.a, ka, task.b, kb, opt.ncc);
    r.correspondences = static_cast<int>(matches.size());
    r.mma = mma(matches, task.h_ab, opt.threshold);
    if (command == "eval-mma") return;
    const auto corrs = to_correspondences(matches);
    const RansacResult rr = ransac(corrs, opt.ransac);
    r.inliers = rr.num_inliers;
    r.corner_error = std::numeric_limits<double>::infinity();
    if (rr.success()) r.corner_error = corner_error(*rr.h, task.h_ab, task.a.width(), task.a.height());
  });
  rep.aggregates = aggregate(rep.records);
  emit_report(command, rep, c, opt.detect.threads);
  return kExitOk;
}

int cmd_synth_pairs(const RunConfig& c) {
  if (c.synthetic < 1) throw UsageError("--synthetic must be >= 1");
  const std::string dir = c.out.empty() ? "pairs" : c.out;
  const auto tasks = gather_tasks(c);
  for (const auto& t : tasks) save_pair(dir, t);
  std::cout << tasks.size() << " pairs written to " << dir << '\n';
  return kExitOk;
}

int cmd_experiment(const std::string& which, const RunConfig& c) {
  const ExperimentOptions opt = experiment_options(c);
  ExperimentReport rep;
  if (which == "beta-sweep") {
    const auto betas = parse_list(c.betas);
    for (double b : betas)
      if (!(b >= 1.0)) throw UsageError("--betas entries must be >= 1");
    rep = run_beta_sweep(gather_tasks(c), betas, opt);
  } else if (which == "detector-comparison") {
    rep = run_detector_comparison(gather_tasks(c), opt);
  } else if (which == "eme-accuracy") {
    if (c.trials < 1) throw UsageError("--trials must be >= 1");
    rep = run_eme_vs_accuracy(gather_sources(c), c.trials, opt);
  } else {
    throw UsageError("unknown experiment '" + which + "'");
  }
  emit_report("experiment " + which, rep, c, opt.detect.threads);
  return kExitOk;
}

void add_detector_options(CLI::App& app, RunConfig& c) {
  app.add_option("--n", c.n, "keypoint budget")->capture_default_str();
  app.add_option("--beta", c.beta, "difficulty budget of the synthetic homographies (>= 1)")->capture_default_str();
  app.add_option("--m", c.m, "Monte-Carlo samples per keypoint")->capture_default_str();
  app.add_option("--variant", c.variant, "mean-dist | second-moment | sqrt-second-moment | spectral-bound")
      ->capture_default_str();
  app.add_option("--seed", c.seed, "global seed")->capture_default_str();
  app.add_option("--threads", c.threads, "worker threads (default: STABSCORE_THREADS or all cores)");
}

void add_pair_sources(CLI::App& app, RunConfig& c) {
  app.add_option("--pairs", c.pairs, "directory of pairs/<name>/{a.png,b.png,H_ab.txt}");
  app.add_option("--synthetic", c.synthetic, "number of procedural scenes to add as synthetic pairs");
  app.add_option("--width", c.width, "synthetic scene width")->capture_default_str();
  app.add_option("--height", c.height, "synthetic scene height")->capture_default_str();
  app.add_option("--pair-beta", c.pair_beta, "difficulty of generated evaluation homographies")->capture_default_str();
  app.add_option("--noise", c.noise, "sensor noise sigma for synthetic views")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint stability scoring and two-view homography evaluation"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "key = value configuration file (command-line flags take precedence)");
  RunConfig c;
  add_detector_options(app, c);
  app.add_option("--threshold", c.threshold, "pixel threshold for repeatability, MMA and RANSAC")->capture_default_str();
  app.add_option("--t-salient", c.t_salient, "response above which candidates are salient")->capture_default_str();
  app.add_option("--t-noise", c.t_noise, "response below which candidates are noise")->capture_default_str();
  app.add_option("--out", c.out, "output file (or prefix for reports)");

  auto* detect_cmd = app.add_subcommand("detect", "rank keypoints of an image by stability score");
  detect_cmd->add_option("--image", c.image, "input PNG or PGM");
  detect_cmd->add_flag("--strict", c.strict, "exit with status 3 when fewer than n keypoints are found");
  detect_cmd->add_flag("--shi-tomasi", c.baseline, "rank by raw response instead (baseline)");

  auto* score_cmd = app.add_subcommand("score", "estimate beta-EME for given keypoints");
  score_cmd->add_option("--image", c.image, "input PNG or PGM");
  score_cmd->add_option("--keypoints", c.keypoints, "CSV with x,y columns");

  auto* gt_cmd = app.add_subcommand("gt-export", "export ground-truth records for training");
  gt_cmd->add_option("--image", c.image, "input PNG or PGM");

  std::vector<std::pair<std::string, CLI::App*>> evals;
  for (const char* name : {"eval-rep", "eval-mma", "bench-h"}) {
    const std::string desc = std::string(name) == "eval-rep"   ? "repeatability over image pairs"
                             : std::string(name) == "eval-mma" ? "NCC matching accuracy over image pairs"
                                                               : "RANSAC homography corner error over image pairs";
    auto* sub = app.add_subcommand(name, desc);
    add_pair_sources(*sub, c);
    sub->add_flag("--shi-tomasi", c.baseline, "rank by raw response instead (baseline)");
    evals.emplace_back(name, sub);
  }

  auto* synth_cmd = app.add_subcommand("synth-pairs", "write procedural image pairs with ground truth");
  add_pair_sources(*synth_cmd, c);

  auto* exp_cmd = app.add_subcommand("experiment", "run an experiment");
  exp_cmd->require_subcommand(1);
  std::vector<std::pair<std::string, CLI::App*>> experiments;
  for (const char* name : {"beta-sweep", "eme-accuracy", "detector-comparison"}) {
    auto* sub = exp_cmd->add_subcommand(name);
    add_pair_sources(*sub, c);
    experiments.emplace_back(name, sub);
  }
  experiments[0].second->add_option("--betas", c.betas, "comma-separated beta grid")->capture_default_str();
  experiments[1].second->add_option("--trials", c.trials, "number of paired trials")->capture_default_str();
  experiments[1].second->add_option("--images", c.images, "directory of source images");

  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    for (auto* inner : sub->get_subcommands({})) inner->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (detect_cmd->parsed()) return cmd_detect(c);
    if (score_cmd->parsed()) return cmd_score(c);
    if (gt_cmd->parsed()) return cmd_gt_export(c);
    if (synth_cmd->parsed()) return cmd_synth_pairs(c);
    for (const auto& [name, sub] : evals)
      if (sub->parsed()) return cmd_eval(name, c);
    for (const auto& [name, sub] : experiments)
      if (sub->parsed()) return cmd_experiment(name, c);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const EmptyTaskSet& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
