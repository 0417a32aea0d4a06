#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <set>

#include "config.hpp"
#include "json.hpp"
#include "swirl/baselines.hpp"
#include "swirl/environments.hpp"
#include "swirl/error.hpp"
#include "swirl/evaluation.hpp"
#include "swirl/io.hpp"
#include "swirl/parallel.hpp"
#include "swirl/random.hpp"
#include "swirl/trainer.hpp"

namespace swirl::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kManifestFormat = "swirl-manifest/1";
constexpr const char* kSegmentsFormat = "swirl-segments/1";

/// One model of the fit grid.
struct GridEntry {
  std::string name;  // "MaxEnt", "I-1", "S-2", ...
  FitConfig config;
  bool maxent = false;

  std::string stem() const {
    return maxent ? "MaxEnt-1-Z1"
                  : name + "-Z" + std::to_string(config.num_modes);
  }
  std::string report_model() const { return maxent ? "MaxEnt" : "SWIRL"; }
};

struct Experiment {
  std::string config_text;
  std::uint64_t seed = 0;
  fs::path output;
  std::size_t workers = 1;
  bool verbose = false;

  std::optional<GridworldSpec> gridworld;

  Index num_trajectories = 200;
  Index length = 500;
  double train_fraction = 0.8;
  fs::path train, test, truth;
  bool truth_explicit = false;
  std::string env_source = "auto";

  bool fit_present = false;
  std::vector<GridEntry> grid;
  int num_seeds = 20;
  int keep_top = 10;

  bool robustness = false;
  std::vector<double> fractions;
  std::vector<GridEntry> robustness_grid;
  std::uint64_t perturb_seed = 0;

  std::optional<fs::path> segment_fit;
  std::string segment_model = "S-2";
  Index segment_modes = 2;
  fs::path segment_data;
  fs::path segment_output;
};

void log(const Experiment& ex, const std::string& line) {
  static std::mutex mutex;
  if (!ex.verbose) return;
  std::lock_guard lock(mutex);
  std::cerr << "[swirl] " << line << '\n';
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

fs::path resolve(const fs::path& base, const std::string& value) {
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

Index positive_index(SectionReader& r, const std::string& key, std::int64_t fallback) {
  const std::int64_t v = r.integer(key, fallback);
  if (v < 1) throw ConfigError(key + " must be at least 1");
  return static_cast<Index>(v);
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* raw = std::getenv("SWIRL_SEED");
  if (!raw || !*raw) return fallback;
  const std::string s(raw);
  if (s.find_first_not_of("0123456789") != std::string::npos || s.size() > 19) {
    throw ConfigError("SWIRL_SEED must be a non-negative integer, got '" + s + "'");
  }
  return std::stoull(s);
}

GridworldSpec read_gridworld(SectionReader& r) {
  GridworldSpec g;
  g.width = positive_index(r, "width", static_cast<std::int64_t>(g.width));
  g.height = positive_index(r, "height", static_cast<std::int64_t>(g.height));
  g.home_state = static_cast<Index>(r.integer("home_state", static_cast<std::int64_t>(g.home_state)));
  g.water_state = static_cast<Index>(r.integer("water_state", static_cast<std::int64_t>(g.water_state)));
  g.p_switch_trigger = r.number("p_switch_trigger", g.p_switch_trigger);
  g.p_switch_elsewhere = r.number("p_switch_elsewhere", g.p_switch_elsewhere);
  g.gamma = r.number("gamma", g.gamma);
  g.alpha = r.number("alpha", g.alpha);
  g.reward_value = r.number("reward_value", g.reward_value);
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("[gridworld] ") + e.what());
  }
  return g;
}

FitConfig read_fit_config(SectionReader& r) {
  FitConfig c;
  c.gamma = r.number("gamma", c.gamma);
  c.alpha = r.number("alpha", c.alpha);
  c.em_iters = static_cast<int>(r.integer("em_iters", c.em_iters));
  c.softq_iters = static_cast<int>(r.integer("softq_iters", c.softq_iters));
  c.softq_tol = r.number("softq_tol", c.softq_tol);
  const std::string opt = r.string("optimizer", c.optimizer == Optimizer::kAdam ? "adam" : "gradient_ascent");
  if (opt == "adam") {
    c.optimizer = Optimizer::kAdam;
  } else if (opt == "gradient_ascent") {
    c.optimizer = Optimizer::kGradientAscent;
  } else {
    throw ConfigError("[fit] optimizer must be \"adam\" or \"gradient_ascent\", got \"" + opt + "\"");
  }
  c.learning_rate = r.number("learning_rate", c.learning_rate);
  c.lr_decay = r.number("lr_decay", c.lr_decay);
  c.m_step_steps = static_cast<int>(r.integer("m_step_steps", c.m_step_steps));
  c.max_backtracks = static_cast<int>(r.integer("max_backtracks", c.max_backtracks));
  c.reward_on_action = r.boolean("reward_on_action", c.reward_on_action);
  c.reward_l2 = r.number("reward_l2", c.reward_l2);
  c.tied_warmup = static_cast<int>(r.integer("tied_warmup", c.tied_warmup));
  c.sticky_init = r.number("sticky_init", c.sticky_init);
  c.reward_max_norm = r.number("reward_max_norm", c.reward_max_norm);
  c.transition_stickiness = r.number("transition_stickiness", c.transition_stickiness);
  c.tolerance = r.number("tolerance", c.tolerance);
  c.patience = static_cast<int>(r.integer("patience", c.patience));
  return c;
}

std::vector<GridEntry> build_grid(const std::vector<std::string>& models,
                                  const std::vector<Index>& mode_counts,
                                  const FitConfig& base, const std::string& where) {
  std::vector<GridEntry> grid;
  std::set<std::string> seen;
  for (const std::string& name : models) {
    std::vector<GridEntry> expanded;
    if (name == "MaxEnt") {
      GridEntry e{name, base, true};
      e.config.num_modes = 1;
      e.config.history_len = 1;
      e.config.variant = TransitionVariant::kStateIndependent;
      expanded.push_back(e);
    } else {
      std::pair<TransitionVariant, Index> parsed;
      try {
        parsed = parse_variant_name(name);
      } catch (const Error&) {
        throw ConfigError(where + " unknown model \"" + name +
                          "\" (expected MaxEnt or I-L / S-L such as S-2)");
      }
      for (Index z : mode_counts) {
        GridEntry e{name, base, false};
        e.config.variant = parsed.first;
        e.config.history_len = parsed.second;
        e.config.num_modes = z;
        expanded.push_back(e);
      }
    }
    for (GridEntry& e : expanded) {
      if (!seen.insert(e.stem()).second) throw ConfigError(where + " lists " + e.stem() + " twice");
      try {
        e.config.validate();
      } catch (const InvalidArgument& err) {
        throw ConfigError(where + " " + e.stem() + ": " + err.what());
      }
      grid.push_back(std::move(e));
    }
  }
  return grid;
}

Experiment load_experiment(const RunOptions& opts) {
  Experiment ex;
  if (!fs::exists(opts.config_path)) {
    throw ConfigError("config file not found: " + opts.config_path.string());
  }
  try {
    ex.config_text = read_text_file(opts.config_path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const ConfigDocument doc = ConfigDocument::parse(ex.config_text);
  const fs::path base = fs::absolute(opts.config_path).parent_path();

  static const std::set<std::string> known{"", "gridworld", "data", "fit", "evaluate", "segment"};
  for (const std::string& name : doc.section_names()) {
    if (!known.count(name)) throw ConfigError("unknown section [" + name + "]");
  }

  SectionReader root(doc, "");
  const std::int64_t config_seed = root.integer("seed", 0);
  if (config_seed < 0) throw ConfigError("seed must be non-negative");
  ex.seed = seed_from_env(static_cast<std::uint64_t>(config_seed));
  const fs::path config_output = resolve(base, root.string("output", "swirl-out"));
  ex.output = opts.output ? *opts.output : config_output;
  const std::int64_t workers = root.integer("workers", 1);
  if (workers < 1) throw ConfigError("workers must be at least 1");
  ex.workers = opts.workers ? *opts.workers : static_cast<std::size_t>(workers);
  if (ex.workers < 1) throw ConfigError("--workers must be at least 1");
  ex.verbose = opts.verbose;
  root.finish();

  SectionReader grid(doc, "gridworld");
  if (grid.present()) ex.gridworld = read_gridworld(grid);
  grid.finish();

  SectionReader data(doc, "data");
  ex.num_trajectories = positive_index(data, "num_trajectories", 200);
  ex.length = positive_index(data, "length", 500);
  ex.train_fraction = data.number("train_fraction", 0.8);
  if (!(ex.train_fraction > 0.0 && ex.train_fraction < 1.0)) {
    throw ConfigError("[data] train_fraction must lie in (0, 1)");
  }
  auto data_path = [&](const std::string& key, const std::string& file) {
    return data.has(key) ? resolve(base, data.string(key, "")) : ex.output / file;
  };
  ex.truth_explicit = data.has("truth");
  ex.train = data_path("train", "train.jsonl");
  ex.test = data_path("test", "test.jsonl");
  ex.truth = data_path("truth", "truth.json");
  ex.env_source = data.string("env", "auto");
  static const std::set<std::string> env_sources{"auto", "truth", "gridworld", "empirical"};
  if (!env_sources.count(ex.env_source)) {
    throw ConfigError("[data] env must be one of auto, truth, gridworld, empirical");
  }
  data.finish();

  SectionReader fit(doc, "fit");
  ex.fit_present = fit.present();
  const auto models = fit.strings("models", {"MaxEnt", "I-1", "I-2", "S-1", "S-2"});
  std::vector<Index> mode_counts;
  for (double z : fit.numbers("num_modes", {2})) {
    if (z < 1 || z != static_cast<double>(static_cast<Index>(z))) {
      throw ConfigError("[fit] num_modes entries must be positive integers");
    }
    mode_counts.push_back(static_cast<Index>(z));
  }
  ex.num_seeds = static_cast<int>(positive_index(fit, "num_seeds", 20));
  ex.keep_top = static_cast<int>(positive_index(fit, "keep_top", 10));
  if (ex.keep_top > ex.num_seeds) throw ConfigError("[fit] keep_top must not exceed num_seeds");
  FitConfig base_config = read_fit_config(fit);
  base_config.seed = ex.seed;
  fit.finish();
  ex.grid = build_grid(models, mode_counts, base_config, "[fit]");

  SectionReader eval(doc, "evaluate");
  ex.robustness = eval.boolean("robustness", false);
  ex.fractions = eval.numbers("fractions", {0.0, 0.05, 0.1, 0.2, 0.3, 0.5});
  for (double f : ex.fractions) {
    if (!(f >= 0.0 && f <= 0.5)) throw ConfigError("[evaluate] fractions must lie in [0, 0.5]");
  }
  const auto robust_models = eval.strings("robustness_models", {"S-2"});
  ex.perturb_seed = static_cast<std::uint64_t>(eval.integer("perturb_seed", 0));
  eval.finish();
  ex.robustness_grid = build_grid(robust_models, mode_counts, base_config, "[evaluate]");

  SectionReader seg(doc, "segment");
  if (seg.has("fit")) ex.segment_fit = resolve(base, seg.string("fit", ""));
  ex.segment_model = seg.string("model", "S-2");
  ex.segment_modes = positive_index(seg, "num_modes", 2);
  ex.segment_data = seg.has("data") ? resolve(base, seg.string("data", "")) : ex.test;
  ex.segment_output = seg.has("output") ? resolve(base, seg.string("output", ""))
                                        : ex.output / "segments.jsonl";
  seg.finish();
  return ex;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
}

std::string display_path(const Experiment& ex, const fs::path& p) {
  const fs::path rel = p.lexically_proximate(ex.output);
  return rel.empty() || rel.native().rfind("..", 0) == 0 ? p.string() : rel.string();
}

void write_manifest(const Experiment& ex, const std::string& command,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
  json doc;
  doc["format"] = kManifestFormat;
  doc["command"] = command;
  doc["config_hash"] = fnv1a_hex(ex.config_text);
  doc["seed"] = ex.seed;
  auto digests = [&](const std::vector<fs::path>& paths) {
    json arr = json::array();
    for (const fs::path& p : paths) {
      arr.push_back({{"path", display_path(ex, p)}, {"digest", fnv1a_hex(read_text_file(p))}});
    }
    return arr;
  };
  doc["inputs"] = digests(inputs);
  doc["outputs"] = digests(outputs);
  write_text_file(ex.output / (command + ".manifest.json"), doc.dump(2) + "\n");
}

IngestedData load_data(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw DataError("missing " + what + " data: " + path.string());
  return ingest_trajectories(path);
}

EnvKernel resolve_env(const Experiment& ex, const IngestedData& train) {
  std::string source = ex.env_source;
  if (source == "auto") {
    source = fs::exists(ex.truth) ? "truth" : ex.gridworld ? "gridworld" : "empirical";
  }
  EnvKernel env;
  if (source == "truth") {
    if (!fs::exists(ex.truth)) throw DataError("missing ground truth: " + ex.truth.string());
    env = ground_truth_from_json(read_text_file(ex.truth)).first.env;
  } else if (source == "gridworld") {
    if (!ex.gridworld) throw ConfigError("[data] env = \"gridworld\" needs a [gridworld] section");
    env = build_gridworld(*ex.gridworld).first.env;
  } else {
    env = empirical_env_kernel(train.file.trajectories, train.num_states, train.num_actions);
  }
  log(ex, "environment kernel from " + source);
  return env;
}

void check_spaces(const IngestedData& data, Index num_states, Index num_actions,
                  const std::string& what) {
  if (data.num_states > num_states || data.num_actions > num_actions ||
      (data.file.declared_states && *data.file.declared_states != num_states) ||
      (data.file.declared_actions && *data.file.declared_actions != num_actions)) {
    throw DataError(what + " has " + std::to_string(data.num_states) + " states and " +
                    std::to_string(data.num_actions) + " actions but the model expects " +
                    std::to_string(num_states) + " and " + std::to_string(num_actions));
  }
}

fs::path fit_path(const fs::path& dir, const GridEntry& entry, int k) {
  return dir / (entry.stem() + "-seed" + std::to_string(k) + ".json");
}

FitConfig seed_config(const GridEntry& entry, int k, std::size_t workers) {
  FitConfig c = entry.config;
  c.seed = entry.config.seed + static_cast<std::uint64_t>(k);
  c.workers = workers;
  return c;
}

FitResult load_fit(const fs::path& path, const FitConfig& expected) {
  FitResult r;
  try {
    r = fit_result_from_json(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (fit_config_to_json(r.config) != fit_config_to_json(expected)) {
    throw ConfigError("existing fit " + path.string() +
                      " was produced with different settings; remove it or use another output directory");
  }
  return r;
}

struct FitJob {
  const GridEntry* entry = nullptr;
  int seed_index = 0;
  fs::path path;
};

/// Fits every missing (entry, seed) file; present files are left untouched.
std::size_t run_fit_jobs(const Experiment& ex, const std::vector<FitJob>& all,
                         std::span<const Trajectory> data, const EnvKernel& env) {
  std::vector<FitJob> pending;
  for (const FitJob& job : all) {
    if (fs::exists(job.path)) {
      load_fit(job.path, seed_config(*job.entry, job.seed_index, 1));
    } else {
      pending.push_back(job);
    }
  }
  if (pending.empty()) return 0;
  ensure_directory(pending.front().path.parent_path());
  const std::size_t outer = std::min(ex.workers, pending.size());
  const std::size_t inner = std::max<std::size_t>(1, ex.workers / outer);
  parallel_for(pending.size(), outer, [&](std::size_t i) {
    const FitJob& job = pending[i];
    const FitConfig c = seed_config(*job.entry, job.seed_index, inner);
    log(ex, "fitting " + job.path.filename().string());
    FitResult r = job.entry->maxent ? fit_maxent(data, env, c) : fit(data, env, c);
    r.config.workers = 1;
    write_text_file(job.path, fit_result_to_json(r));
    log(ex, "wrote " + job.path.filename().string() + " train LL " +
                format_number(r.final_train_ll()));
  });
  return pending.size();
}

std::vector<FitJob> jobs_for(const Experiment& ex, const std::vector<GridEntry>& grid,
                             const fs::path& dir) {
  std::vector<FitJob> jobs;
  for (const GridEntry& e : grid) {
    for (int k = 0; k < ex.num_seeds; ++k) jobs.push_back({&e, k, fit_path(dir, e, k)});
  }
  return jobs;
}

std::vector<FitResult> load_entry(const Experiment& ex, const GridEntry& entry,
                                  const fs::path& dir, std::vector<fs::path>* inputs) {
  std::vector<FitResult> results;
  for (int k = 0; k < ex.num_seeds; ++k) {
    const fs::path p = fit_path(dir, entry, k);
    if (!fs::exists(p)) {
      throw DataError("missing fit result " + p.string() + " (run `swirl fit` first)");
    }
    results.push_back(load_fit(p, seed_config(entry, k, 1)));
    if (inputs) inputs->push_back(p);
  }
  return results;
}

fs::path fits_dir(const Experiment& ex) { return ex.output / "fits"; }

fs::path robustness_dir(const Experiment& ex, double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%g", fraction);
  return ex.output / "robustness" / buf;
}

}  // namespace

void cmd_simulate(const RunOptions& options) {
  const Experiment ex = load_experiment(options);
  if (!ex.gridworld) throw ConfigError("simulate needs a [gridworld] section");
  ensure_directory(ex.output);
  const auto [model, truth] = build_gridworld(*ex.gridworld);
  log(ex, "sampling " + std::to_string(ex.num_trajectories) + " trajectories");
  const SampledData sampled =
      sample_trajectories(model, ex.num_trajectories, ex.length, ex.seed, ex.workers);
  const auto [train_idx, test_idx] =
      train_test_split_indices(ex.num_trajectories, ex.train_fraction, derive_seed(ex.seed, 1));

  auto write_split = [&](const std::vector<Index>& idx, const fs::path& path,
                         const std::string& split) {
    std::vector<Trajectory> trajs;
    std::vector<std::vector<Index>> labels;
    for (Index i : idx) {
      trajs.push_back(sampled.trajectories[i]);
      labels.push_back(sampled.labels[i]);
    }
    ensure_directory(path.parent_path());
    write_text_file(path, trajectories_to_jsonl(trajs, labels, model.spaces.num_states,
                                                model.spaces.num_actions, split));
  };
  write_split(train_idx, ex.train, "train");
  write_split(test_idx, ex.test, "test");
  ensure_directory(ex.truth.parent_path());
  write_text_file(ex.truth, ground_truth_to_json(model, truth));
  write_manifest(ex, "simulate", {}, {ex.train, ex.test, ex.truth});
  std::cout << "simulate: " << ex.num_trajectories << " trajectories x " << ex.length
            << " steps, " << train_idx.size() << " train / " << test_idx.size()
            << " test, seed " << ex.seed << " -> " << ex.output.string() << '\n';
}

void cmd_fit(const RunOptions& options) {
  const Experiment ex = load_experiment(options);
  if (!ex.fit_present) throw ConfigError("fit needs a [fit] section");
  const IngestedData train = load_data(ex.train, "training");
  const EnvKernel env = resolve_env(ex, train);
  check_spaces(train, env.num_states(), env.num_actions(), ex.train.string());
  ensure_directory(fits_dir(ex));

  const auto jobs = jobs_for(ex, ex.grid, fits_dir(ex));
  const std::size_t fitted = run_fit_jobs(ex, jobs, train.file.trajectories, env);

  std::vector<fs::path> inputs{ex.train};
  if (fs::exists(ex.truth)) inputs.push_back(ex.truth);
  std::vector<fs::path> outputs;
  for (const GridEntry& e : ex.grid) {
    const auto results = load_entry(ex, e, fits_dir(ex), &outputs);
    const auto best = select_top(results, 1).front();
    std::cout << "fit: " << e.stem() << " best train LL " << format_number(best.final_train_ll())
              << " (seed " << best.seed << ", " << results.size() << " seeds)\n";
  }
  write_manifest(ex, "fit", inputs, outputs);
  std::cout << "fit: " << fitted << " new fits, " << jobs.size() - fitted << " reused -> "
            << fits_dir(ex).string() << '\n';
}

void cmd_evaluate(const RunOptions& options) {
  const Experiment ex = load_experiment(options);
  if (!ex.fit_present) throw ConfigError("evaluate needs the [fit] section that produced the fits");
  const IngestedData test = load_data(ex.test, "test");
  std::vector<fs::path> inputs{ex.test};

  std::optional<std::pair<DiscreteHmMdp, GroundTruth>> truth;
  if (fs::exists(ex.truth)) {
    truth = ground_truth_from_json(read_text_file(ex.truth));
    inputs.push_back(ex.truth);
  } else if (ex.truth_explicit) {
    throw DataError("missing ground truth: " + ex.truth.string());
  }
  EvaluationInputs eval;
  eval.test = test.file.trajectories;
  eval.test_labels = test.file.labels;
  if (truth) {
    eval.truth_model = &truth->first;
    eval.truth = &truth->second;
  }

  auto evaluate_all = [&](const std::vector<FitResult>& fits, const GridEntry& e, double f) {
    std::vector<FitReport> out(fits.size());
    parallel_for(fits.size(), ex.workers, [&](std::size_t k) {
      check_spaces(test, fits[k].model.spaces.num_states, fits[k].model.spaces.num_actions,
                   ex.test.string());
      out[k] = evaluate_fit(fits[k], e.report_model(), eval, f);
    });
    return out;
  };

  std::vector<FitReport> reports;
  std::vector<std::pair<std::string, std::vector<FitResult>>> kept;
  for (const GridEntry& e : ex.grid) {
    auto top = select_top(load_entry(ex, e, fits_dir(ex), &inputs), ex.keep_top);
    log(ex, "evaluating " + e.stem());
    const auto r = evaluate_all(top, e, 0.0);
    reports.insert(reports.end(), r.begin(), r.end());
    kept.emplace_back(e.stem(), std::move(top));
  }

  const fs::path dir = ex.output / "evaluate";
  ensure_directory(dir);
  const fs::path reports_csv = dir / "reports.csv";
  const fs::path comparison_csv = dir / "comparison.csv";
  const fs::path report_json = dir / "report.json";
  write_text_file(reports_csv, reports_to_csv(reports));
  const auto rows = compare_models(reports);
  write_text_file(comparison_csv, comparison_to_csv(rows));
  write_text_file(report_json, aggregate_to_json(aggregate_reports(reports), reports) + "\n");
  std::vector<fs::path> outputs{reports_csv, comparison_csv, report_json};

  if (ex.robustness) {
    const IngestedData train = load_data(ex.train, "training");
    const EnvKernel env = resolve_env(ex, train);
    check_spaces(train, env.num_states(), env.num_actions(), ex.train.string());
    std::vector<FitReport> robust_reports;
    for (const GridEntry& e : ex.robustness_grid) {
      std::vector<RobustnessPoint> curve;
      for (double f : ex.fractions) {
        std::vector<FitResult> fits;
        const auto reuse = std::find_if(kept.begin(), kept.end(),
                                        [&](const auto& k) { return k.first == e.stem(); });
        if (f == 0.0 && reuse != kept.end()) {
          fits = reuse->second;
        } else {
          const fs::path fdir = robustness_dir(ex, f);
          const auto perturbed = perturb_trajectories(train.file.trajectories, f, env.num_states(),
                                                      env.num_actions(), ex.perturb_seed);
          const std::vector<GridEntry> one{e};
          log(ex, "robustness " + e.stem() + " fraction " + format_number(f));
          run_fit_jobs(ex, jobs_for(ex, one, fdir), perturbed, env);
          fits = select_top(load_entry(ex, e, fdir, &inputs), ex.keep_top);
        }
        RobustnessPoint p;
        p.fraction = f;
        p.reports = evaluate_all(fits, e, f);
        robust_reports.insert(robust_reports.end(), p.reports.begin(), p.reports.end());
        curve.push_back(std::move(p));
      }
      const fs::path curve_csv = dir / ("robustness-" + e.stem() + ".csv");
      write_text_file(curve_csv, robustness_to_csv(curve));
      outputs.push_back(curve_csv);
      std::cout << "evaluate: robustness " << e.stem() << " -> " << curve_csv.string() << '\n';
    }
    const fs::path robust_csv = dir / "robustness-reports.csv";
    write_text_file(robust_csv, reports_to_csv(robust_reports));
    outputs.push_back(robust_csv);
  }

  write_manifest(ex, "evaluate", inputs, outputs);
  for (const MetricAggregate& a : aggregate_reports(reports)) {
    std::cout << "evaluate: " << a.label << " median test LL " << format_number(a.test_ll.median);
    if (a.reward_corr) std::cout << ", reward corr " << format_number(a.reward_corr->median);
    if (a.segmentation_accuracy) {
      std::cout << ", accuracy " << format_number(a.segmentation_accuracy->median);
    }
    std::cout << '\n';
  }
  std::cout << "evaluate: comparison table -> " << comparison_csv.string() << '\n';
}

void cmd_segment(const RunOptions& options) {
  const Experiment ex = load_experiment(options);
  std::vector<fs::path> inputs;
  FitResult chosen;
  std::string model_name;
  if (ex.segment_fit) {
    if (!fs::exists(*ex.segment_fit)) throw DataError("missing fit result " + ex.segment_fit->string());
    chosen = fit_result_from_json(read_text_file(*ex.segment_fit));
    inputs.push_back(*ex.segment_fit);
    model_name = ex.segment_fit->filename().string();
  } else {
    FitConfig base;
    auto grid = build_grid({ex.segment_model}, {ex.segment_modes}, base, "[segment]");
    const GridEntry& e = grid.front();
    std::vector<FitResult> found;
    for (int k = 0;; ++k) {
      const fs::path p = fit_path(fits_dir(ex), e, k);
      if (!fs::exists(p)) break;
      found.push_back(fit_result_from_json(read_text_file(p)));
      inputs.push_back(p);
    }
    if (found.empty()) {
      throw DataError("no fit results for " + e.stem() + " in " + fits_dir(ex).string());
    }
    chosen = select_top(std::move(found), 1).front();
    model_name = e.stem() + "-seed" + std::to_string(chosen.seed - ex.seed);
  }
  const IngestedData data = load_data(ex.segment_data, "segmentation");
  inputs.push_back(ex.segment_data);
  const DiscreteHmMdp& model = chosen.model;
  check_spaces(data, model.spaces.num_states, model.spaces.num_actions,
               ex.segment_data.string());

  SoftQOptions softq;
  softq.max_iters = chosen.config.softq_iters;
  softq.tol = chosen.config.softq_tol;
  const auto policies =
      solve_policies(model, augmented_env_kernel(model.env, model.spaces), softq, ex.workers);
  const auto& trajs = data.file.trajectories;
  std::vector<std::string> lines(trajs.size());
  parallel_for(trajs.size(), ex.workers, [&](std::size_t n) {
    const ModePosteriors post = forward_backward(trajs[n], model, policies);
    const Index Z = model.spaces.num_modes;
    json row;
    row["index"] = n;
    row["labels"] = map_segments(post);
    json marg = json::array();
    for (Index t = 0; t < trajs[n].length(); ++t) {
      marg.push_back(std::vector<double>(post.marginals.begin() + t * Z,
                                         post.marginals.begin() + (t + 1) * Z));
    }
    row["posteriors"] = std::move(marg);
    lines[n] = row.dump();
  });
  json header;
  header["format"] = kSegmentsFormat;
  header["num_modes"] = model.spaces.num_modes;
  header["model"] = model_name;
  std::string text = header.dump() + "\n";
  for (const std::string& l : lines) text += l + "\n";
  ensure_directory(ex.segment_output.parent_path());
  write_text_file(ex.segment_output, text);
  write_manifest(ex, "segment", inputs, {ex.segment_output});
  std::cout << "segment: " << trajs.size() << " trajectories labelled with " << model_name
            << " -> " << ex.segment_output.string() << '\n';
}

int exit_code_for_current_exception(std::string* message) {
  try {
    throw;
  } catch (const ConfigError& e) {
    *message = std::string("config error: ") + e.what();
    return 2;
  } catch (const InvalidArgument& e) {
    *message = std::string("config error: ") + e.what();
    return 2;
  } catch (const DataError& e) {
    *message = std::string("data error: ") + e.what();
    return 3;
  } catch (const NumericalError& e) {
    *message = std::string("numerical failure: ") + e.what();
    return 4;
  } catch (const fs::filesystem_error& e) {
    *message = std::string("data error: ") + e.what();
    return 3;
  } catch (const std::exception& e) {
    *message = std::string("error: ") + e.what();
    return 1;
  }
}

}  // namespace swirl::cli
