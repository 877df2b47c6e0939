#include "stbench/parallel.hpp"
#include "stbench/render.hpp"
#include "stbench/sweep.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace stb;
using nlohmann::json;

struct UsageError : StbError {
  using StbError::StbError;
};

GenConfig read_config(const std::string& path, std::optional<std::uint64_t> seed) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path);
  try {
    GenConfig cfg = load_gen_config(path);
    if (seed) cfg.seed = *seed;
    return cfg;
  } catch (const UsageError&) {
    throw;
  } catch (const StbError& e) {
    throw UsageError(std::string("invalid config ") + path + ": " + e.what());
  }
}

LoadedCube read_dataset(const std::string& path) {
  if (!std::filesystem::exists(path)) throw UsageError("dataset not found: " + path);
  LoadedCube lc = read_cube(path);
  if (!lc.masks) throw UsageError(path + ": dataset carries no ground-truth masks");
  return lc;
}

Experiment experiment_for(const LoadedCube& lc, const std::string& split) {
  if (!lc.cube.attrs.contains("split") || !lc.cube.attrs["split"].contains(split))
    throw UsageError("split '" + split + "' is missing from the dataset metadata");
  return prepare_experiment(lc.cube, *lc.masks, split);
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

void print_report(const SynthesisReport& r, const std::vector<std::string>& names) {
  std::printf("%-12s %10s\n", "mask", "percent");
  std::printf("%-12s %10.3f\n", "extreme", r.pct_extreme);
  std::printf("%-12s %10.3f\n", "correlated", r.pct_correlated);
  std::printf("%-12s %10.3f\n", "random", r.pct_random);
  std::printf("\n%-12s %12s %12s\n", "variable", "drivers", "random");
  for (std::size_t v = 0; v < names.size(); ++v)
    std::printf("%-12s %12lld %12lld\n", names[v].c_str(), static_cast<long long>(r.driver_counts[v]),
                static_cast<long long>(r.random_counts[v]));
  std::printf("\nconfig %s\n", r.config_hash.c_str());
}

void write_ledger(const std::filesystem::path& path, const std::vector<EventRecord>& ledger) {
  std::ofstream out(path);
  if (!out) throw StbError("cannot write " + path.string());
  for (const auto& rec : ledger) out << to_json(rec).dump() << "\n";
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw StbError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

struct ModelFlags {
  std::optional<int> steps;
  std::optional<double> lambda_driver;
  std::optional<double> lr;
  std::optional<int> features;
  std::optional<int> window;
  std::optional<int> batch;

  void add(CLI::App* app) {
    app->add_option("--steps", steps, "training steps (0 validates and reports initial losses)")->check(CLI::NonNegativeNumber);
    app->add_option("--lambda-driver", lambda_driver, "weight of the driver loss")->check(CLI::NonNegativeNumber);
    app->add_option("--lr", lr, "peak learning rate")->check(CLI::PositiveNumber);
    app->add_option("--features", features, "feature channels per variable")->check(CLI::PositiveNumber);
    app->add_option("--window", window, "temporal window length")->check(CLI::PositiveNumber);
    app->add_option("--batch", batch, "windows per step")->check(CLI::PositiveNumber);
  }
  ModelHyper resolve(std::uint64_t seed) const {
    ModelHyper hp;
    hp.seed = seed;
    if (steps) hp.steps = *steps;
    if (lambda_driver) hp.lambdas.driver = *lambda_driver;
    if (lr) hp.lr = *lr;
    if (features) hp.features = *features;
    if (window) hp.window = *window;
    if (batch) hp.batch = *batch;
    return hp;
  }
};

std::uint64_t dataset_seed(const LoadedCube& lc) {
  return lc.cube.attrs.contains("seed") ? lc.cube.attrs["seed"].get<std::uint64_t>() : 0;
}

std::vector<int> parse_counts(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    try {
      if (dots == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int a = std::stoi(item.substr(0, dots)), b = std::stoi(item.substr(dots + 2));
        if (b < a) throw UsageError("bad count range '" + item + "'");
        for (int c = a; c <= b; ++c) out.push_back(c);
      }
    } catch (const std::logic_error&) {
      throw UsageError("bad count list '" + spec + "'");
    }
  }
  if (out.empty()) throw UsageError("empty count list");
  return out;
}

void print_metrics(const SweepRow& row) {
  std::cout << metrics_csv_header() << "\n" << metrics_csv_row(row) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic spatio-temporal anomaly benchmark"};
  app.require_subcommand(1);
  int threads = 0;
  bool print_config = false;
  app.add_option("--threads", threads, "worker threads (default: STDC_THREADS or 1)")->check(CLI::PositiveNumber);
  app.add_flag("--print-effective-config", print_config, "print the resolved configuration and exit");

  std::string config_path, dataset_path, gen_out = "out", train_out = "run", plot_out = "plots", split = "val", csv_path, sweep_csv = "sweep.csv", checkpoint_path, detector;
  std::optional<std::uint64_t> seed;
  bool masks_only = false;
  ModelFlags mflags;

  auto* gen = app.add_subcommand("generate", "synthesize a dataset from a config");
  gen->add_option("config", config_path, "TOML or JSON config")->required();
  gen->add_option("--seed", seed, "override the config seed");
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_flag("--masks-only", masks_only, "only build masks and write the report");

  auto* tr = app.add_subcommand("train", "train the micro-model on a dataset");
  tr->add_option("dataset", dataset_path, "STDC dataset")->required();
  tr->add_option("--seed", seed, "training seed (default: dataset seed)");
  tr->add_option("--out", train_out, "output directory")->capture_default_str();
  tr->add_option("--split", split, "split scored after training")->default_val("val");
  mflags.add(tr);

  std::vector<std::string> detectors;
  auto* ev = app.add_subcommand("eval", "score a detector or checkpoint on one split");
  ev->add_option("dataset", dataset_path, "STDC dataset")->required();
  auto* det_opt = ev->add_option("--detector", detector, "naive, zscore, iforest, micro or oracle");
  ev->add_option("--checkpoint", checkpoint_path, "trained micro-model checkpoint")->excludes(det_opt);
  ev->add_option("--split", split, "val or test")->default_val("val");
  ev->add_option("--csv", csv_path, "append the metrics row to this CSV");
  ev->add_option("--seed", seed, "detector seed (default: dataset seed)");
  mflags.add(ev);

  std::string counts_spec = "1..6";
  auto* sw = app.add_subcommand("sweep", "score detectors across coupled-variable counts");
  sw->add_option("config", config_path, "base config")->required();
  sw->add_option("--counts", counts_spec, "counts, e.g. 1..6 or 1,3,5")->default_val("1..6");
  sw->add_option("--detectors", detectors, "detector names")->delimiter(',')->default_val("naive,zscore");
  sw->add_option("--split", split, "val or test")->default_val("val");
  sw->add_option("--csv", sweep_csv, "output CSV")->capture_default_str();
  sw->add_option("--seed", seed, "override the base seed");
  mflags.add(sw);

  std::vector<int> steps_to_plot;
  auto* pl = app.add_subcommand("plot", "render slices and overlays as PGM/PPM");
  pl->add_option("dataset", dataset_path, "STDC dataset")->required();
  pl->add_option("--time", steps_to_plot, "time steps to render")->required()->delimiter(',');
  pl->add_option("--out", plot_out, "image directory")->capture_default_str();
  pl->add_option("--checkpoint", checkpoint_path, "model for predicted drivers and extreme probability");
  pl->add_option("--detector", detector, "detector whose predictions are overlaid");
  pl->add_option("--split", split, "split whose climatology years are used")->default_val("val");
  pl->add_option("--seed", seed, "detector seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads > 0) set_thread_count(threads);

    if (gen->parsed()) {
      const GenConfig cfg = read_config(config_path, seed);
      if (print_config) {
        print_json(to_json(cfg));
        return 0;
      }
      std::filesystem::create_directories(gen_out);
      const std::filesystem::path dir(gen_out);
      if (masks_only) {
        const MaskPlan plan = synthesize_masks(cfg);
        SynthesisReport rep = ratio_report(plan.masks, plan.valid);
        rep.config_hash = config_hash(cfg);
        write_json(dir / "report.json", to_json(rep, cfg.names()));
        write_ledger(dir / "ledger.jsonl", plan.ledger);
        print_report(rep, cfg.names());
        return 0;
      }
      const Dataset ds = synthesize_dataset(cfg);
      write_cube(ds.cube, &ds.masks, dir / "dataset.stdc");
      json rep = to_json(ds.report, ds.cube.var_names);
      rep["payload_sha256"] = file_sha256(dir / "dataset.stdc");
      rep["coupling"] = ds.cube.attrs["coupling"];
      write_json(dir / "report.json", rep);
      write_ledger(dir / "ledger.jsonl", ds.ledger);
      print_report(ds.report, ds.cube.var_names);
      std::printf("wrote %s\n", (dir / "dataset.stdc").string().c_str());
      return 0;
    }

    if (tr->parsed()) {
      const LoadedCube lc = read_dataset(dataset_path);
      const ModelHyper hp = mflags.resolve(seed.value_or(dataset_seed(lc)));
      if (print_config) {
        print_json({{"dataset", dataset_path}, {"split", split}, {"model", to_json(hp)}});
        return 0;
      }
      const Experiment ex = experiment_for(lc, split);
      MicroModel model = init_model(lc.cube.dims().vars, hp);
      TrainData data{&ex.deseason.values, &lc.masks->extremes, &lc.cube.valid, ex.train_begin, ex.train_end};
      const int every = std::max(1, hp.steps / 20);
      TrainReport rep = train(model, data, [&](int step, const lfq::LossBreakdown& l) {
        if (step % every == 0)
          std::printf("step %5d  total %.4f  extreme %.4f  driver %.5f\n", step, l.total, l.extreme, l.driver);
      });
      const Inference inf = infer_drivers(model, ex.deseason.values, lc.cube.valid, ex.eval_begin, ex.eval_end);
      const auto drivers = evaluate_drivers(inf.drivers, eval_truth(ex), lc.cube.valid, split);
      const auto extremes = evaluate_extremes(inf.extreme_prob, slice_time(lc.masks->extremes, ex.eval_begin, ex.eval_end),
                                              lc.cube.valid, 0.5, split);
      rep.val_driver_f1 = drivers.score.f1;
      rep.val_extreme_f1 = extremes.score.f1;
      const std::filesystem::path dir(train_out);
      std::filesystem::create_directories(dir);
      save_checkpoint(model, dir / "model.ckpt", {{"dataset", dataset_path}});
      json j = to_json(rep);
      j["split"] = split;
      j["model"] = to_json(hp);
      j["parameter_sha256"] = parameter_hash(model);
      write_json(dir / "train_report.json", j);
      std::printf("%s driver F1 %.2f  extreme F1 %.2f  (%.1fs)\n", split.c_str(), rep.val_driver_f1,
                  rep.val_extreme_f1, rep.seconds);
      return 0;
    }

    if (ev->parsed()) {
      if (detector.empty() && checkpoint_path.empty()) throw UsageError("eval needs --detector or --checkpoint");
      const LoadedCube lc = read_dataset(dataset_path);
      DetectorSettings settings;
      settings.seed = seed.value_or(dataset_seed(lc));
      settings.model = mflags.resolve(settings.seed);
      if (print_config) {
        print_json({{"dataset", dataset_path},
                    {"split", split},
                    {"detector", detector.empty() ? "checkpoint" : detector},
                    {"checkpoint", checkpoint_path},
                    {"seed", settings.seed},
                    {"model", to_json(settings.model)}});
        return 0;
      }
      const Experiment ex = experiment_for(lc, split);
      SweepRow row{split, detector, 0, {}, {}};
      if (lc.cube.attrs.contains("coupling"))
        for (const auto& c : lc.cube.attrs["coupling"]) row.coupled_count += c.value("coupled", false) ? 1 : 0;
      if (!checkpoint_path.empty()) {
        if (!std::filesystem::exists(checkpoint_path)) throw UsageError("checkpoint not found: " + checkpoint_path);
        const MicroModel model = load_checkpoint(checkpoint_path);
        if (model.vars() != lc.cube.dims().vars) throw UsageError("checkpoint variable count does not match the dataset");
        row.detector = "checkpoint";
        const Inference inf = infer_drivers(model, ex.deseason.values, lc.cube.valid, ex.eval_begin, ex.eval_end);
        row.metrics = evaluate_drivers(inf.drivers, eval_truth(ex), lc.cube.valid, split);
      } else {
        row.metrics = evaluate_detector(detector, ex, settings);
      }
      if (!csv_path.empty()) append_metrics_csv(csv_path, {row});
      print_metrics(row);
      return 0;
    }

    if (sw->parsed()) {
      const GenConfig cfg = read_config(config_path, seed);
      SweepOptions opts;
      opts.counts = parse_counts(counts_spec);
      opts.detectors = detectors;
      opts.split = split;
      opts.settings.seed = cfg.seed;
      opts.settings.model = mflags.resolve(cfg.seed);
      for (int c : opts.counts)
        if (c < 0 || c > static_cast<int>(cfg.variables.size()))
          throw UsageError("coupled count " + std::to_string(c) + " outside [0, " +
                           std::to_string(cfg.variables.size()) + "]");
      if (print_config) {
        print_json({{"base", to_json(cfg)},
                    {"counts", opts.counts},
                    {"detectors", opts.detectors},
                    {"split", split},
                    {"model", to_json(opts.settings.model)}});
        return 0;
      }
      const auto rows = correlation_sweep(cfg, opts);
      append_metrics_csv(sweep_csv, rows);
      std::cout << metrics_csv_header() << "\n";
      int failed = 0;
      for (const auto& r : rows) {
        std::cout << metrics_csv_row(r) << "\n";
        if (!r.error.empty()) {
          std::cerr << r.detector << " @ " << r.coupled_count << ": " << r.error << "\n";
          ++failed;
        }
      }
      return failed == 0 ? 0 : 1;
    }

    if (pl->parsed()) {
      const LoadedCube lc = read_dataset(dataset_path);
      const Dims d = lc.cube.dims();
      for (int t : steps_to_plot)
        if (t < 0 || t >= d.time) throw UsageError("time step " + std::to_string(t) + " outside the series");
      if (print_config) {
        print_json({{"dataset", dataset_path}, {"time", steps_to_plot}, {"checkpoint", checkpoint_path},
                    {"detector", detector}, {"split", split}, {"out", plot_out}});
        return 0;
      }
      const std::filesystem::path dir(plot_out);
      const Experiment ex = experiment_for(lc, split);
      std::optional<MicroModel> model;
      if (!checkpoint_path.empty()) model = load_checkpoint(checkpoint_path);
      for (int t : steps_to_plot) {
        const std::string ts = std::to_string(t);
        for (Index v = 0; v < d.vars; ++v) {
          const Eigen::ArrayXd field = ex.deseason.values.slice(v, t).cast<double>();
          const std::string name = lc.cube.var_names[static_cast<std::size_t>(v)];
          render_slice(field, d.lat, d.lon, -3.0, 3.0, dir / (name + "_t" + ts + ".pgm"));
          const Eigen::ArrayXd gt = lc.masks->drivers.slice(v, t).cast<double>();
          render_slice(gt, d.lat, d.lon, 0.0, 1.0, dir / (name + "_drivers_t" + ts + ".pgm"));
        }
        const Eigen::ArrayXd ext = lc.masks->extremes.slice(0, t).cast<double>();
        render_slice(ext, d.lat, d.lon, 0.0, 1.0, dir / ("extremes_t" + ts + ".pgm"));
        MaskCube pred;
        if (model) {
          const Inference inf = infer_drivers(*model, ex.deseason.values, lc.cube.valid, t, t + 1);
          render_slice(inf.extreme_prob.slice(0, 0).cast<double>(), d.lat, d.lon, 0.0, 1.0,
                       dir / ("extreme_prob_t" + ts + ".pgm"));
          pred = inf.drivers;
        } else if (!detector.empty()) {
          Experiment one = ex;
          one.eval_begin = t;
          one.eval_end = t + 1;
          DetectorSettings settings;
          settings.seed = seed.value_or(dataset_seed(lc));
          pred = run_detector(detector, one, settings);
        }
        if (pred.size() > 0)
          for (Index v = 0; v < d.vars; ++v)
            render_overlay(pred.slice(v, 0).cast<double>(), lc.masks->drivers.slice(v, t).cast<double>(), d.lat, d.lon,
                           dir / (lc.cube.var_names[static_cast<std::size_t>(v)] + "_overlay_t" + ts + ".ppm"));
      }
      std::printf("wrote images to %s\n", dir.string().c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
