#include "cli.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "crashformer/checkpoint.hpp"
#include "crashformer/config.hpp"
#include "crashformer/error.hpp"
#include "crashformer/experiment.hpp"
#include "crashformer/metrics.hpp"
#include "crashformer/pipeline.hpp"
#include "crashformer/report.hpp"
#include "crashformer/synth.hpp"
#include "crashformer/tiles.hpp"

namespace crashformer::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool offline = false;
};

void write_json(const fs::path& path, const json& j) {
  std::vector<std::uint8_t> bytes;
  const auto text = j.dump(2) + "\n";
  bytes.assign(text.begin(), text.end());
  tiles::atomic_write(path.string(), bytes);
}

json load_report_json(const ingest::LoadReport& r) {
  return {{"accepted", r.accepted}, {"rejected", r.rejected}, {"diagnostics", r.diagnostics}};
}

class Runner {
 public:
  Runner(const Globals& g, std::ostream& err) : g_(g), err_(err) {}

  config::RunConfig resolve() {
    auto cfg = g_.config_path.empty() ? config::parse_config("{}") : config::load_config(g_.config_path);
    cfg = config::apply_overrides(cfg, g_.overrides);
    if (g_.seed) config::set_seed(cfg, *g_.seed);
    if (g_.offline) cfg.geoindex.tile_source = "offline";
    config::apply_environment(cfg);
    cfg.validate();
    return cfg;
  }

  fs::path out_dir() const {
    if (g_.out.empty()) throw ValidationError("--out is required");
    return fs::path(g_.out);
  }

  pipeline::Log logger() {
    return [this](const std::string& m) { log(m); };
  }

  void log(const std::string& m) { err_ << "crashformer: " << m << "\n" << std::flush; }

  void ingest() {
    const auto cfg = resolve();
    const auto out = out_dir();
    config::echo_config(cfg, out.string());
    const auto raw = pipeline::load_raw(cfg, logger());
    const auto grid = pipeline::make_grid(cfg, raw.accidents.records);
    std::vector<geo::RegionId> regions;
    for (const auto& a : raw.accidents.records) regions.push_back(grid.locate_region(a.lat, a.lon));
    std::sort(regions.begin(), regions.end());
    regions.erase(std::unique(regions.begin(), regions.end()), regions.end());
    log(std::to_string(regions.size()) + " regions with accidents");

    json summary;
    summary["accidents"] = load_report_json(raw.accidents.report);
    summary["weather"] = load_report_json(raw.weather.report);
    summary["demographics"] = load_report_json(raw.demographics.report);
    summary["grid_origin"] = {grid.origin().lat, grid.origin().lon};
    summary["regions"] = regions.size();
    write_json(out / "ingest.json", summary);
    pipeline::fetch_tiles(cfg, grid, regions, logger());
  }

  void featurize() {
    const auto cfg = resolve();
    const auto out = out_dir();
    config::echo_config(cfg, out.string());
    const auto raw = pipeline::load_raw(cfg, logger());
    featurize::BuildStats stats;
    const auto table = pipeline::featurize_city(cfg, raw, &stats);
    featurize::write_feature_table(table, out.string());
    log("feature table: " + std::to_string(table.n_regions()) + " regions x " + std::to_string(table.n_windows) +
        " windows, " + std::to_string(stats.accidents_outside_period) + " accidents outside the period");
  }

  void build_dataset() {
    const auto cfg = resolve();
    const auto out = out_dir();
    config::echo_config(cfg, out.string());
    const auto inputs = pipeline::city_inputs(cfg, logger());
    const auto c = dataset::build_container(inputs, cfg.model.K, pipeline::split_spec(cfg, inputs.table),
                                            cfg.weight_override());
    dataset::write_dataset(c, out.string());
    const auto stats = dataset::stats_report(c.samples);
    log("dataset: " + std::to_string(stats.samples) + " samples, " + std::to_string(stats.positives) +
        " positive (" + std::to_string(stats.positive_percent_2dp()) + "%)");
  }

  void train(const std::string& kind) {
    const auto cfg = resolve();
    const auto out = out_dir();
    if (cfg.paths.dataset.empty()) throw ValidationError("paths.dataset is not set (use --dataset)");
    config::echo_config(cfg, out.string());
    const auto data = dataset::read_dataset(cfg.paths.dataset);
    if (data.K != cfg.model.K) {
      throw ValidationError("dataset was built with K=" + std::to_string(data.K) + " but model.K=" +
                            std::to_string(cfg.model.K));
    }
    auto model = model::make_classifier(kind, cfg.model);
    const bool images = kind == "crashformer" && cfg.model.use_img;
    const auto bank = images ? train::ImageBank::load(data, cfg.model.img_size) : train::ImageBank{};
    auto tcfg = cfg.train;
    tcfg.class_weights = data.class_weights;
    train::ClassifierTrainable trainable(*model, data, bank, data.class_weights);
    const auto result = train::train_loop(trainable, data.split.indices(dataset::Part::train),
                                          data.split.indices(dataset::Part::val), tcfg,
                                          [this](const train::EpochRecord& e) {
                                            log("epoch " + std::to_string(e.epoch) + " train " +
                                                std::to_string(e.train_loss) + " val " + std::to_string(e.val_loss) +
                                                " lr " + std::to_string(e.lr));
                                          });
    model::save_checkpoint(*model, (out / "checkpoint.bin").string());
    std::vector<std::uint8_t> hist;
    const auto text = result.history.to_jsonl();
    hist.assign(text.begin(), text.end());
    tiles::atomic_write((out / "history.jsonl").string(), hist);
    log("best epoch " + std::to_string(result.history.best_epoch) + ", val loss " +
        std::to_string(result.history.best_val_loss));
  }

  void evaluate() {
    const auto cfg = resolve();
    const auto out = out_dir();
    if (cfg.paths.dataset.empty()) throw ValidationError("paths.dataset is not set (use --dataset)");
    if (cfg.paths.checkpoint.empty()) throw ValidationError("paths.checkpoint is not set (use --checkpoint)");
    config::echo_config(cfg, out.string());
    const auto data = dataset::read_dataset(cfg.paths.dataset);
    auto model = model::load_checkpoint(cfg.paths.checkpoint);
    const auto& mcfg = model->config();
    if (mcfg.K != data.K) throw ValidationError("checkpoint K does not match the dataset");
    const bool images = model->kind() == "crashformer" && mcfg.use_img;
    const auto bank = images ? train::ImageBank::load(data, mcfg.img_size) : train::ImageBank{};
    const auto test_idx = data.split.indices(dataset::Part::test);
    const auto probs = train::predict_probs(*model, data, bank, test_idx);
    std::vector<std::uint8_t> labels;
    for (auto i : test_idx) labels.push_back(data.samples[i].label);
    std::vector<float> p32(probs.values().begin(), probs.values().end());
    bin_write(out, p32, labels);
    const auto m = eval::metrics_from_dump(out.string());
    write_json(out / "metrics.json", {{"model", model->kind()},
                                      {"n", m.n()},
                                      {"tp", m.tp},
                                      {"fp", m.fp},
                                      {"fn", m.fn},
                                      {"tn", m.tn},
                                      {"f1_1", m.f1_1},
                                      {"f1_0", m.f1_0},
                                      {"precision_1", m.precision_1},
                                      {"recall_1", m.recall_1}});
    log("test f1_1 " + std::to_string(m.f1_1) + " f1_0 " + std::to_string(m.f1_0) + " on " + std::to_string(m.n()) +
        " samples");
  }

  void experiment(const std::string& kind_flag) {
    auto cfg = resolve();
    if (!kind_flag.empty()) cfg.experiment.kind = eval::parse_experiment_kind(kind_flag);
    const auto out = out_dir();
    config::echo_config(cfg, out.string());
    const auto inputs = pipeline::city_inputs(cfg, logger());
    eval::ExperimentConfig ec;
    ec.kind = cfg.experiment.kind;
    ec.model = cfg.model;
    ec.train = cfg.train;
    ec.split = pipeline::split_spec(cfg, inputs.table);
    ec.weight_override = cfg.weight_override();
    ec.seq_lengths = cfg.experiment.seq_lengths;
    const auto report = eval::run_experiment(ec, inputs, out.string(), logger());
    eval::write_report(report, out.string(), eval::to_string(ec.kind));
    log("report written to " + (out / "report.csv").string());
  }

  void report() {
    const auto out = out_dir();
    const auto r = eval::rebuild_report(out.string());
    eval::write_report(r, out.string(), eval::to_string(r.kind));
    log("report rebuilt from " + std::to_string(r.arms.size()) + " arm dump(s)");
  }

  void make_world(synth::WorldConfig w) {
    const auto out = out_dir();
    if (g_.seed) w.seed = *g_.seed;
    const auto world = synth::generate_world(w, out.string());
    std::vector<std::uint8_t> version;
    const auto v = config::code_version() + "\n";
    version.assign(v.begin(), v.end());
    tiles::atomic_write((out / "VERSION").string(), version);
    const auto bayes = synth::world_oracle(out.string());
    write_json(out / "bayes.json", {{"n", bayes.n},
                                    {"expected_positives", bayes.expected_positives},
                                    {"argmax_f1_1", bayes.argmax_f1_1},
                                    {"best_f1_1", bayes.best_f1_1},
                                    {"best_threshold", bayes.best_threshold}});
    log("world: " + std::to_string(world.regions.size()) + " regions, " + std::to_string(world.n_windows) +
        " windows, " + std::to_string(world.accidents) + " accidents, Bayes f1_1 " + std::to_string(bayes.best_f1_1));
  }

 private:
  static void bin_write(const fs::path& out, const std::vector<float>& preds, const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> bytes(preds.size() * sizeof(float));
    std::memcpy(bytes.data(), preds.data(), bytes.size());
    tiles::atomic_write((out / "preds.f32").string(), bytes);
    tiles::atomic_write((out / "labels.u8").string(), labels);
  }

  const Globals& g_;
  std::ostream& err_;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& err) {
  CLI::App app{"Accident-risk prediction pipeline", "crashformer"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run config JSON")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Config override key.path=value (repeatable)")->take_all();
  auto* seed_opt = app.add_option("--seed", seed, "Seed for model init, shuffling, splits and synth worlds");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--offline", g.offline, "Never touch the network; tiles must be cached");

  auto* ingest = app.add_subcommand("ingest", "Validate input files and fill the tile cache");
  auto* featurize = app.add_subcommand("featurize", "Build the region x window feature table");
  auto* build = app.add_subcommand("build-dataset", "Assemble, split and normalize a dataset container");
  std::string dataset_dir, checkpoint, model_kind = "crashformer";
  build->add_option("--features", dataset_dir, "Feature table directory from `featurize`");
  auto* train = app.add_subcommand("train", "Train one model on a dataset container");
  train->add_option("--dataset", dataset_dir, "Dataset container directory");
  train->add_option("--model", model_kind, "crashformer, dlinear or transformer")
      ->check(CLI::IsMember({"crashformer", "dlinear", "transformer"}));
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the dataset's test split");
  evaluate->add_option("--dataset", dataset_dir, "Dataset container directory");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint file from `train`");
  auto* experiment = app.add_subcommand("experiment", "Run one experiment protocol end to end");
  std::string kind;
  experiment->add_option("--kind", kind, "seq_sweep, ablation, temporal or spatial")
      ->check(CLI::IsMember({"seq_sweep", "ablation", "temporal", "spatial"}));
  auto* report = app.add_subcommand("report", "Rebuild report files of an experiment directory from its dumps");
  auto* synth = app.add_subcommand("synth", "Generate a synthetic world with planted signal");
  synth::WorldConfig w;
  synth->add_option("--regions", w.n_regions, "Number of regions")->capture_default_str();
  synth->add_option("--days", w.n_days, "Number of days")->capture_default_str();
  synth->add_option("--base-rate", w.base_rate, "Accident probability per window without signal")->capture_default_str();
  synth->add_option("--w-hist", w.signal.w_hist, "Weight of recent accident windows");
  synth->add_option("--w-weather", w.signal.w_weather, "Weight of the storm flag");
  synth->add_option("--w-demo", w.signal.w_demo, "Weight of the demographic risk feature");
  synth->add_option("--w-img", w.signal.w_img, "Weight of the tile road density");
  synth->add_option("--max-lines", w.max_lines, "Line segments on a density-1 tile")->capture_default_str();
  synth->add_option("--start-date", w.start_date, "First day (YYYY-MM-DD)")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, err);
    if (code == 0) return 0;
    err << app.help();
    return 1;
  }
  if (*seed_opt) g.seed = seed;
  if (!dataset_dir.empty()) {
    const auto abs = fs::absolute(dataset_dir).lexically_normal().string();
    g.overrides.push_back(std::string(*build ? "paths.features=" : "paths.dataset=") + json(abs).dump());
  }
  if (!checkpoint.empty()) {
    g.overrides.push_back("paths.checkpoint=" + json(fs::absolute(checkpoint).lexically_normal().string()).dump());
  }

  Runner runner(g, err);
  try {
    if (*ingest) runner.ingest();
    else if (*featurize) runner.featurize();
    else if (*build) runner.build_dataset();
    else if (*train) runner.train(model_kind);
    else if (*evaluate) runner.evaluate();
    else if (*experiment) runner.experiment(kind);
    else if (*report) runner.report();
    else if (*synth) runner.make_world(w);
    return 0;
  } catch (const ValidationError& e) {
    err << "crashformer: error: " << e.what() << "\n";
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "crashformer: failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "crashformer: failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace crashformer::cli
