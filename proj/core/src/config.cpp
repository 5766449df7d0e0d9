#include "crashformer/config.hpp"

#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "binary_io.hpp"
#include "crashformer/error.hpp"

namespace crashformer::config {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef CRASHFORMER_VERSION
#define CRASHFORMER_VERSION "0.0.0"
#endif

std::string code_version() { return "crashformer " CRASHFORMER_VERSION; }

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

json to_tree(const RunConfig& c) {
  json j;
  j["paths"] = {{"accidents", c.paths.accidents},   {"weather", c.paths.weather},
                {"demographics", c.paths.demographics}, {"tile_cache", c.paths.tile_cache},
                {"features", c.paths.features},     {"dataset", c.paths.dataset},
                {"checkpoint", c.paths.checkpoint}};
  j["geoindex"] = {{"origin_lat", optional_json(c.geoindex.origin_lat)},
                   {"origin_lon", optional_json(c.geoindex.origin_lon)},
                   {"tile_source", c.geoindex.tile_source},
                   {"user_agent", c.geoindex.user_agent},
                   {"delay_seconds", c.geoindex.delay_seconds}};
  j["featurize"] = {{"start_date", optional_json(c.featurize.start_date)},
                    {"end_date", optional_json(c.featurize.end_date)},
                    {"weather_radius_km", c.featurize.weather_radius_km}};
  const auto& d = c.dataset;
  json weights = d.class_weights;
  if (d.explicit_weights) weights = {{"w0", d.explicit_weights->w0}, {"w1", d.explicit_weights->w1}};
  j["dataset"] = {{"split", dataset::to_string(d.split)},
                  {"train", d.train},
                  {"val", d.val},
                  {"test", d.test},
                  {"cutoff_date", optional_json(d.cutoff_date)},
                  {"region_fraction", d.region_fraction},
                  {"class_weights", weights},
                  {"seed", d.seed}};
  j["model"] = json::parse(model::to_json(c.model));
  auto t = json::parse(train::to_json(c.train));
  t.erase("class_weights");  // lives in the dataset section
  j["train"] = t;
  j["experiment"] = {{"kind", eval::to_string(c.experiment.kind)}, {"seq_lengths", c.experiment.seq_lengths}};
  return j;
}

// Overlays `user` onto `defaults`, rejecting keys the defaults do not have.
void merge(json& defaults, const json& user, const std::string& where) {
  if (!user.is_object()) throw ValidationError("config: '" + where + "' must be an object");
  for (const auto& [key, v] : user.items()) {
    const auto name = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) throw ValidationError("config: unknown key '" + name + "'");
    auto& slot = defaults[key];
    const bool leaf_section = name == "dataset.class_weights" || name == "model.img_channels" ||
                              name == "experiment.seq_lengths";
    if (slot.is_object() && !leaf_section) {
      merge(slot, v, name);
    } else {
      slot = v;
    }
  }
}

std::string resolve(const std::string& p, const std::string& base) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

template <typename T>
std::optional<T> opt(const json& v) {
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

RunConfig from_tree(const json& j, const std::string& base_dir) {
  RunConfig c;
  const auto& p = j.at("paths");
  c.paths.accidents = resolve(p.at("accidents").get<std::string>(), base_dir);
  c.paths.weather = resolve(p.at("weather").get<std::string>(), base_dir);
  c.paths.demographics = resolve(p.at("demographics").get<std::string>(), base_dir);
  c.paths.tile_cache = resolve(p.at("tile_cache").get<std::string>(), base_dir);
  c.paths.features = resolve(p.at("features").get<std::string>(), base_dir);
  c.paths.dataset = resolve(p.at("dataset").get<std::string>(), base_dir);
  c.paths.checkpoint = resolve(p.at("checkpoint").get<std::string>(), base_dir);

  const auto& g = j.at("geoindex");
  c.geoindex.origin_lat = opt<double>(g.at("origin_lat"));
  c.geoindex.origin_lon = opt<double>(g.at("origin_lon"));
  c.geoindex.tile_source = g.at("tile_source").get<std::string>();
  c.geoindex.user_agent = g.at("user_agent").get<std::string>();
  c.geoindex.delay_seconds = g.at("delay_seconds").get<double>();

  const auto& f = j.at("featurize");
  c.featurize.start_date = opt<std::string>(f.at("start_date"));
  c.featurize.end_date = opt<std::string>(f.at("end_date"));
  c.featurize.weather_radius_km = f.at("weather_radius_km").get<double>();

  const auto& d = j.at("dataset");
  c.dataset.split = dataset::parse_split_kind(d.at("split").get<std::string>());
  c.dataset.train = d.at("train").get<double>();
  c.dataset.val = d.at("val").get<double>();
  c.dataset.test = d.at("test").get<double>();
  c.dataset.cutoff_date = opt<std::string>(d.at("cutoff_date"));
  c.dataset.region_fraction = d.at("region_fraction").get<double>();
  c.dataset.seed = d.at("seed").get<std::uint64_t>();
  const auto& w = d.at("class_weights");
  if (w.is_string()) {
    c.dataset.class_weights = w.get<std::string>();
  } else if (w.is_object()) {
    for (const auto& [key, v] : w.items()) {
      if (key != "w0" && key != "w1") throw ValidationError("config: unknown key 'dataset.class_weights." + key + "'");
    }
    c.dataset.class_weights = "explicit";
    c.dataset.explicit_weights = dataset::ClassWeights{w.at("w0").get<double>(), w.at("w1").get<double>()};
  } else {
    throw ValidationError("config: dataset.class_weights must be \"auto\", \"published\" or {w0, w1}");
  }

  c.model = model::model_config_from_json(j.at("model").dump());

  const auto& t = j.at("train");
  c.train.max_epochs = t.at("max_epochs").get<int>();
  c.train.early_stop_patience = t.at("early_stop_patience").get<int>();
  c.train.lr_init = t.at("lr_init").get<double>();
  c.train.lr_factor = t.at("lr_factor").get<double>();
  c.train.lr_patience = t.at("lr_patience").get<int>();
  c.train.lr_min = t.at("lr_min").get<double>();
  c.train.batch_size = t.at("batch_size").get<std::size_t>();
  c.train.seed = t.at("seed").get<std::uint64_t>();
  c.train.grad_clip = t.at("grad_clip").get<double>();
  c.train.min_improvement = t.at("min_improvement").get<double>();

  const auto& e = j.at("experiment");
  c.experiment.kind = eval::parse_experiment_kind(e.at("kind").get<std::string>());
  c.experiment.seq_lengths = e.at("seq_lengths").get<std::vector<int>>();
  return c;
}

RunConfig build(const json& user, const std::string& base_dir) {
  auto tree = to_tree(RunConfig{});
  merge(tree, user, "");
  RunConfig c;
  try {
    c = from_tree(tree, base_dir);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace

void RunConfig::validate() const {
  const auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (geoindex.origin_lat.has_value() != geoindex.origin_lon.has_value()) {
    fail("geoindex.origin_lat and origin_lon must be set together");
  }
  if (geoindex.origin_lat) geo::validate_coordinates(*geoindex.origin_lat, *geoindex.origin_lon);
  if (geoindex.user_agent.empty()) fail("geoindex.user_agent must not be empty");
  if (geoindex.delay_seconds < 0) fail("geoindex.delay_seconds must be >= 0");
  if (geoindex.tile_source != "offline" && geoindex.tile_source.find("{z}") == std::string::npos) {
    fail("geoindex.tile_source must be \"offline\" or a URL template with {z}, {x} and {y}");
  }
  for (const auto* date : {&featurize.start_date, &featurize.end_date, &dataset.cutoff_date}) {
    if (*date) parse_datetime(**date);
  }
  if (!(featurize.weather_radius_km > 0)) fail("featurize.weather_radius_km must be > 0");
  dataset::SplitSpec s;
  s.kind = dataset.split;
  s.train = dataset.train;
  s.val = dataset.val;
  s.test = dataset.test;
  s.region_fraction = dataset.region_fraction;
  s.validate();
  if (dataset.class_weights != "auto" && dataset.class_weights != "published" && !dataset.explicit_weights) {
    fail("dataset.class_weights must be \"auto\", \"published\" or {w0, w1}");
  }
  if (dataset.explicit_weights && !(dataset.explicit_weights->w0 > 0 && dataset.explicit_weights->w1 > 0)) {
    fail("explicit class weights must be positive");
  }
  model.validate();
  train.validate();
  if (experiment.seq_lengths.empty()) fail("experiment.seq_lengths must not be empty");
  for (int k : experiment.seq_lengths) {
    if (k < 1) fail("experiment.seq_lengths entries must be >= 1");
  }
}

std::optional<dataset::ClassWeights> RunConfig::weight_override() const {
  if (dataset.explicit_weights) return dataset.explicit_weights;
  if (dataset.class_weights == "published") return dataset::kPublishedClassWeights;
  return std::nullopt;
}

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
  json user;
  try {
    user = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return build(user, base_dir);
}

RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw ValidationError("config file '" + path + "' not found");
  return parse_config(bin::read_text(path), fs::path(path).parent_path().string());
}

RunConfig apply_overrides(const RunConfig& cfg, const std::vector<std::string>& overrides) {
  if (overrides.empty()) return cfg;
  auto tree = to_tree(cfg);
  json patch = json::object();
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("override '" + o + "' is not of the form key=value");
    const auto key = o.substr(0, eq);
    const auto text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception&) {
      value = text;
    }
    json* node = &patch;
    std::size_t start = 0;
    for (;;) {
      const auto dot = key.find('.', start);
      const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (part.empty()) throw ValidationError("override key '" + key + "' has an empty component");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  merge(tree, patch, "");
  RunConfig c;
  try {
    c = from_tree(tree, "");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

void set_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.model.seed = seed;
  cfg.train.seed = seed;
  cfg.dataset.seed = seed;
}

void apply_environment(RunConfig& cfg) {
  if (const char* cache = std::getenv("CRASHFORMER_CACHE"); cache != nullptr && *cache != '\0') {
    cfg.paths.tile_cache = cache;
  }
}

std::string to_json(const RunConfig& cfg) { return to_tree(cfg).dump(2) + "\n"; }

void echo_config(const RunConfig& cfg, const std::string& dir) {
  fs::create_directories(dir);
  bin::write_text((fs::path(dir) / "config.json").string(), to_json(cfg));
  bin::write_text((fs::path(dir) / "VERSION").string(), code_version() + "\n");
}

}  // namespace crashformer::config
