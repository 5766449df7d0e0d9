#include "crashformer/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "crashformer/baselines.hpp"
#include "crashformer/error.hpp"

namespace crashformer::model {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'C', 'F', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

std::unique_ptr<Classifier> make_classifier(const std::string& kind, const ModelConfig& cfg) {
  if (kind == "crashformer") return std::make_unique<CrashFormer>(cfg);
  if (kind == "dlinear") return std::make_unique<eval::DLinear>(cfg);
  if (kind == "transformer") return std::make_unique<eval::VanillaTransformer>(cfg);
  throw ValidationError("unknown model kind '" + kind + "' (expected crashformer, dlinear or transformer)");
}

void save_checkpoint(Classifier& model, const std::string& path) {
  json header;
  header["kind"] = model.kind();
  header["config"] = json::parse(to_json(model.config()));
  json params = json::array();
  const auto list = model.parameters();
  for (const auto* p : list) params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  header["params"] = params;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t n = text.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(text.data(), static_cast<std::streamsize>(n));
    for (const auto* p : list) {
      out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    }
    if (!out) throw RuntimeFailure("short write to checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::unique_ptr<Classifier> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path + "'");
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ValidationError("'" + path + "' is not a checkpoint");
  if (n > (1u << 26)) throw ValidationError("checkpoint header too large in '" + path + "'");
  std::string text(n, '\0');
  in.read(text.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("truncated checkpoint header in '" + path + "'");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError("corrupt checkpoint header in '" + path + "': " + e.what());
  }
  auto model = make_classifier(header.at("kind").get<std::string>(), model_config_from_json(header.at("config").dump()));
  const auto list = model->parameters();
  const auto& params = header.at("params");
  if (params.size() != list.size()) throw ValidationError("checkpoint parameter count mismatch in '" + path + "'");
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<std::vector<std::size_t>>();
    if (name != list[i]->name || shape != list[i]->value.shape()) {
      throw ValidationError("checkpoint parameter '" + name + "' does not match model parameter '" + list[i]->name + "'");
    }
    in.read(reinterpret_cast<char*>(list[i]->value.data()), static_cast<std::streamsize>(list[i]->value.size() * sizeof(double)));
    if (!in) throw ValidationError("truncated checkpoint data at '" + name + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes in checkpoint '" + path + "'");
  return model;
}

Snapshot snapshot(const nn::ParamList& params) {
  Snapshot s;
  s.reserve(params.size());
  for (const auto* p : params) s.push_back(p->value);
  return s;
}

void restore(const nn::ParamList& params, const Snapshot& snap) {
  if (snap.size() != params.size()) throw ValidationError("snapshot does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snap[i].shape() != params[i]->value.shape()) throw ValidationError("snapshot shape mismatch at " + params[i]->name);
    params[i]->value = snap[i];
  }
}

}  // namespace crashformer::model
