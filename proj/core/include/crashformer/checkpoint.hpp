#pragma once

#include <memory>
#include <string>
#include <vector>

#include "crashformer/model.hpp"

namespace crashformer::model {

/// Builds a fresh classifier of the given kind: "crashformer", "dlinear" or
/// "transformer".
std::unique_ptr<Classifier> make_classifier(const std::string& kind, const ModelConfig& cfg);

/// Single-file archive: magic, JSON header (kind, config, parameter names and
/// shapes), then every parameter as little-endian float64 in header order.
void save_checkpoint(Classifier& model, const std::string& path);
std::unique_ptr<Classifier> load_checkpoint(const std::string& path);

/// In-memory copy of parameter values, keyed by position in parameters().
using Snapshot = std::vector<nn::Tensor>;
Snapshot snapshot(const nn::ParamList& params);
void restore(const nn::ParamList& params, const Snapshot& snap);

}  // namespace crashformer::model
