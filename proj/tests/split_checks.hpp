#pragma once

#include <set>
#include <string>
#include <vector>

#include "crashformer/dataset.hpp"
#include "crashformer/random.hpp"

namespace crashformer::testing {

/// Dense random table: features N(0,1), labels Bernoulli(p).
inline featurize::FeatureTable random_table(std::size_t R, std::int64_t T, Rng& rng, double p = 0.3) {
  featurize::FeatureTable t;
  t.grid_origin = {29.76, -95.37};
  t.epoch = parse_datetime("2021-01-01");
  t.n_windows = T;
  for (std::size_t r = 0; r < R; ++r) t.regions.push_back(geo::HexGrid::from_axial(static_cast<std::int64_t>(r), 0));
  for (std::size_t i = 0; i < R * static_cast<std::size_t>(T); ++i) {
    for (std::size_t k = 0; k < featurize::kFeatureDim; ++k) t.features.push_back(static_cast<float>(rng.normal()));
    t.labels.push_back(rng.bernoulli(p) ? 1 : 0);
  }
  return t;
}

/// Empty string when every split invariant holds, else the first violation.
inline std::string check_split(const std::vector<dataset::Sample>& samples, const dataset::Split& s,
                               const dataset::SplitSpec& spec) {
  using dataset::Part;
  if (s.assignment.size() != samples.size()) return "assignment size differs from sample count";
  const auto tr = s.indices(Part::train), va = s.indices(Part::val), te = s.indices(Part::test);
  if (tr.empty() || va.empty() || te.empty()) return "empty part";
  if (tr.size() + va.size() + te.size() != samples.size()) return "parts not exhaustive";
  std::set<std::size_t> all(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  all.insert(te.begin(), te.end());
  if (all.size() != samples.size()) return "parts overlap";
  if (spec.kind == dataset::SplitKind::spatial) {
    std::set<geo::RegionId> side, test;
    for (auto i : tr) side.insert(samples[i].region);
    for (auto i : va) side.insert(samples[i].region);
    for (auto i : te) test.insert(samples[i].region);
    for (auto r : test) {
      if (side.contains(r)) return "region " + r.str() + " on both sides";
    }
  }
  if (spec.kind == dataset::SplitKind::temporal) {
    for (auto i : tr) {
      if (samples[i].target_window >= spec.cutoff_window) return "post-cutoff target in train";
    }
    for (auto i : va) {
      if (samples[i].target_window >= spec.cutoff_window) return "post-cutoff target in val";
    }
    for (auto i : te) {
      if (samples[i].target_window < spec.cutoff_window) return "pre-cutoff target in test";
    }
  }
  return {};
}

}  // namespace crashformer::testing
