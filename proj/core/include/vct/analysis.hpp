// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vct/engine.hpp"
#include "vct/stream.hpp"
#include "vct/tensor.hpp"
#include "vct/vit.hpp"

namespace vct {

// cos(a, b) = dot / (|a||b|), computed in double. Tensors are flattened;
// sizes must match (ShapeError) and both vectors must be nonzero
// (InputError).
double cosine_similarity(const Tensor& a, const Tensor& b);

// Top-`dims` principal-component coordinates of the snapshots (rows),
// components ordered by descending eigenvalue, each component's sign
// fixed so its largest-magnitude loading is positive. Rank-deficient
// directions project to zero. Requires at least 3 snapshots of equal
// width. Deterministic.
std::vector<std::vector<double>> pca_project(const std::vector<Tensor>& snapshots, int dims = 2);

// "batch_index,pc1,pc2,..." rows for a projected trajectory.
std::string pca_csv(const std::vector<std::vector<double>>& coords);

// A named, batch-indexed sequence of token snapshots from one run.
// `signature` fingerprints (stream, checkpoint, seed) so reports refuse
// to compare runs that did not see the same inputs.
struct Trajectory {
  std::string name;
  std::uint32_t signature = 0;
  std::vector<Tensor> snapshots;  // one [d] row per batch, batch order
};

// Round-trip format: "# signature <8 hex digits>" comment line, then a
// "batch_index,c0,...,c{d-1}" header and one row per batch. Comment
// lines keep gnuplot compatibility.
std::string trajectory_csv(const Trajectory& t);
Trajectory parse_trajectory_csv(const std::string& text, const std::string& name);  // throws InputError

// Per-batch cosine similarity of each run's token to the oracle token,
// plus mean/variance over the final window (last max(1, J/5) batches).
struct SimilarityReport {
  std::vector<std::string> names;
  std::vector<std::vector<double>> per_batch;  // [run][batch]
  std::vector<double> window_mean;             // [run]
  std::vector<double> window_variance;         // [run], population variance
  int window = 0;                              // batches in the final window

  std::string per_batch_csv() const;  // "batch_index,<name>,..."
  std::string summary_csv() const;    // "configuration,window_mean,window_variance"
};

// All runs must carry the oracle's signature and length (InputError).
SimilarityReport similarity_report(const std::vector<Trajectory>& runs, const Trajectory& oracle);

// One adaptation run per grid point: the domain axis varied with the
// instance rate at its base value, the instance axis varied with the
// domain rate at its base value, plus the (0, 0) corner, deduplicated.
// Accuracy is scored against the stream's labels.
struct SweepPoint {
  double domain_rate = 0;
  double instance_rate = 0;
  double accuracy = 0;
};

std::vector<SweepPoint> sensitivity_sweep(const ViTModel& model, const std::vector<StreamBatch>& stream,
                                          const AdaptConfig& base, const std::vector<double>& domain_grid,
                                          const std::vector<double>& instance_grid);

// Half-decade log spacing over [1e-4, 1e-1]: 1e-4, 3.16e-4, ..., 1e-1.
std::vector<double> default_rate_grid();

std::string sweep_csv(const std::vector<SweepPoint>& points);  // "domain_rate,instance_rate,accuracy"

}  // namespace vct
