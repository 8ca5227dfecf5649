// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vct/tensor.hpp"

namespace vct {

// Procedural class-conditional image task. Each class is a fixed oriented
// sinusoid template (distinct orientation, frequency, phase and channel
// gains); samples add a +/-1 pixel shift, an amplitude factor in
// [0.85, 1.15] and Gaussian pixel noise. Pixels live in [0, 1].
struct DatasetSpec {
  int num_classes = 10;
  int samples_per_class = 320;  // per split
  int image_size = 32;
  int channels = 3;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct Split {
  Tensor images;            // [n, c, h, w]
  std::vector<int> labels;  // size n, class-major order at generation
};

struct Dataset {
  Split train, test;
};

// Deterministic in (spec): the same spec yields bit-identical splits.
Split generate_split(const DatasetSpec& spec, const std::string& split_name);
Dataset generate_dataset(const DatasetSpec& spec);

// Optional import of externally supplied data: flat records of one label
// byte followed by channels*image_size^2 pixel bytes (0..255 scaled to
// [0,1]). Short/oversized files raise IoError, labels out of range
// InputError.
Split load_binary_split(const std::string& path, int num_classes, int channels, int image_size);

// Corruption operators standing in for the common benchmark families.
enum class CorruptionKind { gaussian_noise, shot_noise, impulse_noise, blur, contrast, pixelate };

CorruptionKind parse_corruption_kind(const std::string& name);  // throws ConfigError
const char* corruption_kind_name(CorruptionKind kind);
const std::vector<CorruptionKind>& all_corruption_kinds();

struct Corruption {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 0;  // 0 = identity, 1..5 increasing distortion
  std::uint64_t seed = 0;
};

// Pure in (images, c): noise is keyed by the corruption seed and a hash of
// each image's content, so an image corrupts identically regardless of its
// batch or position. Outputs are clamped to [0, 1]; severity 0 returns the
// input bitwise.
Tensor corrupt(const Tensor& images, const Corruption& c);

// Test protocols. `normal` is an i.i.d. shuffle in batches of B;
// `imbalanced` makes every batch long-tailed (a rotating dominant class
// holds at least 80% of the rows); `bs1` is the normal order one sample at
// a time.
enum class Protocol { normal, imbalanced, bs1 };

Protocol parse_protocol(const std::string& name);  // throws ConfigError
const char* protocol_name(Protocol p);

struct StreamBatch {
  Tensor images;
  std::vector<int> sample_ids;  // rows of the scheduled split
  std::vector<int> labels;      // scoring only; never passed to adaptation
  int batch_index = 0;
  Protocol protocol = Protocol::normal;

  // The adapter consumes this label-free view only.
  const Tensor& adaptation_view() const { return images; }
};

std::vector<StreamBatch> schedule(const Split& split, Protocol protocol, int batch_size, std::uint64_t seed);

// Audit trail: one CSV row per scheduled sample.
std::string stream_manifest_csv(const std::vector<StreamBatch>& batches);

}  // namespace vct
