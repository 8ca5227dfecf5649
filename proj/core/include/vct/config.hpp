// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "vct/engine.hpp"
#include "vct/stream.hpp"
#include "vct/train.hpp"
#include "vct/vit.hpp"

namespace vct {

// Everything a run needs, serializable to a sectioned key=value file.
// One master seed feeds every random concern; the concerns stay
// independent because each derives its own labeled stream internally.
struct RunConfig {
  ViTConfig model;            // [model]
  int samples_per_class = 320;  // [data]
  TrainConfig train;          // [train] (its seed tracks the master seed)
  Corruption corruption;      // [corruption] (seed tracks the master seed)
  Protocol protocol = Protocol::normal;  // [stream]
  int stream_batch = 64;
  int max_batches = 50;  // 0 = the whole split
  AdaptConfig adapt;     // [adapt]
  std::uint64_t seed = 0;  // [run]
  std::string out;         // [run] output directory ("" = derive from root)

  DatasetSpec dataset_spec() const;  // geometry from [model], seed from [run]
  void validate() const;             // throws ConfigError
};

// Canonical form: every section and key, fixed order, shortest
// round-trip numbers; entropy_threshold renders as "auto" when negative.
// parse(serialize(c)) reproduces c exactly.
std::string serialize_run_config(const RunConfig& cfg);

// Overlays `text` onto `base`. Unknown sections or keys are hard
// ConfigErrors, as are unparseable values.
RunConfig parse_run_config(const std::string& text, const RunConfig& base = RunConfig{});

// One "section.key=value" override (the CLI's --set flag).
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace vct
