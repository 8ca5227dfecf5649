// SPDX-License-Identifier: Apache-2.0
#include "vct/config.hpp"

#include <algorithm>
#include <cstddef>
#include <functional>
#include <sstream>
#include <vector>

#include "vct/io.hpp"

namespace vct {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& where, const std::string& v) {
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(where + " expects an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& where, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(where + " expects an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& where, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(where + " expects a number, got '" + v + "'");
  }
}

struct Field {
  const char* section;
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"model", "image_size", [](const RunConfig& c) { return std::to_string(c.model.image_size); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.image_size = to_int(w, v); }},
      {"model", "patch_size", [](const RunConfig& c) { return std::to_string(c.model.patch_size); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.patch_size = to_int(w, v); }},
      {"model", "channels", [](const RunConfig& c) { return std::to_string(c.model.channels); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.channels = to_int(w, v); }},
      {"model", "embed_dim", [](const RunConfig& c) { return std::to_string(c.model.embed_dim); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.embed_dim = to_int(w, v); }},
      {"model", "num_layers", [](const RunConfig& c) { return std::to_string(c.model.num_layers); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.num_layers = to_int(w, v); }},
      {"model", "num_heads", [](const RunConfig& c) { return std::to_string(c.model.num_heads); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.num_heads = to_int(w, v); }},
      {"model", "mlp_ratio", [](const RunConfig& c) { return std::to_string(c.model.mlp_ratio); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.mlp_ratio = to_int(w, v); }},
      {"model", "num_classes", [](const RunConfig& c) { return std::to_string(c.model.num_classes); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.model.num_classes = to_int(w, v); }},

      {"data", "samples_per_class", [](const RunConfig& c) { return std::to_string(c.samples_per_class); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.samples_per_class = to_int(w, v); }},

      {"train", "epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.epochs = to_int(w, v); }},
      {"train", "batch_size", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.batch_size = to_int(w, v); }},
      {"train", "learning_rate", [](const RunConfig& c) { return format_real(c.train.learning_rate); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.learning_rate = to_double(w, v); }},
      {"train", "momentum", [](const RunConfig& c) { return format_real(c.train.momentum); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.momentum = to_double(w, v); }},
      {"train", "clip_norm", [](const RunConfig& c) { return format_real(c.train.clip_norm); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.clip_norm = to_double(w, v); }},
      {"train", "weight_decay", [](const RunConfig& c) { return format_real(c.train.weight_decay); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.train.weight_decay = to_double(w, v); }},

      {"corruption", "kind", [](const RunConfig& c) { return std::string(corruption_kind_name(c.corruption.kind)); },
       [](RunConfig& c, const std::string& w, const std::string& v) {
         try {
           c.corruption.kind = parse_corruption_kind(v);
         } catch (const ConfigError&) {
           throw ConfigError(w + ": unknown corruption kind '" + v + "'");
         }
       }},
      {"corruption", "severity", [](const RunConfig& c) { return std::to_string(c.corruption.severity); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.corruption.severity = to_int(w, v); }},

      {"stream", "protocol", [](const RunConfig& c) { return std::string(protocol_name(c.protocol)); },
       [](RunConfig& c, const std::string& w, const std::string& v) {
         try {
           c.protocol = parse_protocol(v);
         } catch (const ConfigError&) {
           throw ConfigError(w + ": unknown protocol '" + v + "'");
         }
       }},
      {"stream", "batch_size", [](const RunConfig& c) { return std::to_string(c.stream_batch); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.stream_batch = to_int(w, v); }},
      {"stream", "max_batches", [](const RunConfig& c) { return std::to_string(c.max_batches); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.max_batches = to_int(w, v); }},

      {"adapt", "mode", [](const RunConfig& c) { return std::string(adapt_mode_name(c.adapt.mode)); },
       [](RunConfig& c, const std::string& w, const std::string& v) {
         try {
           c.adapt.mode = parse_adapt_mode(v);
         } catch (const ConfigError&) {
           throw ConfigError(w + ": unknown adapt mode '" + v + "'");
         }
       }},
      {"adapt", "domain_rate", [](const RunConfig& c) { return format_real(c.adapt.domain_rate); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.adapt.domain_rate = to_double(w, v); }},
      {"adapt", "instance_rate", [](const RunConfig& c) { return format_real(c.adapt.instance_rate); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.adapt.instance_rate = to_double(w, v); }},
      {"adapt", "norm_rate", [](const RunConfig& c) { return format_real(c.adapt.norm_rate); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.adapt.norm_rate = to_double(w, v); }},
      {"adapt", "sam_radius", [](const RunConfig& c) { return format_real(c.adapt.sam_radius); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.adapt.sam_radius = to_double(w, v); }},
      {"adapt", "entropy_threshold",
       [](const RunConfig& c) {
         return c.adapt.entropy_threshold < 0 ? std::string("auto") : format_real(c.adapt.entropy_threshold);
       },
       [](RunConfig& c, const std::string& w, const std::string& v) {
         c.adapt.entropy_threshold = (v == "auto") ? -1.0 : to_double(w, v);
       }},

      {"run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& w, const std::string& v) { c.seed = to_u64(w, v); }},
      {"run", "out", [](const RunConfig& c) { return c.out; },
       [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
  };
  return table;
}

// The master seed owns every random concern.
void sync_seeds(RunConfig& cfg) {
  cfg.train.seed = cfg.seed;
  cfg.corruption.seed = cfg.seed;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

}  // namespace

DatasetSpec RunConfig::dataset_spec() const {
  DatasetSpec spec;
  spec.num_classes = model.num_classes;
  spec.samples_per_class = samples_per_class;
  spec.image_size = model.image_size;
  spec.channels = model.channels;
  spec.seed = seed;
  return spec;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  dataset_spec().validate();
  if (corruption.severity < 0 || corruption.severity > 5)
    throw ConfigError("corruption.severity must lie in 0..5, got " + std::to_string(corruption.severity));
  if (stream_batch < 1) throw ConfigError("stream.batch_size must be positive, got " + std::to_string(stream_batch));
  if (max_batches < 0)
    throw ConfigError("stream.max_batches must be non-negative, got " + std::to_string(max_batches));
  if (adapt.domain_rate < 0 || adapt.instance_rate < 0 || adapt.norm_rate < 0)
    throw ConfigError("adapt rates must be non-negative");
  if (adapt.sam_radius < 0) throw ConfigError("adapt.sam_radius must be non-negative");
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  const char* current = "";
  for (const Field& f : fields()) {
    if (std::string(current) != f.section) {
      if (!out.empty()) out += "\n";
      out += std::string("[") + f.section + "]\n";
      current = f.section;
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

RunConfig parse_run_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header: " + t);
      section = trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const Field& f : fields()) known = known || section == f.section;
      if (!known) throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got: " + t);
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' before any section");
    const Field* f = find_field(section, key);
    if (!f) throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + section + "." + key);
    f->set(cfg, section + "." + key, value);
  }
  sync_seeds(cfg);
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  const std::string path = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown key " + section + "." + key);
  f->set(cfg, section + "." + key, value);
  sync_seeds(cfg);
}

}  // namespace vct
