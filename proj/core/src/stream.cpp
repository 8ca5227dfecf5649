// SPDX-License-Identifier: Apache-2.0
#include "vct/stream.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "vct/io.hpp"
#include "vct/rng.hpp"

namespace vct {

namespace {

constexpr double kPi = 3.14159265358979323846;

Real clamp01(double v) { return static_cast<Real>(std::min(1.0, std::max(0.0, v))); }

// Severity parameter tables, index = severity - 1. Values are frozen after
// verifying that measured distortion increases strictly with severity.
constexpr double kGaussianSigma[5] = {0.08, 0.12, 0.18, 0.26, 0.38};
constexpr double kShotRate[5] = {60, 25, 12, 5, 3};  // photons per unit intensity
constexpr double kImpulseProb[5] = {0.03, 0.06, 0.09, 0.17, 0.27};
constexpr double kBlurSigma[5] = {0.4, 0.7, 1.0, 1.5, 2.0};
constexpr double kContrastFactor[5] = {0.4, 0.3, 0.2, 0.1, 0.05};
constexpr double kPixelateFactor[5] = {0.6, 0.5, 0.4, 0.3, 0.25};

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
  if (samples_per_class < 1)
    throw ConfigError("samples_per_class must be positive, got " + std::to_string(samples_per_class));
  if (image_size < 2) throw ConfigError("image_size must be at least 2, got " + std::to_string(image_size));
  if (channels < 1) throw ConfigError("channels must be positive, got " + std::to_string(channels));
}

Split generate_split(const DatasetSpec& spec, const std::string& split_name) {
  spec.validate();
  const int k_count = spec.num_classes, s = spec.image_size, c_count = spec.channels;
  const int n = k_count * spec.samples_per_class;
  Split split;
  split.images = Tensor({n, c_count, s, s});
  split.labels.resize(static_cast<std::size_t>(n));

  for (int i = 0; i < n; ++i) {
    const int k = i / spec.samples_per_class;
    split.labels[static_cast<std::size_t>(i)] = k;
    Rng rng(derive_seed(spec.seed, "data/" + split_name, static_cast<std::uint64_t>(i)));

    const double theta = kPi * k / k_count;
    const double freq = 2.0 + k % 4;
    const double phase = 2.0 * kPi * ((k * 7) % k_count) / k_count;
    const double ct = std::cos(theta), st = std::sin(theta);

    const int dy = rng.uniform_int(0, 3) - 1;
    const int dx = rng.uniform_int(0, 3) - 1;
    const double amp = rng.uniform(0.85, 1.15);
    for (int c = 0; c < c_count; ++c) {
      const double gain = 0.5 + 0.5 * std::cos(2.0 * kPi * k / k_count + 2.0 * kPi * c / 3.0);
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const double u = (x + dx) * ct + (y + dy) * st;
          const double wave = std::sin(2.0 * kPi * freq * u / s + phase);
          const double value = 0.5 + 0.45 * amp * gain * wave + rng.normal(0, 0.05);
          split.images.at(i, c, y, x) = clamp01(value);
        }
    }
  }
  return split;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  Dataset ds;
  ds.train = generate_split(spec, "train");
  ds.test = generate_split(spec, "test");
  return ds;
}

Split load_binary_split(const std::string& path, int num_classes, int channels, int image_size) {
  if (num_classes < 2 || channels < 1 || image_size < 1) throw ConfigError("invalid binary split geometry");
  const std::string bytes = read_file(path);
  const std::size_t pixels = static_cast<std::size_t>(channels) * image_size * image_size;
  const std::size_t record = 1 + pixels;
  if (bytes.empty() || bytes.size() % record != 0)
    throw IoError(path + ": size " + std::to_string(bytes.size()) + " is not a multiple of the record size " +
                  std::to_string(record));
  const int n = static_cast<int>(bytes.size() / record);
  Split split;
  split.images = Tensor({n, channels, image_size, image_size});
  split.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + static_cast<std::size_t>(i) * record;
    const int label = rec[0];
    if (label >= num_classes)
      throw InputError(path + ": record " + std::to_string(i) + " has label " + std::to_string(label) +
                       " outside 0.." + std::to_string(num_classes - 1));
    split.labels[static_cast<std::size_t>(i)] = label;
    Real* dst = split.images.data() + static_cast<std::size_t>(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) dst[p] = static_cast<Real>(rec[1 + p] / 255.0);
  }
  return split;
}

namespace {

constexpr std::pair<const char*, CorruptionKind> kKindNames[] = {
    {"gaussian_noise", CorruptionKind::gaussian_noise}, {"shot_noise", CorruptionKind::shot_noise},
    {"impulse_noise", CorruptionKind::impulse_noise},   {"blur", CorruptionKind::blur},
    {"contrast", CorruptionKind::contrast},             {"pixelate", CorruptionKind::pixelate},
};

}  // namespace

CorruptionKind parse_corruption_kind(const std::string& name) {
  for (const auto& [text, kind] : kKindNames)
    if (name == text) return kind;
  std::string known;
  for (const auto& [text, kind] : kKindNames) {
    (void)kind;
    known += known.empty() ? text : std::string(", ") + text;
  }
  throw ConfigError("unknown corruption kind '" + name + "' (known: " + known + ")");
}

const char* corruption_kind_name(CorruptionKind kind) {
  for (const auto& [text, k] : kKindNames)
    if (k == kind) return text;
  throw UsageError("unnamed corruption kind");
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = {CorruptionKind::gaussian_noise, CorruptionKind::shot_noise,
                                                    CorruptionKind::impulse_noise,  CorruptionKind::blur,
                                                    CorruptionKind::contrast,       CorruptionKind::pixelate};
  return kinds;
}

namespace {

void corrupt_one(Real* img, int c_count, int s, const Corruption& c, std::uint64_t content_hash) {
  const std::size_t pixels = static_cast<std::size_t>(c_count) * s * s;
  const int level = c.severity - 1;
  Rng rng(derive_seed(derive_seed(c.seed, corruption_kind_name(c.kind), static_cast<std::uint64_t>(c.severity)),
                      "image", content_hash));

  switch (c.kind) {
    case CorruptionKind::gaussian_noise: {
      const double sigma = kGaussianSigma[level];
      for (std::size_t p = 0; p < pixels; ++p) img[p] = clamp01(img[p] + rng.normal(0, sigma));
      break;
    }
    case CorruptionKind::shot_noise: {
      const double rate = kShotRate[level];
      for (std::size_t p = 0; p < pixels; ++p) img[p] = clamp01(rng.poisson(img[p] * rate) / rate);
      break;
    }
    case CorruptionKind::impulse_noise: {
      const double prob = kImpulseProb[level];
      for (std::size_t p = 0; p < pixels; ++p)
        if (rng.uniform() < prob) img[p] = rng.uniform() < 0.5 ? Real(0) : Real(1);
      break;
    }
    case CorruptionKind::blur: {
      const double sigma = kBlurSigma[level];
      const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
      std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
      double total = 0;
      for (int i = -radius; i <= radius; ++i) {
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
        total += kernel[static_cast<std::size_t>(i + radius)];
      }
      for (double& w : kernel) w /= total;
      std::vector<double> tmp(static_cast<std::size_t>(s) * s);
      auto clamp_idx = [s](int i) { return std::min(s - 1, std::max(0, i)); };
      for (int ch = 0; ch < c_count; ++ch) {
        Real* plane = img + static_cast<std::size_t>(ch) * s * s;
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
              acc += kernel[static_cast<std::size_t>(i + radius)] * plane[y * s + clamp_idx(x + i)];
            tmp[static_cast<std::size_t>(y) * s + x] = acc;
          }
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i)
              acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(clamp_idx(y + i)) * s + x];
            plane[y * s + x] = clamp01(acc);
          }
      }
      break;
    }
    case CorruptionKind::contrast: {
      const double factor = kContrastFactor[level];
      for (int ch = 0; ch < c_count; ++ch) {
        Real* plane = img + static_cast<std::size_t>(ch) * s * s;
        double mean = 0;
        for (int p = 0; p < s * s; ++p) mean += plane[p];
        mean /= s * s;
        for (int p = 0; p < s * s; ++p) plane[p] = clamp01((plane[p] - mean) * factor + mean);
      }
      break;
    }
    case CorruptionKind::pixelate: {
      const int cells = std::max(1, static_cast<int>(std::lround(s * kPixelateFactor[level])));
      for (int ch = 0; ch < c_count; ++ch) {
        Real* plane = img + static_cast<std::size_t>(ch) * s * s;
        for (int cy = 0; cy < cells; ++cy)
          for (int cx = 0; cx < cells; ++cx) {
            const int y0 = cy * s / cells, y1 = (cy + 1) * s / cells;
            const int x0 = cx * s / cells, x1 = (cx + 1) * s / cells;
            double mean = 0;
            for (int y = y0; y < y1; ++y)
              for (int x = x0; x < x1; ++x) mean += plane[y * s + x];
            mean /= static_cast<double>((y1 - y0) * (x1 - x0));
            for (int y = y0; y < y1; ++y)
              for (int x = x0; x < x1; ++x) plane[y * s + x] = clamp01(mean);
          }
      }
      break;
    }
  }
}

}  // namespace

Tensor corrupt(const Tensor& images, const Corruption& c) {
  if (images.rank() != 4) throw ShapeError("corrupt expects images [n,c,h,w], got " + images.shape_str());
  if (images.dim(2) != images.dim(3)) throw ShapeError("corrupt expects square images, got " + images.shape_str());
  if (c.severity < 0 || c.severity > 5)
    throw ConfigError("corruption severity must be in 0..5, got " + std::to_string(c.severity));
  if (c.severity == 0) return images;

  const int n = images.dim(0), c_count = images.dim(1), s = images.dim(2);
  const std::size_t pixels = static_cast<std::size_t>(c_count) * s * s;
  Tensor out = images;
  for (int i = 0; i < n; ++i) {
    const Real* src = images.data() + static_cast<std::size_t>(i) * pixels;
    const std::uint64_t content_hash = fnv1a(src, pixels * sizeof(Real));
    corrupt_one(out.data() + static_cast<std::size_t>(i) * pixels, c_count, s, c, content_hash);
  }
  return out;
}

namespace {

constexpr std::pair<const char*, Protocol> kProtocolNames[] = {
    {"normal", Protocol::normal},
    {"imbalanced", Protocol::imbalanced},
    {"bs1", Protocol::bs1},
};

StreamBatch gather_batch(const Split& split, const std::vector<int>& rows, int batch_index, Protocol protocol) {
  const int c = split.images.dim(1), s = split.images.dim(2);
  const std::size_t pixels = static_cast<std::size_t>(c) * s * s;
  StreamBatch batch;
  batch.batch_index = batch_index;
  batch.protocol = protocol;
  batch.images = Tensor({static_cast<int>(rows.size()), c, s, s});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int row = rows[r];
    std::memcpy(batch.images.data() + r * pixels, split.images.data() + static_cast<std::size_t>(row) * pixels,
                pixels * sizeof(Real));
    batch.sample_ids.push_back(row);
    batch.labels.push_back(split.labels[static_cast<std::size_t>(row)]);
  }
  return batch;
}

}  // namespace

Protocol parse_protocol(const std::string& name) {
  for (const auto& [text, p] : kProtocolNames)
    if (name == text) return p;
  throw ConfigError("unknown protocol '" + name + "' (known: normal, imbalanced, bs1)");
}

const char* protocol_name(Protocol p) {
  for (const auto& [text, proto] : kProtocolNames)
    if (proto == p) return text;
  throw UsageError("unnamed protocol");
}

std::vector<StreamBatch> schedule(const Split& split, Protocol protocol, int batch_size, std::uint64_t seed) {
  const int n = split.images.rank() == 4 ? split.images.dim(0) : 0;
  if (n == 0) throw ShapeError("schedule expects a non-empty split of images [n,c,h,w]");
  if (split.labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("schedule: " + std::to_string(split.labels.size()) + " labels for " + std::to_string(n) +
                     " images");
  if (batch_size < 1) throw ConfigError("batch size must be positive, got " + std::to_string(batch_size));
  const int effective = protocol == Protocol::bs1 ? 1 : batch_size;  // bs1 overrides the requested size
  if (effective > n)
    throw ConfigError("batch size " + std::to_string(effective) + " exceeds the split size " + std::to_string(n));

  std::vector<StreamBatch> batches;
  if (protocol == Protocol::normal || protocol == Protocol::bs1) {
    const int b = effective;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, "schedule/normal"));
    rng.shuffle(order);
    for (int start = 0; start < n; start += b) {
      const int stop = std::min(n, start + b);
      std::vector<int> rows(order.begin() + start, order.begin() + stop);
      batches.push_back(gather_batch(split, rows, static_cast<int>(batches.size()), protocol));
    }
    return batches;
  }

  // Long-tailed batches: the dominant class rotates over the classes that
  // actually occur; pools are consumed cyclically so every batch meets the
  // 80% dominance floor even when a pool runs dry.
  Rng rng(derive_seed(seed, "schedule/imbalanced"));
  std::vector<int> present;
  std::vector<std::vector<int>> pools;
  {
    int max_label = 0;
    for (int lab : split.labels) max_label = std::max(max_label, lab);
    pools.assign(static_cast<std::size_t>(max_label) + 1, {});
    for (int i = 0; i < n; ++i) pools[static_cast<std::size_t>(split.labels[static_cast<std::size_t>(i)])].push_back(i);
    for (std::size_t k = 0; k < pools.size(); ++k)
      if (!pools[k].empty()) {
        rng.shuffle(pools[k]);
        present.push_back(static_cast<int>(k));
      }
  }
  std::vector<std::size_t> cursor(pools.size(), 0);
  auto take = [&](int k) {
    auto& pool = pools[static_cast<std::size_t>(k)];
    const int row = pool[cursor[static_cast<std::size_t>(k)] % pool.size()];
    ++cursor[static_cast<std::size_t>(k)];
    return row;
  };

  const int total_batches = (n + batch_size - 1) / batch_size;
  for (int j = 0; j < total_batches; ++j) {
    const int b = std::min(batch_size, n - j * batch_size);
    const int dominant = present[static_cast<std::size_t>(j) % present.size()];
    const int dom_count = static_cast<int>(std::ceil(0.8 * b));
    std::vector<int> rows;
    for (int i = 0; i < dom_count; ++i) rows.push_back(take(dominant));
    std::size_t spin = static_cast<std::size_t>(j);
    while (static_cast<int>(rows.size()) < b) {
      ++spin;
      const int other = present[spin % present.size()];
      if (other == dominant && present.size() > 1) continue;
      rows.push_back(take(other));
    }
    rng.shuffle(rows);
    batches.push_back(gather_batch(split, rows, j, Protocol::imbalanced));
  }
  return batches;
}

std::string stream_manifest_csv(const std::vector<StreamBatch>& batches) {
  std::string csv = "batch_index,slot,sample_id,label\n";
  for (const StreamBatch& b : batches)
    for (std::size_t r = 0; r < b.sample_ids.size(); ++r)
      csv += std::to_string(b.batch_index) + "," + std::to_string(r) + "," + std::to_string(b.sample_ids[r]) + "," +
             std::to_string(b.labels[r]) + "\n";
  return csv;
}

}  // namespace vct
