// SPDX-License-Identifier: Apache-2.0
#include "vct/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vct/io.hpp"

namespace vct {

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw ShapeError("cosine_similarity needs equal sizes, got " + a.shape_str() + " vs " + b.shape_str());
  if (a.size() == 0) throw InputError("cosine_similarity of empty vectors is undefined");
  double dot = 0, na = 0, nb = 0;
  const Real* pa = a.data();
  const Real* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = pa[i], y = pb[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0 || nb == 0) throw InputError("cosine_similarity of a zero vector is undefined");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix held row-major
// in `c` (destroyed). Eigenvectors come back as columns of `v`.
void jacobi_eigen(std::vector<double>& c, std::vector<double>& v, int d) {
  v.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;
  auto at = [&](std::vector<double>& m, int r, int col) -> double& {
    return m[static_cast<std::size_t>(r) * d + col];
  };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += at(c, p, q) * at(c, p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = at(c, p, q);
        if (apq == 0) continue;
        const double app = at(c, p, p), aqq = at(c, q, q);
        const double theta = (aqq - app) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double cs = 1.0 / std::sqrt(t * t + 1), sn = t * cs;
        for (int k = 0; k < d; ++k) {
          const double ckp = at(c, k, p), ckq = at(c, k, q);
          at(c, k, p) = cs * ckp - sn * ckq;
          at(c, k, q) = sn * ckp + cs * ckq;
        }
        for (int k = 0; k < d; ++k) {
          const double cpk = at(c, p, k), cqk = at(c, q, k);
          at(c, p, k) = cs * cpk - sn * cqk;
          at(c, q, k) = sn * cpk + cs * cqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = cs * vkp - sn * vkq;
          at(v, k, q) = sn * vkp + cs * vkq;
        }
      }
    }
  }
}

}  // namespace

std::vector<std::vector<double>> pca_project(const std::vector<Tensor>& snapshots, int dims) {
  if (dims < 1) throw UsageError("pca_project needs at least one output dimension");
  if (snapshots.size() < 3)
    throw InputError("pca_project needs at least 3 snapshots, got " + std::to_string(snapshots.size()));
  const int d = static_cast<int>(snapshots.front().size());
  if (d == 0) throw InputError("pca_project of empty snapshots is undefined");
  for (const Tensor& s : snapshots)
    if (static_cast<int>(s.size()) != d)
      throw ShapeError("pca_project snapshots must share one width, got " + s.shape_str());
  const int n = static_cast<int>(snapshots.size());

  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (const Tensor& s : snapshots)
    for (int j = 0; j < d; ++j) mean[static_cast<std::size_t>(j)] += s.data()[j];
  for (double& m : mean) m /= n;

  std::vector<double> x(static_cast<std::size_t>(n) * d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      x[static_cast<std::size_t>(i) * d + j] = snapshots[static_cast<std::size_t>(i)].data()[j] - mean[static_cast<std::size_t>(j)];

  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double xij = x[static_cast<std::size_t>(i) * d + j];
      if (xij == 0) continue;
      for (int k = j; k < d; ++k) cov[static_cast<std::size_t>(j) * d + k] += xij * x[static_cast<std::size_t>(i) * d + k];
    }
  for (int j = 0; j < d; ++j)
    for (int k = j; k < d; ++k) {
      cov[static_cast<std::size_t>(j) * d + k] /= (n - 1);
      cov[static_cast<std::size_t>(k) * d + j] = cov[static_cast<std::size_t>(j) * d + k];
    }

  std::vector<double> v;
  jacobi_eigen(cov, v, d);
  std::vector<int> order(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return cov[static_cast<std::size_t>(a) * d + a] > cov[static_cast<std::size_t>(b) * d + b];
  });
  const double lmax = std::max(0.0, cov[static_cast<std::size_t>(order[0]) * d + order[0]]);

  std::vector<std::vector<double>> comps;  // retained components, unit row vectors
  for (int k = 0; k < dims; ++k) {
    std::vector<double> comp(static_cast<std::size_t>(d), 0.0);
    if (k < d) {
      const int col = order[static_cast<std::size_t>(k)];
      const double lambda = cov[static_cast<std::size_t>(col) * d + col];
      // Rank-deficient directions stay zero so their coordinates project to 0.
      if (lambda > 1e-9 * lmax && lambda > 0) {
        for (int j = 0; j < d; ++j) comp[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(j) * d + col];
        int big = 0;
        for (int j = 1; j < d; ++j)
          if (std::abs(comp[static_cast<std::size_t>(j)]) > std::abs(comp[static_cast<std::size_t>(big)])) big = j;
        if (comp[static_cast<std::size_t>(big)] < 0)
          for (double& cval : comp) cval = -cval;
      }
    }
    comps.push_back(std::move(comp));
  }

  std::vector<std::vector<double>> coords(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dims), 0.0));
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dims; ++k) {
      double dot = 0;
      for (int j = 0; j < d; ++j) dot += x[static_cast<std::size_t>(i) * d + j] * comps[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      coords[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = dot;
    }
  return coords;
}

std::string pca_csv(const std::vector<std::vector<double>>& coords) {
  std::string out = "batch_index";
  const std::size_t dims = coords.empty() ? 2 : coords.front().size();
  for (std::size_t k = 0; k < dims; ++k) out += ",pc" + std::to_string(k + 1);
  out += "\n";
  for (std::size_t i = 0; i < coords.size(); ++i) {
    out += std::to_string(i);
    for (double cval : coords[i]) out += "," + format_real(cval);
    out += "\n";
  }
  return out;
}

std::string trajectory_csv(const Trajectory& t) {
  char sig[16];
  std::snprintf(sig, sizeof sig, "%08x", t.signature);
  std::string out = std::string("# signature ") + sig + "\n";
  const int d = t.snapshots.empty() ? 0 : static_cast<int>(t.snapshots.front().size());
  out += "batch_index";
  for (int j = 0; j < d; ++j) out += ",c" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < t.snapshots.size(); ++i) {
    out += std::to_string(i);
    const Tensor& s = t.snapshots[i];
    if (static_cast<int>(s.size()) != d)
      throw ShapeError("trajectory snapshots must share one width, got " + s.shape_str());
    for (int j = 0; j < d; ++j) out += "," + format_real(s.data()[j]);
    out += "\n";
  }
  return out;
}

Trajectory parse_trajectory_csv(const std::string& text, const std::string& name) {
  Trajectory t;
  t.name = name;
  std::istringstream in(text);
  std::string line;
  bool have_signature = false, have_header = false;
  int d = -1;
  long expected_index = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_signature) {
      unsigned sig = 0;
      if (std::sscanf(line.c_str(), "# signature %8x", &sig) != 1)
        throw InputError("trajectory file must start with '# signature <hex>', got: " + line);
      t.signature = sig;
      have_signature = true;
      continue;
    }
    if (!have_header) {
      if (line.rfind("batch_index", 0) != 0)
        throw InputError("trajectory header must start with 'batch_index', got: " + line);
      d = static_cast<int>(std::count(line.begin(), line.end(), ','));
      have_header = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) throw InputError("empty trajectory row");
    const long idx = std::stol(cell);
    if (idx != expected_index)
      throw InputError("trajectory batch indices must increase from 0; expected " +
                       std::to_string(expected_index) + ", got " + std::to_string(idx));
    ++expected_index;
    Tensor snap({d});
    int j = 0;
    while (std::getline(row, cell, ',')) {
      if (j >= d) throw InputError("trajectory row wider than header: " + line);
      snap.data()[j++] = static_cast<Real>(std::stod(cell));
    }
    if (j != d) throw InputError("trajectory row narrower than header: " + line);
    t.snapshots.push_back(std::move(snap));
  }
  if (!have_signature || !have_header) throw InputError("trajectory file is missing its signature or header");
  return t;
}

SimilarityReport similarity_report(const std::vector<Trajectory>& runs, const Trajectory& oracle) {
  if (oracle.snapshots.empty()) throw InputError("similarity_report needs a non-empty oracle trajectory");
  const std::size_t batches = oracle.snapshots.size();
  SimilarityReport report;
  for (const Trajectory& run : runs) {
    if (run.signature != oracle.signature)
      throw InputError("run '" + run.name + "' saw a different stream/checkpoint/seed than the oracle");
    if (run.snapshots.size() != batches)
      throw InputError("run '" + run.name + "' has " + std::to_string(run.snapshots.size()) +
                       " batches, oracle has " + std::to_string(batches));
    report.names.push_back(run.name);
    std::vector<double> sims;
    sims.reserve(batches);
    for (std::size_t j = 0; j < batches; ++j)
      sims.push_back(cosine_similarity(run.snapshots[j], oracle.snapshots[j]));
    report.per_batch.push_back(std::move(sims));
  }
  report.window = std::max<int>(1, static_cast<int>(batches) / 5);
  for (const std::vector<double>& sims : report.per_batch) {
    const std::size_t start = sims.size() - static_cast<std::size_t>(report.window);
    double mean = 0;
    for (std::size_t j = start; j < sims.size(); ++j) mean += sims[j];
    mean /= report.window;
    double var = 0;
    for (std::size_t j = start; j < sims.size(); ++j) var += (sims[j] - mean) * (sims[j] - mean);
    var /= report.window;
    report.window_mean.push_back(mean);
    report.window_variance.push_back(var);
  }
  return report;
}

std::string SimilarityReport::per_batch_csv() const {
  std::string out = "batch_index";
  for (const std::string& name : names) out += "," + name;
  out += "\n";
  const std::size_t batches = per_batch.empty() ? 0 : per_batch.front().size();
  for (std::size_t j = 0; j < batches; ++j) {
    out += std::to_string(j);
    for (const std::vector<double>& sims : per_batch) out += "," + format_real(sims[j]);
    out += "\n";
  }
  return out;
}

std::string SimilarityReport::summary_csv() const {
  std::string out = "configuration,window_mean,window_variance\n";
  for (std::size_t r = 0; r < names.size(); ++r)
    out += names[r] + "," + format_real(window_mean[r]) + "," + format_real(window_variance[r]) + "\n";
  return out;
}

std::vector<SweepPoint> sensitivity_sweep(const ViTModel& model, const std::vector<StreamBatch>& stream,
                                          const AdaptConfig& base, const std::vector<double>& domain_grid,
                                          const std::vector<double>& instance_grid) {
  std::vector<std::pair<double, double>> grid;
  auto push = [&](double dl, double ds) {
    for (const auto& [a, b] : grid)
      if (a == dl && b == ds) return;
    grid.emplace_back(dl, ds);
  };
  for (double dl : domain_grid) push(dl, base.instance_rate);
  for (double ds : instance_grid) push(base.domain_rate, ds);
  push(0.0, 0.0);

  std::vector<SweepPoint> points;
  for (const auto& [dl, ds] : grid) {
    AdaptConfig cfg = base;
    cfg.domain_rate = dl;
    cfg.instance_rate = ds;
    ViTModel work = model;
    TokenState state = init_token_state(work);
    long correct = 0, total = 0;
    for (const StreamBatch& batch : stream) {
      BatchResult r = adapt_batch(work, state, batch.adaptation_view(), cfg);
      for (std::size_t i = 0; i < r.predictions.size(); ++i) {
        if (r.predictions[i] == batch.labels[i]) ++correct;
        ++total;
      }
    }
    SweepPoint p;
    p.domain_rate = dl;
    p.instance_rate = ds;
    p.accuracy = total == 0 ? 0 : static_cast<double>(correct) / static_cast<double>(total);
    points.push_back(p);
  }
  return points;
}

std::vector<double> default_rate_grid() {
  std::vector<double> grid;
  for (int k = 0; k <= 6; ++k) grid.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  return grid;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string out = "domain_rate,instance_rate,accuracy\n";
  for (const SweepPoint& p : points)
    out += format_real(p.domain_rate) + "," + format_real(p.instance_rate) + "," + format_real(p.accuracy) + "\n";
  return out;
}

}  // namespace vct
