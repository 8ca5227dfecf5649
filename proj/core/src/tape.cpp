// SPDX-License-Identifier: Apache-2.0
#include "vct/tape.hpp"

#include <cmath>
#include <cstring>
#include <set>

#include "vct/kernels.hpp"

namespace vct {

void ParamSet::add(const std::string& name, Tensor* t) {
  if (find(name)) throw UsageError("parameter '" + name + "' registered twice");
  items.emplace_back(name, t);
}

Tensor* ParamSet::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return t;
  return nullptr;
}

std::vector<Tensor> ParamSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(items.size());
  for (const auto& [n, t] : items) out.push_back(*t);
  return out;
}

void ParamSet::restore(const std::vector<Tensor>& saved) {
  if (saved.size() != items.size()) throw UsageError("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < items.size(); ++i) *items[i].second = saved[i];
}

double global_l2_norm(const ParamSet& params, const GradMap& grads) {
  double s = 0;
  for (const auto& [name, t] : params.items) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    for (Real v : it->second.vec()) s += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(s);
}

void apply_step(const ParamSet& params, const GradMap& grads, double scale) {
  for (const auto& [name, t] : params.items) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    if (!t->same_shape(it->second))
      throw ShapeError("gradient shape " + it->second.shape_str() + " does not match parameter '" + name + "' " +
                       t->shape_str());
    const Real a = static_cast<Real>(scale);
    for (std::size_t i = 0; i < t->size(); ++i) t->vec()[i] += a * it->second.vec()[i];
  }
}

namespace {
std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.vec()[i] += src.vec()[i];
}

void colsum_into(Tensor& bias_grad, const Tensor& m) {
  const int rows = m.flat_rows(), c = m.last_dim();
  for (int i = 0; i < rows; ++i) {
    const Real* row = m.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) bias_grad.vec()[static_cast<std::size_t>(j)] += row[j];
  }
}
}  // namespace

int GradTape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

bool GradTape::any_traced(std::initializer_list<const Traced*> xs) const {
  for (const Traced* x : xs)
    if (wants(x->node)) return true;
  return false;
}

void GradTape::clear() {
  nodes_.clear();
  grads_.clear();
}

Traced GradTape::leaf(Tensor v) {
  Node n;
  n.op = Op::leaf;
  n.out_shape = v.shape();
  n.needs_grad = false;
  const int id = push(std::move(n));
  return Traced(std::move(v), id);
}

Traced GradTape::watch(const std::string& name, const Tensor& v) {
  if (name.empty()) throw UsageError("watched parameter needs a non-empty name");
  for (const auto& node : nodes_)
    if (node.name == name) throw UsageError("parameter '" + name + "' watched twice on one tape");
  Node n;
  n.op = Op::leaf;
  n.out_shape = v.shape();
  n.needs_grad = true;
  n.name = name;
  const int id = push(std::move(n));
  return Traced(v, id);
}

Traced GradTape::add(const Traced& a, const Traced& b) {
  Tensor out = kernels::add(a.value, b.value);
  if (!any_traced({&a, &b})) return Traced(std::move(out));
  Node n;
  n.op = Op::add;
  n.args = {a.node, b.node};
  n.out_shape = out.shape();
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::scale(const Traced& a, Real c) {
  Tensor out = kernels::scale(a.value, c);
  if (!any_traced({&a})) return Traced(std::move(out));
  Node n;
  n.op = Op::scale;
  n.args = {a.node};
  n.out_shape = out.shape();
  n.scalar = c;
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::mul(const Traced& a, const Traced& b) {
  Tensor out = kernels::mul(a.value, b.value);
  if (!any_traced({&a, &b})) return Traced(std::move(out));
  Node n;
  n.op = Op::mul;
  n.args = {a.node, b.node};
  n.out_shape = out.shape();
  n.saved = {a.value, b.value};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::sum(const Traced& a) {
  Tensor out = kernels::sum(a.value);
  if (!any_traced({&a})) return Traced(std::move(out));
  Node n;
  n.op = Op::sum;
  n.args = {a.node};
  n.out_shape = out.shape();
  n.ints = a.value.shape();
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::matmul(const Traced& a, const Traced& b) {
  Tensor out = kernels::matmul_flat(a.value, b.value);
  if (!any_traced({&a, &b})) return Traced(std::move(out));
  Node n;
  n.op = Op::matmul;
  n.args = {a.node, b.node};
  n.out_shape = out.shape();
  n.saved = {a.value, b.value};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::add_bias(const Traced& x, const Traced& b) {
  Tensor out = kernels::add_bias(x.value, b.value);
  if (!any_traced({&x, &b})) return Traced(std::move(out));
  Node n;
  n.op = Op::add_bias;
  n.args = {x.node, b.node};
  n.out_shape = out.shape();
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::layer_norm(const Traced& x, const Traced& gamma, const Traced& beta, Real eps) {
  kernels::LayerNormFwd f = kernels::layer_norm(x.value, gamma.value, beta.value, eps);
  if (!any_traced({&x, &gamma, &beta})) return Traced(std::move(f.out));
  Node n;
  n.op = Op::layer_norm;
  n.args = {x.node, gamma.node, beta.node};
  n.out_shape = f.out.shape();
  n.saved = {std::move(f.xhat), std::move(f.inv_std), gamma.value};
  n.needs_grad = true;
  return Traced(std::move(f.out), push(std::move(n)));
}

Traced GradTape::gelu(const Traced& x) {
  Tensor out = kernels::gelu(x.value);
  if (!any_traced({&x})) return Traced(std::move(out));
  Node n;
  n.op = Op::gelu;
  n.args = {x.node};
  n.out_shape = out.shape();
  n.saved = {x.value};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::softmax_rows(const Traced& x) {
  Tensor out = kernels::softmax_rows(x.value);
  if (!any_traced({&x})) return Traced(std::move(out));
  Node n;
  n.op = Op::softmax_rows;
  n.args = {x.node};
  n.out_shape = out.shape();
  n.saved = {out};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::attention(const Traced& x, const AttnArgs& w, int num_heads) {
  kernels::AttentionFwd f = kernels::attention(x.value, w.wq.value, w.bq.value, w.wk.value, w.bk.value, w.wv.value,
                                               w.bv.value, w.wo.value, w.bo.value, num_heads);
  if (!any_traced({&x, &w.wq, &w.bq, &w.wk, &w.bk, &w.wv, &w.bv, &w.wo, &w.bo})) return Traced(std::move(f.out));
  Node n;
  n.op = Op::attention;
  n.args = {x.node, w.wq.node, w.bq.node, w.wk.node, w.bk.node, w.wv.node, w.bv.node, w.wo.node, w.bo.node};
  n.out_shape = f.out.shape();
  n.saved = {x.value,          std::move(f.q), std::move(f.k), std::move(f.v), std::move(f.attn),
             std::move(f.ctx), w.wq.value,     w.wk.value,     w.wv.value,     w.wo.value};
  n.ints = {num_heads};
  n.needs_grad = true;
  return Traced(std::move(f.out), push(std::move(n)));
}

Traced GradTape::extract_patches(const Traced& images, int patch) {
  Tensor out = kernels::extract_patches(images.value, patch);
  if (!any_traced({&images})) return Traced(std::move(out));
  Node n;
  n.op = Op::extract_patches;
  n.args = {images.node};
  n.out_shape = out.shape();
  n.ints = {patch, images.value.dim(1), images.value.dim(2), images.value.dim(3)};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::concat_token(const Traced& tok, const Traced& patches) {
  Tensor out = kernels::concat_token(tok.value, patches.value);
  if (!any_traced({&tok, &patches})) return Traced(std::move(out));
  Node n;
  n.op = Op::concat_token;
  n.args = {tok.node, patches.node};
  n.out_shape = out.shape();
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::take_token(const Traced& seq) {
  Tensor out = kernels::take_token(seq.value);
  if (!any_traced({&seq})) return Traced(std::move(out));
  Node n;
  n.op = Op::take_token;
  n.args = {seq.node};
  n.out_shape = out.shape();
  n.ints = seq.value.shape();
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::add_positional(const Traced& x, const Traced& pos, int offset) {
  Tensor out = kernels::add_positional(x.value, pos.value, offset);
  if (!any_traced({&x, &pos})) return Traced(std::move(out));
  Node n;
  n.op = Op::add_positional;
  n.args = {x.node, pos.node};
  n.out_shape = out.shape();
  n.ints = {offset};
  n.needs_grad = true;
  return Traced(std::move(out), push(std::move(n)));
}

Traced GradTape::entropy(const Traced& logits) {
  kernels::EntropyFwd f = kernels::entropy(logits.value);
  if (!any_traced({&logits})) return Traced(std::move(f.h));
  Node n;
  n.op = Op::entropy;
  n.args = {logits.node};
  n.out_shape = f.h.shape();
  n.saved = {std::move(f.p), f.h};
  n.needs_grad = true;
  return Traced(std::move(f.h), push(std::move(n)));
}

Traced GradTape::masked_mean(const Traced& v, const std::vector<unsigned char>& mask) {
  kernels::MaskedMeanFwd f = kernels::masked_mean(v.value, mask);
  if (!any_traced({&v})) return Traced(std::move(f.out));
  Node n;
  n.op = Op::masked_mean;
  n.args = {v.node};
  n.out_shape = f.out.shape();
  n.mask = mask;
  n.ints = {f.count};
  n.needs_grad = true;
  return Traced(std::move(f.out), push(std::move(n)));
}

Traced GradTape::cross_entropy(const Traced& logits, const std::vector<int>& labels) {
  kernels::CrossEntropyFwd f = kernels::cross_entropy(logits.value, labels);
  if (!any_traced({&logits})) return Traced(std::move(f.out));
  Node n;
  n.op = Op::cross_entropy;
  n.args = {logits.node};
  n.out_shape = f.out.shape();
  n.saved = {std::move(f.p)};
  n.labels = labels;
  n.needs_grad = true;
  return Traced(std::move(f.out), push(std::move(n)));
}

// Reverse of the fused attention forward. Saved order:
// {x, q, k, v, attn, ctx, wq, wk, wv, wo}; args order:
// {x, wq, bq, wk, bk, wv, bv, wo, bo}.
void GradTape::backward_attention(const Node& n, const Tensor& dy) {
  const Tensor& x = n.saved[0];
  const Tensor& q = n.saved[1];
  const Tensor& k = n.saved[2];
  const Tensor& v = n.saved[3];
  const Tensor& attn = n.saved[4];
  const Tensor& ctx = n.saved[5];
  const Tensor& wq = n.saved[6];
  const Tensor& wk = n.saved[7];
  const Tensor& wv = n.saved[8];
  const Tensor& wo = n.saved[9];
  const int heads = n.ints[0];
  const int b = x.dim(0), s = x.dim(1), d = x.dim(2), hd = d / heads;
  const int rows = b * s;
  const Real alpha = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(hd)));

  if (wants(n.args[7])) matmul_tn(ctx.data(), dy.data(), grad_buf(n.args[7]).data(), rows, d, d, true);
  if (wants(n.args[8])) colsum_into(grad_buf(n.args[8]), dy);

  Tensor dctx({b, s, d});
  matmul_nt(dy.data(), wo.data(), dctx.data(), rows, d, d, false);
  Tensor dctx_split = kernels::split_heads(dctx, heads);

  Tensor dq_split({b, heads, s, hd}), dk_split({b, heads, s, hd}), dv_split({b, heads, s, hd});
  Tensor da({s, s}), ds({s, s});
  for (int i = 0; i < b; ++i) {
    for (int h = 0; h < heads; ++h) {
      const std::size_t off = (static_cast<std::size_t>(i) * heads + h) * s;
      const Real* qh = q.data() + off * hd;
      const Real* kh = k.data() + off * hd;
      const Real* vh = v.data() + off * hd;
      const Real* ah = attn.data() + off * s;
      const Real* dch = dctx_split.data() + off * hd;
      matmul_nt(dch, vh, da.data(), s, hd, s, false);
      matmul_tn(ah, dch, dv_split.data() + off * hd, s, s, hd, false);
      for (int r = 0; r < s; ++r) {
        const Real* ar = ah + static_cast<std::size_t>(r) * s;
        const Real* dar = da.data() + static_cast<std::size_t>(r) * s;
        Real dot = 0;
        for (int j = 0; j < s; ++j) dot += dar[j] * ar[j];
        Real* dsr = ds.data() + static_cast<std::size_t>(r) * s;
        for (int j = 0; j < s; ++j) dsr[j] = alpha * ar[j] * (dar[j] - dot);
      }
      matmul_nn(ds.data(), kh, dq_split.data() + off * hd, s, s, hd, false);
      matmul_tn(ds.data(), qh, dk_split.data() + off * hd, s, s, hd, false);
    }
  }

  Tensor dq = kernels::merge_heads(dq_split);
  Tensor dk = kernels::merge_heads(dk_split);
  Tensor dv = kernels::merge_heads(dv_split);

  if (wants(n.args[1])) matmul_tn(x.data(), dq.data(), grad_buf(n.args[1]).data(), rows, d, d, true);
  if (wants(n.args[2])) colsum_into(grad_buf(n.args[2]), dq);
  if (wants(n.args[3])) matmul_tn(x.data(), dk.data(), grad_buf(n.args[3]).data(), rows, d, d, true);
  if (wants(n.args[4])) colsum_into(grad_buf(n.args[4]), dk);
  if (wants(n.args[5])) matmul_tn(x.data(), dv.data(), grad_buf(n.args[5]).data(), rows, d, d, true);
  if (wants(n.args[6])) colsum_into(grad_buf(n.args[6]), dv);
  if (wants(n.args[0])) {
    Tensor& dx = grad_buf(n.args[0]);
    matmul_nt(dq.data(), wq.data(), dx.data(), rows, d, d, true);
    matmul_nt(dk.data(), wk.data(), dx.data(), rows, d, d, true);
    matmul_nt(dv.data(), wv.data(), dx.data(), rows, d, d, true);
  }
}

Tensor& GradTape::grad_buf(int node) {
  auto& g = grads_[static_cast<std::size_t>(node)];
  if (g.empty()) g = Tensor(nodes_[static_cast<std::size_t>(node)].out_shape);
  return g;
}

GradMap GradTape::backward(const Traced& loss) {
  if (nodes_.empty()) throw UsageError("backward called without an active tape");
  if (loss.node < 0 || loss.node >= static_cast<int>(nodes_.size()))
    throw UsageError("backward: loss was not recorded on this tape");
  if (shape_size(nodes_[static_cast<std::size_t>(loss.node)].out_shape) != 1)
    throw ShapeError("backward: loss must be scalar");

  grads_.assign(nodes_.size(), Tensor());
  grad_buf(loss.node).vec()[0] = Real(1);

  for (int i = loss.node; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (grads_[static_cast<std::size_t>(i)].empty() || n.op == Op::leaf) continue;
    const Tensor& dy = grads_[static_cast<std::size_t>(i)];

    switch (n.op) {
      case Op::add: {
        if (wants(n.args[0])) add_into(grad_buf(n.args[0]), dy);
        if (wants(n.args[1])) add_into(grad_buf(n.args[1]), dy);
        break;
      }
      case Op::scale: {
        if (wants(n.args[0])) {
          Tensor& da = grad_buf(n.args[0]);
          for (std::size_t j = 0; j < da.size(); ++j) da.vec()[j] += n.scalar * dy.vec()[j];
        }
        break;
      }
      case Op::mul: {
        const Tensor& a = n.saved[0];
        const Tensor& b = n.saved[1];
        if (wants(n.args[0])) {
          Tensor& da = grad_buf(n.args[0]);
          for (std::size_t j = 0; j < da.size(); ++j) da.vec()[j] += dy.vec()[j] * b.vec()[j];
        }
        if (wants(n.args[1])) {
          Tensor& db = grad_buf(n.args[1]);
          for (std::size_t j = 0; j < db.size(); ++j) db.vec()[j] += dy.vec()[j] * a.vec()[j];
        }
        break;
      }
      case Op::sum: {
        if (wants(n.args[0])) {
          Tensor& da = grad_buf(n.args[0]);
          for (auto& v : da.vec()) v += dy.vec()[0];
        }
        break;
      }
      case Op::matmul: {
        const Tensor& a = n.saved[0];
        const Tensor& b = n.saved[1];
        const int rows = a.flat_rows(), k = a.last_dim(), cols = b.dim(1);
        if (wants(n.args[0])) matmul_nt(dy.data(), b.data(), grad_buf(n.args[0]).data(), rows, cols, k, true);
        if (wants(n.args[1])) matmul_tn(a.data(), dy.data(), grad_buf(n.args[1]).data(), rows, k, cols, true);
        break;
      }
      case Op::add_bias: {
        if (wants(n.args[0])) add_into(grad_buf(n.args[0]), dy);
        if (wants(n.args[1])) colsum_into(grad_buf(n.args[1]), dy);
        break;
      }
      case Op::layer_norm: {
        const Tensor& xhat = n.saved[0];
        const Tensor& inv_std = n.saved[1];
        const Tensor& gamma = n.saved[2];
        const int rows = xhat.flat_rows(), c = xhat.last_dim();
        Tensor* dx = wants(n.args[0]) ? &grad_buf(n.args[0]) : nullptr;
        Tensor* dgamma = wants(n.args[1]) ? &grad_buf(n.args[1]) : nullptr;
        Tensor* dbeta = wants(n.args[2]) ? &grad_buf(n.args[2]) : nullptr;
        std::vector<Real> dxhat(static_cast<std::size_t>(c));
        for (int r = 0; r < rows; ++r) {
          const Real* hy = xhat.data() + static_cast<std::size_t>(r) * c;
          const Real* dyr = dy.data() + static_cast<std::size_t>(r) * c;
          if (dgamma || dbeta)
            for (int j = 0; j < c; ++j) {
              if (dgamma) dgamma->vec()[static_cast<std::size_t>(j)] += dyr[j] * hy[j];
              if (dbeta) dbeta->vec()[static_cast<std::size_t>(j)] += dyr[j];
            }
          if (dx) {
            Real m1 = 0, m2 = 0;
            for (int j = 0; j < c; ++j) {
              dxhat[static_cast<std::size_t>(j)] = dyr[j] * gamma.vec()[static_cast<std::size_t>(j)];
              m1 += dxhat[static_cast<std::size_t>(j)];
              m2 += dxhat[static_cast<std::size_t>(j)] * hy[j];
            }
            m1 /= static_cast<Real>(c);
            m2 /= static_cast<Real>(c);
            const Real inv = inv_std.vec()[static_cast<std::size_t>(r)];
            Real* dxr = dx->data() + static_cast<std::size_t>(r) * c;
            for (int j = 0; j < c; ++j) dxr[j] += inv * (dxhat[static_cast<std::size_t>(j)] - m1 - hy[j] * m2);
          }
        }
        break;
      }
      case Op::gelu: {
        if (wants(n.args[0])) {
          const Tensor& x = n.saved[0];
          Tensor& dx = grad_buf(n.args[0]);
          for (std::size_t j = 0; j < dx.size(); ++j) {
            const double z = static_cast<double>(x.vec()[j]);
            const double phi = 0.5 * (1.0 + std::erf(z * 0.70710678118654752440));
            const double pdf = 0.39894228040143267794 * std::exp(-0.5 * z * z);
            dx.vec()[j] += dy.vec()[j] * static_cast<Real>(phi + z * pdf);
          }
        }
        break;
      }
      case Op::softmax_rows: {
        if (wants(n.args[0])) {
          const Tensor& y = n.saved[0];
          Tensor& dx = grad_buf(n.args[0]);
          const int rows = y.flat_rows(), c = y.last_dim();
          for (int r = 0; r < rows; ++r) {
            const Real* yr = y.data() + static_cast<std::size_t>(r) * c;
            const Real* dyr = dy.data() + static_cast<std::size_t>(r) * c;
            Real dot = 0;
            for (int j = 0; j < c; ++j) dot += dyr[j] * yr[j];
            Real* dxr = dx.data() + static_cast<std::size_t>(r) * c;
            for (int j = 0; j < c; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
          }
        }
        break;
      }
      case Op::attention: {
        backward_attention(n, dy);
        break;
      }
      case Op::extract_patches: {
        if (wants(n.args[0])) {
          Tensor& dimg = grad_buf(n.args[0]);
          const int patch = n.ints[0], c = n.ints[1], h = n.ints[2], w = n.ints[3];
          const int b = n.out_shape[0], pw = w / patch, p = n.out_shape[2];
          const int ph = h / patch;
          for (int i = 0; i < b; ++i)
            for (int py = 0; py < ph; ++py)
              for (int px = 0; px < pw; ++px) {
                const Real* src = dy.data() + (static_cast<std::size_t>(i) * (ph * pw) + py * pw + px) * p;
                for (int ch = 0; ch < c; ++ch)
                  for (int yy = 0; yy < patch; ++yy)
                    for (int xx = 0; xx < patch; ++xx)
                      dimg.vec()[((static_cast<std::size_t>(i) * c + ch) * h + py * patch + yy) * w + px * patch + xx] +=
                          *src++;
              }
        }
        break;
      }
      case Op::concat_token: {
        const int b = n.out_shape[0], s = n.out_shape[1], d = n.out_shape[2];
        if (wants(n.args[0])) {
          Tensor& dtok = grad_buf(n.args[0]);
          for (int i = 0; i < b; ++i)
            for (int j = 0; j < d; ++j)
              dtok.vec()[static_cast<std::size_t>(i) * d + j] += dy.vec()[static_cast<std::size_t>(i) * s * d + j];
        }
        if (wants(n.args[1])) {
          Tensor& dpatch = grad_buf(n.args[1]);
          for (int i = 0; i < b; ++i)
            for (std::size_t j = 0; j < static_cast<std::size_t>(s - 1) * d; ++j)
              dpatch.vec()[static_cast<std::size_t>(i) * (s - 1) * d + j] +=
                  dy.vec()[(static_cast<std::size_t>(i) * s + 1) * d + j];
        }
        break;
      }
      case Op::take_token: {
        if (wants(n.args[0])) {
          Tensor& dseq = grad_buf(n.args[0]);
          const int b = n.ints[0], s = n.ints[1], d = n.ints[2];
          for (int i = 0; i < b; ++i)
            for (int j = 0; j < d; ++j)
              dseq.vec()[static_cast<std::size_t>(i) * s * d + j] += dy.vec()[static_cast<std::size_t>(i) * d + j];
        }
        break;
      }
      case Op::add_positional: {
        if (wants(n.args[0])) add_into(grad_buf(n.args[0]), dy);
        if (wants(n.args[1])) {
          Tensor& dpos = grad_buf(n.args[1]);
          const int d = dpos.dim(1);
          const int sp = n.out_shape.size() >= 3 ? n.out_shape[n.out_shape.size() - 2] : 1;
          const int offset = n.ints[0];
          const int rows = static_cast<int>(dy.size()) / d;
          for (int r = 0; r < rows; ++r) {
            Real* prow = dpos.data() + static_cast<std::size_t>(offset + r % sp) * d;
            const Real* dyr = dy.data() + static_cast<std::size_t>(r) * d;
            for (int j = 0; j < d; ++j) prow[j] += dyr[j];
          }
        }
        break;
      }
      case Op::entropy: {
        if (wants(n.args[0])) {
          const Tensor& p = n.saved[0];
          const Tensor& hval = n.saved[1];
          Tensor& dz = grad_buf(n.args[0]);
          const int b = p.dim(0), k = p.dim(1);
          for (int i = 0; i < b; ++i) {
            const Real dh = dy.vec()[static_cast<std::size_t>(i)];
            if (dh == Real(0)) continue;
            const Real hi = hval.vec()[static_cast<std::size_t>(i)];
            const Real* pi = p.data() + static_cast<std::size_t>(i) * k;
            Real* dzi = dz.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j)
              if (pi[j] > Real(0)) dzi[j] += dh * (-pi[j] * (std::log(pi[j]) + hi));
          }
        }
        break;
      }
      case Op::masked_mean: {
        if (wants(n.args[0]) && n.ints[0] > 0) {
          Tensor& dv = grad_buf(n.args[0]);
          const Real g = dy.vec()[0] / static_cast<Real>(n.ints[0]);
          for (std::size_t j = 0; j < dv.size(); ++j)
            if (n.mask[j]) dv.vec()[j] += g;
        }
        break;
      }
      case Op::cross_entropy: {
        if (wants(n.args[0])) {
          const Tensor& p = n.saved[0];
          Tensor& dz = grad_buf(n.args[0]);
          const int b = p.dim(0), k = p.dim(1);
          const Real g = dy.vec()[0] / static_cast<Real>(b);
          for (int i = 0; i < b; ++i) {
            const Real* pi = p.data() + static_cast<std::size_t>(i) * k;
            Real* dzi = dz.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < k; ++j) dzi[j] += g * (pi[j] - (j == n.labels[static_cast<std::size_t>(i)] ? Real(1) : Real(0)));
          }
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }

  GradMap out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name.empty()) continue;
    out[nodes_[i].name] = grads_[i].empty() ? Tensor(nodes_[i].out_shape) : std::move(grads_[i]);
  }
  clear();
  return out;
}

}  // namespace vct
