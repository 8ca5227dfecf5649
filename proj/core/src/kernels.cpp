// SPDX-License-Identifier: Apache-2.0
#include "vct/kernels.hpp"

#include <cmath>
#include <cstring>

namespace vct::kernels {

namespace {
void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.vec()[i] += b.vec()[i];
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "mul shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.vec()[i] *= b.vec()[i];
  return out;
}

Tensor scale(const Tensor& a, Real c) {
  Tensor out = a;
  for (auto& v : out.vec()) v *= c;
  return out;
}

Tensor sum(const Tensor& a) {
  Real s = 0;
  for (Real v : a.vec()) s += v;
  Tensor out({1});
  out.vec()[0] = s;
  return out;
}

Tensor matmul_flat(const Tensor& a, const Tensor& b) {
  require(b.rank() == 2, "matmul rhs must be rank-2, got " + b.shape_str());
  require(a.last_dim() == b.dim(0), "matmul inner dimensions differ: " + a.shape_str() + " vs " + b.shape_str());
  std::vector<int> out_shape = a.shape();
  out_shape.back() = b.dim(1);
  Tensor out(out_shape);
  matmul_nn(a.data(), b.data(), out.data(), a.flat_rows(), a.last_dim(), b.dim(1), false);
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
  require(b.rank() == 1, "add_bias bias must be rank-1, got " + b.shape_str());
  require(x.last_dim() == b.dim(0), "add_bias width mismatch: " + x.shape_str() + " vs " + b.shape_str());
  Tensor out = x;
  const int rows = x.flat_rows(), c = x.last_dim();
  for (int i = 0; i < rows; ++i) {
    Real* row = out.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) row[j] += b.vec()[static_cast<std::size_t>(j)];
  }
  return out;
}

LayerNormFwd layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  const int c = x.last_dim();
  require(gamma.rank() == 1 && gamma.dim(0) == c, "layer_norm gamma width mismatch: " + gamma.shape_str());
  require(beta.rank() == 1 && beta.dim(0) == c, "layer_norm beta width mismatch: " + beta.shape_str());
  const int rows = x.flat_rows();
  LayerNormFwd r{Tensor(x.shape()), Tensor(x.shape()), Tensor({rows})};
  for (int i = 0; i < rows; ++i) {
    const Real* xi = x.data() + static_cast<std::size_t>(i) * c;
    Real* oi = r.out.data() + static_cast<std::size_t>(i) * c;
    Real* hi = r.xhat.data() + static_cast<std::size_t>(i) * c;
    Real mean = 0;
    for (int j = 0; j < c; ++j) mean += xi[j];
    mean /= static_cast<Real>(c);
    Real var = 0;
    for (int j = 0; j < c; ++j) {
      const Real d = xi[j] - mean;
      var += d * d;
    }
    var /= static_cast<Real>(c);
    const Real inv = Real(1) / std::sqrt(var + eps);
    r.inv_std.vec()[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < c; ++j) {
      hi[j] = (xi[j] - mean) * inv;
      oi[j] = gamma.vec()[static_cast<std::size_t>(j)] * hi[j] + beta.vec()[static_cast<std::size_t>(j)];
    }
  }
  return r;
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.vec()) {
    const double z = static_cast<double>(v);
    v = static_cast<Real>(z * 0.5 * (1.0 + std::erf(z * kInvSqrt2)));
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  Tensor out = x;
  const int rows = x.flat_rows(), c = x.last_dim();
  for (int i = 0; i < rows; ++i) {
    Real* row = out.data() + static_cast<std::size_t>(i) * c;
    Real m = row[0];
    for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
    Real z = 0;
    for (int j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - m);
      z += row[j];
    }
    const Real inv = Real(1) / z;
    for (int j = 0; j < c; ++j) row[j] *= inv;
  }
  return out;
}

Tensor split_heads(const Tensor& x, int heads) {
  require(x.rank() == 3, "split_heads expects [b,s,d], got " + x.shape_str());
  const int b = x.dim(0), s = x.dim(1), d = x.dim(2);
  require(d % heads == 0, "embed dim " + std::to_string(d) + " not divisible by heads " + std::to_string(heads));
  const int hd = d / heads;
  Tensor out({b, heads, s, hd});
  for (int i = 0; i < b; ++i)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < s; ++t)
        std::memcpy(out.data() + ((static_cast<std::size_t>(i) * heads + h) * s + t) * hd,
                    x.data() + (static_cast<std::size_t>(i) * s + t) * d + static_cast<std::size_t>(h) * hd,
                    sizeof(Real) * static_cast<std::size_t>(hd));
  return out;
}

Tensor merge_heads(const Tensor& x) {
  require(x.rank() == 4, "merge_heads expects [b,h,s,hd], got " + x.shape_str());
  const int b = x.dim(0), heads = x.dim(1), s = x.dim(2), hd = x.dim(3);
  Tensor out({b, s, heads * hd});
  for (int i = 0; i < b; ++i)
    for (int h = 0; h < heads; ++h)
      for (int t = 0; t < s; ++t)
        std::memcpy(out.data() + (static_cast<std::size_t>(i) * s + t) * (heads * hd) + static_cast<std::size_t>(h) * hd,
                    x.data() + ((static_cast<std::size_t>(i) * heads + h) * s + t) * hd,
                    sizeof(Real) * static_cast<std::size_t>(hd));
  return out;
}

AttentionFwd attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk, const Tensor& bk,
                       const Tensor& wv, const Tensor& bv, const Tensor& wo, const Tensor& bo, int num_heads) {
  require(x.rank() == 3, "attention expects [b,s,d], got " + x.shape_str());
  const int b = x.dim(0), s = x.dim(1), d = x.dim(2);
  require(wq.rank() == 2 && wq.dim(0) == d && wq.dim(1) == d, "attention wq shape mismatch: " + wq.shape_str());
  const int hd = d / num_heads;
  const Real alpha = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(hd)));

  AttentionFwd r;
  r.q = split_heads(add_bias(matmul_flat(x, wq), bq), num_heads);
  r.k = split_heads(add_bias(matmul_flat(x, wk), bk), num_heads);
  r.v = split_heads(add_bias(matmul_flat(x, wv), bv), num_heads);
  r.attn = Tensor({b, num_heads, s, s});
  Tensor ctx_split({b, num_heads, s, hd});
  Tensor scores({s, s});
  for (int i = 0; i < b; ++i) {
    for (int h = 0; h < num_heads; ++h) {
      const std::size_t off = (static_cast<std::size_t>(i) * num_heads + h) * s;
      const Real* qh = r.q.data() + off * hd;
      const Real* kh = r.k.data() + off * hd;
      const Real* vh = r.v.data() + off * hd;
      matmul_nt(qh, kh, scores.data(), s, hd, s, false);
      for (auto& v : scores.vec()) v *= alpha;
      Tensor a = softmax_rows(scores);
      std::memcpy(r.attn.data() + off * s, a.data(), sizeof(Real) * a.size());
      matmul_nn(a.data(), vh, ctx_split.data() + off * hd, s, s, hd, false);
    }
  }
  r.ctx = merge_heads(ctx_split);
  r.out = add_bias(matmul_flat(r.ctx, wo), bo);
  return r;
}

Tensor extract_patches(const Tensor& images, int patch) {
  require(images.rank() == 4, "extract_patches expects [b,c,h,w], got " + images.shape_str());
  const int b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  require(patch > 0 && h % patch == 0 && w % patch == 0,
          "patch size " + std::to_string(patch) + " does not tile " + images.shape_str());
  const int ph = h / patch, pw = w / patch, n = ph * pw, p = c * patch * patch;
  Tensor out({b, n, p});
  for (int i = 0; i < b; ++i)
    for (int py = 0; py < ph; ++py)
      for (int px = 0; px < pw; ++px) {
        Real* dst = out.data() + (static_cast<std::size_t>(i) * n + py * pw + px) * p;
        for (int ch = 0; ch < c; ++ch)
          for (int dy = 0; dy < patch; ++dy)
            for (int dx = 0; dx < patch; ++dx)
              *dst++ = images.vec()[((static_cast<std::size_t>(i) * c + ch) * h + py * patch + dy) * w + px * patch + dx];
      }
  return out;
}

Tensor concat_token(const Tensor& tok, const Tensor& patches) {
  require(tok.rank() == 2 && patches.rank() == 3, "concat_token expects [b,d] and [b,n,d]");
  require(tok.dim(0) == patches.dim(0) && tok.dim(1) == patches.dim(2),
          "concat_token shape mismatch: " + tok.shape_str() + " vs " + patches.shape_str());
  const int b = tok.dim(0), n = patches.dim(1), d = tok.dim(1);
  Tensor out({b, n + 1, d});
  for (int i = 0; i < b; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * (n + 1) * d, tok.data() + static_cast<std::size_t>(i) * d,
                sizeof(Real) * static_cast<std::size_t>(d));
    std::memcpy(out.data() + (static_cast<std::size_t>(i) * (n + 1) + 1) * d,
                patches.data() + static_cast<std::size_t>(i) * n * d, sizeof(Real) * static_cast<std::size_t>(n) * d);
  }
  return out;
}

Tensor take_token(const Tensor& seq) {
  require(seq.rank() == 3, "take_token expects [b,s,d], got " + seq.shape_str());
  const int b = seq.dim(0), s = seq.dim(1), d = seq.dim(2);
  Tensor out({b, d});
  for (int i = 0; i < b; ++i)
    std::memcpy(out.data() + static_cast<std::size_t>(i) * d, seq.data() + static_cast<std::size_t>(i) * s * d,
                sizeof(Real) * static_cast<std::size_t>(d));
  return out;
}

Tensor add_positional(const Tensor& x, const Tensor& pos, int offset) {
  require(pos.rank() == 2, "add_positional pos must be [s,d], got " + pos.shape_str());
  const int d = pos.dim(1);
  require(x.last_dim() == d, "add_positional width mismatch: " + x.shape_str() + " vs " + pos.shape_str());
  const int sp = x.rank() >= 3 ? x.dim(x.rank() - 2) : 1;
  require(offset >= 0 && offset + sp <= pos.dim(0), "add_positional slot range out of bounds");
  Tensor out = x;
  const int rows = x.flat_rows();
  for (int r = 0; r < rows; ++r) {
    const Real* prow = pos.data() + static_cast<std::size_t>(offset + r % sp) * d;
    Real* xrow = out.data() + static_cast<std::size_t>(r) * d;
    for (int j = 0; j < d; ++j) xrow[j] += prow[j];
  }
  return out;
}

EntropyFwd entropy(const Tensor& logits) {
  require(logits.rank() == 2, "entropy expects [b,k], got " + logits.shape_str());
  const int b = logits.dim(0), k = logits.dim(1);
  EntropyFwd r{Tensor({b}), softmax_rows(logits)};
  for (int i = 0; i < b; ++i) {
    const Real* pi = r.p.data() + static_cast<std::size_t>(i) * k;
    Real h = 0;
    for (int j = 0; j < k; ++j)
      if (pi[j] > Real(0)) h -= pi[j] * std::log(pi[j]);
    r.h.vec()[static_cast<std::size_t>(i)] = h;
  }
  return r;
}

MaskedMeanFwd masked_mean(const Tensor& v, const std::vector<unsigned char>& mask) {
  require(v.rank() == 1, "masked_mean expects rank-1 input, got " + v.shape_str());
  if (mask.size() != v.size())
    throw ShapeError("masked_mean mask length " + std::to_string(mask.size()) + " does not match " + v.shape_str());
  MaskedMeanFwd r{Tensor({1}), 0};
  Real s = 0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) {
      s += v.vec()[i];
      ++r.count;
    }
  r.out.vec()[0] = r.count > 0 ? s / static_cast<Real>(r.count) : Real(0);
  return r;
}

CrossEntropyFwd cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  require(logits.rank() == 2, "cross_entropy expects [b,k], got " + logits.shape_str());
  const int b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw ShapeError("cross_entropy labels length " + std::to_string(labels.size()) + " does not match batch " +
                     std::to_string(b));
  CrossEntropyFwd r{Tensor({1}), softmax_rows(logits)};
  Real total = 0;
  for (int i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw InputError("cross_entropy label " + std::to_string(y) + " out of range [0," + std::to_string(k) + ")");
    const Real* zi = logits.data() + static_cast<std::size_t>(i) * k;
    Real m = zi[0];
    for (int j = 1; j < k; ++j) m = std::max(m, zi[j]);
    Real z = 0;
    for (int j = 0; j < k; ++j) z += std::exp(zi[j] - m);
    total += m + std::log(z) - zi[y];
  }
  r.out.vec()[0] = total / static_cast<Real>(b);
  return r;
}

}  // namespace vct::kernels
