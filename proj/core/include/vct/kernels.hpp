// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "vct/tensor.hpp"

// Forward computations shared by the traced (tape) and plain inference
// paths. Keeping a single implementation per primitive guarantees both
// paths produce bit-identical values.
namespace vct::kernels {

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real c);
Tensor sum(const Tensor& a);
Tensor matmul_flat(const Tensor& a, const Tensor& b);  // [...,k] x [k,n]
Tensor add_bias(const Tensor& x, const Tensor& b);

struct LayerNormFwd {
  Tensor out, xhat, inv_std;
};
LayerNormFwd layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps);

Tensor gelu(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

struct AttentionFwd {
  Tensor out;
  Tensor q, k, v;  // head-split [b,h,s,hd]
  Tensor attn;     // [b,h,s,s]
  Tensor ctx;      // merged [b,s,d]
};
AttentionFwd attention(const Tensor& x, const Tensor& wq, const Tensor& bq, const Tensor& wk, const Tensor& bk,
                       const Tensor& wv, const Tensor& bv, const Tensor& wo, const Tensor& bo, int num_heads);

Tensor extract_patches(const Tensor& images, int patch);
Tensor concat_token(const Tensor& tok, const Tensor& patches);
Tensor take_token(const Tensor& seq);
Tensor add_positional(const Tensor& x, const Tensor& pos, int offset);

struct EntropyFwd {
  Tensor h;  // [b]
  Tensor p;  // [b,k]
};
EntropyFwd entropy(const Tensor& logits);

struct MaskedMeanFwd {
  Tensor out;  // scalar [1]
  int count;
};
MaskedMeanFwd masked_mean(const Tensor& v, const std::vector<unsigned char>& mask);

struct CrossEntropyFwd {
  Tensor out;  // scalar [1], mean negative log-likelihood
  Tensor p;    // [b,k]
};
CrossEntropyFwd cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Head-split helpers: [b,s,d] <-> [b,h,s,d/h].
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

}  // namespace vct::kernels
