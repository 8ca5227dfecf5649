// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vct/tensor.hpp"

namespace vct {

// A tensor plus its position on a tape. node < 0 means the value is a
// constant for differentiation: gradients flow around it but not into it.
struct Traced {
  Tensor value;
  int node = -1;

  Traced() = default;
  explicit Traced(Tensor v) : value(std::move(v)) {}
  Traced(Tensor v, int n) : value(std::move(v)), node(n) {}
};

using GradMap = std::map<std::string, Tensor>;

// Named views into mutable parameters; ordering is insertion order and is
// part of the contract (norms and updates iterate in this order).
struct ParamSet {
  std::vector<std::pair<std::string, Tensor*>> items;

  void add(const std::string& name, Tensor* t);
  bool empty() const { return items.empty(); }
  std::size_t size() const { return items.size(); }
  Tensor* find(const std::string& name) const;
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& saved);
};

double global_l2_norm(const ParamSet& params, const GradMap& grads);
// p += scale * g for every parameter with a gradient entry.
void apply_step(const ParamSet& params, const GradMap& grads, double scale);

// Reverse-mode tape over a fixed set of primitives. Forward calls record
// nodes with the activations their backward rules need; backward replays
// the records once in reverse and then clears the tape.
class GradTape {
 public:
  struct AttnArgs {
    Traced wq, bq, wk, bk, wv, bv, wo, bo;
  };

  // Tracked input without gradient reporting.
  Traced leaf(Tensor v);
  // Tracked input whose gradient is reported under `name`.
  Traced watch(const std::string& name, const Tensor& v);

  std::size_t node_count() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear();

  // Primitives. Shapes follow the row-major flattening convention of
  // Tensor: a trailing axis of width k is the contraction axis.
  Traced add(const Traced& a, const Traced& b);
  Traced scale(const Traced& a, Real c);
  Traced mul(const Traced& a, const Traced& b);
  Traced sum(const Traced& a);
  Traced matmul(const Traced& a, const Traced& b);          // [...,k] x [k,n]
  Traced add_bias(const Traced& x, const Traced& b);        // [...,c] + [c]
  Traced layer_norm(const Traced& x, const Traced& gamma, const Traced& beta, Real eps);
  Traced gelu(const Traced& x);
  Traced softmax_rows(const Traced& x);
  Traced attention(const Traced& x, const AttnArgs& w, int num_heads);  // [b,s,d]
  Traced extract_patches(const Traced& images, int patch);  // [b,c,h,w] -> [b,n,p]
  Traced concat_token(const Traced& tok, const Traced& patches);
  Traced take_token(const Traced& seq);                     // [b,s,d] -> [b,d] (slot 0)
  Traced add_positional(const Traced& x, const Traced& pos, int offset);
  Traced entropy(const Traced& logits);                     // [b,k] -> [b]
  Traced masked_mean(const Traced& v, const std::vector<unsigned char>& mask);
  Traced cross_entropy(const Traced& logits, const std::vector<int>& labels);

  // Seeds d(loss)=1, sweeps the records in reverse, returns gradients for
  // every watched leaf (zeros when unreached), and clears the tape.
  GradMap backward(const Traced& loss);

 private:
  enum class Op : std::uint8_t {
    leaf,
    add,
    scale,
    mul,
    sum,
    matmul,
    add_bias,
    layer_norm,
    gelu,
    softmax_rows,
    attention,
    extract_patches,
    concat_token,
    take_token,
    add_positional,
    entropy,
    masked_mean,
    cross_entropy,
  };

  struct Node {
    Op op;
    std::vector<int> args;
    std::vector<int> out_shape;
    std::vector<Tensor> saved;
    std::vector<int> ints;
    Real scalar = 0;
    std::vector<unsigned char> mask;
    std::vector<int> labels;
    bool needs_grad = false;
    std::string name;
  };

  int push(Node n);
  bool wants(int node) const { return node >= 0 && nodes_[static_cast<std::size_t>(node)].needs_grad; }
  bool any_traced(std::initializer_list<const Traced*> xs) const;
  Tensor& grad_buf(int node);
  void backward_attention(const Node& n, const Tensor& dy);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace vct
