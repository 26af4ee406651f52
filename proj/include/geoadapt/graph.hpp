#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "geoadapt/param_store.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt {

struct ValueRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over the primitive set the surrogate needs: affine,
// layer norm, fused multi-head attention, GELU, residual add, LoRA-adapted
// affine, and MSE loss. Every primitive checks its output for NaN/Inf and
// aborts with the layer label on failure.
//
// A Graph records one forward computation and can run backward() once;
// parameter gradients are kept graph-local until flush_param_grads(), so
// independent graphs may run forward/backward concurrently against the same
// ParameterStore and be reduced in a caller-chosen deterministic order.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  ValueRef constant(Tensor t, std::string label = "const");
  ValueRef param(ParamTensor& p);

  // y = x * W^T + b, x: [n, d_in], W: [d_out, d_in], b: [d_out].
  ValueRef affine(ValueRef x, ParamTensor& w, ParamTensor& b, const std::string& label);
  // Per-row (x - mean) / sqrt(var + 1e-30) * gain + bias. The tiny epsilon
  // keeps the normalized row statistics exact to ~1e-12 for any non-degenerate
  // row while avoiding a hard 0/0 on constant rows.
  ValueRef layer_norm(ValueRef x, ParamTensor& gain, ParamTensor& bias,
                      const std::string& label);
  // Fused multi-head scaled dot-product attention with per-layer projections.
  ValueRef mha(ValueRef xq, ValueRef xkv, ParamTensor& wq, ParamTensor& bq, ParamTensor& wk,
               ParamTensor& bk, ParamTensor& wv, ParamTensor& bv, ParamTensor& wo,
               ParamTensor& bo, int n_heads, const std::string& label);
  // Attention core for already-projected q/k/v (used when the projections
  // carry LoRA adapters); no output projection.
  ValueRef mha_preprojected(ValueRef q, ValueRef k, ValueRef v, int n_heads,
                            const std::string& label);
  ValueRef gelu(ValueRef x, const std::string& label = "gelu");
  // affine -> GELU -> affine.
  ValueRef gelu_mlp(ValueRef x, ParamTensor& w_in, ParamTensor& b_in, ParamTensor& w_out,
                    ParamTensor& b_out, const std::string& label);
  ValueRef add(ValueRef a, ValueRef b, const std::string& label = "residual");
  ValueRef scale(ValueRef x, double factor, const std::string& label = "scale");
  // y = x*W0^T + b + (alpha/r) * (x*A^T)*B^T. Gradients flow to A, B and x
  // only; the base weights receive zero gradient by construction.
  ValueRef lora_affine(ValueRef x, ParamTensor& w0, ParamTensor& b, ParamTensor& a,
                       ParamTensor& bmat, double alpha, int rank, const std::string& label);
  // Mean squared error against a fixed target, averaged over all elements.
  ValueRef mse(ValueRef pred, const Tensor& target, const std::string& label = "mse");

  const Tensor& value(ValueRef v) const;
  // Gradient of the last backward()'s loss w.r.t. this node (zero if unreached).
  Tensor grad_of(ValueRef v) const;

  // Reverse pass from a scalar loss. Throws NumericError if the tape was
  // already consumed (stale graph) and on non-finite gradients.
  void backward(ValueRef loss);

  // Graph-local parameter gradient (zeros if the parameter is unreachable).
  Tensor param_grad(const ParamTensor& p) const;
  // Adds all graph-local parameter gradients into ParamTensor::grad,
  // in parameter-leaf creation order.
  void flush_param_grads();

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Constant,
    Param,
    Affine,
    LayerNorm,
    Mha,
    MhaCore,
    Gelu,
    Add,
    Scale,
    LoraAffine,
    Mse
  };

  struct Node {
    Op op;
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool grad_live = false;
    ParamTensor* bound = nullptr;
    double scalar_arg = 0.0;
    int heads = 0;
    Tensor target;              // mse
    std::vector<Tensor> saved;  // op-specific intermediates
    std::string label;
  };

  int push(Node n);
  void check_finite(const Tensor& t, const std::string& label, const char* what) const;
  Tensor& grad_buf(int id);

  void backward_affine(Node& n);
  void backward_layer_norm(Node& n);
  void backward_mha(Node& n);
  void backward_mha_core(Node& n);
  void backward_gelu(Node& n);
  void backward_lora(Node& n);

  // deque: references to node values remain valid across push_back.
  std::deque<Node> nodes_;
  std::vector<int> param_leaves_;                  // creation order
  std::map<const ParamTensor*, int> param_index_;  // dedup
  bool consumed_ = false;
};

// Numerically stable row-wise softmax (shared by the attention kernel and
// the test oracles).
void softmax_rows_inplace(Tensor& t);

// Thin dispatcher over the primitive inventory; builds a throwaway graph.
// kind: affine | layer_norm | mha | gelu_mlp | residual.
// Parameter naming contract: affine -> weight/bias; layer_norm -> gain/bias;
// mha -> {q,k,v,out}.weight/.bias; gelu_mlp -> in.weight/in.bias/out.weight/out.bias.
Tensor apply_layer(const std::string& kind, ParameterStore& params,
                   const std::vector<Tensor>& inputs, int n_heads = 1);

}  // namespace geoadapt
