#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records one forward pass (typically one sample). Every value is a
// rows x cols matrix of doubles; scalars are 1x1 and feature maps are stored
// channel-major as C x (H*W). Parameters are bound from a ParamStore; after
// backward() their gradients can be harvested per tape, which keeps the
// shared weights read-only and lets independent tapes run concurrently.

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dfx {
class ParamStore;
}

namespace dfx::ag {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(int rows, int cols, std::vector<double> values);
  Var leaf(int rows, int cols, std::vector<double> values);
  Var param(const ParamStore& store, int param_id);

  int rows(Var v) const { return nodes_[v.id].rows; }
  int cols(Var v) const { return nodes_[v.id].cols; }
  std::size_t size(Var v) const { return nodes_[v.id].value.size(); }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  std::span<const double> value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  // Empty span when no gradient reached the node.
  std::span<const double> grad(Var v) const { return nodes_[v.id].grad; }

  // Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  // Adds the gradient of every bound parameter into out[param_id].
  void accumulate_param_grads(std::vector<std::vector<double>>& out) const;

  std::size_t node_count() const { return nodes_.size(); }

  // Op-author interface.
  Var push(int rows, int cols, std::vector<double> value, bool needs_grad, BackwardFn fn);
  std::vector<double>& mutable_grad(Var v);
  const std::vector<double>& val(Var v) const { return nodes_[v.id].value; }
  const std::vector<double>& grad_vec(Var v) const { return nodes_[v.id].grad; }

 private:
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<int, Var> bound_params_;
};

// ---- differentiable ops -------------------------------------------------

Var matmul(Tape& t, Var a, Var b);     // (m x k)(k x n)
Var matmul_nt(Tape& t, Var a, Var b);  // (m x k)(n x k)^T
Var transpose(Tape& t, Var a);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_row_bias(Tape& t, Var a, Var bias);  // bias 1 x cols, broadcast over rows
Var add_col_bias(Tape& t, Var a, Var bias);  // bias 1 x rows, broadcast over cols

Var relu(Tape& t, Var a);
Var gelu(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);

// Row-wise softmax of (a * s).
Var softmax_rows(Tape& t, Var a, double s = 1.0);
Var layernorm_rows(Tape& t, Var a, Var gamma, Var beta, double eps = 1e-5);

Var slice_cols(Tape& t, Var a, int start, int count);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var reshape(Tape& t, Var a, int rows, int cols);

// C x (H*W) -> 1 x C mean over spatial positions.
Var global_avg_pool(Tape& t, Var a);
Var sum_all(Tape& t, Var a);
Var mean_all(Tape& t, Var a);

struct ConvGeometry {
  int in_channels = 0;
  int height = 0;
  int width = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
  int out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
};

// x: Cin x (H*W); weight: Cout x (Cin*k*k); bias: 1 x Cout.
Var conv2d(Tape& t, Var x, Var weight, Var bias, const ConvGeometry& g);

// Image H x (W*3) in HWC order -> P x (p*p*3) rows, one per patch, raster
// patch order; each row is the patch in HWC order.
Var patchify(Tape& t, Var image, int height, int width, int channels, int patches_per_side);

// Two-class cross-entropy of 1 x K logits against a class index.
Var cross_entropy(Tape& t, Var logits, int label);

// Global-statistics SSIM between two equally shaped signals.
Var ssim(Tape& t, Var a, Var b, double c1, double c2);
// sum_i |a_i - b_i|
Var abs_diff_sum(Tape& t, Var a, Var b);

}  // namespace dfx::ag
