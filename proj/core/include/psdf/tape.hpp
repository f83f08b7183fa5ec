#pragma once

#include "psdf/common.hpp"

#include <vector>

namespace psdf::ad {

using psdf::Mat;

// Reverse-mode autodiff over Eigen double matrices. A Tape is built per
// evaluation (define-by-run) and discarded after backward(). Spatial
// derivatives that later need parameter gradients are expressed as primal
// graph ops, so a single backward pass covers mixed second-order terms.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Leaves. `constant` never receives gradients; `param` accumulates into
  // *grad on backward(). Both reference external storage (no copy).
  Var constant(const Mat& v);
  Var constant_copy(Mat v);
  Var param(const Mat& v, Mat* grad);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var div(Var a, Var b);  // elementwise
  Var neg(Var a);
  Var add_scalar(Var a, double s);
  Var mul_scalar(Var a, double s);

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var broadcast_cols(Var col, int n);      // C×1 -> C×N
  Var add_colvec(Var m, Var col);          // C×N + C×1
  Var mul_rowvec(Var m, Var row);          // C×N ⊙ (1×N per column)

  Var sin(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var square(Var a);
  Var abs(Var a);
  Var inv(Var a);  // 1/x
  Var sigmoid(Var a);
  Var softplus(Var a, double beta);  // (1/beta) log(1+exp(beta x))
  Var max_const(Var a, double c);
  Var min_const(Var a, double c);

  Var sum(Var a);        // -> 1×1
  Var mean(Var a);       // -> 1×1
  Var colwise_sum(Var a);  // C×N -> 1×N
  Var rowwise_sum(Var a);  // C×N -> C×1

  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, int r0, int nrows);
  Var gather_cols(Var a, std::vector<int> idx);
  Var repeat_interleave_cols(Var a, int k);

  // Ragged per-ray ops; offsets has R+1 entries over the column axis.
  Var segment_sum(Var a, std::vector<int> offsets);
  // T_i = prod_{j<i in segment} e_j (T=1 at each segment head). e > 0.
  Var segment_cumprod_excl(Var e, std::vector<int> offsets);

  // Bilinear sample of constant channel maps (each H×W) at taped coords
  // (2×N; row0=x, row1=y, pixel-center units). Gradients flow to coords.
  Var sample_map(const std::vector<Mat>* maps, Var coords);

  // Laplace-CDF density of the signed distance (interior-positive form).
  Var laplace_density(Var s, Var beta);

  const Mat& val(Var v) const;
  void backward(Var root);  // root must be 1×1

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    Leaf, Add, Sub, Mul, Div, Neg, AddS, MulS, MatMul, Transpose,
    BroadcastCols, AddColVec, MulRowVec, Sin, Cos, Exp, Log, Sqrt, Square,
    Abs, Inv, Sigmoid, Softplus, MaxC, MinC, Sum, Mean, ColSum, RowSum,
    ConcatRows, SliceRows, GatherCols, RepeatCols, SegSum, SegCumprodExcl,
    SampleMap, LaplaceDensity
  };
  struct Node {
    Op op;
    int a = -1, b = -1;
    double s0 = 0.0;
    std::vector<int> idx;
    const std::vector<Mat>* maps = nullptr;
    const Mat* ref = nullptr;  // leaf external value
    Mat val;
    Mat adj;
    Mat* sink = nullptr;
    bool needs = false;
    bool has_adj = false;
  };

  const Mat& v(int id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.val;
  }
  Mat& adjoint(int id);
  int push(Node n);
  Var unary(Op op, Var a, double s = 0.0);
  Var binary(Op op, Var a, Var b);

  std::vector<Node> nodes_;
};

}  // namespace psdf::ad
