#include "psdf/tape.hpp"

#include <cassert>
#include <cmath>

namespace psdf::ad {

namespace {

inline double softplus_s(double x, double beta) {
  double bx = beta * x;
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(bx))) / beta;
}
inline double sigmoid_s(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Density branches; argument convention is interior-positive (density high
// where the SDF is negative).
inline double lap_sigma(double s, double beta) {
  if (s >= 0) return std::exp(-s / beta) / (2.0 * beta);
  return (1.0 - 0.5 * std::exp(s / beta)) / beta;
}
inline double lap_dsigma_ds(double s, double beta) {
  return -std::exp(-std::abs(s) / beta) / (2.0 * beta * beta);
}
inline double lap_dsigma_dbeta(double s, double beta) {
  double b2 = beta * beta;
  if (s >= 0) {
    double e = std::exp(-s / beta);
    return e / (2.0 * b2) * (s / beta - 1.0);
  }
  double e = std::exp(s / beta);
  return -(1.0 - 0.5 * e) / b2 + s * e / (2.0 * b2 * beta);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(const Mat& v) {
  Node n;
  n.op = Op::Leaf;
  n.ref = &v;
  return {push(std::move(n))};
}

Var Tape::constant_copy(Mat v) {
  Node n;
  n.op = Op::Leaf;
  n.val = std::move(v);
  return {push(std::move(n))};
}

Var Tape::param(const Mat& v, Mat* grad) {
  Node n;
  n.op = Op::Leaf;
  n.ref = &v;
  n.sink = grad;
  n.needs = grad != nullptr;
  return {push(std::move(n))};
}

Mat& Tape::adjoint(int id) {
  Node& n = nodes_[id];
  if (!n.has_adj) {
    n.adj = Mat::Zero(v(id).rows(), v(id).cols());
    n.has_adj = true;
  }
  return n.adj;
}

Var Tape::unary(Op op, Var a, double s) {
  Node n;
  n.op = op;
  n.a = a.id;
  n.s0 = s;
  n.needs = nodes_[a.id].needs;
  const Mat& x = v(a.id);
  switch (op) {
    case Op::Neg: n.val = -x; break;
    case Op::AddS: n.val = x.array() + s; break;
    case Op::MulS: n.val = x * s; break;
    case Op::Transpose: n.val = x.transpose(); break;
    case Op::Sin: n.val = x.array().sin(); break;
    case Op::Cos: n.val = x.array().cos(); break;
    case Op::Exp: n.val = x.array().exp(); break;
    case Op::Log: n.val = x.array().log(); break;
    case Op::Sqrt: n.val = x.array().sqrt(); break;
    case Op::Square: n.val = x.array().square(); break;
    case Op::Abs: n.val = x.array().abs(); break;
    case Op::Inv: n.val = x.array().inverse(); break;
    case Op::Sigmoid:
      n.val = x.unaryExpr([](double t) { return sigmoid_s(t); });
      break;
    case Op::Softplus:
      n.val = x.unaryExpr([s](double t) { return softplus_s(t, s); });
      break;
    case Op::MaxC: n.val = x.array().max(s); break;
    case Op::MinC: n.val = x.array().min(s); break;
    case Op::Sum: n.val = Mat::Constant(1, 1, x.sum()); break;
    case Op::Mean: n.val = Mat::Constant(1, 1, x.mean()); break;
    case Op::ColSum: n.val = x.colwise().sum(); break;
    case Op::RowSum: n.val = x.rowwise().sum(); break;
    default: assert(false);
  }
  return {push(std::move(n))};
}

Var Tape::binary(Op op, Var a, Var b) {
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.needs = nodes_[a.id].needs || nodes_[b.id].needs;
  const Mat& x = v(a.id);
  const Mat& y = v(b.id);
  switch (op) {
    case Op::Add: n.val = x + y; break;
    case Op::Sub: n.val = x - y; break;
    case Op::Mul: n.val = x.array() * y.array(); break;
    case Op::Div: n.val = x.array() / y.array(); break;
    case Op::MatMul: n.val.noalias() = x * y; break;
    case Op::AddColVec: n.val = x.colwise() + Eigen::VectorXd(y.col(0)); break;
    case Op::MulRowVec:
      n.val = x.array().rowwise() * y.row(0).array();
      break;
    default: assert(false);
  }
  return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }
Var Tape::matmul(Var a, Var b) { return binary(Op::MatMul, a, b); }
Var Tape::add_colvec(Var m, Var col) { return binary(Op::AddColVec, m, col); }
Var Tape::mul_rowvec(Var m, Var row) { return binary(Op::MulRowVec, m, row); }
Var Tape::neg(Var a) { return unary(Op::Neg, a); }
Var Tape::add_scalar(Var a, double s) { return unary(Op::AddS, a, s); }
Var Tape::mul_scalar(Var a, double s) { return unary(Op::MulS, a, s); }
Var Tape::transpose(Var a) { return unary(Op::Transpose, a); }
Var Tape::sin(Var a) { return unary(Op::Sin, a); }
Var Tape::cos(Var a) { return unary(Op::Cos, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::sqrt(Var a) { return unary(Op::Sqrt, a); }
Var Tape::square(Var a) { return unary(Op::Square, a); }
Var Tape::abs(Var a) { return unary(Op::Abs, a); }
Var Tape::inv(Var a) { return unary(Op::Inv, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::softplus(Var a, double beta) { return unary(Op::Softplus, a, beta); }
Var Tape::max_const(Var a, double c) { return unary(Op::MaxC, a, c); }
Var Tape::min_const(Var a, double c) { return unary(Op::MinC, a, c); }
Var Tape::sum(Var a) { return unary(Op::Sum, a); }
Var Tape::mean(Var a) { return unary(Op::Mean, a); }
Var Tape::colwise_sum(Var a) { return unary(Op::ColSum, a); }
Var Tape::rowwise_sum(Var a) { return unary(Op::RowSum, a); }

Var Tape::broadcast_cols(Var col, int ncols) {
  Node n;
  n.op = Op::BroadcastCols;
  n.a = col.id;
  n.needs = nodes_[col.id].needs;
  assert(v(col.id).cols() == 1);
  n.val = v(col.id).replicate(1, ncols);
  return {push(std::move(n))};
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  Node n;
  n.op = Op::ConcatRows;
  assert(!parts.empty());
  Eigen::Index rows = 0;
  Eigen::Index cols = v(parts[0].id).cols();
  for (Var p : parts) {
    rows += v(p.id).rows();
    n.idx.push_back(p.id);
    n.needs = n.needs || nodes_[p.id].needs;
  }
  n.val.resize(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    const Mat& x = v(p.id);
    n.val.middleRows(r, x.rows()) = x;
    r += x.rows();
  }
  return {push(std::move(n))};
}

Var Tape::slice_rows(Var a, int r0, int nrows) {
  Node n;
  n.op = Op::SliceRows;
  n.a = a.id;
  n.needs = nodes_[a.id].needs;
  n.idx = {r0, nrows};
  n.val = v(a.id).middleRows(r0, nrows);
  return {push(std::move(n))};
}

Var Tape::gather_cols(Var a, std::vector<int> idx) {
  Node n;
  n.op = Op::GatherCols;
  n.a = a.id;
  n.needs = nodes_[a.id].needs;
  const Mat& x = v(a.id);
  n.val.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) n.val.col(k) = x.col(idx[k]);
  n.idx = std::move(idx);
  return {push(std::move(n))};
}

Var Tape::repeat_interleave_cols(Var a, int k) {
  Node n;
  n.op = Op::RepeatCols;
  n.a = a.id;
  n.needs = nodes_[a.id].needs;
  n.s0 = k;
  const Mat& x = v(a.id);
  n.val.resize(x.rows(), x.cols() * k);
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (int j = 0; j < k; ++j) n.val.col(i * k + j) = x.col(i);
  return {push(std::move(n))};
}

Var Tape::segment_sum(Var a, std::vector<int> offsets) {
  Node n;
  n.op = Op::SegSum;
  n.a = a.id;
  n.needs = nodes_[a.id].needs;
  const Mat& x = v(a.id);
  int nseg = static_cast<int>(offsets.size()) - 1;
  n.val = Mat::Zero(x.rows(), nseg);
  for (int r = 0; r < nseg; ++r)
    for (int j = offsets[r]; j < offsets[r + 1]; ++j) n.val.col(r) += x.col(j);
  n.idx = std::move(offsets);
  return {push(std::move(n))};
}

Var Tape::segment_cumprod_excl(Var e, std::vector<int> offsets) {
  Node n;
  n.op = Op::SegCumprodExcl;
  n.a = e.id;
  n.needs = nodes_[e.id].needs;
  const Mat& x = v(e.id);
  assert(x.rows() == 1);
  n.val.resize(1, x.cols());
  int nseg = static_cast<int>(offsets.size()) - 1;
  for (int r = 0; r < nseg; ++r) {
    double t = 1.0;
    for (int j = offsets[r]; j < offsets[r + 1]; ++j) {
      n.val(0, j) = t;
      t *= x(0, j);
    }
  }
  n.idx = std::move(offsets);
  return {push(std::move(n))};
}

Var Tape::sample_map(const std::vector<Mat>* maps, Var coords) {
  Node n;
  n.op = Op::SampleMap;
  n.a = coords.id;
  n.needs = nodes_[coords.id].needs;
  n.maps = maps;
  const Mat& c = v(coords.id);
  assert(c.rows() == 2);
  const auto C = static_cast<Eigen::Index>(maps->size());
  const Mat& m0 = (*maps)[0];
  const double W = static_cast<double>(m0.cols());
  const double H = static_cast<double>(m0.rows());
  n.val.resize(C, c.cols());
  for (Eigen::Index i = 0; i < c.cols(); ++i) {
    double x = std::min(std::max(c(0, i), 0.0), W - 1.0);
    double y = std::min(std::max(c(1, i), 0.0), H - 1.0);
    int j0 = std::min(static_cast<int>(x), static_cast<int>(W) - 2);
    int i0 = std::min(static_cast<int>(y), static_cast<int>(H) - 2);
    j0 = std::max(j0, 0);
    i0 = std::max(i0, 0);
    double fx = x - j0, fy = y - i0;
    for (Eigen::Index ch = 0; ch < C; ++ch) {
      const Mat& m = (*maps)[ch];
      n.val(ch, i) = (1 - fy) * ((1 - fx) * m(i0, j0) + fx * m(i0, j0 + 1)) +
                     fy * ((1 - fx) * m(i0 + 1, j0) + fx * m(i0 + 1, j0 + 1));
    }
  }
  return {push(std::move(n))};
}

Var Tape::laplace_density(Var s, Var beta) {
  Node n;
  n.op = Op::LaplaceDensity;
  n.a = s.id;
  n.b = beta.id;
  n.needs = nodes_[s.id].needs || nodes_[beta.id].needs;
  const Mat& x = v(s.id);
  const double bv = v(beta.id)(0, 0);
  if (bv <= 0) throw DomainError("laplace_density: beta must be positive");
  n.val = x.unaryExpr([bv](double t) { return lap_sigma(t, bv); });
  return {push(std::move(n))};
}

const Mat& Tape::val(Var var) const { return v(var.id); }

void Tape::backward(Var root) {
  assert(v(root.id).rows() == 1 && v(root.id).cols() == 1);
  adjoint(root.id).setOnes();
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs || !n.has_adj) continue;
    const Mat& g = n.adj;
    switch (n.op) {
      case Op::Leaf:
        if (n.sink) *n.sink += g;
        break;
      case Op::Add:
        if (nodes_[n.a].needs) adjoint(n.a) += g;
        if (nodes_[n.b].needs) adjoint(n.b) += g;
        break;
      case Op::Sub:
        if (nodes_[n.a].needs) adjoint(n.a) += g;
        if (nodes_[n.b].needs) adjoint(n.b) -= g;
        break;
      case Op::Mul:
        if (nodes_[n.a].needs) adjoint(n.a).array() += g.array() * v(n.b).array();
        if (nodes_[n.b].needs) adjoint(n.b).array() += g.array() * v(n.a).array();
        break;
      case Op::Div:
        if (nodes_[n.a].needs) adjoint(n.a).array() += g.array() / v(n.b).array();
        if (nodes_[n.b].needs)
          adjoint(n.b).array() -= g.array() * n.val.array() / v(n.b).array();
        break;
      case Op::Neg:
        if (nodes_[n.a].needs) adjoint(n.a) -= g;
        break;
      case Op::AddS:
        if (nodes_[n.a].needs) adjoint(n.a) += g;
        break;
      case Op::MulS:
        if (nodes_[n.a].needs) adjoint(n.a) += g * n.s0;
        break;
      case Op::MatMul:
        if (nodes_[n.a].needs) adjoint(n.a).noalias() += g * v(n.b).transpose();
        if (nodes_[n.b].needs) adjoint(n.b).noalias() += v(n.a).transpose() * g;
        break;
      case Op::Transpose:
        if (nodes_[n.a].needs) adjoint(n.a) += g.transpose();
        break;
      case Op::BroadcastCols:
        if (nodes_[n.a].needs) adjoint(n.a) += g.rowwise().sum();
        break;
      case Op::AddColVec:
        if (nodes_[n.a].needs) adjoint(n.a) += g;
        if (nodes_[n.b].needs) adjoint(n.b) += g.rowwise().sum();
        break;
      case Op::MulRowVec:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += g.array().rowwise() * v(n.b).row(0).array();
        if (nodes_[n.b].needs)
          adjoint(n.b).row(0) += (g.array() * v(n.a).array()).colwise().sum().matrix();
        break;
      case Op::Sin:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += g.array() * v(n.a).array().cos();
        break;
      case Op::Cos:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() -= g.array() * v(n.a).array().sin();
        break;
      case Op::Exp:
        if (nodes_[n.a].needs) adjoint(n.a).array() += g.array() * n.val.array();
        break;
      case Op::Log:
        if (nodes_[n.a].needs) adjoint(n.a).array() += g.array() / v(n.a).array();
        break;
      case Op::Sqrt:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += g.array() / (2.0 * n.val.array());
        break;
      case Op::Square:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += 2.0 * g.array() * v(n.a).array();
        break;
      case Op::Abs:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += g.array() * v(n.a).array().sign();
        break;
      case Op::Inv:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() -= g.array() * n.val.array().square();
        break;
      case Op::Sigmoid:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() +=
              g.array() * n.val.array() * (1.0 - n.val.array());
        break;
      case Op::Softplus:
        if (nodes_[n.a].needs) {
          double beta = n.s0;
          adjoint(n.a).array() +=
              g.array() * v(n.a).unaryExpr([beta](double t) {
                             return sigmoid_s(beta * t);
                           }).array();
        }
        break;
      case Op::MaxC:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() +=
              g.array() * (v(n.a).array() >= n.s0).cast<double>();
        break;
      case Op::MinC:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() +=
              g.array() * (v(n.a).array() <= n.s0).cast<double>();
        break;
      case Op::Sum:
        if (nodes_[n.a].needs) adjoint(n.a).array() += g(0, 0);
        break;
      case Op::Mean:
        if (nodes_[n.a].needs)
          adjoint(n.a).array() += g(0, 0) / static_cast<double>(v(n.a).size());
        break;
      case Op::ColSum:
        if (nodes_[n.a].needs)
          adjoint(n.a) += g.replicate(v(n.a).rows(), 1);
        break;
      case Op::RowSum:
        if (nodes_[n.a].needs)
          adjoint(n.a) += g.replicate(1, v(n.a).cols());
        break;
      case Op::ConcatRows: {
        Eigen::Index r = 0;
        for (int pid : n.idx) {
          Eigen::Index pr = v(pid).rows();
          if (nodes_[pid].needs) adjoint(pid) += g.middleRows(r, pr);
          r += pr;
        }
        break;
      }
      case Op::SliceRows:
        if (nodes_[n.a].needs)
          adjoint(n.a).middleRows(n.idx[0], n.idx[1]) += g;
        break;
      case Op::GatherCols:
        if (nodes_[n.a].needs) {
          Mat& da = adjoint(n.a);
          for (std::size_t k = 0; k < n.idx.size(); ++k)
            da.col(n.idx[k]) += g.col(static_cast<Eigen::Index>(k));
        }
        break;
      case Op::RepeatCols:
        if (nodes_[n.a].needs) {
          Mat& da = adjoint(n.a);
          int k = static_cast<int>(n.s0);
          for (Eigen::Index i = 0; i < da.cols(); ++i)
            for (int j = 0; j < k; ++j) da.col(i) += g.col(i * k + j);
        }
        break;
      case Op::SegSum:
        if (nodes_[n.a].needs) {
          Mat& da = adjoint(n.a);
          int nseg = static_cast<int>(n.idx.size()) - 1;
          for (int r = 0; r < nseg; ++r)
            for (int j = n.idx[r]; j < n.idx[r + 1]; ++j) da.col(j) += g.col(r);
        }
        break;
      case Op::SegCumprodExcl:
        if (nodes_[n.a].needs) {
          Mat& da = adjoint(n.a);
          const Mat& e = v(n.a);
          int nseg = static_cast<int>(n.idx.size()) - 1;
          for (int r = 0; r < nseg; ++r) {
            double acc = 0.0;
            for (int j = n.idx[r + 1] - 1; j >= n.idx[r]; --j) {
              da(0, j) += acc / e(0, j);
              acc += g(0, j) * n.val(0, j);
            }
          }
        }
        break;
      case Op::SampleMap:
        if (nodes_[n.a].needs) {
          Mat& dc = adjoint(n.a);
          const Mat& c = v(n.a);
          const auto C = static_cast<Eigen::Index>(n.maps->size());
          const Mat& m0 = (*n.maps)[0];
          const double W = static_cast<double>(m0.cols());
          const double H = static_cast<double>(m0.rows());
          for (Eigen::Index i = 0; i < c.cols(); ++i) {
            double cx = c(0, i), cy = c(1, i);
            bool inx = cx > 0.0 && cx < W - 1.0;
            bool iny = cy > 0.0 && cy < H - 1.0;
            double x = std::min(std::max(cx, 0.0), W - 1.0);
            double y = std::min(std::max(cy, 0.0), H - 1.0);
            int j0 = std::max(std::min(static_cast<int>(x), static_cast<int>(W) - 2), 0);
            int i0 = std::max(std::min(static_cast<int>(y), static_cast<int>(H) - 2), 0);
            double fx = x - j0, fy = y - i0;
            for (Eigen::Index ch = 0; ch < C; ++ch) {
              const Mat& m = (*n.maps)[ch];
              double gch = g(ch, i);
              double dx = (1 - fy) * (m(i0, j0 + 1) - m(i0, j0)) +
                          fy * (m(i0 + 1, j0 + 1) - m(i0 + 1, j0));
              double dy = (1 - fx) * (m(i0 + 1, j0) - m(i0, j0)) +
                          fx * (m(i0 + 1, j0 + 1) - m(i0, j0 + 1));
              if (inx) dc(0, i) += gch * dx;
              if (iny) dc(1, i) += gch * dy;
            }
          }
        }
        break;
      case Op::LaplaceDensity: {
        const Mat& x = v(n.a);
        const double bv = v(n.b)(0, 0);
        if (nodes_[n.a].needs)
          adjoint(n.a).array() +=
              g.array() * x.unaryExpr([bv](double t) {
                             return lap_dsigma_ds(t, bv);
                           }).array();
        if (nodes_[n.b].needs) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < x.size(); ++i)
            acc += g(i) * lap_dsigma_dbeta(x(i), bv);
          adjoint(n.b)(0, 0) += acc;
        }
        break;
      }
    }
    // Release forward storage eagerly; adjoints of consumed nodes stay.
    if (n.op != Op::Leaf) n.adj.resize(0, 0);
    n.has_adj = false;
    if (n.sink) n.has_adj = false;
  }
}

}  // namespace psdf::ad
