#pragma once

// Reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values live in a deque
// so references handed out by Var::value() stay valid while the tape grows.
// Parameters are bound by address; after backward() their gradients can be
// collected with parameter_grads().

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace linematch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A named trainable matrix owned by a model.
struct Parameter {
  std::string name;
  Matrix value;
};

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);
  Var parameter(const Parameter& p);

  /// Records a node computed from `parents`. `backward` is dropped when no
  /// parent requires a gradient.
  Var push(Matrix value, std::initializer_list<Var> parents, Backward backward);

  /// Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient of the last backward() root with respect to `v` (zeros if untouched).
  Matrix grad(Var v) const;

  void accumulate(int id, const Matrix& g);
  /// Mutable gradient buffer, zero-initialised on first access.
  Matrix& grad_buffer(int id);

  std::vector<std::pair<const Parameter*, Matrix>> parameter_grads() const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::deque<Node> nodes_;
  std::vector<std::pair<int, const Parameter*>> params_;
  Matrix scratch_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// Elementwise and linear-algebra operations. All shapes are checked and a
// DimensionError is thrown on mismatch.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);                 // Hadamard product
Var mask(Var a, const Matrix& m);       // Hadamard product with a constant
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var cos(Var a);
Var sum(Var a);
Var mean(Var a);
Var add_row_vector(Var a, Var row);     // a(i,j) + row(0,j)
Var add_col_vector(Var a, Var col);     // a(i,j) + col(i,0)
Var outer_sum(Var col, Var row);        // col(i,0) + row(0,j)
Var logsumexp_rows(Var a);              // r x 1
Var logsumexp_cols(Var a);              // 1 x c
/// log sum_j exp(a(i,j) + offset(0,j)); offset is 1 x c. Returns r x 1.
Var logsumexp_rows_offset(Var a, Var offset);
/// log sum_i exp(a(i,j) + offset(i,0)); offset is r x 1. Returns 1 x c.
Var logsumexp_cols_offset(Var a, Var offset);
Var hcat(Var a, Var b);
Var vcat(Var a, Var b);
Var gather_rows(Var a, std::span<const int> rows);
Var gather_cols(Var a, std::span<const int> cols);
/// Rows with norm <= eps map to the constant unit vector and pass no gradient.
Var normalize_rows(Var a, double eps = 1e-12);
/// Picks entries (r_k, c_k) into a K x 1 column.
Var pick(Var a, std::span<const std::pair<int, int>> entries);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace ad
}  // namespace linematch
