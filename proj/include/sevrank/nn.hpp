#pragma once

// Minimal reverse-mode differentiation over Eigen matrices. Sequences are
// stored one time step per column. Recurrent and convolution layers are
// fused ops with hand-written backward passes.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sevrank/rng.hpp"

namespace sevrank::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
};

// Owns every trainable tensor of a model. Parameters live behind stable
// pointers, so layers may hold Parameter* across moves of the store.
class ParameterStore {
 public:
  Parameter& add(std::string name, Matrix init);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<std::unique_ptr<Parameter>>& items() { return params_; }
  const std::vector<std::unique_ptr<Parameter>>& items() const { return params_; }
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

// Weight initializers.
Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Rng& rng);
// Stack of `blocks` square orthogonal blocks, each n x n.
Matrix orthogonal_blocks(Eigen::Index blocks, Eigen::Index n, Rng& rng);

struct Var {
  int id = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  Var constant(Matrix value);
  // Repeated calls for the same parameter return the same node.
  Var param(Parameter& p);

  const Matrix& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Gradient buffer of a node, allocated as zeros on first use.
  Matrix& grad(Var v);

  // Appends a node. `backward` reads grad(self) and accumulates into inputs.
  Var push(Matrix value, bool requires_grad, std::function<void(Tape&, Var self)> backward);

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates; parameter
  // nodes accumulate into Parameter::grad.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, Var)> backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<const Parameter*, int>> param_nodes_;
};

Var matmul(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
// x (m x n) plus a column bias (m x 1) broadcast over columns.
Var add_bias(Tape& t, Var x, Var bias);
Var tanh(Tape& t, Var x);
Var relu(Tape& t, Var x);
Var abs(Tape& t, Var x);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
// Column j of the result is column j-1 of x (zero column at j = 0).
Var shift_right(Tape& t, Var x);
// Column j of the result is column j+1 of x (zero column at the end).
Var shift_left(Tape& t, Var x);
// Elementwise max over the first `valid` columns; later columns are treated
// as padding masked to -inf. valid < 0 means all columns.
Var max_over_cols(Tape& t, Var x, Eigen::Index valid = -1);
Var mean_over_cols(Tape& t, Var x);
// Inverted dropout; identity when rate == 0.
Var dropout(Tape& t, Var x, double rate, Rng& rng);

// Single-direction LSTM over the columns of x (gate order i, f, g, o).
// wx: 4h x d, wh: 4h x h, b: 4h x 1. Returns h x T hidden states, in input
// order even when `reverse` runs the recurrence from the last column.
Var lstm(Tape& t, Var x, Var wx, Var wh, Var b, bool reverse);

// Valid 1-D convolution over columns: output column j is
// w * vec(x[:, j .. j+width-1]) + b. w: channels x (width * d).
Var conv1d(Tape& t, Var x, Var w, Var b, int width);

// Mean softmax cross-entropy over the columns of logits (K x B).
Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets);

Vector softmax(const Vector& logits);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterStore& store, AdamConfig config);
  // Applies one update from the accumulated gradients.
  void step(ParameterStore& store);

 private:
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  long step_ = 0;
};

}  // namespace sevrank::nn
