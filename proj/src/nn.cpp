#include "sevrank/nn.hpp"

#include <cmath>
#include <limits>

#include "sevrank/types.hpp"

namespace sevrank::nn {

Parameter& ParameterStore::add(std::string name, Matrix init) {
  if (find(name)) throw ArgumentError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Matrix::Zero(init.rows(), init.cols());
  p->value = std::move(init);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->grad.setZero();
}

std::vector<Matrix> ParameterStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParameterStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ShapeError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i]->value = values[i];
}

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

Matrix orthogonal_blocks(Eigen::Index blocks, Eigen::Index n, Rng& rng) {
  Matrix out(blocks * n, n);
  for (Eigen::Index b = 0; b < blocks; ++b) {
    Matrix g(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
      if (r(j, j) < 0) q.col(j) *= -1.0;
    out.block(b * n, 0, n, n) = q;
  }
  return out;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Parameter& p) {
  for (const auto& [ptr, id] : param_nodes_)
    if (ptr == &p) return Var{id};
  // Parameter nodes read the live value instead of holding a copy.
  nodes_.push_back(Node{Matrix(), {}, false, true, &p, nullptr});
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace_back(&p, id);
  return Var{id};
}

Matrix& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (!n.has_grad) {
    const Matrix& val = value(v);
    n.grad = Matrix::Zero(val.rows(), val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, Var)> backward) {
  nodes_.push_back(Node{std::move(value), {}, false, requires_grad, nullptr,
                        requires_grad ? std::move(backward) : nullptr});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) throw ShapeError("backward needs a scalar output");
  grad(output)(0, 0) = 1.0;
  for (int i = output.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.param) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      n.backward(*this, Var{i});
    }
  }
}

namespace {

void check_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).rows()) throw ShapeError("matmul: inner dimension mismatch");
  return t.push(t.value(a) * t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& t, Var self) {
                  const Matrix& g = t.grad(self);
                  if (t.requires_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
                  if (t.requires_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
                });
}

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  return t.push(t.value(a) + t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& t, Var self) {
                  if (t.requires_grad(a)) t.grad(a) += t.grad(self);
                  if (t.requires_grad(b)) t.grad(b) += t.grad(self);
                });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  return t.push(t.value(a) - t.value(b), t.requires_grad(a) || t.requires_grad(b),
                [a, b](Tape& t, Var self) {
                  if (t.requires_grad(a)) t.grad(a) += t.grad(self);
                  if (t.requires_grad(b)) t.grad(b) -= t.grad(self);
                });
}

Var scale(Tape& t, Var a, double s) {
  return t.push(t.value(a) * s, t.requires_grad(a),
                [a, s](Tape& t, Var self) { t.grad(a) += t.grad(self) * s; });
}

Var add_bias(Tape& t, Var x, Var bias) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  if (bv.cols() != 1 || bv.rows() != xv.rows()) throw ShapeError("add_bias: bias shape mismatch");
  Matrix out = xv.colwise() + bv.col(0);
  return t.push(std::move(out), t.requires_grad(x) || t.requires_grad(bias),
                [x, bias](Tape& t, Var self) {
                  const Matrix& g = t.grad(self);
                  if (t.requires_grad(x)) t.grad(x) += g;
                  if (t.requires_grad(bias)) t.grad(bias) += g.rowwise().sum();
                });
}

Var tanh(Tape& t, Var x) {
  Matrix y = t.value(x).array().tanh().matrix();
  return t.push(std::move(y), t.requires_grad(x), [x](Tape& t, Var self) {
    const Matrix& y = t.value(self);
    t.grad(x).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var relu(Tape& t, Var x) {
  Matrix y = t.value(x).cwiseMax(0.0);
  return t.push(std::move(y), t.requires_grad(x), [x](Tape& t, Var self) {
    t.grad(x).array() += t.grad(self).array() * (t.value(x).array() > 0.0).cast<double>();
  });
}

Var abs(Tape& t, Var x) {
  return t.push(t.value(x).cwiseAbs(), t.requires_grad(x), [x](Tape& t, Var self) {
    const auto sign = t.value(x).array().sign();
    t.grad(x).array() += t.grad(self).array() * sign;
  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool rg = false;
  for (Var p : parts) {
    if (t.value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += t.value(p).rows();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (Var p : parts) {
    out.middleRows(r, t.value(p).rows()) = t.value(p);
    r += t.value(p).rows();
  }
  return t.push(std::move(out), rg, [parts](Tape& t, Var self) {
    Eigen::Index r = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).rows();
      if (t.requires_grad(p)) t.grad(p) += t.grad(self).middleRows(r, n);
      r += n;
    }
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += t.value(p).cols();
    rg = rg || t.requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    out.middleCols(c, t.value(p).cols()) = t.value(p);
    c += t.value(p).cols();
  }
  return t.push(std::move(out), rg, [parts](Tape& t, Var self) {
    Eigen::Index c = 0;
    for (Var p : parts) {
      const Eigen::Index n = t.value(p).cols();
      if (t.requires_grad(p)) t.grad(p) += t.grad(self).middleCols(c, n);
      c += n;
    }
  });
}

Var shift_right(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  Matrix out = Matrix::Zero(xv.rows(), xv.cols());
  if (xv.cols() > 1) out.rightCols(xv.cols() - 1) = xv.leftCols(xv.cols() - 1);
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, Var self) {
    const Eigen::Index n = t.value(x).cols();
    if (n > 1) t.grad(x).leftCols(n - 1) += t.grad(self).rightCols(n - 1);
  });
}

Var shift_left(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  Matrix out = Matrix::Zero(xv.rows(), xv.cols());
  if (xv.cols() > 1) out.leftCols(xv.cols() - 1) = xv.rightCols(xv.cols() - 1);
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, Var self) {
    const Eigen::Index n = t.value(x).cols();
    if (n > 1) t.grad(x).rightCols(n - 1) += t.grad(self).leftCols(n - 1);
  });
}

Var max_over_cols(Tape& t, Var x, Eigen::Index valid) {
  const Matrix& xv = t.value(x);
  if (valid < 0) valid = xv.cols();
  if (valid == 0 || valid > xv.cols()) throw ShapeError("max_over_cols: no valid columns");
  Matrix out(xv.rows(), 1);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(xv.rows()));
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    Eigen::Index best_j = 0;
    for (Eigen::Index j = 0; j < xv.cols(); ++j) {
      const double v = j < valid ? xv(i, j) : -std::numeric_limits<double>::infinity();
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    out(i, 0) = best;
    arg[static_cast<std::size_t>(i)] = best_j;
  }
  return t.push(std::move(out), t.requires_grad(x), [x, arg = std::move(arg)](Tape& t, Var self) {
    Matrix& gx = t.grad(x);
    const Matrix& g = t.grad(self);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      gx(static_cast<Eigen::Index>(i), arg[i]) += g(static_cast<Eigen::Index>(i), 0);
    }
  });
}

Var mean_over_cols(Tape& t, Var x) {
  const Matrix& xv = t.value(x);
  if (xv.cols() == 0) throw ShapeError("mean_over_cols: no columns");
  Matrix out = xv.rowwise().mean();
  return t.push(std::move(out), t.requires_grad(x), [x](Tape& t, Var self) {
    const double inv = 1.0 / static_cast<double>(t.value(x).cols());
    t.grad(x).colwise() += t.grad(self).col(0) * inv;
  });
}

Var dropout(Tape& t, Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ArgumentError("dropout rate must be < 1");
  const Matrix& xv = t.value(x);
  Matrix mask(xv.rows(), xv.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i)
      mask(i, j) = rng.bernoulli(rate) ? 0.0 : 1.0 / (1.0 - rate);
  Matrix out = xv.cwiseProduct(mask);
  return t.push(std::move(out), t.requires_grad(x), [x, mask](Tape& t, Var self) {
    t.grad(x) += t.grad(self).cwiseProduct(mask);
  });
}

Var lstm(Tape& t, Var x, Var wx, Var wh, Var b, bool reverse) {
  const Matrix& X = t.value(x);
  const Matrix& Wx = t.value(wx);
  const Matrix& Wh = t.value(wh);
  const Matrix& B = t.value(b);
  const Eigen::Index h = Wh.cols();
  const Eigen::Index T = X.cols();
  if (Wx.rows() != 4 * h || Wh.rows() != 4 * h || Wx.cols() != X.rows() || B.rows() != 4 * h ||
      B.cols() != 1) {
    throw ShapeError("lstm: parameter shapes do not match input");
  }
  if (T == 0) throw ShapeError("lstm: empty sequence");

  // Gate activations (i, f, g, o stacked) and cell states, stored in time order.
  auto gates = std::make_shared<Matrix>(Wx * X);
  gates->colwise() += B.col(0);
  auto cells = std::make_shared<Matrix>(h, T);
  Matrix H(h, T);
  Vector hprev = Vector::Zero(h), cprev = Vector::Zero(h);
  Vector z(4 * h);
  for (Eigen::Index s = 0; s < T; ++s) {
    const Eigen::Index col = reverse ? T - 1 - s : s;
    z.noalias() = gates->col(col) + Wh * hprev;
    for (Eigen::Index k = 0; k < h; ++k) {
      z(k) = sigmoid(z(k));
      z(h + k) = sigmoid(z(h + k));
      z(2 * h + k) = std::tanh(z(2 * h + k));
      z(3 * h + k) = sigmoid(z(3 * h + k));
    }
    gates->col(col) = z;
    Vector c = z.segment(h, h).cwiseProduct(cprev) + z.segment(0, h).cwiseProduct(z.segment(2 * h, h));
    cells->col(col) = c;
    hprev = z.segment(3 * h, h).cwiseProduct(c.array().tanh().matrix());
    H.col(col) = hprev;
    cprev = c;
  }

  const bool rg = t.requires_grad(x) || t.requires_grad(wx) || t.requires_grad(wh) ||
                  t.requires_grad(b);
  return t.push(std::move(H), rg, [=](Tape& t, Var self) {
    const Matrix& X = t.value(x);
    const Matrix& Wx = t.value(wx);
    const Matrix& Wh = t.value(wh);
    const Matrix& Hs = t.value(self);
    const Matrix& G = t.grad(self);
    Matrix dz(4 * h, T);
    Matrix hprev_all(h, T);
    Vector dh_next = Vector::Zero(h), dc_next = Vector::Zero(h);
    for (Eigen::Index s = T - 1; s >= 0; --s) {
      const Eigen::Index col = reverse ? T - 1 - s : s;
      const Eigen::Index prev = reverse ? col + 1 : col - 1;
      const bool has_prev = s > 0;
      const auto i = gates->col(col).segment(0, h).array();
      const auto f = gates->col(col).segment(h, h).array();
      const auto g = gates->col(col).segment(2 * h, h).array();
      const auto o = gates->col(col).segment(3 * h, h).array();
      const Eigen::ArrayXd tc = cells->col(col).array().tanh();
      const Eigen::ArrayXd cprev = has_prev ? Eigen::ArrayXd(cells->col(prev).array()) : Eigen::ArrayXd::Zero(h);
      const Eigen::ArrayXd dh = G.col(col).array() + dh_next.array();
      const Eigen::ArrayXd dc = dh * o * (1.0 - tc.square()) + dc_next.array();
      dz.col(col).segment(0, h) = (dc * g * i * (1.0 - i)).matrix();
      dz.col(col).segment(h, h) = (dc * cprev * f * (1.0 - f)).matrix();
      dz.col(col).segment(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
      dz.col(col).segment(3 * h, h) = (dh * tc * o * (1.0 - o)).matrix();
      dc_next = (dc * f).matrix();
      dh_next.noalias() = Wh.transpose() * dz.col(col);
      if (has_prev) {
        hprev_all.col(col) = Hs.col(prev);
      } else {
        hprev_all.col(col).setZero();
      }
    }
    if (t.requires_grad(wx)) t.grad(wx).noalias() += dz * X.transpose();
    if (t.requires_grad(wh)) t.grad(wh).noalias() += dz * hprev_all.transpose();
    if (t.requires_grad(b)) t.grad(b) += dz.rowwise().sum();
    if (t.requires_grad(x)) t.grad(x).noalias() += Wx.transpose() * dz;
  });
}

Var conv1d(Tape& t, Var x, Var w, Var b, int width) {
  const Matrix& X = t.value(x);
  const Matrix& W = t.value(w);
  const Eigen::Index d = X.rows();
  const Eigen::Index T = X.cols();
  if (width <= 0 || T < width) throw ShapeError("conv1d: sequence shorter than kernel");
  if (W.cols() != width * d || t.value(b).rows() != W.rows() || t.value(b).cols() != 1) {
    throw ShapeError("conv1d: parameter shapes do not match input");
  }
  const Eigen::Index out_len = T - width + 1;
  // Column-major storage makes a window of `width` columns one contiguous
  // block of width * d values, so the im2col matrix is a strided copy.
  auto windows = std::make_shared<Matrix>(width * d, out_len);
  for (Eigen::Index j = 0; j < out_len; ++j) {
    windows->col(j) = Eigen::Map<const Vector>(X.data() + j * d, width * d);
  }
  Matrix out = W * *windows;
  out.colwise() += t.value(b).col(0);
  const bool rg = t.requires_grad(x) || t.requires_grad(w) || t.requires_grad(b);
  return t.push(std::move(out), rg, [=](Tape& t, Var self) {
    const Matrix& G = t.grad(self);
    if (t.requires_grad(w)) t.grad(w).noalias() += G * windows->transpose();
    if (t.requires_grad(b)) t.grad(b) += G.rowwise().sum();
    if (t.requires_grad(x)) {
      const Matrix dwin = t.value(w).transpose() * G;
      Matrix& gx = t.grad(x);
      for (Eigen::Index j = 0; j < out_len; ++j) {
        Eigen::Map<Vector>(gx.data() + j * d, width * d) += dwin.col(j);
      }
    }
  });
}

Var cross_entropy(Tape& t, Var logits, const std::vector<int>& targets) {
  const Matrix& L = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != L.cols() || L.cols() == 0) {
    throw ShapeError("cross_entropy: target count mismatch");
  }
  auto probs = std::make_shared<Matrix>(L.rows(), L.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < L.cols(); ++j) {
    const int y = targets[static_cast<std::size_t>(j)];
    if (y < 0 || y >= L.rows()) throw ShapeError("cross_entropy: target out of range");
    const double m = L.col(j).maxCoeff();
    const Vector e = (L.col(j).array() - m).exp().matrix();
    const double sum = e.sum();
    probs->col(j) = e / sum;
    total += (std::log(sum) + m) - L(y, j);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(L.cols());
  return t.push(std::move(out), t.requires_grad(logits), [=](Tape& t, Var self) {
    const double g = t.grad(self)(0, 0) / static_cast<double>(probs->cols());
    Matrix d = *probs;
    for (Eigen::Index j = 0; j < d.cols(); ++j) d(targets[static_cast<std::size_t>(j)], j) -= 1.0;
    t.grad(logits) += d * g;
  });
}

Vector softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

Adam::Adam(const ParameterStore& store, AdamConfig config) : config_(config) {
  for (const auto& p : store.items()) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(ParameterStore& store) {
  auto& items = store.items();
  if (items.size() != m_.size()) throw ShapeError("optimizer/store mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < items.size(); ++k) {
    Parameter& p = *items[k];
    m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * p.grad;
    v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= config_.learning_rate * (m_[k].array() / bc1) /
                       ((v_[k].array() / bc2).sqrt() + config_.epsilon);
  }
}

}  // namespace sevrank::nn
