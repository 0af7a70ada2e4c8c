#include <doctest.h>

#include "sevrank/backbones.hpp"
#include "sevrank/siamese.hpp"
#include "support.hpp"

using namespace sevrank;
using namespace sevrank::nn;

namespace {

constexpr double kGradTolerance = 1e-3;

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Scalar readout: sum of elementwise product with fixed random weights.
Var readout(Tape& t, Var x, const Matrix& weights) {
  const Matrix X = t.value(x);
  Var prod = t.push(X.cwiseProduct(weights), t.requires_grad(x), [x, weights](Tape& t, Var self) {
    t.grad(x) += t.grad(self).cwiseProduct(weights);
  });
  Var rows = matmul(t, t.constant(Matrix::Ones(1, X.rows())), prod);
  return matmul(t, rows, t.constant(Matrix::Ones(X.cols(), 1)));
}

}  // namespace

TEST_CASE("tape gradients of elementwise and structural ops") {
  Rng rng(11);
  ParameterStore store;
  Parameter& a = store.add("a", random_matrix(4, 5, rng));
  Parameter& b = store.add("b", random_matrix(4, 5, rng));
  Parameter& c = store.add("c", random_matrix(5, 3, rng));
  Parameter& bias = store.add("bias", random_matrix(4, 1, rng));
  const Matrix w45 = random_matrix(4, 5, rng);
  const Matrix w43 = random_matrix(4, 3, rng);
  const Matrix w81 = random_matrix(8, 1, rng);
  const Matrix w410 = random_matrix(4, 10, rng);

  SUBCASE("add sub scale tanh relu abs") {
    auto r = testing::gradient_check(store, [&](Tape& t) {
      Var x = add(t, t.param(a), scale(t, t.param(b), -0.7));
      Var y = sub(t, tanh(t, x), relu(t, t.param(b)));
      return readout(t, abs(t, y), w45);
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
  SUBCASE("matmul and bias") {
    auto r = testing::gradient_check(store, [&](Tape& t) {
      return readout(t, add_bias(t, matmul(t, t.param(a), t.param(c)), t.param(bias)), w43);
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
  SUBCASE("concat, shift, pooling") {
    auto r = testing::gradient_check(store, [&](Tape& t) {
      Var rows = concat_rows(t, {shift_right(t, t.param(a)), shift_left(t, t.param(b))});
      Var pooled = max_over_cols(t, rows, 4);
      Var mean = mean_over_cols(t, concat_rows(t, {t.param(a), t.param(b)}));
      return add(t, readout(t, pooled, w81), readout(t, mean, w81));
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
  SUBCASE("concat_cols") {
    auto r = testing::gradient_check(store, [&](Tape& t) {
      return readout(t, concat_cols(t, {t.param(a), t.param(b)}), w410);
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
  SUBCASE("cross entropy") {
    auto r = testing::gradient_check(store, [&](Tape& t) {
      return cross_entropy(t, t.param(a), {0, 3, 1, 2, 2});
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
}

TEST_CASE("lstm and conv1d gradients") {
  Rng rng(5);
  ParameterStore store;
  const int d = 3, h = 2, T = 5;
  Parameter& x = store.add("x", random_matrix(d, T, rng));
  Parameter& wx = store.add("wx", random_matrix(4 * h, d, rng) * 0.5);
  Parameter& wh = store.add("wh", random_matrix(4 * h, h, rng) * 0.5);
  Parameter& b = store.add("b", random_matrix(4 * h, 1, rng) * 0.1);
  Parameter& cw = store.add("cw", random_matrix(2, 3 * d, rng));
  Parameter& cb = store.add("cb", random_matrix(2, 1, rng));
  const Matrix wout = random_matrix(h, T, rng);
  const Matrix wconv = random_matrix(2, T - 2, rng);

  for (bool reverse : {false, true}) {
    CAPTURE(reverse);
    auto r = testing::gradient_check(store, [&](Tape& t) {
      return readout(t, lstm(t, t.param(x), t.param(wx), t.param(wh), t.param(b), reverse), wout);
    });
    CHECK(r.worst_relative < kGradTolerance);
  }
  auto r = testing::gradient_check(store, [&](Tape& t) {
    return readout(t, conv1d(t, t.param(x), t.param(cw), t.param(cb), 3), wconv);
  });
  CHECK(r.worst_relative < kGradTolerance);
}

TEST_CASE("lstm runs the reverse direction from the last column") {
  Rng rng(9);
  Tape t;
  const Matrix X = random_matrix(2, 4, rng);
  const Matrix Wx = random_matrix(8, 2, rng), Wh = random_matrix(8, 2, rng), B = Matrix::Zero(8, 1);
  Var fw = lstm(t, t.constant(X), t.constant(Wx), t.constant(Wh), t.constant(B), false);
  Var bw = lstm(t, t.constant(X), t.constant(Wx), t.constant(Wh), t.constant(B), true);
  const Matrix Xr = X.rowwise().reverse();
  Var fwr = lstm(t, t.constant(Xr), t.constant(Wx), t.constant(Wh), t.constant(B), false);
  CHECK((t.value(bw) - t.value(fwr).rowwise().reverse()).norm() < 1e-14);
  CHECK((t.value(fw).col(0) - t.value(bw).col(0)).norm() > 1e-6);
}

TEST_CASE("joint loss gradients match finite differences for every architecture") {
  for (Architecture arch :
       {Architecture::RnnTrans, Architecture::TextRcnn, Architecture::TextCnn, Architecture::AvgEmbed}) {
    CAPTURE(std::string(architecture_name(arch)));
    ModelInfo info = testing::tiny_info(arch, 6);
    SiameseModel model(info, 3);
    InputCache inputs(make_provider(info.provider_spec));
    Rng rng(17);
    AspectDataset ds = testing::random_dataset(rng, 6, 3, 3);
    std::vector<PairSample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(sample_pair(ds, rng));
    auto r = testing::gradient_check(model.parameters(), [&](Tape& t) {
      return joint_loss(model, batch, inputs, t).total;
    });
    CHECK(r.checked > 0);
    CHECK_MESSAGE(r.worst_relative < kGradTolerance, r.worst_param);
  }
}

TEST_CASE("adam moves parameters against the gradient") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Constant(2, 2, 1.0));
  Adam adam(store, {});
  p.grad = Matrix::Constant(2, 2, 3.0);
  adam.step(store);
  // First bias-corrected step has magnitude lr regardless of gradient scale.
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-9));
}

TEST_CASE("tied parameters are a single tape node") {
  ParameterStore store;
  Parameter& p = store.add("p", Matrix::Ones(2, 2));
  Tape t;
  CHECK(t.param(p).id == t.param(p).id);
  CHECK(&t.value(t.param(p)) == &p.value);
}

TEST_CASE("initializers") {
  Rng rng(1);
  const Matrix o = orthogonal_blocks(4, 5, rng);
  REQUIRE(o.rows() == 20);
  for (int k = 0; k < 4; ++k) {
    const Matrix blk = o.block(5 * k, 0, 5, 5);
    CHECK((blk.transpose() * blk - Matrix::Identity(5, 5)).norm() < 1e-10);
  }
  const Matrix u = uniform_fan_in(10, 25, rng);
  CHECK(u.cwiseAbs().maxCoeff() <= 1.0 / 5.0 + 1e-12);
}
