#include <doctest.h>

#include "sevrank/backbones.hpp"
#include "support.hpp"

using namespace sevrank;
using nn::Matrix;

namespace {

Matrix random_input(Eigen::Index d, Eigen::Index t, Rng& rng) {
  Matrix m(d, t);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

BackboneConfig config(Architecture a, int dim) {
  BackboneConfig c;
  c.architecture = a;
  c.input_dim = dim;
  c.hidden_dim = 5;
  c.projection_dim = 7;
  return c;
}

Matrix bilstm(nn::ParameterStore& store, const Matrix& x) {
  nn::Tape t;
  nn::Var in = t.constant(x);
  auto p = [&](const char* n) { return t.param(*store.find(n)); };
  nn::Var f = nn::lstm(t, in, p("enc.fw.wx"), p("enc.fw.wh"), p("enc.fw.b"), false);
  nn::Var b = nn::lstm(t, in, p("enc.bw.wx"), p("enc.bw.wh"), p("enc.bw.b"), true);
  return t.value(nn::concat_rows(t, {f, b}));
}

}  // namespace

TEST_CASE("representation widths") {
  BackboneConfig c;
  c.input_dim = 768;
  c.hidden_dim = 200;
  CHECK(c.representation_width() == 400);
  c.architecture = Architecture::TextRcnn;
  c.input_dim = 300;
  c.projection_dim = 123;
  CHECK(c.representation_width() == 123);
  c.architecture = Architecture::TextCnn;
  CHECK(c.representation_width() == 30);
  c.architecture = Architecture::AvgEmbed;
  CHECK(c.representation_width() == 300);
}

TEST_CASE("shape contract over random documents") {
  Rng rng(31);
  for (Architecture a :
       {Architecture::RnnTrans, Architecture::TextRcnn, Architecture::TextCnn, Architecture::AvgEmbed}) {
    const BackboneConfig c = config(a, 6);
    nn::ParameterStore store;
    Rng init(1);
    Backbone bb(c, store, init);
    auto provider = make_provider((a == Architecture::RnnTrans ? "hash:" : "hashword:") + std::string("6"));
    for (int i = 0; i < 1000; ++i) {
      const ScriptDocument doc = testing::random_document(rng, "d", 1 + rng.uniform_index(4));
      const Vector rep = bb.represent(document_input(*provider, doc));
      REQUIRE(rep.size() == c.representation_width());
      REQUIRE(rep.allFinite());
    }
  }
}

TEST_CASE("rnn_trans pooling") {
  Rng rng(3);
  nn::ParameterStore store;
  Rng init(2);
  const BackboneConfig c = config(Architecture::RnnTrans, 4);
  Backbone bb(c, store, init);

  SUBCASE("max-pool dominance") {
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix x = random_input(4, 1 + rng.uniform_index(12), rng);
      const Matrix states = bilstm(store, x);
      const Vector rep = bb.represent(x);
      for (Eigen::Index r = 0; r < rep.size(); ++r) {
        CHECK((states.row(r).array() <= rep(r)).all());
        CHECK((states.row(r).array() == rep(r)).any());
      }
    }
  }
  SUBCASE("single utterance equals its concatenated state") {
    const Matrix x = random_input(4, 1, rng);
    CHECK((bb.represent(x) - bilstm(store, x).col(0)).norm() == 0.0);
  }
  SUBCASE("masked padding leaves the pooled value unchanged") {
    const Matrix x = random_input(4, 6, rng);
    const Matrix states = bilstm(store, x);
    Matrix padded(states.rows(), states.cols() + 3);
    padded << states, Matrix::Constant(states.rows(), 3, 1e6);
    nn::Tape t;
    const Matrix pooled = t.value(nn::max_over_cols(t, t.constant(padded), states.cols()));
    CHECK((pooled.col(0) - bb.represent(x)).norm() == 0.0);
  }
  SUBCASE("max over a two-step sequence") {
    nn::Tape t;
    Matrix h(2, 2);
    h << 1, 3, 5, 2;
    const Matrix pooled = t.value(nn::max_over_cols(t, t.constant(h)));
    CHECK(pooled(0, 0) == 3);
    CHECK(pooled(1, 0) == 5);
  }
  CHECK_THROWS(bb.represent(Matrix(4, 0)));
  CHECK_THROWS_AS(bb.represent(Matrix::Zero(5, 2)), ShapeError);
}

TEST_CASE("textrcnn one-word document") {
  Rng rng(4);
  nn::ParameterStore store;
  Rng init(5);
  Backbone bb(config(Architecture::TextRcnn, 3), store, init);
  const Matrix x = random_input(3, 1, rng);
  Vector triple = Vector::Zero(5 + 3 + 5);
  triple.segment(5, 3) = x.col(0);
  const Vector expected =
      (store.find("enc.proj.w")->value * triple + store.find("enc.proj.b")->value.col(0)).array().tanh();
  CHECK((bb.represent(x) - expected).norm() < 1e-14);
  CHECK(bb.represent(Matrix::Zero(3, 4)).allFinite());
}

TEST_CASE("textcnn padding and constant input") {
  Rng rng(6);
  nn::ParameterStore store;
  Rng init(7);
  BackboneConfig c = config(Architecture::TextCnn, 3);
  Backbone bb(c, store, init);
  CHECK(textcnn_min_length(c) == 5);
  const Matrix four = random_input(3, 4, rng);
  Matrix five = Matrix::Zero(3, 5);
  five.leftCols(4) = four;
  CHECK(bb.represent(four) == bb.represent(five));

  const Vector col = random_input(3, 1, rng).col(0);
  const Matrix constant = col.replicate(1, 9);
  const Vector rep = bb.represent(constant);
  for (std::size_t k = 0; k < c.kernel_sizes.size(); ++k) {
    const int w = c.kernel_sizes[k];
    const Vector window = col.replicate(w, 1);
    const std::string name = "enc.conv" + std::to_string(w);
    const Vector response = (store.find(name + ".w")->value * window + store.find(name + ".b")->value.col(0))
                                .cwiseMax(0.0);
    CHECK((rep.segment(static_cast<Eigen::Index>(k) * c.channels, c.channels) - response).norm() < 1e-14);
  }
}

TEST_CASE("averaged embeddings") {
  nn::ParameterStore store;
  Rng init(1);
  Backbone bb(config(Architecture::AvgEmbed, 2), store, init);
  Matrix x(2, 2);
  x << 1, 3, 1, 3;
  CHECK(bb.represent(x) == Vector::Constant(2, 2.0));
  CHECK(bb.represent(Matrix(2, 0)) == Vector::Zero(2));
  WordEmbeddingTable table(2);
  table.insert("a", Vector::Constant(2, 1.0));
  table.insert("b", Vector::Constant(2, 3.0));
  CHECK(encode_avg(make_document("m", "t", {"a b"}), table) == Vector::Constant(2, 2.0));
  CHECK(encode_avg(make_document("m", "t", {"zz qq"}), table) == Vector::Zero(2));
  CHECK(encode_avg(make_document("m", "t", {"b"}), table) == Vector::Constant(2, 3.0));
}

TEST_CASE("classifier and rank heads") {
  nn::ParameterStore store;
  Rng init(3);
  ClassifierHead cls(6, store, init);
  RankHead rank(6, store, init);
  store.find("cls.w")->value.setZero();
  store.find("cls.b")->value << 0.1, 0.2, 0.3, 0.4;
  CHECK(cls.classify(Vector::Random(6)).isApprox(Vector{{0.1, 0.2, 0.3, 0.4}}));
  store.find("rank.w")->value.setZero();
  store.find("rank.b")->value << 1, 2, 3;
  CHECK(rank.rank(Vector::Random(6), Vector::Random(6)) == Vector{{1, 2, 3}});
  CHECK_THROWS_AS(cls.classify(Vector::Zero(5)), ShapeError);
  CHECK_THROWS_AS(rank.rank(Vector::Zero(6), Vector::Zero(4)), ShapeError);

}

TEST_CASE("doubling classifier weights preserves the argmax") {
  nn::ParameterStore store;
  Rng init(9);
  ClassifierHead cls(6, store, init);
  store.find("cls.b")->value << 0.3, -0.1, 0.2, 0.05;
  for (int trial = 0; trial < 100; ++trial) {
    const Vector rep = Vector::Random(6);
    const Vector before = cls.classify(rep);
    store.find("cls.w")->value *= 2;
    store.find("cls.b")->value *= 2;
    const Vector after = cls.classify(rep);
    store.find("cls.w")->value /= 2;
    store.find("cls.b")->value /= 2;
    Eigen::Index a, b;
    before.maxCoeff(&a);
    after.maxCoeff(&b);
    CHECK(a == b);
    CHECK((after - 2 * before).norm() < 1e-12);
  }
}

TEST_CASE("backbone config round trip and validation") {
  BackboneConfig c = config(Architecture::TextCnn, 9);
  c.kernel_sizes = {2, 4};
  const BackboneConfig back = BackboneConfig::from_map(c.to_map());
  CHECK(back.to_map() == c.to_map());
  c.hidden_dim = 0;
  c.architecture = Architecture::RnnTrans;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  CHECK(parse_architecture("textrcnn") == Architecture::TextRcnn);
  CHECK_FALSE(parse_architecture("lstm"));
}

TEST_CASE("stacked recurrent layers") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 5);
  info.backbone.rnn_layers = 2;
  SiameseModel model(info, 4);
  CHECK(model.parameters().find("enc.l1.fw.wx")->value.cols() == 6);
  CHECK(model.parameters().find("enc.l1.bw.wh")->value.rows() == 12);
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(8);
  AspectDataset ds = testing::random_dataset(rng, 6, 2, 4);
  std::vector<PairSample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(sample_pair(ds, rng));
  auto r = testing::gradient_check(model.parameters(), [&](nn::Tape& t) {
    return joint_loss(model, batch, inputs, t).total;
  });
  CHECK(r.worst_relative < 1e-3);
  const SiameseModel back = SiameseModel::deserialize(model.serialize());
  CHECK(back.info().backbone.rnn_layers == 2);
  info.backbone.rnn_layers = 0;
  CHECK_THROWS_AS(info.backbone.validate(), ArgumentError);
}
