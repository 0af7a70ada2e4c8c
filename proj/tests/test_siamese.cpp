#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "sevrank/io.hpp"
#include "sevrank/metrics.hpp"
#include "sevrank/siamese.hpp"
#include "support.hpp"

using namespace sevrank;

TEST_CASE("cpr outcomes") {
  CHECK(cpr(Severity::Mild, Severity::Mild) == RankLabel::Equal);
  CHECK(cpr(Severity::None, Severity::Severe) == RankLabel::Lower);
  CHECK(cpr(Severity::Severe, Severity::Moderate) == RankLabel::Higher);
  for (Severity a : kAllSeverities) {
    CHECK(cpr(a, a) == RankLabel::Equal);
    for (Severity b : kAllSeverities) {
      CHECK((cpr(a, b) == RankLabel::Lower) == (cpr(b, a) == RankLabel::Higher));
      for (Severity c : kAllSeverities) {
        if (cpr(a, b) == RankLabel::Lower && cpr(b, c) == RankLabel::Lower) CHECK(cpr(a, c) == RankLabel::Lower);
        if (cpr(a, b) == RankLabel::Equal && cpr(b, c) == RankLabel::Equal) CHECK(cpr(a, c) == RankLabel::Equal);
        if (cpr(a, b) == RankLabel::Higher && cpr(b, c) != RankLabel::Lower) CHECK(cpr(a, c) == RankLabel::Higher);
      }
    }
  }
}

TEST_CASE("sample_pair") {
  Rng rng(1);
  AspectDataset ds = testing::random_dataset(rng, 2, 1, 2);
  ds.instances[0].label = Severity::Mild;
  ds.instances[1].label = Severity::Severe;
  for (int i = 0; i < 20; ++i) {
    const PairSample p = sample_pair(ds, rng);
    CHECK(p.left.movie_id() != p.right.movie_id());
    CHECK(p.rank == cpr(p.left.label, p.right.label));
  }
  AspectDataset big = testing::random_dataset(rng, 30, 1, 2);
  Rng a(5), b(5);
  for (int i = 0; i < 50; ++i) CHECK(sample_pair(big, a).left.movie_id() == sample_pair(big, b).left.movie_id());
  CHECK_THROWS_AS(sample_pair(ds.select({0}), rng), ArgumentError);
}

TEST_CASE("uniform logits give ln 4 and ln 3") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 6);
  SiameseModel model(info, 2);
  for (const char* name : {"cls.w", "cls.b", "rank.w", "rank.b"}) model.parameters().find(name)->value.setZero();
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(3);
  AspectDataset ds = testing::random_dataset(rng, 8, 1, 3);
  std::vector<PairSample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(sample_pair(ds, rng));
  nn::Tape t;
  const JointLoss loss = joint_loss(model, batch, inputs, t);
  CHECK(t.value(loss.l_c)(0, 0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(t.value(loss.l_r)(0, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(t.value(loss.total)(0, 0) == doctest::Approx(std::log(12.0)).epsilon(1e-12));
}

TEST_CASE("joint loss is exactly additive") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 8);
  SiameseModel model(info, 4);
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(10);
  AspectDataset ds = testing::random_dataset(rng, 40, 1, 4);
  for (int b = 0; b < 200; ++b) {
    std::vector<PairSample> batch;
    const std::size_t size = 1 + rng.uniform_index(6);
    for (std::size_t i = 0; i < size; ++i) batch.push_back(sample_pair(ds, rng));
    nn::Tape t;
    const JointLoss loss = joint_loss(model, batch, inputs, t);
    const double total = t.value(loss.total)(0, 0);
    CHECK(total - (t.value(loss.l_c)(0, 0) + t.value(loss.l_r)(0, 0)) == 0.0);
  }
}

TEST_CASE("classification gradients equal a classification-only step on the same instances") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 6);
  SiameseModel model(info, 6);
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(12);
  AspectDataset ds = testing::random_dataset(rng, 10, 1, 3);
  std::vector<PairSample> batch;
  std::vector<LabeledInstance> singles;
  for (int i = 0; i < 3; ++i) {
    batch.push_back(sample_pair(ds, rng));
    singles.push_back(batch.back().left);
    singles.push_back(batch.back().right);
  }
  auto grads = [&](bool joint) {
    model.parameters().zero_grad();
    nn::Tape t;
    t.backward(joint ? joint_loss(model, batch, inputs, t).l_c : classification_loss(model, singles, inputs, t));
    std::vector<nn::Matrix> out;
    for (const auto& p : model.parameters().items()) {
      if (p->name.rfind("rank.", 0) != 0) out.push_back(p->grad);
    }
    return out;
  };
  const auto a = grads(true);
  const auto b = grads(false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK((a[i] - b[i]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("branches share one encoder") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 6);
  SiameseModel model(info, 6);
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(2);
  const ScriptDocument doc = testing::random_document(rng, "x", 3);
  nn::Tape t;
  nn::Var u = model.encode(t, *inputs.get(doc));
  nn::Var v = model.encode(t, *inputs.get(doc));
  CHECK((t.value(u).array() == t.value(v).array()).all());
  std::size_t encoder_params = 0;
  for (const auto& p : model.parameters().items()) encoder_params += p->name.rfind("enc.", 0) == 0;
  CHECK(encoder_params == 6);
  const Vector before = model.represent(*inputs.get(doc));
  model.parameters().find("enc.fw.b")->value.array() += 0.5;
  CHECK((model.represent(*inputs.get(doc)) - before).norm() > 0.0);
}

TEST_CASE("prediction tie rules") {
  CHECK(prediction_from_logits(Vector{{0.1, 0.2, 0.3, 0.4}}.array().log().matrix()).label == Severity::Severe);
  CHECK(prediction_from_logits(Vector{{0.4, 0.4, 0.1, 0.1}}).label == Severity::None);
  const auto p = prediction_from_logits(Vector{{0, 0, 0, 0}});
  CHECK(p.label == Severity::None);
  CHECK(p.probabilities[2] == doctest::Approx(0.25));
}

TEST_CASE("canonical comparison") {
  const Comparison c = canonical_comparison({0.6, 0.3, 0.1}, {0.2, 0.3, 0.5});
  CHECK(c.probabilities[0] == doctest::Approx(0.55));
  CHECK(c.probabilities[1] == doctest::Approx(0.3));
  CHECK(c.probabilities[2] == doctest::Approx(0.15));
  CHECK(c.label == RankLabel::Lower);
  CHECK(canonical_comparison({0.4, 0.2, 0.4}, {0.4, 0.2, 0.4}).label == RankLabel::Equal);
}

TEST_CASE("compare is mirror symmetric") {
  ModelInfo info = testing::tiny_info(Architecture::RnnTrans, 8);
  SiameseModel model(info, 9);
  InputCache inputs(make_provider(info.provider_spec));
  Rng rng(21);
  for (int i = 0; i < 100; ++i) {
    const ScriptDocument a = testing::random_document(rng, "a" + std::to_string(i), 1 + rng.uniform_index(4));
    const ScriptDocument b = testing::random_document(rng, "b" + std::to_string(i), 1 + rng.uniform_index(4));
    const Comparison ab = compare(model, inputs, a, b);
    const Comparison ba = compare(model, inputs, b, a);
    CHECK(ab.probabilities[0] == ba.probabilities[2]);
    CHECK(ab.probabilities[1] == ba.probabilities[1]);
    CHECK(ab.probabilities[2] == ba.probabilities[0]);
    CHECK(ab.label == swap_rank(ba.label));
    const Comparison aa = compare(model, inputs, a, a);
    CHECK(aa.probabilities[0] == aa.probabilities[2]);
    CHECK(aa.label == RankLabel::Equal);
  }
  SiameseModel plain(testing::tiny_info(Architecture::RnnTrans, 8, false), 9);
  const ScriptDocument d = testing::random_document(rng, "d", 2);
  CHECK_THROWS_AS(compare(plain, inputs, d, d), UnsupportedOperation);
  CHECK(predict_severity(plain, inputs, d).probabilities[0] > 0.0);
}

TEST_CASE("model files") {
  ModelInfo info = testing::tiny_info(Architecture::TextCnn, 5);
  info.best_dev_macro_f1 = 0.123456789;
  info.best_epoch = 7;
  SiameseModel model(info, 11);
  const std::string bytes = model.serialize();
  CHECK(bytes.substr(0, 8) == "SEVRKMDL");
  const SiameseModel back = SiameseModel::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.info().config_hash() == model.info().config_hash());
  CHECK(back.info().best_dev_macro_f1 == info.best_dev_macro_f1);
  CHECK_FALSE(back.multitask() == false);

  CHECK_THROWS_AS(SiameseModel::deserialize(bytes.substr(0, bytes.size() - 3)), ModelFormatError);
  CHECK_THROWS_AS(SiameseModel::deserialize("garbage"), ModelFormatError);
  std::string tampered = bytes;
  const auto pos = tampered.find("backbone.channels=2");
  REQUIRE(pos != std::string::npos);
  tampered[pos + 18] = '3';
  CHECK_THROWS_AS(SiameseModel::deserialize(tampered), ModelFormatError);

  const auto path = std::filesystem::temp_directory_path() / ("sevrank_model_" + std::to_string(::getpid()));
  model.save(path);
  CHECK(io::read_file(path) == bytes);
  CHECK(SiameseModel::load(path).serialize() == bytes);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(SiameseModel::load(path), DataError);
}

TEST_CASE("training") {
  Rng rng(40);
  AspectDataset ds = stratified_split(testing::random_dataset(rng, 40, 2, 4), {}, 1);
  BackboneConfig bb = testing::tiny_info(Architecture::RnnTrans, 6).backbone;
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 5;
  InputCache inputs(make_provider("hash:6"));

  SUBCASE("same config and seed give identical bytes") {
    std::ostringstream log1, log2;
    const SiameseModel a = train(cfg, ds, bb, inputs, true, &log1);
    const SiameseModel b = train(cfg, ds, bb, inputs, true, &log2);
    CHECK(a.serialize() == b.serialize());
    CHECK(log1.str() == log2.str());
    CHECK(log1.str().rfind("# config_hash=" + a.info().config_hash(), 0) == 0);
  }
  SUBCASE("both modes produce models; only multitask can compare") {
    const SiameseModel mt = train(cfg, ds, bb, inputs, true);
    const SiameseModel co = train(cfg, ds, bb, inputs, false);
    CHECK(mt.ranker() != nullptr);
    CHECK(co.ranker() == nullptr);
    const auto& doc = *ds.instances[0].document;
    CHECK_NOTHROW(compare(mt, inputs, doc, doc));
    CHECK_THROWS_AS(compare(co, inputs, doc, doc), UnsupportedOperation);
  }
  SUBCASE("early stopping returns the best epoch") {
    cfg.max_epochs = 30;
    cfg.patience = 2;
    std::vector<EpochRecord> history;
    const SiameseModel m = train(cfg, ds, bb, inputs, true, nullptr, &history);
    REQUIRE(!history.empty());
    double best = -1;
    int best_epoch = 0;
    for (const auto& r : history) {
      if (r.dev_macro_f1 > best) {
        best = r.dev_macro_f1;
        best_epoch = r.epoch;
      }
    }
    CHECK(m.info().best_epoch == best_epoch);
    CHECK(m.info().best_dev_macro_f1 == best);
    if (static_cast<int>(history.size()) < cfg.max_epochs) {
      CHECK(static_cast<int>(history.size()) == best_epoch + cfg.patience);
    }
    const double dev = macro_f1(ds.part(SplitPart::Dev).labels(), predict_labels(m, inputs, ds.part(SplitPart::Dev)));
    CHECK(std::abs(dev - m.info().best_dev_macro_f1) <= 1e-6);
  }
  SUBCASE("input errors") {
    AspectDataset nosplit = ds;
    nosplit.split.reset();
    CHECK_THROWS(train(cfg, nosplit, bb, inputs, true));
    InputCache words(make_provider("hashword:6"));
    CHECK_THROWS(train(cfg, ds, bb, words, true));
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(cfg, ds, bb, inputs, true), ArgumentError);
  }
}
