#include <doctest.h>

#include <set>

#include "sevrank/eval.hpp"
#include "support.hpp"

using namespace sevrank;

namespace {

std::vector<Severity> labels(std::initializer_list<int> v) {
  std::vector<Severity> out;
  for (int x : v) out.push_back(severity_from_int(x));
  return out;
}

// Exhaustive randomization recomputing both scores from scratch for every
// swap mask.
double oracle_p(const std::vector<Severity>& gold, const std::vector<Severity>& a,
                const std::vector<Severity>& b, bool two_sided) {
  const double observed = macro_f1(gold, a) - macro_f1(gold, b);
  const std::size_t n = gold.size();
  std::size_t hits = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    std::vector<Severity> x = a, y = b;
    for (std::size_t i = 0; i < n; ++i) {
      if ((mask >> i) & 1) std::swap(x[i], y[i]);
    }
    const double d = macro_f1(gold, x) - macro_f1(gold, y);
    hits += two_sided ? std::abs(d) >= std::abs(observed) - 1e-12 : d >= observed - 1e-12;
  }
  return static_cast<double>(hits) / static_cast<double>(1ULL << n);
}

}  // namespace

TEST_CASE("eval report") {
  const EvalReport r = make_eval_report(Aspect::Sex, labels({0, 0, 1, 2, 3}), labels({0, 1, 1, 2, 2}));
  CHECK(r.macro_f1 == 0.5);
  CHECK(r.n == 5);
  std::size_t total = 0;
  for (const auto& row : r.confusion) {
    for (auto c : row) total += c;
  }
  CHECK(total == 5);
  CHECK(r.to_text().find("macro_f1: 0.5000") != std::string::npos);
  CHECK(r.to_json().find("\"macro_f1\": 0.5") != std::string::npos);
}

TEST_CASE("fold summaries") {
  const CVReport r = summarize_folds({0.5, 0.5, 0.5});
  CHECK(r.mean == 0.5);
  CHECK(r.stddev == 0.0);
  const CVReport s = summarize_folds({0.2, 0.4});
  CHECK(s.stddev == doctest::Approx(std::sqrt(0.02)));
  CHECK(summarize_folds({0.7}).stddev == 0.0);
  CHECK_THROWS_AS(summarize_folds({}), ArgumentError);
}

TEST_CASE("significance test worked examples") {
  const auto gold = labels({0, 1, 2, 3});
  CHECK(significance_test(gold, gold, labels({1, 2, 3, 0})) == doctest::Approx(0.125));
  CHECK(significance_test(gold, labels({0, 1, 1, 2}), labels({0, 1, 1, 2})) == 1.0);
  Rng rng(3);
  std::vector<Severity> g(200), a(200), b(200);
  for (std::size_t i = 0; i < 200; ++i) {
    g[i] = severity_from_int(static_cast<int>(rng.uniform_index(4)));
    a[i] = rng.bernoulli(0.9) ? g[i] : severity_from_int(static_cast<int>(rng.uniform_index(4)));
    b[i] = rng.bernoulli(0.4) ? g[i] : severity_from_int(static_cast<int>(rng.uniform_index(4)));
  }
  const double p1 = significance_test(g, a, b, 2000, 9);
  CHECK(p1 == significance_test(g, a, b, 2000, 9));
  CHECK(p1 > 0.0);
  CHECK(p1 <= 1.0);
  CHECK(p1 < 0.01);
  CHECK(significance_test(g, a, b, 2000, 9, Alternative::Greater) < 0.01);
  CHECK(significance_test(g, b, a, 2000, 9, Alternative::Greater) > 0.9);
  CHECK_THROWS_AS(significance_test(g, a, labels({0})), ArgumentError);
}

TEST_CASE("significance test matches an exhaustive oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(10);
    std::vector<Severity> g(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = severity_from_int(static_cast<int>(rng.uniform_index(4)));
      a[i] = severity_from_int(static_cast<int>(rng.uniform_index(4)));
      b[i] = severity_from_int(static_cast<int>(rng.uniform_index(4)));
    }
    CHECK(significance_test(g, a, b, 1 << 12) == doctest::Approx(oracle_p(g, a, b, true)).epsilon(1e-12));
    CHECK(significance_test(g, a, b, 1 << 12, 0, Alternative::Greater) ==
          doctest::Approx(oracle_p(g, a, b, false)).epsilon(1e-12));
  }
}

TEST_CASE("cross validation") {
  Rng rng(50);
  AspectDataset ds = testing::random_dataset(rng, 40, 1, 3);
  BackboneConfig bb = testing::tiny_info(Architecture::AvgEmbed, 4).backbone;
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 4;
  InputCache inputs(make_provider("hashword:4"));
  CrossValidationOptions opts;
  opts.k = 4;
  opts.seed = 3;
  std::vector<FoldAssignment> folds;
  const CVReport r = cross_validate(cfg, bb, ds, inputs, true, opts, &folds);
  CHECK(r.fold_macro_f1.size() == 4);
  CHECK_FALSE(r.config_hash.empty());
  std::multiset<std::size_t> tested;
  for (const auto& f : folds) {
    tested.insert(f.test.begin(), f.test.end());
    const std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (auto i : f.test) CHECK(train.count(i) == 0);
  }
  CHECK(tested.size() == ds.size());
  CHECK(std::set<std::size_t>(tested.begin(), tested.end()).size() == ds.size());
  const std::string tsv = r.to_tsv();
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 6);
  const CVReport again = cross_validate(cfg, bb, ds, inputs, true, opts);
  CHECK(again.fold_macro_f1 == r.fold_macro_f1);
}

TEST_CASE("evaluate refuses a mismatched aspect") {
  Rng rng(2);
  ModelInfo info = testing::tiny_info(Architecture::AvgEmbed, 4);
  SiameseModel model(info, 1);
  InputCache inputs(make_provider(info.provider_spec));
  AspectDataset ds = testing::random_dataset(rng, 6, 1, 2, Aspect::Violence);
  CHECK(evaluate(model, inputs, ds).n == 6);
  ds.aspect = Aspect::Sex;
  CHECK_THROWS_AS(evaluate(model, inputs, ds), DataError);
}
