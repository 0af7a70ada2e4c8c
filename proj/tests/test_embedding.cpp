#include <doctest.h>
#include <unistd.h>

#include <filesystem>

#include "sevrank/embedding.hpp"
#include "sevrank/io.hpp"

using namespace sevrank;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("sevrank_emb_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Hello, world!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("DON'T") == std::vector<std::string>{"don", "'", "t"});
  CHECK(tokenize("  caf\xc3\xa9\tbar ") == std::vector<std::string>{"caf\xc3\xa9", "bar"});
}

TEST_CASE("hash embedder") {
  HashEmbedder sent(64);
  HashEmbedder word(16, EmbeddingKind::Word);
  SUBCASE("deterministic across repeated calls") {
    const Vector first = sent.embed("the same text");
    for (int i = 0; i < 1000; ++i) REQUIRE((sent.embed("the same text").array() == first.array()).all());
    const Vector w = word.embed("gun");
    for (int i = 0; i < 1000; ++i) REQUIRE((word.embed("gun").array() == w.array()).all());
  }
  SUBCASE("sentence vectors are unit length; empty text maps to zero") {
    CHECK(sent.embed("one two three").norm() == doctest::Approx(1.0));
    CHECK(sent.embed("").norm() == 0.0);
    CHECK(sent.embed("   ").size() == 64);
  }
  SUBCASE("sentence vector is the normalized mean of token vectors") {
    const Vector mean = (sent.token_vector("a") + sent.token_vector("b")) / 2.0;
    CHECK((sent.embed("A b") - mean.normalized()).norm() < 1e-12);
  }
  SUBCASE("coordinates have mean near zero") {
    Vector sum = Vector::Zero(64);
    const int n = 10000;
    for (int i = 0; i < n; ++i) sum += sent.token_vector("tok" + std::to_string(i));
    CHECK((sum / n).cwiseAbs().maxCoeff() <= 0.05);
  }
}

TEST_CASE("word embedding table") {
  const fs::path file = temp_path("vec.txt");
  SUBCASE("parses rows and zero-fills OOV") {
    io::write_file_atomic(file, "the 0.1 0.2 0.3\ngun 1 2 3\n");
    const auto t = WordEmbeddingTable::load(file, 3);
    CHECK(t.size() == 2);
    CHECK(t.lookup("the").isApprox(Vector{{0.1, 0.2, 0.3}}));
    CHECK(t.lookup("absent") == Vector::Zero(3));
    CHECK(t.oov_rate({"the", "x", "y", "gun"}) == doctest::Approx(0.5));
    CHECK(t.oov_rate({}) == 0.0);
  }
  SUBCASE("mixed arity is a parse error naming the line") {
    io::write_file_atomic(file, "the 0.1 0.2 0.3\ngun 1 2 3 4\n");
    try {
      WordEmbeddingTable::load(file, 3);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  fs::remove(file);
}

TEST_CASE("precomputed and cached providers") {
  const fs::path dir = temp_path("cache");
  fs::remove_all(dir);
  PrecomputedSentenceProvider pre(dir, 8, "enc");
  CHECK_THROWS_AS(pre.embed("unseen"), ProviderError);
  Vector v = Vector::LinSpaced(8, 0.0, 1.0);
  vector_cache::store(vector_cache::entry_path(dir, "enc", "seen"), v);
  CHECK(pre.embed("seen") == v);

  auto inner = std::make_shared<HashEmbedder>(8);
  CachedProvider cached(inner, dir);
  const Vector a = cached.embed("hello there");
  CHECK(a == inner->embed("hello there"));
  CHECK(cached.embed("hello there") == a);
  CHECK(fs::exists(vector_cache::entry_path(dir, inner->spec(), "hello there")));
  Vector out;
  CHECK_THROWS_AS(vector_cache::load(vector_cache::entry_path(dir, "enc", "seen"), 9, out), ProviderError);
  fs::remove_all(dir);
}

TEST_CASE("make_provider specs") {
  CHECK(make_provider("hash:32")->dim() == 32);
  CHECK(make_provider("hashword:12")->kind() == EmbeddingKind::Word);
  CHECK(make_provider("hash:32")->spec() == "hash:32");
  CHECK_THROWS(make_provider("bogus:3"));
  CHECK_THROWS(make_provider("hash:0"));
}

TEST_CASE("document inputs respect caps") {
  auto doc = make_document("m", "t", {"a b c d e", "f g", "h"});
  HashEmbedder sent(4);
  HashEmbedder word(4, EmbeddingKind::Word);
  CHECK(document_input(sent, doc).cols() == 3);
  CHECK(document_input(sent, doc, {2, 128}).cols() == 2);
  CHECK(document_input(word, doc).cols() == 8);
  CHECK(document_input(word, doc, {128, 2}).cols() == 5);
  CHECK(document_tokens(doc, {1, 3}) == std::vector<std::string>{"a", "b", "c"});
  CHECK(truncate_utterance("one two three", 2) == "one two");
}
