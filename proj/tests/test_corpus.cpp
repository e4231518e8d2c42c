#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "doctest.h"
#include "plm/corpus.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"

using namespace plm;

namespace {

Corpus texts(std::initializer_list<const char*> items) {
  Corpus c;
  for (const char* t : items) c.reviews.push_back(Review{t, {}, {}, {}, {}});
  return c;
}

std::string words(const std::string& stem, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
  return s;
}

}  // namespace

TEST_CASE("clean_text examples") {
  CHECK(clean_text("<br>Great movie!!!") == "great movie");
  CHECK(clean_text("") == "");
  CHECK(clean_text("I'm *very* happy.....") == "i am very happy");
  CHECK(clean_text("It&#39;s a <i>classic</i> &amp; I can&rsquo;t stop") == "it is a classic i cannot stop");
  CHECK(clean_text("They\xE2\x80\x99re GREAT") == "they are great");
  CHECK(clean_text("the director's cut") == "the director cut");
  CHECK(clean_text("  a   b\t\nc  ") == "a b c");
  CHECK(clean_text("5 < 6 stars") == "5 6 stars");
}

TEST_CASE("clean_text is idempotent on noisy input") {
  const std::vector<std::string> pieces = {"<br/>", "<p class=\"x\">", "</div>", "&amp;", "&#39;", "&bogus;",
                                           "'", "\xE2\x80\x99", "I'm", "CAN'T", "won't", "y'all'd've",
                                           "...", "***", "!!", "?", "-", "Movie", "42", "\xC3\xA9", " ", "\t",
                                           "'tis", "o'clock", "rock'n'roll", "<", ">", "&", ";"};
  Rng rng(17);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const std::size_t n = rng.below(20);
    for (std::size_t k = 0; k < n; ++k) s += pieces[rng.below(pieces.size())];
    const std::string once = clean_text(s);
    CHECK(clean_text(once) == once);
    CHECK(std::all_of(once.begin(), once.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == ' '; }));
  }
}

TEST_CASE("label_by_rating") {
  CHECK(label_by_rating(5) == LabelDecision::positive);
  CHECK(label_by_rating(4) == LabelDecision::positive);
  CHECK(label_by_rating(3) == LabelDecision::discard);
  CHECK(label_by_rating(2) == LabelDecision::negative);
  CHECK(label_by_rating(1) == LabelDecision::negative);
  CHECK(label_by_rating(std::nullopt) == LabelDecision::discard);
  CHECK_THROWS_AS(label_by_rating(0), DataError);
  CHECK_THROWS_AS(label_by_rating(6), DataError);
}

TEST_CASE("dedup_exact") {
  auto out = dedup_exact(texts({"a b", "a b", "c"}));
  REQUIRE(out.size() == 2);
  CHECK(out.reviews[0].text == "a b");
  CHECK(out.reviews[1].text == "c");

  const auto distinct = texts({"x", "y", "z"});
  CHECK(dedup_exact(distinct).size() == 3);

  // 800 distinct texts plus 200 planted copies at random positions.
  Rng rng(3);
  Corpus planted;
  for (int i = 0; i < 800; ++i) planted.reviews.push_back(Review{"review " + std::to_string(i), {}, {}, {}, {}});
  for (int i = 0; i < 200; ++i) {
    const auto src = planted.reviews[rng.below(planted.size())];
    planted.reviews.insert(planted.reviews.begin() + static_cast<std::ptrdiff_t>(rng.below(planted.size() + 1)), src);
  }
  std::vector<std::string> oracle;
  std::unordered_set<std::string> seen;
  for (const auto& r : planted.reviews)
    if (seen.insert(r.text).second) oracle.push_back(r.text);
  const auto deduped = dedup_exact(planted);
  REQUIRE(deduped.size() == 800);
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(deduped.reviews[i].text == oracle[i]);
}

TEST_CASE("length_preserving_downsample") {
  Corpus pool;
  for (int i = 0; i < 50; ++i) pool.reviews.push_back(Review{words("w" + std::to_string(i) + "_", 1 + i % 17), {}, {}, {}, {}});

  SUBCASE("exhaustive and empty targets") {
    const auto all = length_preserving_downsample(pool, pool.size(), 1);
    std::multiset<std::string> a, b;
    for (const auto& r : all.reviews) a.insert(r.text);
    for (const auto& r : pool.reviews) b.insert(r.text);
    CHECK(a == b);
    CHECK(length_preserving_downsample(pool, 0, 1).empty());
    CHECK_THROWS_AS(length_preserving_downsample(pool, pool.size() + 1, 1), ContractError);
  }

  SUBCASE("no repeats, deterministic per seed") {
    const auto s1 = length_preserving_downsample(pool, 20, 9);
    const auto s2 = length_preserving_downsample(pool, 20, 9);
    std::set<std::string> unique;
    for (std::size_t i = 0; i < s1.size(); ++i) {
      CHECK(s1.reviews[i].text == s2.reviews[i].text);
      unique.insert(s1.reviews[i].text);
    }
    CHECK(unique.size() == 20);
  }

  SUBCASE("bimodal pool keeps its 80/20 length mix over 30 seeds") {
    Corpus bimodal;
    for (int i = 0; i < 4000; ++i) bimodal.reviews.push_back(Review{words("s" + std::to_string(i) + "_", 5), {}, {}, {}, {}});
    for (int i = 0; i < 1000; ++i) bimodal.reviews.push_back(Review{words("l" + std::to_string(i) + "_", 50), {}, {}, {}, {}});
    // Multinomial oracle: the pool's bin proportions are the expected sample proportions.
    const double expected_short = 4000.0 / 5000.0;
    double mean_short = 0.0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
      const auto sample = length_preserving_downsample(bimodal, 1000, seed);
      REQUIRE(sample.size() == 1000);
      const auto n_short = std::count_if(sample.reviews.begin(), sample.reviews.end(),
                                         [](const Review& r) { return token_length(r.text) == 5; });
      const double share = static_cast<double>(n_short) / 1000.0;
      CHECK(std::abs(share - expected_short) <= 0.03);
      mean_short += share / 30.0;
    }
    CHECK(std::abs(mean_short - expected_short) <= 0.01);
  }
}

TEST_CASE("length bins") {
  CHECK(length_bin(0) == 0);
  CHECK(length_bin(4) == 0);
  CHECK(length_bin(5) == 1);
  CHECK(length_bin(50) == 10);
  CHECK(length_bin(100000) == 39);
}

TEST_CASE("build_vocab") {
  const auto v = build_vocab(texts({"a a b"}), 6);
  CHECK(v.tokens() == std::vector<std::string>{"<pad>", "</s>", "<s>", "<unk>", "a", "b"});
  CHECK(build_vocab(Corpus{}, 10).size() == Vocabulary::kReserved);
  const auto tie = build_vocab(texts({"y x"}), 10);
  CHECK(tie.token(4) == "x");
  CHECK(tie.token(5) == "y");
  CHECK(build_vocab(texts({"a b c d e f"}), 6).size() == 6);
  CHECK_THROWS_AS(build_vocab(texts({"a"}), 4), ContractError);
}

TEST_CASE("tokenize and detokenize") {
  const auto v = build_vocab(texts({"great movie great film"}), 100);
  const auto ids = v.tokenize("great movie");
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] == v.id("great"));
  CHECK(ids[1] == v.id("movie"));
  const auto oov = v.tokenize("zzzunseen movie");
  CHECK(oov[0] == Vocabulary::kUnk);
  CHECK(oov[1] == v.id("movie"));

  // Round trip over random in-vocabulary texts.
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::string t;
    const std::size_t n = 1 + rng.below(8);
    for (std::size_t k = 0; k < n; ++k) t += (k ? " " : "") + v.token(static_cast<TokenId>(4 + rng.below(v.size() - 4)));
    CHECK(v.detokenize(v.tokenize(t)) == t);
  }
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.id(v.token(static_cast<TokenId>(i))) == static_cast<TokenId>(i));
}

TEST_CASE("vocabulary file round trip") {
  const auto v = build_vocab(texts({"b a c a"}), 20);
  const auto path = std::filesystem::temp_directory_path() / "plm_vocab_test.txt";
  v.save(path);
  CHECK(Vocabulary::load(path).tokens() == v.tokens());
  std::filesystem::remove(path);
}

TEST_CASE("split_corpus is disjoint and 5:1:1 per label") {
  Corpus c;
  for (int i = 0; i < 70; ++i) {
    c.reviews.push_back(Review{"pos " + std::to_string(i), 5, Label::positive, {}, {}});
    c.reviews.push_back(Review{"neg " + std::to_string(i), 1, Label::negative, {}, {}});
  }
  const auto s = split_corpus(c, 4);
  CHECK(s.train.count(Label::positive) == 50);
  CHECK(s.validation.count(Label::negative) == 10);
  CHECK(s.test.count(Label::positive) == 10);
  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& r : part->reviews) CHECK(all.insert(r.text).second);
  CHECK(all.size() == 140);
}

TEST_CASE("synth_corpus") {
  SynthConfig cfg;
  cfg.reviews_per_label = 100;
  const auto c = synth_corpus(cfg, 123);
  CHECK(c.size() == 200);
  CHECK(c.count(Label::positive) == 100);
  CHECK(c.count(Label::negative) == 100);

  const auto again = synth_corpus(cfg, 123);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.reviews[i].text == again.reviews[i].text);

  for (const auto& r : c.reviews) {
    CHECK(clean_text(r.text) == r.text);
    CHECK(label_by_rating(r.rating) == (r.label == Label::positive ? LabelDecision::positive : LabelDecision::negative));
  }

  // Counting oracle over the generated text.
  const auto lex = synth_lexicon(cfg);
  const std::set<std::string> pos(lex.positive.begin(), lex.positive.end());
  std::size_t in_pos = 0, total = 0;
  for (const auto& r : c.reviews) {
    std::istringstream in(r.text);
    std::string w;
    while (in >> w)
      if (pos.contains(w)) {
        ++total;
        if (r.label == Label::positive) ++in_pos;
      }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(in_pos) / static_cast<double>(total) >= 0.95);
}

TEST_CASE("corpus JSON lines") {
  Corpus c;
  c.reviews.push_back(Review{"great film", 5, Label::positive, {}, {}});
  c.reviews.push_back(Review{"meh \"quoted\"", std::nullopt, std::nullopt, {}, std::string("t5-encdec")});
  const auto path = std::filesystem::temp_directory_path() / "plm_corpus_test.jsonl";
  write_corpus(path, c);
  const auto back = read_corpus(path);
  REQUIRE(back.size() == 2);
  CHECK(back.reviews[0].text == "great film");
  CHECK(back.reviews[0].rating == 5);
  CHECK(back.reviews[0].label == Label::positive);
  CHECK_FALSE(back.reviews[1].rating.has_value());
  CHECK_FALSE(back.reviews[1].label.has_value());
  CHECK(back.reviews[1].source_model == "t5-encdec");

  {
    std::ofstream out(path, std::ios::app);
    out << "{\"text\": 12}\n";
  }
  try {
    read_corpus(path);
    FAIL("expected a data error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  std::filesystem::remove(path);
}
