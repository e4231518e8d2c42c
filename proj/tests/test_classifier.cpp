#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "plm/classifier.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"
#include "support/gradcheck.hpp"

using namespace plm;

namespace {

ClassifierReport oracle_report(const std::vector<Label>& pred, const std::vector<Label>& gold) {
  ClassifierReport r;
  r.total = gold.size();
  for (std::size_t c = 0; c < 2; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      const bool g = static_cast<std::size_t>(gold[i]) == c, p = static_cast<std::size_t>(pred[i]) == c;
      tp += g && p;
      fp += !g && p;
      fn += g && !p;
    }
    auto& m = r.per_label[c];
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
  }
  double hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += pred[i] == gold[i];
  r.accuracy = gold.empty() ? 0.0 : hits / static_cast<double>(gold.size());
  return r;
}

struct Separable {
  DatasetSplits splits;
  Vocabulary vocab;
  SynthLexicon lex;
};

Separable separable() {
  SynthConfig sc;
  sc.reviews_per_label = 300;
  sc.exclusive_rate = 0.5;
  sc.phrase_rate = 0.0;
  Separable s{split_corpus(synth_corpus(sc, 3), 3), {}, synth_lexicon(sc)};
  s.vocab = build_vocab(s.splits.train, 2000);
  return s;
}

}  // namespace

TEST_CASE("report hand example") {
  std::vector<Label> gold, pred;
  auto push = [&](Label g, Label p, int n) {
    for (int i = 0; i < n; ++i) {
      gold.push_back(g);
      pred.push_back(p);
    }
  };
  push(Label::positive, Label::positive, 45);
  push(Label::negative, Label::positive, 5);
  push(Label::positive, Label::negative, 10);
  push(Label::negative, Label::negative, 40);
  const auto r = report(pred, gold);
  const auto& pos = r.per_label[static_cast<std::size_t>(Label::positive)];
  CHECK(pos.precision == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(pos.recall == doctest::Approx(45.0 / 55.0).epsilon(1e-15));
  CHECK(pos.f1 == doctest::Approx(0.857142857142857).epsilon(1e-12));
  CHECK(r.accuracy == doctest::Approx(0.85).epsilon(1e-15));
  CHECK(r.confusion[1][1] + r.confusion[1][0] + r.confusion[0][1] + r.confusion[0][0] == 100);
}

TEST_CASE("report extremes and invariants") {
  const std::vector<Label> gold{Label::positive, Label::negative, Label::positive, Label::negative};
  const auto perfect = report(gold, gold);
  CHECK(perfect.accuracy == 1.0);
  for (const auto& m : perfect.per_label) CHECK((m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0));
  std::vector<Label> flipped;
  for (Label l : gold) flipped.push_back(opposite(l));
  const auto worst = report(flipped, gold);
  CHECK(worst.accuracy == 0.0);
  for (const auto& m : worst.per_label) CHECK(m.recall == 0.0);
  CHECK_THROWS_AS(report(std::vector<Label>{Label::positive}, gold), ContractError);
}

TEST_CASE("report matches a brute-force oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<Label> gold(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      gold[i] = rng.below(2) ? Label::positive : Label::negative;
      pred[i] = rng.below(2) ? Label::positive : Label::negative;
    }
    const auto r = report(pred, gold), o = oracle_report(pred, gold);
    CHECK(std::abs(r.accuracy - o.accuracy) <= 1e-9);
    CHECK(r.accuracy == static_cast<double>(r.confusion[0][0] + r.confusion[1][1]) / static_cast<double>(n));
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(r.per_label[c].precision - o.per_label[c].precision) <= 1e-9);
      CHECK(std::abs(r.per_label[c].recall - o.per_label[c].recall) <= 1e-9);
      CHECK(std::abs(r.per_label[c].f1 - o.per_label[c].f1) <= 1e-9);
    }
    // Order invariance.
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    std::vector<Label> g2, p2;
    for (std::size_t i : perm) {
      g2.push_back(gold[i]);
      p2.push_back(pred[i]);
    }
    CHECK(report(p2, g2).per_label[1].f1 == r.per_label[1].f1);
  }
}

TEST_CASE("predict gives valid probabilities and handles empty input") {
  ClassifierConfig c;
  c.vocab_size = 50;
  const ClassifierModel m(c, 4);
  const std::vector<TokenId> ids{5, 6, 7};
  const auto a = predict(m, ids), b = predict(m, ids);
  CHECK(a.probs[0] + a.probs[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(a.probs == b.probs);
  CHECK_NOTHROW(predict(m, std::vector<TokenId>{}));
  CHECK(m.logits(ids).shape() == Shape{1, 2});
  std::vector<TokenId> longer(100, 9);
  CHECK_NOTHROW(predict(m, longer));
}

TEST_CASE("classifier training contracts") {
  ClassifierConfig c;
  c.vocab_size = 50;
  ClassifierModel m(c, 4);
  LabelledSet one{{{5, 6}, {7}}, {Label::positive, Label::positive}};
  CHECK_THROWS_AS(train_classifier(m, one, {}, {}), ContractError);
  CHECK_THROWS_AS(train_classifier(m, {}, {}, {}), ContractError);

  LabelledSet both{{{5, 6}, {7, 8}, {9}, {10, 11}}, {Label::positive, Label::negative, Label::positive, Label::negative}};
  ClassifierOptions zero;
  zero.learning_rate = 0.0;
  const double before = accuracy(m, both);
  const auto log = train_classifier(m, both, both, zero);
  CHECK(log.epochs.back().val_accuracy == before);
}

TEST_CASE("separable corpus: accuracy, lexicon agreement, determinism") {
  const Separable s = separable();
  const LabelledSet train = labelled_set(s.splits.train, s.vocab);
  const LabelledSet val = labelled_set(s.splits.validation, s.vocab);
  const LabelledSet test = labelled_set(s.splits.test, s.vocab);
  ClassifierConfig c;
  c.vocab_size = s.vocab.size();
  ClassifierModel m(c, 1);
  const auto log = train_classifier(m, train, val, ClassifierOptions{});
  CHECK(log.best_val_accuracy >= 0.95);
  CHECK(accuracy(m, val) == log.best_val_accuracy);

  const std::set<std::string> pos(s.lex.positive.begin(), s.lex.positive.end());
  const std::set<std::string> neg(s.lex.negative.begin(), s.lex.negative.end());
  std::size_t agree = 0;
  const auto preds = predict(m, s.splits.test, s.vocab);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    std::istringstream words(s.splits.test.reviews[i].text);
    std::string w;
    int score = 0;
    while (words >> w) score += static_cast<int>(pos.count(w)) - static_cast<int>(neg.count(w));
    agree += preds[i].label == (score > 0 ? Label::positive : Label::negative);
  }
  CHECK(static_cast<double>(agree) / static_cast<double>(preds.size()) >= 0.9);
  CHECK(test.labels.size() == preds.size());

  ClassifierModel again(c, 1);
  train_classifier(again, train, val, ClassifierOptions{});
  CHECK(encode_checkpoint(again.to_checkpoint()) == encode_checkpoint(m.to_checkpoint()));
  const ClassifierModel restored = ClassifierModel::from_checkpoint(decode_checkpoint(encode_checkpoint(m.to_checkpoint())));
  CHECK(predict(restored, test.inputs[0]).probs == predict(m, test.inputs[0]).probs);
}

TEST_CASE("classifier gradients match finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 4; ++trial) {
    ClassifierConfig cc;
    cc.vocab_size = 20;
    cc.heads = 1 + trial % 2;
    cc.embed_dim = cc.heads * 3;
    cc.ffn_dim = 5;
    cc.layers = 1 + trial / 2;
    cc.max_len = 8;
    ClassifierModel clf(cc, rng());
    std::vector<Tensor> params;
    for (const auto& [name, t] : clf.params()) params.push_back(t);
    std::vector<TokenId> ids;
    for (std::size_t i = 0; i < 3 + static_cast<std::size_t>(trial); ++i) ids.push_back(static_cast<TokenId>(4 + rng.below(16)));
    const std::vector<TokenId> gold{static_cast<TokenId>(trial % 2)};
    const auto r = testing::check_gradients([&] { return cross_entropy(clf.logits(ids), gold); }, params, 1e-5, 1e-6, true);
    CHECK_MESSAGE(r.within(1e-4), r.worst);
  }
}
