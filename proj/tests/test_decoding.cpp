#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "plm/decoding.hpp"
#include "plm/error.hpp"

using namespace plm;

namespace {

std::vector<double> random_logits(Rng& rng, std::size_t v, double scale = 2.0) {
  std::vector<double> z(v);
  for (double& x : z) x = scale * rng.normal();
  return z;
}

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

ModelConfig small(Architecture arch) {
  ModelConfig c;
  c.architecture = arch;
  c.vocab_size = 30;
  c.embed_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.max_seq_len = 32;
  return c;
}

Vocabulary letters(std::size_t n) {
  std::vector<std::string> words{"<pad>", "</s>", "<s>", "<unk>"};
  for (std::size_t i = 4; i < n; ++i) words.push_back("w" + std::to_string(i));
  return Vocabulary(words);
}

}  // namespace

TEST_CASE("top_p_filter hand examples") {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const auto f = top_p_filter(p, 0.7);
  CHECK(f[0] == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(f[2] == 0.0);
  CHECK(top_p_filter(p, 1.0) == p);
  const std::vector<double> onehot{0.0, 1.0, 0.0};
  for (double q : {0.01, 0.5, 0.99}) CHECK(top_p_filter(onehot, q) == onehot);
  CHECK_THROWS_AS(top_p_filter(p, 0.0), ContractError);
}

TEST_CASE("top_p ties go to the lower id and the boundary token is kept") {
  const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
  const auto f = top_p_filter(p, 0.5);
  CHECK(f == std::vector<double>{0.5, 0.5, 0.0, 0.0});
  const auto g = top_p_filter(p, 0.51);
  CHECK(g[2] > 0.0);
  CHECK(g[3] == 0.0);
}

TEST_CASE("nucleus mass reaches p on random distributions") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto probs = softmax_values(random_logits(rng, 40));
    const double p = 0.05 + 0.9 * rng.uniform();
    const Nucleus n = nucleus(probs, p);
    CHECK(n.mass >= p);
    // Minimality: dropping the boundary token falls short of p.
    CHECK(n.mass - probs[n.tokens.back()] < p);
    const auto f = top_p_filter(probs, p);
    CHECK(total(f) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("n-gram bans follow the no-repeat rule") {
  const std::vector<TokenId> ctx{5, 6, 7, 5, 6};
  auto uni = banned_tokens(ctx, 1);
  std::sort(uni.begin(), uni.end());
  uni.erase(std::unique(uni.begin(), uni.end()), uni.end());
  CHECK(uni == std::vector<TokenId>{5, 6, 7});
  CHECK(banned_tokens(ctx, 2) == std::vector<TokenId>{7});
  CHECK(banned_tokens(ctx, 3) == std::vector<TokenId>{7});
  CHECK(banned_tokens(ctx, 0).empty());
  CHECK(banned_tokens(std::vector<TokenId>{4}, 3).empty());
}

TEST_CASE("plain distribution basics") {
  Rng rng(8);
  GenerationParams open;
  open.top_p = 1.0;
  open.no_repeat_ngram_size = 0;
  const auto z = random_logits(rng, 12);
  CHECK(plain_distribution(z, {}, open) == softmax_values(z));

  GenerationParams ban = open;
  ban.no_repeat_ngram_size = 1;
  const std::vector<TokenId> ctx{3, 9};
  const auto p = plain_distribution(z, ctx, ban);
  CHECK(p[3] == 0.0);
  CHECK(p[9] == 0.0);

  for (int trial = 0; trial < 100; ++trial) {
    const auto zz = random_logits(rng, 15);
    GenerationParams cold = open;
    cold.temperature = 0.5;
    const auto warm_p = plain_distribution(zz, {}, open);
    const auto cold_p = plain_distribution(zz, {}, cold);
    CHECK(*std::max_element(cold_p.begin(), cold_p.end()) > *std::max_element(warm_p.begin(), warm_p.end()));
  }

  GenerationParams k2 = open;
  k2.top_k = 2;
  const std::vector<double> zk{1.0, 3.0, 2.0, 0.5};
  const auto pk = plain_distribution(zk, {}, k2);
  CHECK(pk[0] == 0.0);
  CHECK(pk[3] == 0.0);
  CHECK(pk[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("all banned falls back to end of sequence") {
  GenerationParams gp;
  const std::vector<double> z{0.0, 1.0, 2.0};
  const std::vector<TokenId> ctx{0, 1, 2};
  CHECK(plain_distribution(z, ctx, gp) == std::vector<double>{0.0, 1.0, 0.0});
}

TEST_CASE("steering hand example and reductions") {
  SteeringParams sp;
  sp.alpha = 1.2;
  sp.filter_p = 1.0;
  sp.top_p = 1.0;
  sp.temperature = 1.0;
  sp.no_repeat_ngram_size = 0;
  const std::vector<double> z{0, 0}, zp{1, 0}, zm{0, 1};
  const auto p = steered_distribution(z, zp, zm, sp);
  CHECK(p[0] == doctest::Approx(0.9168).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.0832).epsilon(1e-4));
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-2.4))).epsilon(1e-14));

  double prev = 0.0;
  for (double a = 0.0; a <= 5.0; a += 0.25) {
    sp.alpha = a;
    const double now = steered_distribution(z, zp, zm, sp)[0];
    CHECK(now >= prev);
    prev = now;
  }

  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto zb = random_logits(rng, 10), ze = random_logits(rng, 10), za = random_logits(rng, 10);
    sp.alpha = 0.0;
    GenerationParams plain;
    plain.top_p = 1.0;
    plain.no_repeat_ngram_size = 0;
    CHECK(steered_distribution(zb, ze, za, sp) == plain_distribution(zb, {}, plain));
    sp.alpha = 3.0 * rng.uniform();
    const auto same = steered_distribution(zb, ze, ze, sp);
    const auto ref = softmax_values(zb);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(same[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(steered_distribution(z, std::vector<double>{1.0}, zm, sp), ShapeError);
}

TEST_CASE("filter_p removes tokens outside the base nucleus") {
  SteeringParams sp;
  sp.alpha = 10.0;
  sp.filter_p = 0.6;
  sp.top_p = 1.0;
  sp.temperature = 1.0;
  sp.no_repeat_ngram_size = 0;
  const std::vector<double> z{std::log(0.7), std::log(0.2), std::log(0.1)};
  const std::vector<double> zp{0, 0, 5}, zm{0, 0, 0};
  const auto p = steered_distribution(z, zp, zm, sp);
  CHECK(p == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("sample only returns positive-probability tokens") {
  Rng rng(9);
  const std::vector<double> p{0.0, 0.5, 0.0, 0.5, 0.0};
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 2000; ++i) ++hits[sample(p, rng)];
  CHECK(hits[0] + hits[2] + hits[4] == 0);
  CHECK(std::abs(hits[1] - 1000) < 150);
  CHECK_THROWS_AS(sample(std::vector<double>{0.0, 0.0}, rng), NumericError);
}

TEST_CASE("next_distribution is a valid vector without reserved ids") {
  for (Architecture arch : {Architecture::encoder_decoder, Architecture::decoder_only}) {
    LmModel m(small(arch), 3);
    GenerationParams gp;
    const std::vector<TokenId> src{5, 6}, ctx{5, 6, 7};
    const auto p = next_distribution(m, src, ctx, gp);
    CHECK(p.size() == 30);
    CHECK(total(p) == doctest::Approx(1.0).epsilon(1e-9));
    for (TokenId t : {0, 2, 3, 5, 6, 7}) CHECK(p[static_cast<std::size_t>(t)] == 0.0);
  }
}

TEST_CASE("generation contracts and determinism") {
  LmModel m(small(Architecture::encoder_decoder), 3);
  m.attach_prompt(init_soft_prompt(PromptSite::encoder, 3, m, 1));
  m.attach_prompt(init_soft_prompt(PromptSite::decoder, 3, m, 2));
  const Vocabulary vocab = letters(30);
  Corpus inputs;
  for (int i = 0; i < 12; ++i) inputs.reviews.push_back(Review{"w5 w6 w" + std::to_string(7 + i % 5) + " w12 w13", {}, {}, {}, {}});

  GenerationParams gp;
  gp.max_new_tokens = 0;
  const Corpus prefixes = generate(m, inputs, vocab, gp, Label::positive, "t");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    CHECK(prefixes.reviews[i].token_ids->size() == 4);
    CHECK(prefixes.reviews[i].label == Label::positive);
    CHECK(prefixes.reviews[i].source_model == "t");
  }

  gp.max_new_tokens = 10;
  const Corpus a = generate(m, inputs, vocab, gp, Label::negative, "t");
  const Corpus b = generate(m, inputs, vocab, gp, Label::negative, "t");
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.reviews[i].text == b.reviews[i].text);
    const auto& ids = *a.reviews[i].token_ids;
    CHECK(ids.size() <= 14);
    // no_repeat_ngram_size = 1: generated tokens never repeat the context.
    for (std::size_t j = 4; j < ids.size(); ++j)
      CHECK(std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(j), ids[j]) ==
            ids.begin() + static_cast<std::ptrdiff_t>(j));
  }

  gp.max_new_tokens = 40;
  CHECK_THROWS_AS(generate(m, inputs, vocab, gp, Label::negative, "t"), ContractError);
  CHECK_THROWS_AS(generate(m, Corpus{}, vocab, GenerationParams{}, Label::negative, "t"), ContractError);
}

TEST_CASE("steered generation with identical experts matches the steered base path") {
  LmModel base(small(Architecture::encoder_decoder), 3);
  const Vocabulary vocab = letters(30);
  Corpus inputs;
  for (int i = 0; i < 6; ++i) inputs.reviews.push_back(Review{"w5 w" + std::to_string(6 + i), {}, {}, {}, {}});
  SteeringParams sp;
  sp.max_new_tokens = 8;
  SteeringParams zero = sp;
  zero.alpha = 0.0;
  const Corpus steered = generate_steered(base, base, base, inputs, vocab, sp, Label::positive, "s");
  const Corpus plain = generate_steered(base, base, base, inputs, vocab, zero, Label::positive, "s");
  for (std::size_t i = 0; i < inputs.size(); ++i) CHECK(steered.reviews[i].text == plain.reviews[i].text);
}
