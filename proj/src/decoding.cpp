#include "plm/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "plm/error.hpp"

namespace plm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_probability(double p, const char* what) {
  if (!(p > 0.0 && p <= 1.0)) throw ContractError(std::string(what) + " must lie in (0, 1]");
}

}  // namespace

void GenerationParams::validate() const {
  check_probability(top_p, "top_p");
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
}

void SteeringParams::validate() const {
  check_probability(top_p, "top_p");
  check_probability(filter_p, "filter_p");
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  if (!std::isfinite(alpha)) throw ContractError("alpha must be finite");
}

Nucleus nucleus(std::span<const double> probs, double p) {
  if (!(p > 0.0)) throw ContractError("top_p: p must be positive");
  Nucleus out;
  out.tokens.resize(probs.size());
  std::iota(out.tokens.begin(), out.tokens.end(), std::size_t{0});
  std::stable_sort(out.tokens.begin(), out.tokens.end(),
                   [&probs](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  std::size_t keep = 0;
  while (keep < out.tokens.size()) {
    out.mass += probs[out.tokens[keep]];
    ++keep;
    if (out.mass >= p) break;
  }
  out.tokens.resize(keep);
  return out;
}

std::vector<double> top_p_filter(std::span<const double> probs, double p) {
  if (!(p > 0.0)) throw ContractError("top_p: p must be positive");
  if (p >= 1.0) return {probs.begin(), probs.end()};
  const Nucleus n = nucleus(probs, p);
  std::vector<double> out(probs.size(), 0.0);
  for (std::size_t t : n.tokens) out[t] = probs[t] / n.mass;
  return out;
}

std::vector<TokenId> banned_tokens(std::span<const TokenId> context, std::size_t ngram_size) {
  std::vector<TokenId> out;
  if (ngram_size == 0 || context.size() + 1 < ngram_size) return out;
  const std::size_t n = ngram_size;
  const auto tail = context.subspan(context.size() - (n - 1));
  for (std::size_t i = 0; i + n <= context.size(); ++i)
    if (std::equal(tail.begin(), tail.end(), context.begin() + static_cast<std::ptrdiff_t>(i)))
      out.push_back(context[i + n - 1]);
  return out;
}

std::vector<double> filtered_distribution(std::vector<double> logits, std::span<const TokenId> banned,
                                          double temperature, std::size_t top_k, double top_p) {
  if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
  const std::size_t v = logits.size();
  for (TokenId t : banned)
    if (t >= 0 && static_cast<std::size_t>(t) < v) logits[static_cast<std::size_t>(t)] = kNegInf;
  if (std::none_of(logits.begin(), logits.end(), [](double z) { return z > kNegInf; })) {
    std::vector<double> eos(v, 0.0);
    eos.at(static_cast<std::size_t>(Vocabulary::kEos)) = 1.0;
    return eos;
  }
  if (temperature != 1.0)
    for (double& z : logits) z /= temperature;
  if (top_k > 0 && top_k < v) {
    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&logits](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    for (std::size_t i = top_k; i < v; ++i) logits[order[i]] = kNegInf;
  }
  return top_p_filter(softmax_values(logits), top_p);
}

std::vector<double> plain_distribution(std::span<const double> logits, std::span<const TokenId> context,
                                       const GenerationParams& params) {
  return filtered_distribution({logits.begin(), logits.end()}, banned_tokens(context, params.no_repeat_ngram_size),
                               params.temperature, params.top_k, params.top_p);
}

std::vector<double> steered_distribution(std::span<const double> z, std::span<const double> z_plus,
                                         std::span<const double> z_minus, const SteeringParams& sp,
                                         std::span<const TokenId> context) {
  if (z.size() != z_plus.size() || z.size() != z_minus.size())
    throw ShapeError("steered_distribution: logit vectors differ in length");
  std::vector<double> combined(z.begin(), z.end());
  if (sp.filter_p < 1.0) {
    const Nucleus keep = nucleus(softmax_values(z), sp.filter_p);
    std::vector<bool> inside(z.size(), false);
    for (std::size_t t : keep.tokens) inside[t] = true;
    for (std::size_t i = 0; i < z.size(); ++i)
      if (!inside[i]) combined[i] = kNegInf;
  }
  if (sp.alpha != 0.0) {
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (combined[i] == kNegInf) continue;
      const double shift = z_plus[i] - z_minus[i];
      // A token either expert rules out (-inf) stays out.
      combined[i] = std::isfinite(shift) ? combined[i] + sp.alpha * shift : kNegInf;
    }
  }
  return filtered_distribution(std::move(combined), banned_tokens(context, sp.no_repeat_ngram_size), sp.temperature, 0,
                               sp.top_p);
}

std::size_t sample(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cum += probs[i];
    last = i;
    if (u < cum) return i;
  }
  if (last == probs.size()) throw NumericError("sample: distribution has no positive entries");
  return last;
}

// ---------------------------------------------------------------------------
// Model-driven decoding

DecodeSession::DecodeSession(const LmModel& model, std::span<const TokenId> source) : model_(&model) {
  if (model.architecture() == Architecture::encoder_decoder) {
    NoGradGuard no_grad;
    const TokenId eos[] = {Vocabulary::kEos};
    const bool bare = source.empty() && model.prompt_length(PromptSite::encoder) == 0;
    memory_ = encode(model, bare ? std::span<const TokenId>(eos) : source);
  }
}

std::vector<double> DecodeSession::next_logits(std::span<const TokenId> context) const {
  NoGradGuard no_grad;
  std::vector<TokenId> inputs;
  inputs.reserve(context.size() + 1);
  inputs.push_back(Vocabulary::kStart);
  inputs.insert(inputs.end(), context.begin(), context.end());
  const Tensor logits = decoder_logits(*model_, memory_.defined() ? &memory_ : nullptr, inputs, true);
  std::vector<double> out(logits.data().begin(), logits.data().end());
  for (TokenId t : {Vocabulary::kPad, Vocabulary::kStart, Vocabulary::kUnk}) out[static_cast<std::size_t>(t)] = kNegInf;
  return out;
}

std::vector<double> next_distribution(const LmModel& model, std::span<const TokenId> source,
                                      std::span<const TokenId> context, const GenerationParams& params) {
  params.validate();
  return plain_distribution(DecodeSession(model, source).next_logits(context), context, params);
}

namespace {

std::vector<TokenId> input_prefix(const Review& review, const Vocabulary& vocab, std::size_t length) {
  std::vector<TokenId> ids = review.token_ids ? *review.token_ids : vocab.tokenize(review.text);
  if (ids.size() > length) ids.resize(length);
  return ids;
}

void check_capacity(const LmModel& model, std::size_t prefix, std::size_t max_new) {
  const std::size_t cap = model.config().max_seq_len;
  const PromptSite dec_site =
      model.architecture() == Architecture::decoder_only ? PromptSite::input : PromptSite::decoder;
  if (model.prompt_length(dec_site) + prefix + max_new > cap ||
      model.prompt_length(PromptSite::encoder) + std::max<std::size_t>(prefix, 1) > cap)
    throw ContractError("generate: prompt + prefix + max_new_tokens exceeds max_seq_len " + std::to_string(cap));
}

Review finish(const Vocabulary& vocab, const std::vector<TokenId>& tokens, Label intended, const std::string& tag) {
  Review r;
  r.text = vocab.detokenize(tokens);
  r.label = intended;
  r.token_ids = tokens;
  r.source_model = tag;
  return r;
}

}  // namespace

Corpus generate(const LmModel& model, const Corpus& inputs, const Vocabulary& vocab, const GenerationParams& params,
                Label intended, const std::string& source_tag) {
  params.validate();
  if (inputs.empty()) throw ContractError("generate: empty input corpus");
  check_capacity(model, params.prefix_tokens, params.max_new_tokens);
  const Rng root(params.seed);
  Corpus out;
  out.provenance = "generated:" + source_tag;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = root.split(i);
    std::vector<TokenId> tokens = input_prefix(inputs.reviews[i], vocab, params.prefix_tokens);
    const DecodeSession session(model, tokens);
    for (std::size_t step = 0; step < params.max_new_tokens; ++step) {
      const auto probs = plain_distribution(session.next_logits(tokens), tokens, params);
      const auto next = static_cast<TokenId>(sample(probs, rng));
      if (next == Vocabulary::kEos) break;
      tokens.push_back(next);
    }
    out.reviews.push_back(finish(vocab, tokens, intended, source_tag));
  }
  return out;
}

Corpus generate_steered(const LmModel& base, const LmModel& expert, const LmModel& anti_expert, const Corpus& inputs,
                        const Vocabulary& vocab, const SteeringParams& params, Label intended,
                        const std::string& source_tag) {
  params.validate();
  if (inputs.empty()) throw ContractError("generate: empty input corpus");
  if (base.config().vocab_size != expert.config().vocab_size ||
      base.config().vocab_size != anti_expert.config().vocab_size)
    throw ContractError("generate_steered: models disagree on vocabulary size");
  for (const LmModel* m : {&base, &expert, &anti_expert}) check_capacity(*m, params.prefix_tokens, params.max_new_tokens);
  const Rng root(params.seed);
  Corpus out;
  out.provenance = "generated:" + source_tag;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = root.split(i);
    std::vector<TokenId> tokens = input_prefix(inputs.reviews[i], vocab, params.prefix_tokens);
    const DecodeSession s_base(base, tokens), s_plus(expert, tokens), s_minus(anti_expert, tokens);
    for (std::size_t step = 0; step < params.max_new_tokens; ++step) {
      const auto probs = steered_distribution(s_base.next_logits(tokens), s_plus.next_logits(tokens),
                                              s_minus.next_logits(tokens), params, tokens);
      const auto next = static_cast<TokenId>(sample(probs, rng));
      if (next == Vocabulary::kEos) break;
      tokens.push_back(next);
    }
    out.reviews.push_back(finish(vocab, tokens, intended, source_tag));
  }
  return out;
}

}  // namespace plm
