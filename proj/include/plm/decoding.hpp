#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plm/corpus.hpp"
#include "plm/model.hpp"
#include "plm/rng.hpp"

namespace plm {

struct GenerationParams {
  std::size_t max_new_tokens = 24;
  double temperature = 1.0;
  double top_p = 0.8;
  std::size_t top_k = 0;  // 0 disables
  std::size_t no_repeat_ngram_size = 1;
  std::size_t num_beams = 1;  // accepted for config compatibility; sampling never uses beams
  std::size_t prefix_tokens = 4;
  std::uint64_t seed = 123;

  void validate() const;
};

struct SteeringParams {
  double alpha = 1.2;
  double temperature = 1.1;
  double filter_p = 1.0;
  double top_p = 0.9;
  std::size_t no_repeat_ngram_size = 1;
  std::size_t max_new_tokens = 24;
  std::size_t prefix_tokens = 4;
  std::uint64_t seed = 123;

  void validate() const;
};

struct Nucleus {
  std::vector<std::size_t> tokens;  // descending probability, ties by lower id
  double mass = 0.0;                // before renormalisation
};

/// Smallest descending-probability prefix with mass >= p.
Nucleus nucleus(std::span<const double> probs, double p);

std::vector<double> top_p_filter(std::span<const double> probs, double p);

/// Tokens that would repeat an n-gram already present in `context`.
std::vector<TokenId> banned_tokens(std::span<const TokenId> context, std::size_t ngram_size);

/// Shared tail of both decoding paths: bans, temperature, top-k, softmax,
/// top-p. If every token is banned the result is one-hot on end-of-sequence.
std::vector<double> filtered_distribution(std::vector<double> logits, std::span<const TokenId> banned,
                                          double temperature, std::size_t top_k, double top_p);

/// Sampling distribution over raw logits with the generation filters.
std::vector<double> plain_distribution(std::span<const double> logits, std::span<const TokenId> context,
                                       const GenerationParams& params);

std::vector<double> steered_distribution(std::span<const double> z, std::span<const double> z_plus,
                                         std::span<const double> z_minus, const SteeringParams& sp,
                                         std::span<const TokenId> context = {});

/// Draws an index with positive probability.
std::size_t sample(std::span<const double> probs, Rng& rng);

/// Incremental decoding state for one model and one input.
class DecodeSession {
 public:
  DecodeSession(const LmModel& model, std::span<const TokenId> source);

  /// Next-token logits after start + `context`. Reserved ids other than
  /// end-of-sequence are set to -inf.
  std::vector<double> next_logits(std::span<const TokenId> context) const;

 private:
  const LmModel* model_;
  Tensor memory_;
};

/// Filtered next-token distribution given the decoded context.
std::vector<double> next_distribution(const LmModel& model, std::span<const TokenId> source,
                                      std::span<const TokenId> context, const GenerationParams& params);

/// For each input: take its first prefix_tokens tokens, continue them with
/// nucleus sampling until end-of-sequence or max_new_tokens. Output reviews
/// carry `intended` as label and `source_tag` as source_model.
Corpus generate(const LmModel& model, const Corpus& inputs, const Vocabulary& vocab, const GenerationParams& params,
                Label intended, const std::string& source_tag);

/// Expert/anti-expert steered generation with base, expert and anti-expert.
Corpus generate_steered(const LmModel& base, const LmModel& expert, const LmModel& anti_expert, const Corpus& inputs,
                        const Vocabulary& vocab, const SteeringParams& params, Label intended,
                        const std::string& source_tag);

}  // namespace plm
