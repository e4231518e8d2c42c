#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "plm/classifier.hpp"
#include "plm/corpus.hpp"
#include "plm/model.hpp"

namespace plm {

using Words = std::vector<std::string>;
using WordCorpus = std::vector<Words>;

/// Whitespace tokens of every review.
WordCorpus words_of(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Perplexity

/// Per-token negative log-likelihoods of one sequence.
using NllScorer = std::function<std::vector<double>(std::span<const TokenId>)>;

double perplexity(const NllScorer& scorer, const Sequences& corpus);
double perplexity(const LmModel& model, const Sequences& corpus);

// ---------------------------------------------------------------------------
// Diversity and overlap

struct NgramSet {
  std::size_t n = 1;
  std::unordered_set<std::string> grams;  // tokens joined by '\x1f'
  std::size_t total_count = 0;
};

NgramSet ngram_set(const WordCorpus& texts, std::size_t n);

/// Unique n-grams over total n-grams, pooled across texts.
double distinct_n(const WordCorpus& texts, std::size_t n);

/// Percentage of the generated corpus's unique n-grams found in `reference`.
double ngram_overlap(const WordCorpus& generated, const WordCorpus& reference, std::size_t n);

// ---------------------------------------------------------------------------
// Greedy embedding matching

/// Maps a token sequence to one vector per token.
using Embedder = std::function<std::vector<std::vector<double>>(const Words&)>;

/// Rows of a token table looked up through a vocabulary.
Embedder table_embedder(const Tensor& table, const Vocabulary& vocab);

struct SimilarityScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t pairs = 0;
  std::size_t skipped = 0;  // pairs with an empty side
};

/// Per pair: precision averages each candidate token's best cosine against
/// the reference, recall the reverse; corpus score is the mean over pairs.
SimilarityScore greedy_match_similarity(const WordCorpus& candidates, const WordCorpus& references,
                                        const Embedder& embedder);

// ---------------------------------------------------------------------------
// LIME

/// Class probabilities for a token sequence.
using ProbabilityFn = std::function<std::vector<double>(std::span<const TokenId>)>;

struct LimeOptions {
  std::size_t num_samples = 5000;
  double kernel_width = 0.25;  // on cosine distance in [0, 1]
  double ridge_alpha = 1.0;
  std::uint64_t seed = 123;
};

struct Explanation {
  std::vector<TokenId> tokens;
  std::vector<double> weights;  // one per token position
  double intercept = 0.0;
  double r2 = 0.0;  // weighted fit on the perturbation sample
};

Explanation lime_explain(const ProbabilityFn& classify, std::span<const TokenId> tokens, std::size_t target,
                         const LimeOptions& opts);

ProbabilityFn classifier_probabilities(const ClassifierModel& model);

// ---------------------------------------------------------------------------
// Report

struct MetricsReport {
  std::optional<ClassifierReport> classifier;
  std::optional<SimilarityScore> similarity;
  std::optional<double> perplexity;
  std::map<std::size_t, double> distinct;  // n -> Dist-n
  std::map<std::size_t, double> overlap;   // n -> percentage vs train

  std::string to_json() const;
};

}  // namespace plm
