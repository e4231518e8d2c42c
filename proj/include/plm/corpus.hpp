#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "plm/tensor.hpp"

namespace plm {

enum class Label : std::uint8_t { negative = 0, positive = 1 };
enum class LabelDecision : std::uint8_t { negative, positive, discard };
enum class Split : std::uint8_t { train, validation, test };

std::string_view to_string(Label label);
std::string_view to_string(Split split);
Label parse_label(std::string_view s);
Split parse_split(std::string_view s);
Label opposite(Label label);

struct Review {
  std::string text;
  std::optional<int> rating;
  std::optional<Label> label;
  std::optional<std::vector<TokenId>> token_ids;
  std::optional<std::string> source_model;
};

struct Corpus {
  std::vector<Review> reviews;
  Split split = Split::train;
  std::string provenance;

  std::size_t size() const { return reviews.size(); }
  bool empty() const { return reviews.empty(); }
  std::size_t count(Label label) const;
  /// Reviews carrying `label`, in order.
  Corpus filter(Label label) const;
};

// ---------------------------------------------------------------------------
// Cleaning and labelling

/// Strips markup and entities, expands English contractions, lowercases, drops
/// every character outside [a-z0-9], and collapses whitespace. Idempotent.
std::string clean_text(std::string_view raw);

/// >3 positive, <3 negative, 3 or missing discarded. Throws DataError for
/// ratings outside 1..5.
LabelDecision label_by_rating(std::optional<int> rating);

/// Keeps the first occurrence of each text; order preserved.
Corpus dedup_exact(const Corpus& corpus);

/// Whitespace token count.
std::size_t token_length(std::string_view text);

/// Length bin used by the downsampler: width 5 tokens, at most 40 bins.
std::size_t length_bin(std::size_t tokens);

/// Samples `target_size` reviews without replacement so that the token-length
/// histogram of the sample tracks the pool's. Each bin receives
/// target * P(bin) slots (largest remainders broken by a seeded weighted
/// draw); reviews within a bin are chosen uniformly. Output keeps pool order.
Corpus length_preserving_downsample(const Corpus& pool, std::size_t target_size, std::uint64_t seed);

struct DatasetSplits {
  Corpus train, validation, test;
};

/// Per-label shuffle and cut in the given ratio (default 5:1:1). Rounding
/// remainders go to the training split.
DatasetSplits split_corpus(const Corpus& corpus, std::uint64_t seed, std::size_t train_parts = 5,
                           std::size_t validation_parts = 1, std::size_t test_parts = 1);

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kStart = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const;
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Frequency-ranked whitespace tokens (ties lexicographic), truncated so the
/// vocabulary holds at most `max_size` entries including the reserved four.
Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size);

/// Fills token_ids of every review.
void tokenize_corpus(Corpus& corpus, const Vocabulary& vocab);

/// token ids followed by end-of-sequence, truncated to `max_tokens` real tokens.
std::vector<TokenId> training_sequence(const Review& review, const Vocabulary& vocab, std::size_t max_tokens);

// ---------------------------------------------------------------------------
// Line-delimited JSON files

Corpus read_corpus(const std::filesystem::path& path, Split split = Split::train);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

// ---------------------------------------------------------------------------
// Synthetic labelled reviews

struct SynthConfig {
  std::size_t reviews_per_label = 700;
  std::size_t shared_vocab = 240;
  std::size_t exclusive_vocab = 40;  // per label
  double exclusive_rate = 0.4;       // per-slot chance of a label-exclusive word
  double phrase_rate = 0.2;          // per-slot chance of a stock phrase
  double zipf_exponent = 1.0;
  std::size_t min_tokens = 6;
  std::size_t max_tokens = 22;
};

/// Word lists used by the generator.
struct SynthLexicon {
  std::vector<std::string> shared;
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::vector<std::string>> shared_phrases;
  std::vector<std::vector<std::string>> positive_phrases;
  std::vector<std::vector<std::string>> negative_phrases;

  const std::vector<std::string>& exclusive(Label label) const {
    return label == Label::positive ? positive : negative;
  }
};

SynthLexicon synth_lexicon(const SynthConfig& config);

/// Labelled reviews (positives first, then negatives) drawn from class-biased
/// unigram profiles over shared and label-exclusive lexicons. Ratings are 4-5
/// for positive and 1-2 for negative reviews. Deterministic per seed.
Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed);

}  // namespace plm
