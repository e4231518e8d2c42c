#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plm/adafactor.hpp"
#include "plm/checkpoint.hpp"
#include "plm/corpus.hpp"
#include "plm/tensor.hpp"

namespace plm {

enum class Architecture : std::uint8_t { encoder_decoder, decoder_only };
enum class PromptSite : std::uint8_t { input, encoder, decoder };

std::string_view to_string(Architecture arch);
std::string_view to_string(PromptSite site);
Architecture parse_architecture(std::string_view s);
PromptSite parse_prompt_site(std::string_view s);

struct ModelConfig {
  std::size_t vocab_size = 2000;
  std::size_t embed_dim = 64;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 256;
  std::size_t max_seq_len = 64;
  Architecture architecture = Architecture::encoder_decoder;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

struct SoftPrompt {
  PromptSite site = PromptSite::encoder;
  Tensor embeddings;  // [length x embed_dim], trainable

  std::size_t length() const { return embeddings.defined() ? embeddings.rows() : 0; }
};

/// A frozen transformer backbone plus up to two soft prompts.
///
/// Encoder-decoder models own separate encoder and decoder token tables and
/// accept prompts at {encoder}, {decoder}, or both. Decoder-only models own a
/// single input table and accept only an {input} prompt. Prompt rows carry no
/// position embedding; real tokens are always numbered from 0, so prepending a
/// prompt never shifts the positions the backbone was trained on.
class LmModel {
 public:
  LmModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Architecture architecture() const { return config_.architecture; }

  const NamedTensors& backbone() const { return backbone_; }
  const Tensor& param(const std::string& name) const;
  void set_backbone_trainable(bool trainable);
  /// Copies values for every backbone tensor from `source` (same config).
  void load_backbone(const NamedTensors& source);

  bool accepts(PromptSite site) const;
  void attach_prompt(SoftPrompt prompt);
  void detach_prompts() { prompts_.clear(); }
  const SoftPrompt* prompt(PromptSite site) const;
  const std::vector<SoftPrompt>& prompts() const { return prompts_; }
  std::size_t prompt_length(PromptSite site) const;

  /// Token table a prompt at `site` is initialized from.
  const Tensor& embedding_table(PromptSite site) const;

  Checkpoint to_checkpoint() const;
  static LmModel from_checkpoint(const Checkpoint& ckpt);

 private:
  void add(const std::string& name, Tensor t) { backbone_.emplace_back(name, std::move(t)); }

  ModelConfig config_;
  NamedTensors backbone_;
  std::map<std::string, std::size_t> index_;
  std::vector<SoftPrompt> prompts_;
};

// ---------------------------------------------------------------------------
// Forward passes

/// Final encoder states for [S_en; source]. Encoder-decoder only.
Tensor encode(const LmModel& model, std::span<const TokenId> source);

/// Decoder logits for positions of `decoder_inputs` (which start with the
/// decoder-start token); prompt rows are excluded from the result. `memory` is
/// the encoder output for encoder-decoder models and ignored otherwise.
/// When `last_only` is set only the final row is projected.
Tensor decoder_logits(const LmModel& model, const Tensor* memory, std::span<const TokenId> decoder_inputs,
                      bool last_only = false);

/// Mean next-token cross-entropy of `target` given `source` on the encoder.
/// The decoder consumes [S_de; start; target[0..n-2]].
Tensor seq2seq_loss(const LmModel& model, std::span<const TokenId> source, std::span<const TokenId> target);

/// Decoder-only LM loss over [S_in; start; x_1..x_{n-1}] predicting x_1..x_n.
Tensor forward_loss_single_prompt(const LmModel& model, std::span<const TokenId> x);

/// Encoder [S_en; x], decoder [S_de; start; x_1..x_{n-1}], predicting x_1..x_n.
Tensor forward_loss_enc_dec_prompt(const LmModel& model, std::span<const TokenId> x);

/// The prompt-tuning objective for the model's architecture.
Tensor lm_loss(const LmModel& model, std::span<const TokenId> x);

/// Per-token negative log-likelihoods under lm_loss's conditioning.
std::vector<double> token_nlls(const LmModel& model, std::span<const TokenId> x);

// ---------------------------------------------------------------------------
// Soft prompts and training

/// Rows are copies of uniformly sampled rows of the site's token table.
SoftPrompt init_soft_prompt(PromptSite site, std::size_t length, const LmModel& model, std::uint64_t seed);

/// Exactly the soft-prompt tensors.
std::vector<Tensor> trainable_params(const LmModel& model);

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 10;
  AdafactorConfig optimizer{};
  std::uint64_t seed = 123;
  std::optional<std::filesystem::path> checkpoint_path;
  std::optional<std::filesystem::path> log_path;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainingLog {
  double initial_train_loss = 0.0;
  double initial_val_loss = 0.0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch improved on the initial state
  double best_val_loss = 0.0;
};

using Sequences = std::vector<std::vector<TokenId>>;

/// Tokenized reviews as training sequences (ids + end-of-sequence).
Sequences to_sequences(const Corpus& corpus, const Vocabulary& vocab, std::size_t max_tokens);

/// Mean lm_loss over sequences without recording a graph.
double mean_loss(const LmModel& model, const Sequences& data);

/// Adafactor prompt tuning with a frozen backbone. Keeps the prompt values of
/// the epoch with the lowest validation loss.
TrainingLog train_prompts(LmModel& model, const Sequences& train, const Sequences& val, const TrainOptions& opts);

/// Full-parameter LM training used to build backbones before freezing.
/// Encoder-decoder backbones see a random-length prefix on the encoder and are
/// scored on the tokens after it.
TrainingLog pretrain_backbone(LmModel& model, const Sequences& train, const Sequences& val, const TrainOptions& opts);

void write_training_log(const std::filesystem::path& path, const TrainingLog& log);

}  // namespace plm
