#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plm/checkpoint.hpp"
#include "plm/corpus.hpp"
#include "plm/tensor.hpp"

namespace plm {

struct ClassifierConfig {
  std::size_t vocab_size = 2000;
  std::size_t embed_dim = 32;
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t max_len = 64;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ClassifierConfig from_map(const std::map<std::string, std::string>& kv);
};

/// Embedding + position, self-attention encoder layers, mean pooling and a
/// linear layer to two logits (negative, positive).
class ClassifierModel {
 public:
  ClassifierModel(ClassifierConfig config, std::uint64_t seed);

  const ClassifierConfig& config() const { return config_; }
  const NamedTensors& params() const { return params_; }
  const Tensor& param(const std::string& name) const;

  /// [1 x 2] logits. Inputs longer than max_len are truncated; an empty input
  /// is read as a single <pad>.
  Tensor logits(std::span<const TokenId> ids) const;

  Checkpoint to_checkpoint() const;
  static ClassifierModel from_checkpoint(const Checkpoint& ckpt);

 private:
  ClassifierConfig config_;
  NamedTensors params_;
  std::map<std::string, std::size_t> index_;
};

struct Prediction {
  Label label = Label::negative;
  std::array<double, 2> probs{};  // indexed by Label
};

Prediction predict(const ClassifierModel& model, std::span<const TokenId> ids);
std::vector<Prediction> predict(const ClassifierModel& model, const std::vector<std::vector<TokenId>>& inputs);
std::vector<Prediction> predict(const ClassifierModel& model, const Corpus& corpus, const Vocabulary& vocab);

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassifierReport {
  std::array<LabelMetrics, 2> per_label{};  // indexed by Label
  double accuracy = 0.0;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [gold][predicted]
  std::size_t total = 0;

  std::string to_json() const;
};

/// Metrics with undefined ratios (no predictions or no gold of a label) reported as 0.
ClassifierReport report(std::span<const Label> predicted, std::span<const Label> gold);

struct ClassifierOptions {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 123;
};

struct ClassifierEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct ClassifierLog {
  double initial_val_accuracy = 0.0;
  std::vector<ClassifierEpoch> epochs;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
};

struct LabelledSet {
  std::vector<std::vector<TokenId>> inputs;
  std::vector<Label> labels;
};

LabelledSet labelled_set(const Corpus& corpus, const Vocabulary& vocab);

/// Momentum SGD on mean cross-entropy. Keeps the parameters of the epoch
/// with the best validation accuracy.
ClassifierLog train_classifier(ClassifierModel& model, const LabelledSet& train, const LabelledSet& val,
                               const ClassifierOptions& opts);

double accuracy(const ClassifierModel& model, const LabelledSet& data);

}  // namespace plm
