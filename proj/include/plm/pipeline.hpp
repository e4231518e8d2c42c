#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "plm/classifier.hpp"
#include "plm/corpus.hpp"
#include "plm/decoding.hpp"
#include "plm/eval.hpp"
#include "plm/model.hpp"

namespace plm {

/// Sectioned key-value configuration. Every key has a default; files, presets
/// and overrides may only set known keys.
///
///   # comment
///   seed = 123
///   [generation]
///   top_p = 0.8
///
/// Keys before the first section header belong to [run].
class ExperimentConfig {
 public:
  ExperimentConfig();

  static const std::vector<std::string>& preset_names();
  void apply_preset(std::string_view name);
  void merge_text(std::string_view text, const std::string& origin = "<text>");
  void merge_file(const std::filesystem::path& path);
  /// `section.key`; throws ConfigError for unknown keys.
  void set(std::string_view dotted, const std::string& value);
  void set(const std::string& section, const std::string& key, const std::string& value);

  const std::string& get(const std::string& section, const std::string& key) const;
  double real(const std::string& section, const std::string& key) const;
  std::size_t count(const std::string& section, const std::string& key) const;
  bool flag(const std::string& section, const std::string& key) const;
  std::uint64_t seed() const;

  /// Resolved values in the file format; parses back to an equal config.
  std::string to_text() const;
  bool operator==(const ExperimentConfig& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

SynthConfig synth_config(const ExperimentConfig& cfg);
ModelConfig model_config(const ExperimentConfig& cfg, std::size_t vocab_size);
std::vector<PromptSite> prompt_sites(const ExperimentConfig& cfg);
TrainOptions pretraining_options(const ExperimentConfig& cfg);
TrainOptions tuning_options(const ExperimentConfig& cfg);
GenerationParams generation_params(const ExperimentConfig& cfg);
SteeringParams steering_params(const ExperimentConfig& cfg);
ClassifierConfig classifier_config(const ExperimentConfig& cfg, std::size_t vocab_size);
ClassifierOptions classifier_options(const ExperimentConfig& cfg);
LimeOptions lime_options(const ExperimentConfig& cfg);

/// Copy of `backbone` with fresh prompts of `length` at each site; prompt i
/// is initialised from stream i+1 of `seed`.
LmModel with_prompts(const LmModel& backbone, const std::vector<PromptSite>& sites, std::size_t length,
                     std::uint64_t seed);

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessSummary {
  std::size_t raw = 0;
  std::size_t empty_after_cleaning = 0;
  std::size_t discarded_neutral = 0;  // rating 3 or missing
  std::size_t duplicates = 0;
  std::array<std::size_t, 2> pool{};  // per label after dedup
  /// [dataset][split][label]
  std::array<std::array<std::array<std::size_t, 2>, 3>, 3> counts{};

  std::string to_json() const;
};

struct PreparedData {
  std::array<DatasetSplits, 3> datasets;
  PreprocessSummary summary;
};

/// clean -> label -> dedup -> three disjoint length-preserving downsamples
/// of `dataset_size` reviews (half per label; 0 takes a third of the smaller
/// label pool per label) -> 5:1:1 split of each.
PreparedData preprocess(const Corpus& raw, std::size_t dataset_size, std::uint64_t seed);

/// Vocabulary over the training splits of all three datasets.
Vocabulary shared_vocab(const PreparedData& data, std::size_t max_size);

}  // namespace plm
