#include "plm/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"

namespace plm {

namespace {

using Entries = std::vector<std::array<const char*, 3>>;

// section, key, default
const Entries& entries() {
  static const Entries e = {
      {"run", "seed", "123"},
      {"run", "out_dir", "runs"},

      {"corpus", "input", ""},
      {"corpus", "dataset_size", "0"},
      {"corpus", "vocab_size", "2000"},
      {"corpus", "max_tokens", "22"},
      {"corpus", "synth_reviews_per_label", "2100"},
      {"corpus", "synth_shared_vocab", "240"},
      {"corpus", "synth_exclusive_vocab", "40"},
      {"corpus", "synth_exclusive_rate", "0.4"},
      {"corpus", "synth_phrase_rate", "0.2"},
      {"corpus", "synth_seed", "7"},

      {"model", "architecture", "encoder_decoder"},
      {"model", "embed_dim", "64"},
      {"model", "encoder_layers", "2"},
      {"model", "decoder_layers", "2"},
      {"model", "heads", "4"},
      {"model", "ffn_dim", "256"},
      {"model", "max_seq_len", "64"},
      {"model", "prompt_sites", "encoder,decoder"},
      {"model", "prompt_length", "20"},
      {"model", "pretrained_backbone", ""},

      {"pretraining", "epochs", "15"},
      {"pretraining", "batch_size", "10"},
      {"pretraining", "learning_rate", "0.01"},
      {"pretraining", "warmup_steps", "100"},
      {"pretraining", "weight_decay", "0"},

      {"training", "eps", "1e-30,1e-3"},
      {"training", "clip_threshold", "1.0"},
      {"training", "decay_rate", "-0.8"},
      {"training", "beta1", "None"},
      {"training", "weight_decay", "0.1"},
      {"training", "relative_step", "False"},
      {"training", "scale_parameter", "False"},
      {"training", "warmup_init", "False"},
      {"training", "epochs", "20"},
      {"training", "warmup_steps", "500"},
      {"training", "batch_size", "10"},
      {"training", "learning_rate", "0.15"},

      {"generation", "num_beams", "10"},
      {"generation", "do_sample", "True"},
      {"generation", "no_repeat_ngram_size", "1"},
      {"generation", "temperature", "1.0"},
      {"generation", "top_k", "0"},
      {"generation", "top_p", "0.8"},
      {"generation", "repetition_penalty", "1.0"},
      {"generation", "use_cache", "False"},
      {"generation", "early_stopping", "True"},
      {"generation", "max_new_tokens", "24"},
      {"generation", "prefix_tokens", "4"},
      {"generation", "inputs_per_label", "0"},
      {"generation", "mode", "plain"},

      {"steering", "sample", "True"},
      {"steering", "filter_p", "1"},
      {"steering", "k", "0"},
      {"steering", "p", "0.9"},
      {"steering", "temperature", "1.1"},
      {"steering", "alpha", "1.2"},
      {"steering", "no_repeat_ngram_size", "1"},
      {"steering", "max_new_tokens", "24"},
      {"steering", "prefix_tokens", "4"},

      {"classifier", "learning_rate", "1e-3"},
      {"classifier", "momentum", "0.9"},
      {"classifier", "batch_size", "32"},
      {"classifier", "epochs", "5"},
      {"classifier", "embed_dim", "32"},
      {"classifier", "layers", "1"},
      {"classifier", "heads", "2"},
      {"classifier", "ffn_dim", "64"},
      {"classifier", "max_len", "64"},

      {"eval", "lime_samples", "5000"},
      {"eval", "lime_kernel_width", "0.25"},
      {"eval", "lime_ridge", "1.0"},
      {"eval", "lime_examples", "5"},
      {"eval", "distinct_max", "3"},
      {"eval", "overlap_min", "2"},
      {"eval", "overlap_max", "5"},
  };
  return e;
}

using Preset = std::vector<std::array<const char*, 3>>;

const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> p = {
      {"paper-table6", {{"classifier", "learning_rate", "1e-5"}, {"classifier", "batch_size", "32"},
                        {"classifier", "epochs", "5"}, {"run", "seed", "123"}}},
      {"table7", {{"training", "eps", "1e-30,1e-3"}, {"training", "clip_threshold", "1.0"},
                  {"training", "decay_rate", "-0.8"}, {"training", "beta1", "None"},
                  {"training", "weight_decay", "0.1"}, {"training", "relative_step", "False"},
                  {"training", "scale_parameter", "False"}, {"training", "warmup_init", "False"},
                  {"training", "epochs", "20"}, {"training", "warmup_steps", "500"},
                  {"training", "batch_size", "10"}, {"training", "learning_rate", "0.15"}, {"run", "seed", "123"}}},
      {"table8", {{"generation", "num_beams", "10"}, {"generation", "do_sample", "True"},
                  {"generation", "no_repeat_ngram_size", "1"}, {"generation", "temperature", "1.0"},
                  {"generation", "top_k", "0"}, {"generation", "top_p", "0.8"},
                  {"generation", "repetition_penalty", "1.0"}, {"generation", "use_cache", "False"},
                  {"generation", "early_stopping", "True"}}},
      {"table9-pos", {{"steering", "sample", "True"}, {"steering", "filter_p", "1"}, {"steering", "k", "0"},
                      {"steering", "p", "0.9"}, {"steering", "temperature", "1.1"}, {"steering", "alpha", "1.2"}}},
      {"table9-neg", {{"steering", "sample", "True"}, {"steering", "filter_p", "0.9"}, {"steering", "k", "0"},
                      {"steering", "p", "0.9"}, {"steering", "temperature", "1.8"}, {"steering", "alpha", "1.2"}}},
      {"desk", {{"model", "embed_dim", "32"}, {"model", "encoder_layers", "1"}, {"model", "decoder_layers", "1"},
                {"model", "ffn_dim", "64"}, {"model", "prompt_length", "20"}}},
  };
  return p;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string where(const std::string& section, const std::string& key) { return section + "." + key; }

}  // namespace

ExperimentConfig::ExperimentConfig() {
  for (const auto& [s, k, v] : entries()) values_[s][k] = v;
}

const std::vector<std::string>& ExperimentConfig::preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, _] : presets()) n.push_back(name);
    return n;
  }();
  return names;
}

void ExperimentConfig::apply_preset(std::string_view name) {
  const auto it = presets().find(std::string(name));
  if (it == presets().end()) throw ConfigError("unknown preset '" + std::string(name) + "'");
  for (const auto& [s, k, v] : it->second) set(s, k, v);
}

void ExperimentConfig::merge_text(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line, section = "run";
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const std::string at = origin + ":" + std::to_string(line_no) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']') throw ConfigError(at + "malformed section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      if (!values_.count(section)) throw ConfigError(at + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected key = value");
    try {
      set(section, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(at + e.what());
    }
  }
}

void ExperimentConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

void ExperimentConfig::set(std::string_view dotted, const std::string& value) {
  const auto dot = dotted.find('.');
  if (dot == std::string_view::npos) throw ConfigError("override '" + std::string(dotted) + "' needs section.key");
  set(std::string(dotted.substr(0, dot)), std::string(dotted.substr(dot + 1)), value);
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto s = values_.find(section);
  if (s == values_.end()) throw ConfigError("unknown section '" + section + "'");
  const auto k = s->second.find(key);
  if (k == s->second.end()) throw ConfigError("unknown key '" + where(section, key) + "'");
  k->second = value;
}

const std::string& ExperimentConfig::get(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s != values_.end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw ConfigError("unknown key '" + where(section, key) + "'");
}

double ExperimentConfig::real(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(where(section, key) + " = '" + v + "' is not a finite number");
}

std::size_t ExperimentConfig::count(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(where(section, key) + " = '" + v + "' is not a non-negative integer");
  return out;
}

bool ExperimentConfig::flag(const std::string& section, const std::string& key) const {
  const std::string v = lower(get(section, key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where(section, key) + " = '" + v + "' is not a boolean");
}

std::uint64_t ExperimentConfig::seed() const {
  const std::string& v = get("run", "seed");
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("run.seed = '" + v + "' is not an integer");
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, kv] : values_) {
    out << (first ? "" : "\n") << "[" << section << "]\n";
    first = false;
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

SynthConfig synth_config(const ExperimentConfig& cfg) {
  SynthConfig s;
  s.reviews_per_label = cfg.count("corpus", "synth_reviews_per_label");
  s.shared_vocab = cfg.count("corpus", "synth_shared_vocab");
  s.exclusive_vocab = cfg.count("corpus", "synth_exclusive_vocab");
  s.exclusive_rate = cfg.real("corpus", "synth_exclusive_rate");
  s.phrase_rate = cfg.real("corpus", "synth_phrase_rate");
  if (s.exclusive_rate < 0 || s.phrase_rate < 0 || s.exclusive_rate + s.phrase_rate > 1)
    throw ConfigError("corpus.synth_exclusive_rate and synth_phrase_rate must be rates summing to at most 1");
  return s;
}

ModelConfig model_config(const ExperimentConfig& cfg, std::size_t vocab_size) {
  ModelConfig m;
  m.vocab_size = vocab_size;
  try {
    m.architecture = parse_architecture(cfg.get("model", "architecture"));
  } catch (const Error& e) {
    throw ConfigError(std::string("model.architecture: ") + e.what());
  }
  m.embed_dim = cfg.count("model", "embed_dim");
  m.encoder_layers = cfg.count("model", "encoder_layers");
  m.decoder_layers = cfg.count("model", "decoder_layers");
  m.heads = cfg.count("model", "heads");
  m.ffn_dim = cfg.count("model", "ffn_dim");
  m.max_seq_len = cfg.count("model", "max_seq_len");
  if (m.architecture == Architecture::decoder_only) m.encoder_layers = 0;
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return m;
}

std::vector<PromptSite> prompt_sites(const ExperimentConfig& cfg) {
  std::vector<PromptSite> out;
  std::istringstream in(cfg.get("model", "prompt_sites"));
  for (std::string part; std::getline(in, part, ',');) {
    const std::string name = trim(part);
    if (name.empty()) continue;
    try {
      const PromptSite s = parse_prompt_site(name);
      if (std::find(out.begin(), out.end(), s) != out.end()) throw ConfigError("model.prompt_sites repeats " + name);
      out.push_back(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("model.prompt_sites: ") + e.what());
    }
  }
  if (out.empty()) throw ConfigError("model.prompt_sites is empty");
  return out;
}

TrainOptions pretraining_options(const ExperimentConfig& cfg) {
  TrainOptions o;
  o.epochs = cfg.count("pretraining", "epochs");
  o.batch_size = cfg.count("pretraining", "batch_size");
  o.optimizer.learning_rate = cfg.real("pretraining", "learning_rate");
  o.optimizer.warmup_steps = static_cast<std::int64_t>(cfg.count("pretraining", "warmup_steps"));
  o.optimizer.weight_decay = cfg.real("pretraining", "weight_decay");
  o.seed = cfg.seed();
  if (o.batch_size == 0) throw ConfigError("pretraining.batch_size must be positive");
  return o;
}

TrainOptions tuning_options(const ExperimentConfig& cfg) {
  TrainOptions o;
  for (const char* key : {"relative_step", "scale_parameter", "warmup_init"})
    if (cfg.flag("training", key)) throw ConfigError(std::string("training.") + key + " = True is not supported");
  if (lower(cfg.get("training", "beta1")) != "none")
    throw ConfigError("training.beta1 must be None (no first moment)");
  const std::string eps = cfg.get("training", "eps");
  const auto comma = eps.find(',');
  if (comma == std::string::npos) throw ConfigError("training.eps must be 'eps1,eps2'");
  try {
    o.optimizer.eps1 = std::stod(trim(std::string_view(eps).substr(0, comma)));
    o.optimizer.eps2 = std::stod(trim(std::string_view(eps).substr(comma + 1)));
  } catch (const std::exception&) {
    throw ConfigError("training.eps = '" + eps + "' is not a pair of numbers");
  }
  o.optimizer.clip_threshold = cfg.real("training", "clip_threshold");
  o.optimizer.decay_rate = cfg.real("training", "decay_rate");
  o.optimizer.weight_decay = cfg.real("training", "weight_decay");
  o.optimizer.learning_rate = cfg.real("training", "learning_rate");
  o.optimizer.warmup_steps = static_cast<std::int64_t>(cfg.count("training", "warmup_steps"));
  o.epochs = cfg.count("training", "epochs");
  o.batch_size = cfg.count("training", "batch_size");
  o.seed = cfg.seed();
  if (o.batch_size == 0) throw ConfigError("training.batch_size must be positive");
  return o;
}

GenerationParams generation_params(const ExperimentConfig& cfg) {
  if (!cfg.flag("generation", "do_sample")) throw ConfigError("generation.do_sample = False is not supported");
  if (cfg.real("generation", "repetition_penalty") != 1.0)
    throw ConfigError("generation.repetition_penalty other than 1.0 is not supported");
  cfg.flag("generation", "use_cache");
  cfg.flag("generation", "early_stopping");
  GenerationParams g;
  g.num_beams = cfg.count("generation", "num_beams");
  g.no_repeat_ngram_size = cfg.count("generation", "no_repeat_ngram_size");
  g.temperature = cfg.real("generation", "temperature");
  g.top_k = cfg.count("generation", "top_k");
  g.top_p = cfg.real("generation", "top_p");
  g.max_new_tokens = cfg.count("generation", "max_new_tokens");
  g.prefix_tokens = cfg.count("generation", "prefix_tokens");
  g.seed = cfg.seed();
  try {
    g.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("generation: ") + e.what());
  }
  return g;
}

SteeringParams steering_params(const ExperimentConfig& cfg) {
  if (!cfg.flag("steering", "sample")) throw ConfigError("steering.sample = False is not supported");
  if (cfg.count("steering", "k") != 0) throw ConfigError("steering.k must be 0");
  SteeringParams s;
  s.filter_p = cfg.real("steering", "filter_p");
  s.top_p = cfg.real("steering", "p");
  s.temperature = cfg.real("steering", "temperature");
  s.alpha = cfg.real("steering", "alpha");
  s.no_repeat_ngram_size = cfg.count("steering", "no_repeat_ngram_size");
  s.max_new_tokens = cfg.count("steering", "max_new_tokens");
  s.prefix_tokens = cfg.count("steering", "prefix_tokens");
  s.seed = cfg.seed();
  try {
    s.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("steering: ") + e.what());
  }
  return s;
}

ClassifierConfig classifier_config(const ExperimentConfig& cfg, std::size_t vocab_size) {
  ClassifierConfig c;
  c.vocab_size = vocab_size;
  c.embed_dim = cfg.count("classifier", "embed_dim");
  c.layers = cfg.count("classifier", "layers");
  c.heads = cfg.count("classifier", "heads");
  c.ffn_dim = cfg.count("classifier", "ffn_dim");
  c.max_len = cfg.count("classifier", "max_len");
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("classifier: ") + e.what());
  }
  return c;
}

ClassifierOptions classifier_options(const ExperimentConfig& cfg) {
  ClassifierOptions o;
  o.learning_rate = cfg.real("classifier", "learning_rate");
  o.momentum = cfg.real("classifier", "momentum");
  o.batch_size = cfg.count("classifier", "batch_size");
  o.epochs = cfg.count("classifier", "epochs");
  o.seed = cfg.seed();
  if (o.batch_size == 0) throw ConfigError("classifier.batch_size must be positive");
  return o;
}

LimeOptions lime_options(const ExperimentConfig& cfg) {
  LimeOptions o;
  o.num_samples = cfg.count("eval", "lime_samples");
  o.kernel_width = cfg.real("eval", "lime_kernel_width");
  o.ridge_alpha = cfg.real("eval", "lime_ridge");
  o.seed = cfg.seed();
  if (o.num_samples < 10) throw ConfigError("eval.lime_samples must be at least 10");
  if (!(o.kernel_width > 0)) throw ConfigError("eval.lime_kernel_width must be positive");
  return o;
}

LmModel with_prompts(const LmModel& backbone, const std::vector<PromptSite>& sites, std::size_t length,
                     std::uint64_t seed) {
  LmModel g = LmModel::from_checkpoint(backbone.to_checkpoint());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (!g.accepts(sites[i]))
      throw ConfigError("architecture " + std::string(to_string(g.architecture())) + " has no " +
                        std::string(to_string(sites[i])) + " prompt site");
    g.attach_prompt(init_soft_prompt(sites[i], length, g, Rng(seed).split(i + 1)()));
  }
  return g;
}

// ---------------------------------------------------------------------------

std::string PreprocessSummary::to_json() const {
  nlohmann::ordered_json j;
  j["raw"] = raw;
  j["empty_after_cleaning"] = empty_after_cleaning;
  j["discarded_neutral"] = discarded_neutral;
  j["duplicates"] = duplicates;
  j["pool"] = {{"negative", pool[0]}, {"positive", pool[1]}};
  for (std::size_t d = 0; d < 3; ++d) {
    nlohmann::ordered_json ds;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto& c = counts[d][s];
      ds[std::string(to_string(static_cast<Split>(s)))] = {
          {"negative", c[0]}, {"positive", c[1]}, {"total", c[0] + c[1]}};
    }
    j["dataset-" + std::to_string(d + 1)] = ds;
  }
  return j.dump(2);
}

PreparedData preprocess(const Corpus& raw, std::size_t dataset_size, std::uint64_t seed) {
  PreparedData out;
  auto& sum = out.summary;
  sum.raw = raw.size();
  Corpus labelled{{}, Split::train, raw.provenance};
  for (const Review& r : raw.reviews) {
    Review c;
    c.text = clean_text(r.text);
    c.rating = r.rating;
    if (c.text.empty()) {
      ++sum.empty_after_cleaning;
      continue;
    }
    const LabelDecision d = label_by_rating(r.rating);
    if (d == LabelDecision::discard) {
      ++sum.discarded_neutral;
      continue;
    }
    c.label = d == LabelDecision::positive ? Label::positive : Label::negative;
    labelled.reviews.push_back(std::move(c));
  }
  const Corpus unique = dedup_exact(labelled);
  sum.duplicates = labelled.size() - unique.size();

  std::array<Corpus, 2> pools{unique.filter(Label::negative), unique.filter(Label::positive)};
  sum.pool = {pools[0].size(), pools[1].size()};
  const std::size_t per_label = dataset_size == 0 ? std::min(sum.pool[0], sum.pool[1]) / 3 : dataset_size / 2;
  if (per_label == 0) throw DataError("preprocess: not enough labelled reviews for three datasets");
  if (3 * per_label > std::min(sum.pool[0], sum.pool[1]))
    throw DataError("preprocess: dataset_size " + std::to_string(dataset_size) + " needs " +
                    std::to_string(3 * per_label) + " reviews per label, have " +
                    std::to_string(std::min(sum.pool[0], sum.pool[1])));

  const Rng root(seed);
  std::array<Corpus, 3> sets;
  for (std::size_t l = 0; l < 2; ++l) {
    Corpus pool = pools[l];
    for (std::size_t d = 0; d < 3; ++d) {
      const Corpus pick = length_preserving_downsample(pool, per_label, root.split(10 * d + l)());
      std::unordered_set<std::string> taken;
      for (const Review& r : pick.reviews) taken.insert(r.text);
      Corpus rest{{}, pool.split, pool.provenance};
      for (const Review& r : pool.reviews)
        if (!taken.count(r.text)) rest.reviews.push_back(r);
      pool = std::move(rest);
      sets[d].reviews.insert(sets[d].reviews.end(), pick.reviews.begin(), pick.reviews.end());
    }
  }
  for (std::size_t d = 0; d < 3; ++d) {
    sets[d].provenance = "dataset-" + std::to_string(d + 1);
    out.datasets[d] = split_corpus(sets[d], root.split(100 + d)());
    const Corpus* parts[3] = {&out.datasets[d].train, &out.datasets[d].validation, &out.datasets[d].test};
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t l = 0; l < 2; ++l) sum.counts[d][s][l] = parts[s]->count(static_cast<Label>(l));
  }
  return out;
}

Vocabulary shared_vocab(const PreparedData& data, std::size_t max_size) {
  Corpus all;
  for (const auto& d : data.datasets) all.reviews.insert(all.reviews.end(), d.train.reviews.begin(), d.train.reviews.end());
  return build_vocab(all, max_size);
}

}  // namespace plm
