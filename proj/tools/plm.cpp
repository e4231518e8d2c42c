// plm: command-line driver for the soft-prompt review generation pipeline.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "plm/checkpoint.hpp"
#include "plm/error.hpp"
#include "plm/pipeline.hpp"

namespace fs = std::filesystem;
using namespace plm;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  std::vector<std::string> configs;
  std::vector<std::string> presets;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

// Generation aliases named like the config keys.
struct DecodeFlags {
  std::string mode;
  std::optional<std::string> top_p, top_k, temperature, no_repeat_ngram_size, num_beams, max_new_tokens,
      prefix_tokens, alpha, filter_p, p;
};

class OutDirLock {
 public:
  explicit OutDirLock(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw ConfigError("cannot open lock file " + path.string());
    if (::flock(fd_, LOCK_EX) != 0) throw ConfigError("cannot lock " + path.string());
  }
  ~OutDirLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  OutDirLock(const OutDirLock&) = delete;
  OutDirLock& operator=(const OutDirLock&) = delete;

 private:
  int fd_ = -1;
};

struct Run {
  ExperimentConfig cfg;
  fs::path out;
  bool quiet = false;

  fs::path data(const std::string& rel) const { return out / "data" / rel; }
  fs::path models(const std::string& rel) const { return out / "models" / rel; }
  fs::path generated(const std::string& rel) const { return out / "generated" / rel; }
  fs::path reports(const std::string& rel) const { return out / "reports" / rel; }

  void say(const std::string& msg) const {
    if (!quiet) std::cerr << msg << "\n";
  }
};

ExperimentConfig resolve(const Globals& g, const DecodeFlags* dec) {
  ExperimentConfig cfg;
  for (const auto& p : g.presets) cfg.apply_preset(p);
  for (const auto& c : g.configs) cfg.merge_file(c);
  for (const auto& o : g.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + o + "'");
    cfg.set(std::string_view(o).substr(0, eq), o.substr(eq + 1));
  }
  if (g.seed) cfg.set("run", "seed", std::to_string(*g.seed));
  if (g.out_dir) cfg.set("run", "out_dir", *g.out_dir);
  if (dec) {
    if (!dec->mode.empty()) cfg.set("generation", "mode", dec->mode);
    const bool steer = cfg.get("generation", "mode") == "steer";
    const std::string shared = steer ? "steering" : "generation";
    auto put = [&cfg](const std::string& section, const std::string& key, const std::optional<std::string>& v) {
      if (v) cfg.set(section, key, *v);
    };
    put("generation", "top_p", dec->top_p);
    put("generation", "top_k", dec->top_k);
    put("generation", "num_beams", dec->num_beams);
    put(shared, "temperature", dec->temperature);
    put(shared, "no_repeat_ngram_size", dec->no_repeat_ngram_size);
    put(shared, "max_new_tokens", dec->max_new_tokens);
    put(shared, "prefix_tokens", dec->prefix_tokens);
    put("steering", "alpha", dec->alpha);
    put("steering", "filter_p", dec->filter_p);
    put("steering", "p", dec->p);
  }
  return cfg;
}

void snapshot(const Run& run, const std::string& command) {
  const fs::path path = run.out / "config" / (command + ".ini");
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config snapshot " + path.string());
  out << "# resolved configuration for '" << command << "'\n" << run.cfg.to_text();
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text << "\n";
}

void require(const std::vector<fs::path>& paths) {
  std::string missing;
  for (const auto& p : paths)
    if (!fs::exists(p)) missing += "\n  " + p.string();
  if (!missing.empty()) throw ConfigError("missing artifacts:" + missing);
}

std::vector<Label> labels_of(const std::string& which) {
  if (which == "both") return {Label::positive, Label::negative};
  try {
    return {parse_label(which)};
  } catch (const Error&) {
    throw ConfigError("label must be positive, negative or both, got '" + which + "'");
  }
}

std::string sites_tag(const std::vector<PromptSite>& sites) {
  std::string tag;
  for (PromptSite s : sites) tag += (tag.empty() ? "" : "+") + std::string(to_string(s));
  return tag;
}

const char* kSplitNames[3] = {"train", "validation", "test"};

Corpus load_split(const Run& run, int dataset, Split split) {
  const fs::path p = run.data("dataset-" + std::to_string(dataset) + "/" + std::string(to_string(split)) + ".jsonl");
  require({p});
  Corpus c = read_corpus(p, split);
  for (const Review& r : c.reviews)
    if (!r.label) throw DataError(p.string() + ": record without a label");
  return c;
}

Vocabulary load_vocab(const Run& run) {
  require({run.data("vocab.txt")});
  return Vocabulary::load(run.data("vocab.txt"));
}

LmModel load_lm(const fs::path& path) {
  require({path});
  return LmModel::from_checkpoint(load_checkpoint(path));
}

ClassifierModel load_classifier(const fs::path& path) {
  require({path});
  return ClassifierModel::from_checkpoint(load_checkpoint(path));
}

Corpus concat(const Corpus& a, const Corpus& b) {
  Corpus out = a;
  out.reviews.insert(out.reviews.end(), b.reviews.begin(), b.reviews.end());
  return out;
}

fs::path backbone_path(const Run& run) {
  const std::string& configured = run.cfg.get("model", "pretrained_backbone");
  return configured.empty() ? run.models("backbone.plm") : fs::path(configured);
}

fs::path generator_path(const Run& run, const std::string& tag, Label label) {
  return run.models("generator-" + tag + "-" + std::string(to_string(label)) + ".plm");
}

// ---------------------------------------------------------------------------

void cmd_synth(const Run& run) {
  const SynthConfig sc = synth_config(run.cfg);
  const Corpus c = synth_corpus(sc, run.cfg.count("corpus", "synth_seed"));
  write_corpus(run.data("raw.jsonl"), c);
  run.say("wrote " + std::to_string(c.size()) + " reviews to " + run.data("raw.jsonl").string());
}

void cmd_preprocess(const Run& run, const std::string& input_flag) {
  fs::path input = input_flag.empty() ? fs::path(run.cfg.get("corpus", "input")) : fs::path(input_flag);
  if (input.empty()) input = run.data("raw.jsonl");
  if (!fs::exists(input)) throw DataError("cannot open input " + input.string());
  const Corpus raw = read_corpus(input);
  const PreparedData data = preprocess(raw, run.cfg.count("corpus", "dataset_size"), run.cfg.seed());
  for (int d = 0; d < 3; ++d) {
    const DatasetSplits& s = data.datasets[static_cast<std::size_t>(d)];
    const Corpus* parts[3] = {&s.train, &s.validation, &s.test};
    for (int k = 0; k < 3; ++k)
      write_corpus(run.data("dataset-" + std::to_string(d + 1) + "/" + kSplitNames[k] + ".jsonl"), *parts[k]);
  }
  shared_vocab(data, run.cfg.count("corpus", "vocab_size")).save(run.data("vocab.txt"));
  write_text(run.data("summary.json"), data.summary.to_json());
  std::cout << data.summary.to_json() << "\n";
}

void cmd_pretrain(const Run& run) {
  const Vocabulary vocab = load_vocab(run);
  const std::size_t max_tokens = run.cfg.count("corpus", "max_tokens");
  const auto train = to_sequences(load_split(run, 2, Split::train), vocab, max_tokens);
  const auto val = to_sequences(load_split(run, 2, Split::validation), vocab, max_tokens);
  LmModel model(model_config(run.cfg, vocab.size()), run.cfg.seed());
  TrainOptions opts = pretraining_options(run.cfg);
  opts.log_path = run.models("backbone.log.jsonl");
  const auto log = pretrain_backbone(model, train, val, opts);
  const fs::path out = run.models("backbone.plm");
  save_checkpoint(out, model.to_checkpoint());
  run.say("backbone: best epoch " + std::to_string(log.best_epoch) + ", val loss " + std::to_string(log.best_val_loss));
  std::cout << out.string() << "\n";
}

void cmd_train_generator(const Run& run, const std::string& label_flag) {
  const Vocabulary vocab = load_vocab(run);
  const auto sites = prompt_sites(run.cfg);
  const std::string tag = sites_tag(sites);
  const std::size_t max_tokens = run.cfg.count("corpus", "max_tokens");
  const std::size_t length = run.cfg.count("model", "prompt_length");
  const Corpus train = load_split(run, 2, Split::train), val = load_split(run, 2, Split::validation),
               test = load_split(run, 2, Split::test);

  std::optional<LmModel> backbone;
  const fs::path bp = backbone_path(run);
  if (!run.cfg.get("model", "pretrained_backbone").empty()) {
    if (!fs::exists(bp)) throw ConfigError("model.pretrained_backbone not found: " + bp.string());
    backbone = load_lm(bp);
  } else if (fs::exists(bp)) {
    backbone = load_lm(bp);
  } else {
    run.say("no pretrained backbone at " + bp.string() + "; tuning prompts on a randomly initialised one");
    backbone = LmModel(model_config(run.cfg, vocab.size()), run.cfg.seed());
  }
  if (backbone->config().vocab_size != vocab.size())
    throw ConfigError("backbone vocabulary size does not match data/vocab.txt");

  for (Label label : labels_of(label_flag)) {
    LmModel g = with_prompts(*backbone, sites, length, run.cfg.seed());
    TrainOptions opts = tuning_options(run.cfg);
    const fs::path out = generator_path(run, tag, label);
    opts.checkpoint_path = out;
    opts.log_path = out.parent_path() / (out.stem().string() + ".log.jsonl");
    const auto log = train_prompts(g, to_sequences(train.filter(label), vocab, max_tokens),
                                   to_sequences(val.filter(label), vocab, max_tokens), opts);
    const double test_loss = mean_loss(g, to_sequences(test.filter(label), vocab, max_tokens));
    run.say(std::string(to_string(label)) + " generator: best epoch " + std::to_string(log.best_epoch) + ", val loss " +
            std::to_string(log.best_val_loss) + ", test loss " + std::to_string(test_loss));
    std::cout << out.string() << "\n";
  }
}

std::vector<Split> splits_of(const std::string& list) {
  std::vector<Split> out;
  std::istringstream in(list);
  for (std::string s; std::getline(in, s, ',');) {
    try {
      out.push_back(parse_split(s));
    } catch (const Error&) {
      throw ConfigError("unknown split '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("no splits requested");
  return out;
}

void cmd_generate(const Run& run, const std::string& label_flag, const std::string& split_list) {
  const Vocabulary vocab = load_vocab(run);
  const std::string tag = sites_tag(prompt_sites(run.cfg));
  const std::string mode = run.cfg.get("generation", "mode");
  if (mode != "plain" && mode != "steer") throw ConfigError("generation.mode must be plain or steer");
  const bool steer = mode == "steer";
  const std::size_t limit = run.cfg.count("generation", "inputs_per_label");
  const std::string out_tag = steer ? "steer-" + tag : tag;

  for (Label label : labels_of(label_flag)) {
    const fs::path own = generator_path(run, tag, label);
    if (steer && !fs::exists(generator_path(run, tag, opposite(label))))
      throw ConfigError("steer mode needs the anti-expert " + generator_path(run, tag, opposite(label)).string());
    const LmModel model = load_lm(own);
    std::optional<LmModel> anti;
    if (steer) anti = load_lm(generator_path(run, tag, opposite(label)));
    for (Split split : splits_of(split_list)) {
      Corpus inputs = load_split(run, 3, split).filter(label);
      if (limit > 0 && inputs.size() > limit) inputs.reviews.resize(limit);
      const std::string source = "generator-" + out_tag + "-" + std::string(to_string(label));
      Corpus out = steer ? generate_steered(model, model, *anti, inputs, vocab, steering_params(run.cfg), label, source)
                         : generate(model, inputs, vocab, generation_params(run.cfg), label, source);
      out.split = split;
      const fs::path path =
          run.generated(out_tag + "-" + std::string(to_string(label)) + "-" + std::string(to_string(split)) + ".jsonl");
      write_corpus(path, out);
      std::cout << path.string() << " " << out.size() << "\n";
    }
  }
}

Corpus load_generated(const Run& run, const std::string& tag, Split split) {
  Corpus both;
  for (Label l : {Label::positive, Label::negative}) {
    const fs::path p = run.generated(tag + "-" + std::string(to_string(l)) + "-" + std::string(to_string(split)) + ".jsonl");
    require({p});
    both = concat(both, read_corpus(p, split));
  }
  both.split = split;
  return both;
}

struct TrainedClassifier {
  ClassifierModel model;
  ClassifierLog log;
  ClassifierReport test_report;
};

TrainedClassifier fit_classifier(const Run& run, const Vocabulary& vocab, const Corpus& train, const Corpus& val,
                                 const fs::path& out) {
  ClassifierModel model(classifier_config(run.cfg, vocab.size()), run.cfg.seed());
  const auto log = train_classifier(model, labelled_set(train, vocab), labelled_set(val, vocab), classifier_options(run.cfg));
  save_checkpoint(out, model.to_checkpoint());
  const Corpus test = load_split(run, 1, Split::test);
  std::vector<Label> pred, gold;
  for (const auto& p : predict(model, test, vocab)) pred.push_back(p.label);
  for (const Review& r : test.reviews) gold.push_back(*r.label);
  return {std::move(model), log, report(pred, gold)};
}

json classifier_log_json(const ClassifierLog& log) {
  json j;
  j["initial_val_accuracy"] = log.initial_val_accuracy;
  j["best_epoch"] = log.best_epoch;
  j["best_val_accuracy"] = log.best_val_accuracy;
  for (const auto& e : log.epochs)
    j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_accuracy", e.val_accuracy}});
  return j;
}

void cmd_train_classifier(const Run& run, const std::string& data) {
  const Vocabulary vocab = load_vocab(run);
  const bool real = data == "real";
  const Corpus train = real ? load_split(run, 1, Split::train) : load_generated(run, data, Split::train);
  const Corpus val = real ? load_split(run, 1, Split::validation) : load_generated(run, data, Split::validation);
  const std::string name = real ? "judge" : "classifier-" + data;
  const auto t = fit_classifier(run, vocab, train, val, run.models(name + ".plm"));
  json j;
  j["training"] = classifier_log_json(t.log);
  j["test"] = json::parse(t.test_report.to_json());
  write_text(run.reports(name + ".json"), j.dump(2));
  std::cout << run.models(name + ".plm").string() << " test accuracy " << t.test_report.accuracy << "\n";
}

json explanation_json(const Explanation& e, const Vocabulary& vocab, const Prediction& p, const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words{std::istream_iterator<std::string>(in), std::istream_iterator<std::string>()};
  json j;
  j["predicted"] = std::string(to_string(p.label));
  j["probabilities"] = {{"negative", p.probs[0]}, {"positive", p.probs[1]}};
  j["intercept"] = e.intercept;
  j["r2"] = e.r2;
  for (std::size_t i = 0; i < e.tokens.size(); ++i)
    j["weights"].push_back({{"token", i < words.size() ? words[i] : vocab.token(e.tokens[i])},
                            {"in_vocab", e.tokens[i] != Vocabulary::kUnk},
                            {"weight", e.weights[i]}});
  return j;
}

json explain_examples(const Run& run, const ClassifierModel& model, const Vocabulary& vocab, const Corpus& texts,
                      std::size_t n) {
  json out = json::array();
  const LimeOptions opts = lime_options(run.cfg);
  for (std::size_t i = 0; i < std::min(n, texts.size()); ++i) {
    const auto ids = vocab.tokenize(texts.reviews[i].text);
    if (ids.empty()) continue;
    const Prediction p = predict(model, ids);
    const auto e = lime_explain(classifier_probabilities(model), ids, static_cast<std::size_t>(p.label), opts);
    json j = explanation_json(e, vocab, p, texts.reviews[i].text);
    j["text"] = texts.reviews[i].text;
    out.push_back(j);
  }
  return out;
}

void cmd_evaluate(const Run& run, const std::string& tag, const std::string& kind) {
  if (kind != "intrinsic" && kind != "extrinsic" && kind != "both")
    throw ConfigError("--kind must be intrinsic, extrinsic or both");
  const Vocabulary vocab = load_vocab(run);

  if (kind != "extrinsic") {
    require({run.models("judge.plm"), backbone_path(run)});
    const ClassifierModel judge = load_classifier(run.models("judge.plm"));
    const LmModel backbone = load_lm(backbone_path(run));
    const std::size_t max_tokens = run.cfg.count("corpus", "max_tokens");
    const Corpus reference = load_split(run, 2, Split::train);
    const Corpus inputs = load_split(run, 3, Split::train);
    const Embedder embed = table_embedder(
        backbone.embedding_table(backbone.architecture() == Architecture::decoder_only ? PromptSite::input
                                                                                      : PromptSite::encoder),
        vocab);
    for (Label label : {Label::positive, Label::negative}) {
      const fs::path p = run.generated(tag + "-" + std::string(to_string(label)) + "-train.jsonl");
      require({p});
      const Corpus gen = read_corpus(p);
      if (gen.empty()) throw DataError(p.string() + ": no generated reviews");
      MetricsReport r;
      std::vector<Label> pred, gold(gen.size(), label);
      for (const auto& pr : predict(judge, gen, vocab)) pred.push_back(pr.label);
      r.classifier = report(pred, gold);
      Corpus own_inputs = inputs.filter(label);
      own_inputs.reviews.resize(std::min(own_inputs.size(), gen.size()));
      const WordCorpus gw = words_of(gen);
      r.similarity = greedy_match_similarity(WordCorpus(gw.begin(), gw.begin() + static_cast<std::ptrdiff_t>(own_inputs.size())),
                                             words_of(own_inputs), embed);
      r.perplexity = perplexity(backbone, to_sequences(gen, vocab, max_tokens));
      for (std::size_t n = 1; n <= run.cfg.count("eval", "distinct_max"); ++n) r.distinct[n] = distinct_n(gw, n);
      const WordCorpus ref = words_of(reference.filter(label));
      for (std::size_t n = run.cfg.count("eval", "overlap_min"); n <= run.cfg.count("eval", "overlap_max"); ++n)
        r.overlap[n] = ngram_overlap(gw, ref, n);
      const fs::path out = run.reports("intrinsic-" + tag + "-" + std::string(to_string(label)) + ".json");
      write_text(out, r.to_json());
      std::cout << out.string() << " judge accuracy " << r.classifier->accuracy << "\n";
    }
  }
  if (kind != "intrinsic") {
    const auto t = fit_classifier(run, vocab, load_generated(run, tag, Split::train),
                                  load_generated(run, tag, Split::validation), run.models("classifier-" + tag + ".plm"));
    json j;
    j["training"] = classifier_log_json(t.log);
    MetricsReport r;
    r.classifier = t.test_report;
    j["report"] = json::parse(r.to_json());
    if (fs::exists(run.models("judge.plm"))) {
      const ClassifierModel judge = load_classifier(run.models("judge.plm"));
      const Corpus test = load_split(run, 1, Split::test);
      std::vector<Label> pred, gold;
      for (const auto& p : predict(judge, test, vocab)) pred.push_back(p.label);
      for (const Review& rv : test.reviews) gold.push_back(*rv.label);
      j["real data classifier"] = json::parse(report(pred, gold).to_json());
    }
    j["explanations"] =
        explain_examples(run, t.model, vocab, load_split(run, 1, Split::test), run.cfg.count("eval", "lime_examples"));
    const fs::path out = run.reports("extrinsic-" + tag + ".json");
    write_text(out, j.dump(2));
    std::cout << out.string() << " test accuracy " << t.test_report.accuracy << "\n";
  }
}

void cmd_explain(const Run& run, const std::string& model_name, const std::vector<std::string>& texts) {
  const Vocabulary vocab = load_vocab(run);
  const ClassifierModel model = load_classifier(run.models(model_name + ".plm"));
  Corpus c;
  if (texts.empty()) {
    c = load_split(run, 1, Split::test);
  } else {
    for (const auto& t : texts) c.reviews.push_back(Review{clean_text(t), {}, {}, {}, {}});
  }
  const std::size_t n = texts.empty() ? run.cfg.count("eval", "lime_examples") : texts.size();
  const json out = explain_examples(run, model, vocab, c, n);
  write_text(run.reports("explain-" + model_name + ".json"), out.dump(2));
  std::cout << out.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-prompt sentiment review generation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.configs, "Config file (repeatable; later files win)");
  app.add_option("--preset", g.presets, "Preset: " + [] {
    std::string s;
    for (const auto& n : ExperimentConfig::preset_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }());
  app.add_option("--set", g.overrides, "Override as section.key=value (repeatable)");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_flag("-q,--quiet", g.quiet, "Less progress output");

  auto* synth = app.add_subcommand("synth-corpus", "Write the bundled synthetic raw corpus to data/raw.jsonl");
  std::string input;
  auto* pre = app.add_subcommand("preprocess", "Clean, label, dedup, downsample and split a raw corpus");
  pre->add_option("--input", input, "Raw corpus (line-delimited JSON with text and rating)");
  auto* pretrain = app.add_subcommand("pretrain-backbone", "Pretrain the backbone on dataset-2");
  std::string label = "both";
  auto* tune = app.add_subcommand("train-generator", "Tune soft prompts for each sentiment");
  tune->add_option("--label", label, "positive, negative or both");
  auto* gen = app.add_subcommand("generate", "Generate reviews from dataset-3 inputs");
  gen->add_option("--label", label, "positive, negative or both");
  std::string splits = "train,validation";
  gen->add_option("--splits", splits, "Comma-separated dataset-3 splits used as inputs");
  DecodeFlags dec;
  gen->add_option("--mode", dec.mode, "plain or steer");
  gen->add_option("--top_p", dec.top_p);
  gen->add_option("--top_k", dec.top_k);
  gen->add_option("--temperature", dec.temperature);
  gen->add_option("--no_repeat_ngram_size", dec.no_repeat_ngram_size);
  gen->add_option("--num_beams", dec.num_beams);
  gen->add_option("--max_new_tokens", dec.max_new_tokens);
  gen->add_option("--prefix_tokens", dec.prefix_tokens);
  gen->add_option("--alpha", dec.alpha);
  gen->add_option("--filter_p", dec.filter_p);
  gen->add_option("--p", dec.p, "Steering nucleus mass");
  std::string data = "real";
  auto* clf = app.add_subcommand("train-classifier", "Train a sentiment classifier");
  clf->add_option("--data", data, "'real' (dataset-1) or a generated corpus tag such as encoder+decoder");
  std::string tag, kind = "both";
  auto* ev = app.add_subcommand("evaluate", "Intrinsic and extrinsic evaluation of a generated corpus");
  ev->add_option("--generated", tag, "Generated corpus tag, e.g. encoder+decoder or steer-encoder+decoder")->required();
  ev->add_option("--kind", kind, "intrinsic, extrinsic or both");
  std::string model_name = "judge";
  std::vector<std::string> texts;
  auto* ex = app.add_subcommand("explain", "LIME explanations of classifier predictions");
  ex->add_option("--model", model_name, "Classifier name under models/ (judge, classifier-<tag>)");
  ex->add_option("--text", texts, "Text to explain (repeatable); defaults to dataset-1 test reviews");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    Run run{resolve(g, sub == gen ? &dec : nullptr), {}, g.quiet};
    run.out = run.cfg.get("run", "out_dir");
    OutDirLock lock(run.out);
    snapshot(run, sub->get_name());
    const auto start = std::chrono::steady_clock::now();
    if (sub == synth) cmd_synth(run);
    else if (sub == pre) cmd_preprocess(run, input);
    else if (sub == pretrain) cmd_pretrain(run);
    else if (sub == tune) cmd_train_generator(run, label);
    else if (sub == gen) cmd_generate(run, label, splits);
    else if (sub == clf) cmd_train_classifier(run, data);
    else if (sub == ev) cmd_evaluate(run, tag, kind);
    else if (sub == ex) cmd_explain(run, model_name, texts);
    run.say(sub->get_name() + " done in " +
            std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()) + " s");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
