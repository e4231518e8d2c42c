#include "plm/model.hpp"

#include <chrono>
#include <functional>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "plm/error.hpp"

namespace plm {

std::string_view to_string(Architecture arch) {
  return arch == Architecture::encoder_decoder ? "encoder_decoder" : "decoder_only";
}

std::string_view to_string(PromptSite site) {
  switch (site) {
    case PromptSite::input: return "input";
    case PromptSite::encoder: return "encoder";
    case PromptSite::decoder: return "decoder";
  }
  return "input";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "encoder_decoder") return Architecture::encoder_decoder;
  if (s == "decoder_only") return Architecture::decoder_only;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

PromptSite parse_prompt_site(std::string_view s) {
  if (s == "input") return PromptSite::input;
  if (s == "encoder") return PromptSite::encoder;
  if (s == "decoder") return PromptSite::decoder;
  throw ConfigError("unknown prompt site '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  if (vocab_size < Vocabulary::kReserved + 1) throw ContractError("model: vocab_size too small");
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0)
    throw ContractError("model: embed_dim must be a positive multiple of heads");
  if (ffn_dim == 0 || max_seq_len < 2) throw ContractError("model: ffn_dim and max_seq_len must be positive");
  if (architecture == Architecture::encoder_decoder && encoder_layers == 0)
    throw ContractError("model: encoder-decoder needs at least one encoder layer");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"architecture", std::string(to_string(architecture))},
          {"vocab_size", std::to_string(vocab_size)},
          {"embed_dim", std::to_string(embed_dim)},
          {"encoder_layers", std::to_string(encoder_layers)},
          {"decoder_layers", std::to_string(decoder_layers)},
          {"heads", std::to_string(heads)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"max_seq_len", std::to_string(max_seq_len)}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  auto get = [&kv](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("model config: missing '" + key + "'");
    return it->second;
  };
  auto num = [&get](const std::string& key) { return static_cast<std::size_t>(std::stoull(get(key))); };
  ModelConfig c;
  c.architecture = parse_architecture(get("architecture"));
  c.vocab_size = num("vocab_size");
  c.embed_dim = num("embed_dim");
  c.encoder_layers = num("encoder_layers");
  c.decoder_layers = num("decoder_layers");
  c.heads = num("heads");
  c.ffn_dim = num("ffn_dim");
  c.max_seq_len = num("max_seq_len");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// LmModel

LmModel::LmModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.embed_dim, f = config_.ffn_dim, v = config_.vocab_size, L = config_.max_seq_len;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  const double f_std = 1.0 / std::sqrt(static_cast<double>(f));
  auto ones = [d] { return Tensor::full({d}, 1.0); };
  auto attention_block = [&](const std::string& prefix) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) add(prefix + w, Tensor::randn({d, d}, rng, w_std));
  };
  auto ffn_block = [&](const std::string& prefix) {
    add(prefix + "ffn_norm", ones());
    add(prefix + "w1", Tensor::randn({d, f}, rng, w_std));
    add(prefix + "w2", Tensor::randn({f, d}, rng, f_std));
  };

  if (config_.architecture == Architecture::encoder_decoder) {
    add("enc.tok_emb", Tensor::randn({v, d}, rng, 1.0));
    add("enc.pos_emb", Tensor::randn({L, d}, rng, 0.1));
    for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
      const std::string p = "enc." + std::to_string(i) + ".";
      add(p + "attn_norm", ones());
      attention_block(p);
      ffn_block(p);
    }
    add("enc.final_norm", ones());
  }
  add("dec.tok_emb", Tensor::randn({v, d}, rng, 1.0));
  add("dec.pos_emb", Tensor::randn({L, d}, rng, 0.1));
  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    const std::string p = "dec." + std::to_string(i) + ".";
    add(p + "attn_norm", ones());
    attention_block(p);
    if (config_.architecture == Architecture::encoder_decoder) {
      add(p + "cross_norm", ones());
      for (const char* w : {"cq", "ck", "cv", "co"}) add(p + w, Tensor::randn({d, d}, rng, w_std));
    }
    ffn_block(p);
  }
  add("dec.final_norm", ones());
  add("lm_head", Tensor::randn({d, v}, rng, w_std));

  for (std::size_t i = 0; i < backbone_.size(); ++i) index_[backbone_[i].first] = i;
}

const Tensor& LmModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("model: no parameter '" + name + "'");
  return backbone_[it->second].second;
}

void LmModel::set_backbone_trainable(bool trainable) {
  for (auto& [name, t] : backbone_) {
    t.set_requires_grad(trainable);
    if (!trainable) t.clear_grad();
  }
}

void LmModel::load_backbone(const NamedTensors& source) {
  for (auto& [name, t] : backbone_) {
    const Tensor* src = nullptr;
    for (const auto& [n, s] : source)
      if (n == name) src = &s;
    if (!src) throw DataError("backbone checkpoint lacks '" + name + "'");
    if (src->shape() != t.shape()) throw DataError("backbone checkpoint shape mismatch for '" + name + "'");
    auto dst = t.mutable_data();
    std::copy(src->data().begin(), src->data().end(), dst.begin());
  }
}

bool LmModel::accepts(PromptSite site) const {
  return config_.architecture == Architecture::decoder_only ? site == PromptSite::input : site != PromptSite::input;
}

void LmModel::attach_prompt(SoftPrompt prompt) {
  if (!accepts(prompt.site))
    throw ContractError("model: " + std::string(to_string(config_.architecture)) + " does not accept a prompt at " +
                        std::string(to_string(prompt.site)));
  if (prompt.length() > 0 && prompt.embeddings.cols() != config_.embed_dim)
    throw ShapeError("model: prompt width differs from embed_dim");
  for (auto& p : prompts_)
    if (p.site == prompt.site) {
      p = std::move(prompt);
      return;
    }
  prompts_.push_back(std::move(prompt));
}

const SoftPrompt* LmModel::prompt(PromptSite site) const {
  for (const auto& p : prompts_)
    if (p.site == site) return &p;
  return nullptr;
}

std::size_t LmModel::prompt_length(PromptSite site) const {
  const SoftPrompt* p = prompt(site);
  return p ? p->length() : 0;
}

const Tensor& LmModel::embedding_table(PromptSite site) const {
  if (!accepts(site)) throw ContractError("model: invalid prompt site for this architecture");
  return param(site == PromptSite::encoder ? "enc.tok_emb" : "dec.tok_emb");
}

Checkpoint LmModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_.to_map();
  ckpt.tensors = backbone_;
  std::string sites;
  for (const auto& p : prompts_) {
    const std::string site(to_string(p.site));
    sites += (sites.empty() ? "" : ",") + site;
    ckpt.config["prompt." + site + ".length"] = std::to_string(p.length());
    ckpt.tensors.emplace_back("prompt." + site,
                              p.length() ? p.embeddings : Tensor::zeros({0, config_.embed_dim}));
  }
  ckpt.config["prompt_sites"] = sites;
  return ckpt;
}

LmModel LmModel::from_checkpoint(const Checkpoint& ckpt) {
  LmModel model(ModelConfig::from_map(ckpt.config), 0);
  model.load_backbone(ckpt.tensors);
  auto it = ckpt.config.find("prompt_sites");
  if (it != ckpt.config.end() && !it->second.empty()) {
    std::size_t start = 0;
    const std::string& s = it->second;
    while (start <= s.size()) {
      const std::size_t end = std::min(s.find(',', start), s.size());
      const std::string site = s.substr(start, end - start);
      const Tensor& t = ckpt.at("prompt." + site);
      model.attach_prompt(SoftPrompt{parse_prompt_site(site), t.clone(true)});
      start = end + 1;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Transformer blocks

namespace {

Tensor attention(const LmModel& m, const std::string& p, const char* const names[4], const Tensor& xq,
                 const Tensor& xkv, bool causal) {
  const std::size_t heads = m.config().heads;
  const std::size_t dh = m.config().embed_dim / heads;
  const Tensor q = matmul(xq, m.param(p + names[0]));
  const Tensor k = matmul(xkv, m.param(p + names[1]));
  const Tensor v = matmul(xkv, m.param(p + names[2]));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (causal) scores = causal_mask(scores);
    outs.push_back(matmul(softmax(scores, -1), vh));
  }
  const Tensor joined = heads == 1 ? outs.front() : concat_cols(outs);
  return matmul(joined, m.param(p + names[3]));
}

constexpr const char* kSelfAttn[4] = {"wq", "wk", "wv", "wo"};
constexpr const char* kCrossAttn[4] = {"cq", "ck", "cv", "co"};

Tensor feed_forward(const LmModel& m, const std::string& p, const Tensor& x) {
  const Tensor h = rms_norm(x, m.param(p + "ffn_norm"));
  return matmul(gelu(matmul(h, m.param(p + "w1"))), m.param(p + "w2"));
}

// [prompt; tok_emb(ids) + pos_emb(0..n-1)]
Tensor embed_with_prompt(const LmModel& m, const std::string& stack, std::span<const TokenId> ids,
                         const SoftPrompt* prompt) {
  const std::size_t n = ids.size();
  const std::size_t lp = prompt ? prompt->length() : 0;
  if (n + lp > m.config().max_seq_len)
    throw ContractError("model: sequence of " + std::to_string(n) + " tokens plus prompt of " + std::to_string(lp) +
                        " exceeds max_seq_len " + std::to_string(m.config().max_seq_len));
  Tensor tokens = add(embedding(m.param(stack + ".tok_emb"), ids), slice_rows(m.param(stack + ".pos_emb"), 0, n));
  if (lp == 0) return tokens;
  const Tensor parts[] = {prompt->embeddings, tokens};
  return concat_rows(parts);
}

Tensor run_decoder(const LmModel& m, const Tensor* memory, std::span<const TokenId> inputs, const SoftPrompt* prompt,
                   bool last_only) {
  const bool enc_dec = m.architecture() == Architecture::encoder_decoder;
  if (enc_dec && memory == nullptr) throw ContractError("model: encoder-decoder decoding needs encoder states");
  const std::size_t lp = prompt ? prompt->length() : 0;
  Tensor x = embed_with_prompt(m, "dec", inputs, prompt);
  for (std::size_t i = 0; i < m.config().decoder_layers; ++i) {
    const std::string p = "dec." + std::to_string(i) + ".";
    const Tensor h = rms_norm(x, m.param(p + "attn_norm"));
    x = add(x, attention(m, p, kSelfAttn, h, h, true));
    if (enc_dec) {
      const Tensor c = rms_norm(x, m.param(p + "cross_norm"));
      x = add(x, attention(m, p, kCrossAttn, c, *memory, false));
    }
    x = add(x, feed_forward(m, p, x));
  }
  const std::size_t n = inputs.size();
  const Tensor rows = last_only ? slice_rows(x, lp + n - 1, 1) : (lp ? slice_rows(x, lp, n) : x);
  return matmul(rms_norm(rows, m.param("dec.final_norm")), m.param("lm_head"));
}

std::vector<TokenId> shifted_inputs(std::span<const TokenId> target) {
  std::vector<TokenId> in;
  in.reserve(target.size());
  in.push_back(Vocabulary::kStart);
  in.insert(in.end(), target.begin(), target.end() - 1);
  return in;
}

}  // namespace

Tensor encode(const LmModel& model, std::span<const TokenId> source) {
  if (model.architecture() != Architecture::encoder_decoder) throw ContractError("encode: model has no encoder");
  const SoftPrompt* prompt = model.prompt(PromptSite::encoder);
  if (source.empty() && (!prompt || prompt->length() == 0))
    throw ContractError("encode: encoder input is empty");
  Tensor x = embed_with_prompt(model, "enc", source, prompt);
  for (std::size_t i = 0; i < model.config().encoder_layers; ++i) {
    const std::string p = "enc." + std::to_string(i) + ".";
    const Tensor h = rms_norm(x, model.param(p + "attn_norm"));
    x = add(x, attention(model, p, kSelfAttn, h, h, false));
    x = add(x, feed_forward(model, p, x));
  }
  return rms_norm(x, model.param("enc.final_norm"));
}

Tensor decoder_logits(const LmModel& model, const Tensor* memory, std::span<const TokenId> decoder_inputs,
                      bool last_only) {
  if (decoder_inputs.empty()) throw ContractError("decoder_logits: no decoder inputs");
  const PromptSite site = model.architecture() == Architecture::decoder_only ? PromptSite::input : PromptSite::decoder;
  return run_decoder(model, memory, decoder_inputs, model.prompt(site), last_only);
}

Tensor seq2seq_loss(const LmModel& model, std::span<const TokenId> source, std::span<const TokenId> target) {
  if (target.empty()) throw ContractError("seq2seq_loss: empty target");
  const Tensor memory = encode(model, source);
  const auto inputs = shifted_inputs(target);
  return cross_entropy(decoder_logits(model, &memory, inputs), target);
}

Tensor forward_loss_single_prompt(const LmModel& model, std::span<const TokenId> x) {
  if (model.architecture() != Architecture::decoder_only)
    throw ContractError("forward_loss_single_prompt: needs a decoder-only model");
  if (x.empty()) throw ContractError("forward_loss_single_prompt: empty sequence");
  const auto inputs = shifted_inputs(x);
  return cross_entropy(decoder_logits(model, nullptr, inputs), x);
}

Tensor forward_loss_enc_dec_prompt(const LmModel& model, std::span<const TokenId> x) {
  if (model.architecture() != Architecture::encoder_decoder)
    throw ContractError("forward_loss_enc_dec_prompt: needs an encoder-decoder model");
  if (x.empty()) throw ContractError("forward_loss_enc_dec_prompt: empty sequence");
  return seq2seq_loss(model, x, x);
}

Tensor lm_loss(const LmModel& model, std::span<const TokenId> x) {
  return model.architecture() == Architecture::decoder_only ? forward_loss_single_prompt(model, x)
                                                            : forward_loss_enc_dec_prompt(model, x);
}

std::vector<double> token_nlls(const LmModel& model, std::span<const TokenId> x) {
  if (x.empty()) throw ContractError("token_nlls: empty sequence");
  NoGradGuard no_grad;
  const auto inputs = shifted_inputs(x);
  Tensor logits;
  if (model.architecture() == Architecture::decoder_only) {
    logits = decoder_logits(model, nullptr, inputs);
  } else {
    const Tensor memory = encode(model, x);
    logits = decoder_logits(model, &memory, inputs);
  }
  std::vector<double> out(x.size());
  const std::size_t v = logits.cols();
  for (std::size_t t = 0; t < x.size(); ++t) {
    auto row = logits.data().subspan(t * v, v);
    out[t] = log_sum_exp(row) - row[static_cast<std::size_t>(x[t])];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

SoftPrompt init_soft_prompt(PromptSite site, std::size_t length, const LmModel& model, std::uint64_t seed) {
  const Tensor& table = model.embedding_table(site);
  const std::size_t d = table.cols();
  std::vector<double> rows(length * d);
  Rng rng(seed);
  // Sample real vocabulary entries, not the reserved ids.
  const std::size_t lo = Vocabulary::kReserved;
  const std::size_t span = table.rows() > lo ? table.rows() - lo : table.rows();
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t r = (table.rows() > lo ? lo : 0) + static_cast<std::size_t>(rng.below(span));
    std::copy_n(table.data().data() + r * d, d, rows.data() + i * d);
  }
  return SoftPrompt{site, Tensor({length, d}, std::move(rows), true)};
}

std::vector<Tensor> trainable_params(const LmModel& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.prompts())
    if (p.length() > 0) out.push_back(p.embeddings);
  return out;
}

Sequences to_sequences(const Corpus& corpus, const Vocabulary& vocab, std::size_t max_tokens) {
  Sequences out;
  out.reserve(corpus.size());
  for (const Review& r : corpus.reviews) out.push_back(training_sequence(r, vocab, max_tokens));
  return out;
}

double mean_loss(const LmModel& model, const Sequences& data) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& x : data) total += lm_loss(model, x).item();
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

using LossFn = std::function<Tensor(const LmModel&, const std::vector<TokenId>&, Rng&)>;

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  for (const Tensor& p : params) out.emplace_back(p.data().begin(), p.data().end());
  return out;
}

void restore(std::vector<Tensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

double evaluate(const LmModel& model, const Sequences& data, const LossFn& loss, std::uint64_t seed) {
  if (data.empty()) return 0.0;
  NoGradGuard no_grad;
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Rng r = rng.split(i);
    total += loss(model, data[i], r).item();
  }
  return total / static_cast<double>(data.size());
}

TrainingLog train_loop(LmModel& model, std::vector<Tensor> params, const Sequences& train, const Sequences& val,
                       const TrainOptions& opts, const LossFn& loss) {
  if (train.empty()) throw ContractError("training: empty training corpus");
  if (opts.batch_size == 0) throw ContractError("training: batch_size must be positive");
  const Rng root(opts.seed);
  constexpr std::uint64_t kEvalStream = 0xE7A1;

  TrainingLog log;
  log.initial_train_loss = evaluate(model, train, loss, kEvalStream);
  log.initial_val_loss = evaluate(model, val, loss, kEvalStream);
  log.best_val_loss = val.empty() ? log.initial_train_loss : log.initial_val_loss;
  auto best = snapshot(params);
  if (params.empty()) return log;

  Adafactor optimizer(params, opts.optimizer);
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += opts.batch_size) {
      const std::size_t end = std::min(order.size(), b + opts.batch_size);
      const double weight = 1.0 / static_cast<double>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        Rng r = root.split((epoch << 32) ^ order[k]);
        const Tensor l = loss(model, train[order[k]], r);
        epoch_loss += l.item();
        backward(scale(l, weight));
      }
      optimizer.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(train.size());
    rec.val_loss = val.empty() ? rec.train_loss : evaluate(model, val, loss, kEvalStream);
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (rec.val_loss < log.best_val_loss) {
      log.best_val_loss = rec.val_loss;
      log.best_epoch = epoch;
      best = snapshot(params);
      if (opts.checkpoint_path) save_checkpoint(*opts.checkpoint_path, model.to_checkpoint());
    }
    if (opts.log_path) write_training_log(*opts.log_path, log);
  }
  restore(params, best);
  if (opts.checkpoint_path && log.best_epoch == 0) save_checkpoint(*opts.checkpoint_path, model.to_checkpoint());
  return log;
}

}  // namespace

TrainingLog train_prompts(LmModel& model, const Sequences& train, const Sequences& val, const TrainOptions& opts) {
  model.set_backbone_trainable(false);
  auto params = trainable_params(model);
  for (Tensor& p : params) p.set_requires_grad(true);
  return train_loop(model, params, train, val, opts,
                    [](const LmModel& m, const std::vector<TokenId>& x, Rng&) { return lm_loss(m, x); });
}

TrainingLog pretrain_backbone(LmModel& model, const Sequences& train, const Sequences& val, const TrainOptions& opts) {
  model.set_backbone_trainable(true);
  std::vector<Tensor> params;
  for (const auto& [name, t] : model.backbone()) params.push_back(t);
  LossFn loss;
  if (model.architecture() == Architecture::decoder_only) {
    loss = [](const LmModel& m, const std::vector<TokenId>& x, Rng&) { return forward_loss_single_prompt(m, x); };
  } else {
    // The encoder reads a random-length prefix; the decoder is teacher-forced
    // over the whole sequence and scored only past the prefix.
    loss = [](const LmModel& m, const std::vector<TokenId>& x, Rng& rng) {
      if (x.size() < 2) return seq2seq_loss(m, x, x);
      const std::size_t k = 1 + static_cast<std::size_t>(rng.below(x.size() - 1));
      const Tensor memory = encode(m, std::span<const TokenId>(x).first(k));
      const auto inputs = shifted_inputs(x);
      std::vector<bool> scored(x.size(), false);
      for (std::size_t t = k; t < x.size(); ++t) scored[t] = true;
      return cross_entropy(decoder_logits(m, &memory, inputs), x, scored);
    };
  }
  auto log = train_loop(model, params, train, val, opts, loss);
  model.set_backbone_trainable(false);
  return log;
}

void write_training_log(const std::filesystem::path& path, const TrainingLog& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write training log " + path.string());
  for (const auto& e : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    j["val_loss"] = e.val_loss;
    j["wall_seconds"] = e.wall_seconds;
    out << j.dump() << '\n';
  }
}

}  // namespace plm
