#include "plm/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"

namespace plm {

void ClassifierConfig::validate() const {
  if (vocab_size <= Vocabulary::kReserved) throw ContractError("classifier: vocab_size too small");
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0)
    throw ContractError("classifier: embed_dim must be a positive multiple of heads");
  if (layers == 0 || ffn_dim == 0 || max_len == 0) throw ContractError("classifier: layers, ffn_dim, max_len must be positive");
}

std::map<std::string, std::string> ClassifierConfig::to_map() const {
  return {{"kind", "classifier"},
          {"vocab_size", std::to_string(vocab_size)},
          {"embed_dim", std::to_string(embed_dim)},
          {"layers", std::to_string(layers)},
          {"heads", std::to_string(heads)},
          {"ffn_dim", std::to_string(ffn_dim)},
          {"max_len", std::to_string(max_len)}};
}

ClassifierConfig ClassifierConfig::from_map(const std::map<std::string, std::string>& kv) {
  auto num = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("classifier config: missing '" + key + "'");
    return static_cast<std::size_t>(std::stoull(it->second));
  };
  ClassifierConfig c;
  c.vocab_size = num("vocab_size");
  c.embed_dim = num("embed_dim");
  c.layers = num("layers");
  c.heads = num("heads");
  c.ffn_dim = num("ffn_dim");
  c.max_len = num("max_len");
  c.validate();
  return c;
}

ClassifierModel::ClassifierModel(ClassifierConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.embed_dim, f = config_.ffn_dim;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  auto add = [this](const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(name, std::move(t));
  };
  add("tok_emb", Tensor::randn({config_.vocab_size, d}, rng, 0.02));
  add("pos_emb", Tensor::randn({config_.max_len, d}, rng, 0.02));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = std::to_string(i) + ".";
    add(p + "attn_norm", Tensor::full({d}, 1.0));
    for (const char* w : {"wq", "wk", "wv", "wo"}) add(p + w, Tensor::randn({d, d}, rng, w_std));
    add(p + "ffn_norm", Tensor::full({d}, 1.0));
    add(p + "w1", Tensor::randn({d, f}, rng, w_std));
    add(p + "w2", Tensor::randn({f, d}, rng, 1.0 / std::sqrt(static_cast<double>(f))));
  }
  add("final_norm", Tensor::full({d}, 1.0));
  add("head_w", Tensor::randn({d, 2}, rng, w_std));
  add("head_b", Tensor::zeros({2}));
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].first] = i;
}

const Tensor& ClassifierModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("classifier: no parameter '" + name + "'");
  return params_[it->second].second;
}

Tensor ClassifierModel::logits(std::span<const TokenId> ids) const {
  const TokenId pad[] = {Vocabulary::kPad};
  if (ids.empty()) ids = pad;
  if (ids.size() > config_.max_len) ids = ids.first(config_.max_len);
  const std::size_t heads = config_.heads, dh = config_.embed_dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor x = add(embedding(param("tok_emb"), ids), slice_rows(param("pos_emb"), 0, ids.size()));
  for (std::size_t i = 0; i < config_.layers; ++i) {
    const std::string p = std::to_string(i) + ".";
    const Tensor h = rms_norm(x, param(p + "attn_norm"));
    const Tensor q = matmul(h, param(p + "wq")), k = matmul(h, param(p + "wk")), v = matmul(h, param(p + "wv"));
    std::vector<Tensor> outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const Tensor qh = slice_cols(q, hd * dh, dh), kh = slice_cols(k, hd * dh, dh), vh = slice_cols(v, hd * dh, dh);
      outs.push_back(matmul(softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1), vh));
    }
    x = add(x, matmul(concat_cols(outs), param(p + "wo")));
    const Tensor g = rms_norm(x, param(p + "ffn_norm"));
    x = add(x, matmul(gelu(matmul(g, param(p + "w1"))), param(p + "w2")));
  }
  const Tensor pooled = mean_rows(rms_norm(x, param("final_norm")));
  return add_row(matmul(pooled, param("head_w")), param("head_b"));
}

Checkpoint ClassifierModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_.to_map();
  ckpt.tensors = params_;
  return ckpt;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& ckpt) {
  auto kind = ckpt.config.find("kind");
  if (kind == ckpt.config.end() || kind->second != "classifier") throw DataError("checkpoint is not a classifier");
  ClassifierModel m(ClassifierConfig::from_map(ckpt.config), 0);
  for (auto& [name, t] : m.params_) {
    const Tensor& src = ckpt.at(name);
    if (src.shape() != t.shape()) throw DataError("classifier checkpoint shape mismatch for '" + name + "'");
    auto dst = t.mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Prediction and metrics

Prediction predict(const ClassifierModel& model, std::span<const TokenId> ids) {
  NoGradGuard no_grad;
  const auto p = softmax_values(model.logits(ids).data());
  Prediction out;
  out.probs = {p[0], p[1]};
  out.label = p[1] > p[0] ? Label::positive : Label::negative;
  return out;
}

std::vector<Prediction> predict(const ClassifierModel& model, const std::vector<std::vector<TokenId>>& inputs) {
  std::vector<Prediction> out;
  out.reserve(inputs.size());
  for (const auto& ids : inputs) out.push_back(predict(model, ids));
  return out;
}

std::vector<Prediction> predict(const ClassifierModel& model, const Corpus& corpus, const Vocabulary& vocab) {
  std::vector<Prediction> out;
  out.reserve(corpus.size());
  for (const Review& r : corpus.reviews) out.push_back(predict(model, r.token_ids ? *r.token_ids : vocab.tokenize(r.text)));
  return out;
}

ClassifierReport report(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.size() != gold.size()) throw ContractError("report: predictions and gold labels differ in length");
  ClassifierReport r;
  r.total = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i)
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t tp = r.confusion[c][c];
    const std::size_t pred_c = r.confusion[0][c] + r.confusion[1][c];
    const std::size_t gold_c = r.confusion[c][0] + r.confusion[c][1];
    LabelMetrics& m = r.per_label[c];
    m.support = gold_c;
    m.precision = ratio(tp, pred_c);
    m.recall = ratio(tp, gold_c);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  r.accuracy = ratio(r.confusion[0][0] + r.confusion[1][1], r.total);
  return r;
}

std::string ClassifierReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["total"] = total;
  for (Label l : {Label::negative, Label::positive}) {
    const LabelMetrics& m = per_label[static_cast<std::size_t>(l)];
    j["per_label"][std::string(to_string(l))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
  }
  j["confusion"] = {{"gold_negative", {confusion[0][0], confusion[0][1]}},
                    {"gold_positive", {confusion[1][0], confusion[1][1]}}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Training

LabelledSet labelled_set(const Corpus& corpus, const Vocabulary& vocab) {
  LabelledSet out;
  for (const Review& r : corpus.reviews) {
    if (!r.label) throw DataError("classifier data: review without label");
    out.inputs.push_back(r.token_ids ? *r.token_ids : vocab.tokenize(r.text));
    out.labels.push_back(*r.label);
  }
  return out;
}

double accuracy(const ClassifierModel& model, const LabelledSet& data) {
  if (data.inputs.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.inputs.size(); ++i) hits += predict(model, data.inputs[i]).label == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(data.inputs.size());
}

ClassifierLog train_classifier(ClassifierModel& model, const LabelledSet& train, const LabelledSet& val,
                               const ClassifierOptions& opts) {
  if (train.inputs.size() != train.labels.size() || val.inputs.size() != val.labels.size())
    throw ContractError("train_classifier: inputs and labels differ in length");
  if (train.inputs.empty()) throw ContractError("train_classifier: empty training set");
  const bool has_both = std::find(train.labels.begin(), train.labels.end(), Label::positive) != train.labels.end() &&
                        std::find(train.labels.begin(), train.labels.end(), Label::negative) != train.labels.end();
  if (!has_both) throw ContractError("train_classifier: training set holds a single class");
  if (opts.batch_size == 0) throw ContractError("train_classifier: batch_size must be positive");

  std::vector<Tensor> params;
  for (const auto& [name, t] : model.params()) params.push_back(t);
  std::vector<std::vector<double>> velocity;
  for (const Tensor& p : params) velocity.emplace_back(p.numel(), 0.0);
  auto snapshot = [&params] {
    std::vector<std::vector<double>> s;
    for (const Tensor& p : params) s.emplace_back(p.data().begin(), p.data().end());
    return s;
  };

  const LabelledSet& monitor = val.inputs.empty() ? train : val;
  ClassifierLog log;
  log.initial_val_accuracy = accuracy(model, monitor);
  log.best_val_accuracy = log.initial_val_accuracy;
  auto best = snapshot();

  const Rng root(opts.seed);
  std::vector<std::size_t> order(train.inputs.size());
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = root.split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += opts.batch_size) {
      const std::size_t end = std::min(order.size(), b + opts.batch_size);
      const double weight = 1.0 / static_cast<double>(end - b);
      for (std::size_t k = b; k < end; ++k) {
        const TokenId target[] = {static_cast<TokenId>(train.labels[order[k]])};
        const Tensor loss = cross_entropy(model.logits(train.inputs[order[k]]), target);
        epoch_loss += loss.item();
        backward(scale(loss, weight));
      }
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) continue;
        auto w = params[i].mutable_data();
        auto g = params[i].grad();
        for (std::size_t j = 0; j < w.size(); ++j) {
          velocity[i][j] = opts.momentum * velocity[i][j] + g[j];
          w[j] -= opts.learning_rate * velocity[i][j];
        }
        params[i].clear_grad();
      }
    }

    ClassifierEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(order.size());
    rec.val_accuracy = accuracy(model, monitor);
    log.epochs.push_back(rec);
    if (rec.val_accuracy > log.best_val_accuracy) {
      log.best_val_accuracy = rec.val_accuracy;
      log.best_epoch = epoch;
      best = snapshot();
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    std::copy(best[i].begin(), best[i].end(), w.begin());
  }
  return log;
}

}  // namespace plm
