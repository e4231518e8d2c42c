#include "plm/eval.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"

namespace plm {

WordCorpus words_of(const Corpus& corpus) {
  WordCorpus out;
  out.reserve(corpus.size());
  for (const Review& r : corpus.reviews) {
    std::istringstream in(r.text);
    Words w;
    for (std::string t; in >> t;) w.push_back(t);
    out.push_back(std::move(w));
  }
  return out;
}

double perplexity(const NllScorer& scorer, const Sequences& corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : corpus) {
    if (seq.empty()) continue;
    for (double nll : scorer(seq)) total += nll;
    count += seq.size();
  }
  if (count == 0) throw ContractError("perplexity: empty corpus");
  return std::exp(total / static_cast<double>(count));
}

double perplexity(const LmModel& model, const Sequences& corpus) {
  return perplexity([&model](std::span<const TokenId> x) { return token_nlls(model, x); }, corpus);
}

NgramSet ngram_set(const WordCorpus& texts, std::size_t n) {
  if (n == 0) throw ContractError("ngram_set: n must be at least 1");
  NgramSet out;
  out.n = n;
  for (const Words& w : texts) {
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      std::string key = w[i];
      for (std::size_t j = 1; j < n; ++j) (key += '\x1f') += w[i + j];
      out.grams.insert(std::move(key));
      ++out.total_count;
    }
  }
  return out;
}

double distinct_n(const WordCorpus& texts, std::size_t n) {
  const NgramSet s = ngram_set(texts, n);
  if (s.total_count == 0) throw NumericError("distinct_n: no text holds " + std::to_string(n) + " tokens");
  return static_cast<double>(s.grams.size()) / static_cast<double>(s.total_count);
}

double ngram_overlap(const WordCorpus& generated, const WordCorpus& reference, std::size_t n) {
  const NgramSet gen = ngram_set(generated, n);
  if (gen.grams.empty()) throw NumericError("ngram_overlap: generated corpus has no " + std::to_string(n) + "-grams");
  const NgramSet ref = ngram_set(reference, n);
  std::size_t shared = 0;
  for (const auto& g : gen.grams) shared += ref.grams.count(g);
  return 100.0 * static_cast<double>(shared) / static_cast<double>(gen.grams.size());
}

Embedder table_embedder(const Tensor& table, const Vocabulary& vocab) {
  return [table, &vocab](const Words& words) {
    std::vector<std::vector<double>> out;
    const std::size_t d = table.cols();
    for (const auto& w : words) {
      const auto row = static_cast<std::size_t>(vocab.id(w));
      const auto data = table.data().subspan(row * d, d);
      out.emplace_back(data.begin(), data.end());
    }
    return out;
  };
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na > 0.0 && nb > 0.0 ? dot / std::sqrt(na * nb) : 0.0;
}

}  // namespace

SimilarityScore greedy_match_similarity(const WordCorpus& candidates, const WordCorpus& references,
                                        const Embedder& embedder) {
  if (candidates.size() != references.size())
    throw ContractError("greedy_match_similarity: candidate and reference corpora differ in size");
  SimilarityScore s;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (candidates[i].empty() || references[i].empty()) {
      ++s.skipped;
      continue;
    }
    const auto c = embedder(candidates[i]), r = embedder(references[i]);
    std::vector<double> best_c(c.size(), -1.0), best_r(r.size(), -1.0);
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = 0; b < r.size(); ++b) {
        const double sim = cosine(c[a], r[b]);
        best_c[a] = std::max(best_c[a], sim);
        best_r[b] = std::max(best_r[b], sim);
      }
    double p = 0.0, rc = 0.0;
    for (double v : best_c) p += v / static_cast<double>(best_c.size());
    for (double v : best_r) rc += v / static_cast<double>(best_r.size());
    s.precision += p;
    s.recall += rc;
    s.f1 += p + rc != 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    ++s.pairs;
  }
  if (s.pairs == 0) throw ContractError("greedy_match_similarity: every pair has an empty side");
  const double n = static_cast<double>(s.pairs);
  s.precision /= n;
  s.recall /= n;
  s.f1 /= n;
  return s;
}

Explanation lime_explain(const ProbabilityFn& classify, std::span<const TokenId> tokens, std::size_t target,
                         const LimeOptions& opts) {
  if (opts.num_samples < 10) throw ContractError("lime_explain: need at least 10 samples");
  if (tokens.empty()) throw ContractError("lime_explain: text has no tokens");
  if (!(opts.kernel_width > 0.0)) throw ContractError("lime_explain: kernel_width must be positive");
  const std::size_t m = tokens.size(), n = opts.num_samples;

  Eigen::MatrixXd x(n, m);
  Eigen::VectorXd y(n), w(n);
  Rng root(opts.seed);
  std::vector<TokenId> kept;
  for (std::size_t s = 0; s < n; ++s) {
    Rng rng = root.split(s);
    kept.clear();
    for (std::size_t j = 0; j < m; ++j) {
      const bool keep = s == 0 || rng.uniform() < 0.5;
      x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = keep ? 1.0 : 0.0;
      if (keep) kept.push_back(tokens[j]);
    }
    const auto probs = classify(kept);
    if (target >= probs.size()) throw ContractError("lime_explain: target class out of range");
    y(static_cast<Eigen::Index>(s)) = probs[target];
    // Cosine distance between the mask and the all-ones mask.
    const double d = kept.empty() ? 1.0 : 1.0 - std::sqrt(static_cast<double>(kept.size()) / static_cast<double>(m));
    w(static_cast<Eigen::Index>(s)) = std::exp(-d * d / (opts.kernel_width * opts.kernel_width));
  }

  const double wsum = w.sum();
  const Eigen::RowVectorXd x_mean = (w.transpose() * x) / wsum;
  const double y_mean = w.dot(y) / wsum;
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::MatrixXd xw = xc.array().colwise() * w.array();
  Eigen::MatrixXd gram = xw.transpose() * xc;
  gram.diagonal().array() += opts.ridge_alpha;
  const Eigen::VectorXd beta = gram.ldlt().solve(xw.transpose() * yc);

  Explanation e;
  e.tokens.assign(tokens.begin(), tokens.end());
  e.weights.assign(beta.data(), beta.data() + beta.size());
  e.intercept = y_mean - x_mean.dot(beta);
  const Eigen::VectorXd resid = yc - xc * beta;
  const double ss_res = (w.array() * resid.array().square()).sum();
  const double ss_tot = (w.array() * yc.array().square()).sum();
  e.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return e;
}

ProbabilityFn classifier_probabilities(const ClassifierModel& model) {
  return [&model](std::span<const TokenId> ids) {
    const Prediction p = predict(model, ids);
    return std::vector<double>{p.probs[0], p.probs[1]};
  };
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  if (classifier) j["classifier metrics"] = nlohmann::ordered_json::parse(classifier->to_json());
  if (similarity)
    j["similarity"] = {{"precision", similarity->precision},
                       {"recall", similarity->recall},
                       {"f1", similarity->f1},
                       {"pairs", similarity->pairs},
                       {"skipped", similarity->skipped}};
  nlohmann::ordered_json quality = nlohmann::ordered_json::object();
  if (perplexity) quality["perplexity"] = *perplexity;
  for (const auto& [n, v] : distinct) quality["dist_" + std::to_string(n)] = v;
  if (!quality.empty()) j["quality/diversity"] = quality;
  if (!overlap.empty()) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [n, v] : overlap) o[std::to_string(n) + "-gram"] = v;
    j["overlap"] = o;
  }
  return j.dump(2);
}

}  // namespace plm
