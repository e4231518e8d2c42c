#include "plm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "contractions.hpp"
#include "json.hpp"
#include "plm/error.hpp"
#include "plm/rng.hpp"

namespace plm {

std::string_view to_string(Label label) { return label == Label::positive ? "positive" : "negative"; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Label parse_label(std::string_view s) {
  if (s == "positive") return Label::positive;
  if (s == "negative") return Label::negative;
  throw DataError("unknown label '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

Label opposite(Label label) { return label == Label::positive ? Label::negative : Label::positive; }

std::size_t Corpus::count(Label label) const {
  return static_cast<std::size_t>(std::count_if(reviews.begin(), reviews.end(),
                                                [label](const Review& r) { return r.label == label; }));
}

Corpus Corpus::filter(Label label) const {
  Corpus out{{}, split, provenance};
  for (const Review& r : reviews)
    if (r.label == label) out.reviews.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Cleaning

namespace {

bool is_tag_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '/' || c == '!' || c == '?'; }

std::string strip_tags(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '<' && i + 1 < s.size() && is_tag_start(s[i + 1])) {
      const std::size_t close = s.find('>', i + 1);
      const std::size_t reopen = s.find('<', i + 1);
      if (close != std::string_view::npos && (reopen == std::string_view::npos || close < reopen)) {
        out += ' ';
        i = close;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

std::string decode_entities(std::string_view s) {
  static const std::map<std::string, std::string, std::less<>> kNamed = {
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "},
      {"rsquo", "'"}, {"lsquo", "'"}};
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '&') {
      const std::size_t semi = s.find(';', i + 1);
      if (semi != std::string_view::npos && semi - i <= 10 && semi > i + 1) {
        const std::string_view body = s.substr(i + 1, semi - i - 1);
        bool valid = true;
        std::string replacement = " ";
        if (body[0] == '#') {
          const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
          const std::string_view digits = body.substr(hex ? 2 : 1);
          valid = !digits.empty() && std::all_of(digits.begin(), digits.end(), [hex](char c) {
            return hex ? std::isxdigit(static_cast<unsigned char>(c)) : std::isdigit(static_cast<unsigned char>(c));
          });
          if (valid) {
            const long code = std::stol(std::string(digits), nullptr, hex ? 16 : 10);
            if (code == 39 || code == 8217 || code == 8216) replacement = "'";
            else if (code > 0 && code < 128) replacement = std::string(1, static_cast<char>(code));
          }
        } else {
          valid = std::all_of(body.begin(), body.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); });
          if (valid)
            if (auto it = kNamed.find(body); it != kNamed.end()) replacement = it->second;
        }
        if (valid) {
          out += replacement;
          i = semi;
          continue;
        }
      }
    }
    out += s[i];
  }
  return out;
}

// Curly quotes and backticks become ASCII apostrophes; other non-ASCII bytes
// become spaces.
std::string normalize_bytes(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(s[i + 2]) == 0x98 || static_cast<unsigned char>(s[i + 2]) == 0x99)) {
      out += '\'';
      i += 2;
    } else if (c == '`') {
      out += '\'';
    } else if (c >= 0x80) {
      out += ' ';
    } else {
      out += static_cast<char>(std::tolower(c));
    }
  }
  return out;
}

bool is_word_char(char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\''; }

std::string expand_contractions(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (!is_word_char(s[i])) {
      out += s[i++];
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && is_word_char(s[j])) ++j;
    std::string_view word(s.data() + i, j - i);
    // Leading apostrophes belong to forms like "'tis"; trailing ones are quotes.
    while (word.size() > 1 && word.back() == '\'') word.remove_suffix(1);
    if (auto full = detail::expand_contraction(word)) {
      out += *full;
    } else if (word.size() > 1 && word.front() == '\'') {
      std::string_view rest = word.substr(1);
      auto inner = detail::expand_contraction(rest);
      out += inner ? *inner : std::string(rest);
    } else {
      out += word;
    }
    i = j;
  }
  return out;
}

}  // namespace

std::string clean_text(std::string_view raw) {
  std::string s = normalize_bytes(decode_entities(strip_tags(raw)));
  s = expand_contractions(s);
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (!keep) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += c;
  }
  return out;
}

LabelDecision label_by_rating(std::optional<int> rating) {
  if (!rating) return LabelDecision::discard;
  if (*rating < 1 || *rating > 5) throw DataError("rating " + std::to_string(*rating) + " outside 1..5");
  if (*rating > 3) return LabelDecision::positive;
  if (*rating < 3) return LabelDecision::negative;
  return LabelDecision::discard;
}

Corpus dedup_exact(const Corpus& corpus) {
  Corpus out{{}, corpus.split, corpus.provenance};
  std::unordered_set<std::string> seen;
  for (const Review& r : corpus.reviews)
    if (seen.insert(r.text).second) out.reviews.push_back(r);
  return out;
}

std::size_t token_length(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::size_t length_bin(std::size_t tokens) { return std::min<std::size_t>(tokens / 5, 39); }

Corpus length_preserving_downsample(const Corpus& pool, std::size_t target_size, std::uint64_t seed) {
  if (target_size > pool.size())
    throw ContractError("downsample: target " + std::to_string(target_size) + " exceeds pool size " +
                        std::to_string(pool.size()));
  Corpus out{{}, pool.split, pool.provenance};
  if (target_size == 0) return out;

  std::vector<std::vector<std::size_t>> bins(40);
  for (std::size_t i = 0; i < pool.size(); ++i) bins[length_bin(token_length(pool.reviews[i].text))].push_back(i);

  const double n = static_cast<double>(pool.size());
  std::vector<std::size_t> quota(bins.size(), 0);
  std::vector<double> remainder(bins.size(), 0.0);
  std::size_t assigned = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    const double expected = static_cast<double>(target_size) * static_cast<double>(bins[b].size()) / n;
    quota[b] = std::min(bins[b].size(), static_cast<std::size_t>(expected));
    remainder[b] = quota[b] < bins[b].size() ? expected - static_cast<double>(quota[b]) : 0.0;
    assigned += quota[b];
  }

  Rng rng(seed);
  Rng remainder_rng = rng.split(0);
  while (assigned < target_size) {
    double total = std::accumulate(remainder.begin(), remainder.end(), 0.0);
    std::size_t pick = bins.size();
    if (total > 0.0) {
      double u = remainder_rng.uniform() * total;
      for (std::size_t b = 0; b < bins.size(); ++b) {
        if (remainder[b] <= 0.0) continue;
        pick = b;
        if (u < remainder[b]) break;
        u -= remainder[b];
      }
    } else {
      // Rounding left slots without fractional claims: fall back to spare capacity.
      for (std::size_t b = 0; b < bins.size(); ++b)
        if (quota[b] < bins[b].size()) { pick = b; break; }
    }
    ++quota[pick];
    remainder[pick] = 0.0;
    ++assigned;
  }

  std::vector<std::size_t> chosen;
  chosen.reserve(target_size);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    auto members = bins[b];
    Rng bin_rng = rng.split(1 + b);
    for (std::size_t k = 0; k < quota[b]; ++k) {
      const std::size_t j = k + static_cast<std::size_t>(bin_rng.below(members.size() - k));
      std::swap(members[k], members[j]);
      chosen.push_back(members[k]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) out.reviews.push_back(pool.reviews[i]);
  return out;
}

DatasetSplits split_corpus(const Corpus& corpus, std::uint64_t seed, std::size_t train_parts,
                           std::size_t validation_parts, std::size_t test_parts) {
  const std::size_t parts = train_parts + validation_parts + test_parts;
  if (parts == 0) throw ContractError("split_corpus: ratio parts sum to zero");
  DatasetSplits out;
  out.train = {{}, Split::train, corpus.provenance};
  out.validation = {{}, Split::validation, corpus.provenance};
  out.test = {{}, Split::test, corpus.provenance};
  Rng rng(seed);
  for (Label label : {Label::positive, Label::negative}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (corpus.reviews[i].label == label) idx.push_back(i);
    Rng label_rng = rng.split(static_cast<std::uint64_t>(label));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[label_rng.below(i)]);
    const std::size_t n_val = idx.size() * validation_parts / parts;
    const std::size_t n_test = idx.size() * test_parts / parts;
    const std::size_t n_train = idx.size() - n_val - n_test;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      Corpus& dst = k < n_train ? out.train : (k < n_train + n_val ? out.validation : out.test);
      dst.reviews.push_back(corpus.reviews[idx[k]]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  static const std::vector<std::string> kReservedTokens = {"<pad>", "</s>", "<s>", "<unk>"};
  if (tokens.empty()) tokens = kReservedTokens;
  if (tokens.size() < kReserved || !std::equal(kReservedTokens.begin(), kReservedTokens.end(), tokens.begin()))
    throw DataError("vocabulary: reserved tokens must occupy ids 0-3");
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
      throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ContractError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
  std::vector<TokenId> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) ids.push_back(id(word));
  return ids;
}

std::string Vocabulary::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId t : ids) {
    if (!out.empty()) out += ' ';
    out += token(t);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("vocabulary: cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("vocabulary: cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

Vocabulary build_vocab(const Corpus& corpus, std::size_t max_size) {
  if (max_size < 5) throw ContractError("build_vocab: max_size must be at least 5");
  std::unordered_map<std::string, std::size_t> freq;
  for (const Review& r : corpus.reviews) {
    std::istringstream in(r.text);
    std::string word;
    while (in >> word) ++freq[word];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens = {"<pad>", "</s>", "<s>", "<unk>"};
  for (const auto& [word, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(word);
  }
  return Vocabulary(std::move(tokens));
}

void tokenize_corpus(Corpus& corpus, const Vocabulary& vocab) {
  for (Review& r : corpus.reviews) r.token_ids = vocab.tokenize(r.text);
}

std::vector<TokenId> training_sequence(const Review& review, const Vocabulary& vocab, std::size_t max_tokens) {
  std::vector<TokenId> ids = review.token_ids ? *review.token_ids : vocab.tokenize(review.text);
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

// ---------------------------------------------------------------------------
// JSON lines

Corpus read_corpus(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  Corpus corpus{{}, split, path.filename().string()};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string())
        throw DataError(path.string(), line_no, "record needs a string 'text' field");
      Review r;
      r.text = j["text"].get<std::string>();
      if (j.contains("rating") && !j["rating"].is_null()) {
        if (!j["rating"].is_number_integer()) throw DataError(path.string(), line_no, "'rating' must be an integer or null");
        r.rating = j["rating"].get<int>();
      }
      if (j.contains("label") && !j["label"].is_null()) r.label = parse_label(j["label"].get<std::string>());
      if (j.contains("source_model") && j["source_model"].is_string()) r.source_model = j["source_model"].get<std::string>();
      corpus.reviews.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string(), line_no, e.what());
    } catch (const DataError& e) {
      if (std::string(e.what()).starts_with(path.string())) throw;
      throw DataError(path.string(), line_no, e.what());
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  for (const Review& r : corpus.reviews) {
    nlohmann::ordered_json j;
    j["text"] = r.text;
    j["rating"] = r.rating ? nlohmann::ordered_json(*r.rating) : nlohmann::ordered_json(nullptr);
    j["label"] = r.label ? nlohmann::ordered_json(std::string(to_string(*r.label))) : nlohmann::ordered_json(nullptr);
    if (r.source_model) j["source_model"] = *r.source_model;
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic reviews

namespace {

const std::vector<std::string> kSharedWords = {
    "the", "movie", "film", "this", "and", "a", "of", "to", "it", "was", "is", "i", "in", "story",
    "with", "for", "that", "actor", "scene", "plot", "watched", "series", "dvd", "season", "episode",
    "show", "cast", "director", "characters", "ending", "music", "bought", "version", "disc", "copy",
    "time", "family", "first", "old", "new", "one", "two", "some", "very", "all", "on", "my", "at",
    "as", "but", "about", "from", "by", "an", "be", "they", "there", "would", "what", "just", "more",
    "like", "when", "out", "who", "watch", "seen", "saw", "again", "part", "kids", "years", "night",
    "book", "original", "sequel", "special", "effects", "role", "performance", "script", "minutes",
    "picture", "sound", "quality", "box", "set", "collection", "release", "price", "home", "friends",
    "wife", "husband", "children", "classic", "western", "drama", "comedy", "action", "horror",
};

const std::vector<std::string> kPositiveWords = {
    "great", "excellent", "wonderful", "loved", "brilliant", "amazing", "beautiful", "superb",
    "fantastic", "enjoyed", "favorite", "perfect", "outstanding", "delightful", "masterpiece",
    "charming", "touching", "recommend", "gem", "terrific", "lovely", "best", "fun", "awesome",
    "stunning", "memorable", "highly", "heartwarming", "magnificent", "impressive", "engaging",
    "hilarious", "classy", "treasure", "inspiring", "marvelous", "splendid", "fabulous", "joy", "glad",
};

const std::vector<std::string> kNegativeWords = {
    "boring", "awful", "terrible", "waste", "worst", "poor", "bad", "disappointing", "horrible",
    "dull", "stupid", "annoying", "ridiculous", "mess", "lame", "pointless", "junk", "garbage",
    "refund", "weak", "unwatchable", "predictable", "cheap", "sloppy", "tedious", "disappointed",
    "hated", "mediocre", "dreadful", "painful", "broken", "defective", "wasted", "avoid", "trash",
    "dumb", "bland", "lousy", "regret", "flawed",
};

const std::vector<std::vector<std::string>> kSharedPhrases = {
    {"i", "watched", "this", "movie", "with", "my", "family"},
    {"the", "story", "of", "the", "film"},
    {"one", "of", "the", "characters"},
    {"the", "first", "season", "of", "the", "show"},
    {"bought", "this", "dvd", "for", "my", "wife"},
    {"the", "picture", "and", "sound", "quality"},
    {"when", "it", "was", "on", "dvd"},
    {"about", "two", "years", "old"},
};

const std::vector<std::vector<std::string>> kPositivePhrases = {
    {"one", "of", "the", "best", "films", "i", "have", "seen"},
    {"i", "highly", "recommend", "this", "movie"},
    {"a", "great", "cast", "and", "a", "wonderful", "story"},
    {"loved", "every", "minute", "of", "it"},
    {"my", "favorite", "show", "of", "all", "time"},
};

const std::vector<std::vector<std::string>> kNegativePhrases = {
    {"a", "complete", "waste", "of", "time"},
    {"do", "not", "buy", "this", "dvd"},
    {"the", "worst", "movie", "i", "have", "seen"},
    {"i", "want", "a", "refund"},
    {"the", "plot", "was", "boring", "and", "predictable"},
};

std::string syllable_word(std::size_t index) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u"};
  std::string w;
  std::size_t x = index;
  for (int syl = 0; syl < 3; ++syl) {
    w += kOnsets[x % 14];
    x /= 14;
    w += kVowels[x % 5];
    x /= 5;
  }
  return w;
}

// Zipf weights 1/(rank+1)^s.
std::vector<double> zipf_cdf(std::size_t n, double s) {
  std::vector<double> cdf(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
    cdf[i] = acc;
  }
  for (double& v : cdf) v /= acc;
  return cdf;
}

std::size_t draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = rng.uniform();
  return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) % cdf.size();
}

}  // namespace

SynthLexicon synth_lexicon(const SynthConfig& config) {
  SynthLexicon lex;
  std::set<std::string> taken;
  auto take = [&](const std::vector<std::string>& src, std::size_t n, std::vector<std::string>& dst, std::size_t salt) {
    for (const auto& w : src) {
      if (dst.size() >= n) break;
      if (taken.insert(w).second) dst.push_back(w);
    }
    for (std::size_t k = 0; dst.size() < n; ++k) {
      std::string w = syllable_word(salt * 100003 + k);
      if (taken.insert(w).second) dst.push_back(w);
    }
  };
  // Phrase words that are not label-exclusive must be shared.
  std::vector<std::string> shared_seed = kSharedWords;
  for (const auto* phrases : {&kSharedPhrases, &kPositivePhrases, &kNegativePhrases})
    for (const auto& p : *phrases)
      for (const auto& w : p)
        if (std::find(kPositiveWords.begin(), kPositiveWords.end(), w) == kPositiveWords.end() &&
            std::find(kNegativeWords.begin(), kNegativeWords.end(), w) == kNegativeWords.end() &&
            std::find(shared_seed.begin(), shared_seed.end(), w) == shared_seed.end())
          shared_seed.push_back(w);
  take(shared_seed, std::max(config.shared_vocab, shared_seed.size()), lex.shared, 1);
  take(kPositiveWords, config.exclusive_vocab, lex.positive, 2);
  take(kNegativeWords, config.exclusive_vocab, lex.negative, 3);

  auto admissible = [&](const std::vector<std::string>& phrase, const std::vector<std::string>& own) {
    return std::all_of(phrase.begin(), phrase.end(), [&](const std::string& w) {
      return std::find(lex.shared.begin(), lex.shared.end(), w) != lex.shared.end() ||
             std::find(own.begin(), own.end(), w) != own.end();
    });
  };
  lex.shared_phrases = kSharedPhrases;
  for (const auto& p : kPositivePhrases)
    if (admissible(p, lex.positive)) lex.positive_phrases.push_back(p);
  for (const auto& p : kNegativePhrases)
    if (admissible(p, lex.negative)) lex.negative_phrases.push_back(p);
  return lex;
}

Corpus synth_corpus(const SynthConfig& config, std::uint64_t seed) {
  if (config.min_tokens == 0 || config.min_tokens > config.max_tokens)
    throw ContractError("synth_corpus: need 0 < min_tokens <= max_tokens");
  if (config.exclusive_vocab == 0) throw ContractError("synth_corpus: exclusive_vocab must be positive");
  const SynthLexicon lex = synth_lexicon(config);
  const auto shared_cdf = zipf_cdf(lex.shared.size(), config.zipf_exponent);
  const auto excl_cdf = zipf_cdf(config.exclusive_vocab, config.zipf_exponent);

  Corpus corpus{{}, Split::train, "synthetic"};
  Rng root(seed);
  for (Label label : {Label::positive, Label::negative}) {
    const auto& own = lex.exclusive(label);
    const auto& own_phrases = label == Label::positive ? lex.positive_phrases : lex.negative_phrases;
    for (std::size_t i = 0; i < config.reviews_per_label; ++i) {
      Rng rng = root.split((static_cast<std::uint64_t>(label) << 40) | i);
      const std::size_t length =
          config.min_tokens + static_cast<std::size_t>(rng.below(config.max_tokens - config.min_tokens + 1));
      std::vector<std::string> words;
      while (words.size() < length) {
        const double u = rng.uniform();
        if (u < config.phrase_rate) {
          const bool own_phrase = !own_phrases.empty() && rng.uniform() < 0.5;
          const auto& bank = own_phrase ? own_phrases : lex.shared_phrases;
          const auto& phrase = bank[rng.below(bank.size())];
          words.insert(words.end(), phrase.begin(), phrase.end());
        } else if (u < config.phrase_rate + config.exclusive_rate) {
          words.push_back(own[draw(excl_cdf, rng)]);
        } else {
          words.push_back(lex.shared[draw(shared_cdf, rng)]);
        }
      }
      words.resize(length);
      Review r;
      for (const auto& w : words) r.text += (r.text.empty() ? "" : " ") + w;
      r.label = label;
      r.rating = label == Label::positive ? 4 + static_cast<int>(rng.below(2)) : 1 + static_cast<int>(rng.below(2));
      corpus.reviews.push_back(std::move(r));
    }
  }
  return corpus;
}

}  // namespace plm
