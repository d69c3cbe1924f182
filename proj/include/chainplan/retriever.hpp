#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chainplan/core.hpp"
#include "chainplan/registry.hpp"

namespace chainplan {

class RetrievalError : public Error {
 public:
  using Error::Error;
};

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string id() const = 0;
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw RetrievalError("cosine: dimension mismatch (" + std::to_string(a.dimension()) + " vs " +
                         std::to_string(b.dimension()) + ")");
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0 || nb == 0) throw RetrievalError("cosine: zero vector");
  double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

// Offline provider: signed feature hashing of words and character trigrams,
// L2-normalized. Deterministic for a given dimension and seed.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dimension = 64, std::uint64_t seed = 0x5eed)
      : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw RetrievalError("embedding dimension must be positive");
  }

  EmbeddingVector embed(std::string_view text) const override {
    EmbeddingVector v;
    v.values.assign(dimension_, 0.0);
    bool any = false;
    for (const auto& word : words(text)) {
      add(v, word, 1.0);
      std::string padded = "#" + word + "#";
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(v, padded.substr(i, 3), 0.5);
      any = true;
    }
    if (!any) add(v, text, 1.0);
    double norm = 0;
    for (double x : v.values) norm += x * x;
    if (norm == 0) {
      v.values[0] = 1.0;
    } else {
      norm = std::sqrt(norm);
      for (double& x : v.values) x /= norm;
    }
    return v;
  }

  std::size_t dimension() const override { return dimension_; }
  std::string id() const override { return "hash-ngram-" + std::to_string(dimension_) + "-" + std::to_string(seed_); }

 private:
  static std::vector<std::string> words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
      unsigned char c = static_cast<unsigned char>(ch);
      if (std::isalnum(c)) {
        cur += static_cast<char>(std::tolower(c));
      } else if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
  }

  void add(EmbeddingVector& v, std::string_view feature, double weight) const {
    std::uint64_t h = fnv1a64(feature, seed_ ^ 0xcbf29ce484222325ULL);
    double sign = (h >> 63) ? -1.0 : 1.0;
    v.values[h % dimension_] += sign * weight;
  }

  std::size_t dimension_;
  std::uint64_t seed_;
};

enum class CorpusKind { kTools, kExamples };

inline const char* to_string(CorpusKind k) { return k == CorpusKind::kTools ? "tools" : "examples"; }

struct CorpusItem {
  std::string id;
  std::string text;
  EmbeddingVector vector;
};

struct Corpus {
  CorpusKind kind = CorpusKind::kTools;
  std::string provider_id;
  std::size_t dimension = 0;
  std::string registry_version;
  std::vector<CorpusItem> items;

  bool empty() const { return items.empty(); }
};

struct TextItem {
  std::string id;
  std::string text;
};

// Text embedded for a tool: "name: description", then each argument's name
// and description.
inline std::string tool_embedding_text(const ToolSpec& tool) {
  std::string out = tool.name + ": " + tool.description;
  for (const auto& a : tool.arguments) out += "\n" + a.name + ": " + a.description;
  return out;
}

inline std::vector<TextItem> tool_items(const Registry& registry) {
  std::vector<TextItem> out;
  for (const auto& t : registry.tools()) out.push_back({t.name, tool_embedding_text(t)});
  return out;
}

inline Corpus index_corpus(const EmbeddingProvider& provider, const std::vector<TextItem>& items,
                           CorpusKind kind = CorpusKind::kTools, std::string registry_version = {}) {
  Corpus corpus;
  corpus.kind = kind;
  corpus.provider_id = provider.id();
  corpus.dimension = provider.dimension();
  corpus.registry_version = std::move(registry_version);
  std::unordered_set<std::string> ids;
  for (const auto& item : items) {
    if (!ids.insert(item.id).second) throw RetrievalError("duplicate corpus id '" + item.id + "'");
    if (item.text.empty()) throw RetrievalError("corpus item '" + item.id + "' has empty text");
    EmbeddingVector v;
    try {
      v = provider.embed(item.text);
    } catch (const std::exception& e) {
      throw RetrievalError("embedding failed for item '" + item.id + "': " + e.what());
    }
    if (v.dimension() != corpus.dimension) {
      throw RetrievalError("provider returned dimension " + std::to_string(v.dimension()) + " for item '" + item.id +
                           "', expected " + std::to_string(corpus.dimension));
    }
    for (double x : v.values) {
      if (!std::isfinite(x)) throw RetrievalError("non-finite embedding for item '" + item.id + "'");
    }
    corpus.items.push_back({item.id, item.text, std::move(v)});
  }
  return corpus;
}

struct ScoredItem {
  std::string id;
  double score = 0;

  bool operator==(const ScoredItem&) const = default;
};

// k highest-cosine items, descending by score, ties by ascending id.
inline std::vector<ScoredItem> retrieve_top_k(std::string_view query, const Corpus& corpus,
                                              const EmbeddingProvider& provider, std::size_t k) {
  if (k == 0) throw RetrievalError("k must be positive");
  if (corpus.empty()) throw RetrievalError("cannot retrieve from an empty corpus");
  if (corpus.provider_id != provider.id()) {
    throw RetrievalError("corpus was indexed with provider '" + corpus.provider_id + "', not '" + provider.id() + "'");
  }
  EmbeddingVector q = provider.embed(query);
  std::vector<ScoredItem> scored;
  scored.reserve(corpus.items.size());
  for (const auto& item : corpus.items) scored.push_back({item.id, cosine(q, item.vector)});
  auto better = [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  };
  std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
  scored.resize(take);
  return scored;
}

// Fraction of `needed` found among the first n retrieved ids.
inline double top_n_recall(const std::vector<std::string>& retrieved, const std::set<std::string>& needed, std::size_t n) {
  if (needed.empty()) throw RetrievalError("top_n_recall: needed set is empty");
  std::set<std::string> head(retrieved.begin(), retrieved.begin() + static_cast<std::ptrdiff_t>(std::min(n, retrieved.size())));
  std::size_t hit = 0;
  for (const auto& id : needed) hit += head.count(id);
  return static_cast<double>(hit) / static_cast<double>(needed.size());
}

inline nlohmann::json corpus_to_json(const Corpus& c) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : c.items) items.push_back({{"id", it.id}, {"text", it.text}, {"vector", it.vector.values}});
  return {{"kind", to_string(c.kind)},
          {"provider", c.provider_id},
          {"dimension", c.dimension},
          {"registry_version", c.registry_version},
          {"items", std::move(items)}};
}

// Rejects caches built for a different registry version or provider.
inline Corpus corpus_from_json(const nlohmann::json& j, const std::string& expected_registry_version,
                               const std::string& expected_provider = {}) {
  Corpus c;
  try {
    c.kind = j.value("kind", std::string("tools")) == "examples" ? CorpusKind::kExamples : CorpusKind::kTools;
    c.provider_id = j.at("provider").get<std::string>();
    c.dimension = j.at("dimension").get<std::size_t>();
    c.registry_version = j.at("registry_version").get<std::string>();
    for (const auto& it : j.at("items")) {
      CorpusItem item{it.at("id").get<std::string>(), it.at("text").get<std::string>(), {}};
      item.vector.values = it.at("vector").get<std::vector<double>>();
      if (item.vector.dimension() != c.dimension) throw RetrievalError("corpus item '" + item.id + "' has wrong dimension");
      c.items.push_back(std::move(item));
    }
  } catch (const nlohmann::json::exception& e) {
    throw RetrievalError(std::string("malformed corpus cache: ") + e.what());
  }
  if (c.registry_version != expected_registry_version) {
    throw RetrievalError("stale corpus cache: registry version " + c.registry_version + ", expected " +
                         expected_registry_version);
  }
  if (!expected_provider.empty() && c.provider_id != expected_provider) {
    throw RetrievalError("corpus cache built with provider '" + c.provider_id + "', expected '" + expected_provider + "'");
  }
  return c;
}

}  // namespace chainplan
