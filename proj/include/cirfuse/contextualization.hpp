#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "cirfuse/embedder.hpp"
#include "cirfuse/embedding_store.hpp"

namespace cirfuse {

struct ContextualizationConfig {
  std::size_t n_phrases = 100;
  std::uint64_t rng_seed = 0;
};

/// One term per line, UTF-8; surrounding whitespace trimmed, blank lines dropped.
std::vector<std::string> load_terms(const std::filesystem::path& path);
std::string terms_fingerprint(std::span<const std::string> terms);

/// n_phrases strings, each "<term> <query>" or "<query> <term>". Terms are
/// drawn uniformly with replacement and the side is a fair coin per phrase.
std::vector<std::string> compose_phrases(const std::string& query_text,
                                         std::span<const std::string> corpus_terms,
                                         const ContextualizationConfig& cfg);

/// Mean of the centered phrase embeddings.
Vector contextualize(const std::string& query_text, std::span<const std::string> corpus_terms,
                     Embedder& embedder, const Vector& mu_text,
                     const ContextualizationConfig& cfg);

/// Contextualization disabled: the raw query embedding, centered.
Vector passthrough_text(const Vector& query_embedding, const Vector& mu_text);

/// Memoizes contextualize() per (query, corpus, config, embedder).
class ContextCache {
 public:
  Vector get_or_compute(const std::string& query_text, std::span<const std::string> corpus_terms,
                        Embedder& embedder, const Vector& mu_text,
                        const ContextualizationConfig& cfg);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, Vector> entries_;
};

}  // namespace cirfuse
