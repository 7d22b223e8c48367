#include "cirfuse/contextualization.hpp"

#include <fstream>
#include <random>

#include "cirfuse/calibration.hpp"
#include "cirfuse/error.hpp"
#include "cirfuse/fingerprint.hpp"

namespace cirfuse {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> load_terms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) terms.emplace_back(t);
  }
  return terms;
}

std::string terms_fingerprint(std::span<const std::string> terms) {
  Fnv1a h;
  for (const auto& t : terms) {
    h.update(t);
    h.update(std::string_view("\n"));
  }
  return h.hex();
}

std::vector<std::string> compose_phrases(const std::string& query_text,
                                         std::span<const std::string> corpus_terms,
                                         const ContextualizationConfig& cfg) {
  if (corpus_terms.empty()) throw Error(ErrorCode::EmptyCorpus, "contextualization corpus is empty");
  if (cfg.n_phrases == 0) throw Error(ErrorCode::InvalidArgument, "n_phrases must be at least 1");

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, corpus_terms.size() - 1);
  std::bernoulli_distribution prefix(0.5);

  std::vector<std::string> phrases;
  phrases.reserve(cfg.n_phrases);
  for (std::size_t i = 0; i < cfg.n_phrases; ++i) {
    const auto& term = corpus_terms[pick(rng)];
    phrases.push_back(prefix(rng) ? term + " " + query_text : query_text + " " + term);
  }
  return phrases;
}

Vector contextualize(const std::string& query_text, std::span<const std::string> corpus_terms,
                     Embedder& embedder, const Vector& mu_text,
                     const ContextualizationConfig& cfg) {
  const auto phrases = compose_phrases(query_text, corpus_terms, cfg);
  const auto embedded = embedder.embed_text(phrases);
  if (embedded.size() != phrases.size()) {
    throw Error(ErrorCode::EmbedderUnavailable, "embedder returned a partial batch");
  }
  Vector sum = Vector::Zero(mu_text.size());
  for (const auto& e : embedded) sum += center(e, mu_text);
  return sum / static_cast<double>(embedded.size());
}

Vector passthrough_text(const Vector& query_embedding, const Vector& mu_text) {
  return center(query_embedding, mu_text);
}

Vector ContextCache::get_or_compute(const std::string& query_text,
                                    std::span<const std::string> corpus_terms, Embedder& embedder,
                                    const Vector& mu_text, const ContextualizationConfig& cfg) {
  Fnv1a h;
  h.update(terms_fingerprint(corpus_terms));
  h.update(embedder.describe());
  h.update_value(cfg.n_phrases);
  h.update_value(cfg.rng_seed);
  h.update(std::as_bytes(std::span<const double>(mu_text.data(), static_cast<std::size_t>(mu_text.size()))));
  const auto key = h.hex() + "|" + query_text;
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  }
  Vector value = contextualize(query_text, corpus_terms, embedder, mu_text, cfg);
  std::lock_guard lock(mutex_);
  return entries_.emplace(key, std::move(value)).first->second;
}

std::size_t ContextCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace cirfuse
