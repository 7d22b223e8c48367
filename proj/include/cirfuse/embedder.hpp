#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cirfuse/embedding_store.hpp"

namespace cirfuse {

/// Source of unit-norm joint-space embeddings for raw text or image bytes.
/// Outputs are order-preserving: result[i] embeds inputs[i].
class Embedder {
 public:
  virtual ~Embedder() = default;

  virtual std::size_t dim() const = 0;
  virtual std::vector<Vector> embed_text(std::span<const std::string> inputs) = 0;
  /// Payloads are raw image bytes.
  virtual std::vector<Vector> embed_image(std::span<const std::string> payloads) = 0;
  /// Endpoint description recorded in output provenance.
  virtual std::string describe() const = 0;
};

struct EmbedderConfig {
  std::string endpoint;  // "http://host:port[/prefix]" or "offline:<dir>"
  std::size_t dim = 0;
  std::chrono::milliseconds timeout{30000};
  std::size_t batch_size = 64;
  int retries = 2;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

/// Offline store: a directory holding "text.emb" and/or "image.emb"
/// embedding sets whose ids are content hashes of the inputs.
class OfflineEmbedder final : public Embedder {
 public:
  OfflineEmbedder(std::filesystem::path dir, std::size_t dim);

  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed_text(std::span<const std::string> inputs) override;
  std::vector<Vector> embed_image(std::span<const std::string> payloads) override;
  std::string describe() const override { return "offline:" + dir_.string(); }

 private:
  const EmbeddingSet& store(Modality modality);
  std::vector<Vector> lookup_all(Modality modality, std::span<const std::string> inputs);

  std::filesystem::path dir_;
  std::size_t dim_;
  std::mutex mutex_;
  std::optional<EmbeddingSet> text_;
  std::optional<EmbeddingSet> image_;
};

/// Key under which `input` is stored in an offline directory.
std::string offline_key(std::string_view input);

/// Adds (or replaces) entries in an offline store, creating it if needed.
void write_offline_entries(const std::filesystem::path& dir, Modality modality,
                           std::span<const std::string> inputs, std::span<const Vector> vectors);

struct HealthStatus {
  std::string status;
  std::size_t dim = 0;
  std::string model;
};

/// Client for the embedding service wire protocol (POST /v1/embed,
/// GET /v1/health). Each request opens its own connection, so one client
/// may be shared across threads.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(EmbedderConfig config);

  std::size_t dim() const override { return config_.dim; }
  std::vector<Vector> embed_text(std::span<const std::string> inputs) override;
  std::vector<Vector> embed_image(std::span<const std::string> payloads) override;
  std::string describe() const override { return config_.endpoint; }

  HealthStatus health() const;

 private:
  std::vector<Vector> embed(Modality modality, std::span<const std::string> wire_inputs);
  std::vector<Vector> embed_batch(Modality modality, std::span<const std::string> wire_inputs,
                                  std::size_t offset);

  EmbedderConfig config_;
  std::string host_;
  std::string prefix_;
};

std::string base64_encode(std::string_view bytes);

}  // namespace cirfuse
