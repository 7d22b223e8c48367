#include "cirfuse/embedder.hpp"

#include <cmath>

#include <httplib.h>

#include "cirfuse/error.hpp"
#include "cirfuse/fingerprint.hpp"
#include "cirfuse/json_io.hpp"

namespace cirfuse {

namespace {

constexpr std::string_view kOfflinePrefix = "offline:";

std::filesystem::path store_path(const std::filesystem::path& dir, Modality modality) {
  return dir / (std::string(modality_name(modality)) + ".emb");
}

void check_vector(const Vector& v, std::size_t dim, std::size_t index) {
  if (static_cast<std::size_t>(v.size()) != dim) {
    throw Error(ErrorCode::DimMismatch, "embedding for input #" + std::to_string(index) +
                                            " has length " + std::to_string(v.size()) +
                                            ", expected " + std::to_string(dim));
  }
  if (!v.allFinite()) {
    throw Error(ErrorCode::NonFiniteEntry, "embedding for input #" + std::to_string(index) +
                                               " has a non-finite entry");
  }
  if (std::abs(v.norm() - 1.0) > kUnitNormTolerance) {
    throw Error(ErrorCode::NotUnitNorm, "embedding for input #" + std::to_string(index) +
                                            " is not unit norm");
  }
}

}  // namespace

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
  if (config.dim == 0) throw Error(ErrorCode::InvalidArgument, "embedder dim must be positive");
  if (config.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be at least 1");
  if (config.endpoint.starts_with(kOfflinePrefix)) {
    return std::make_unique<OfflineEmbedder>(config.endpoint.substr(kOfflinePrefix.size()),
                                             config.dim);
  }
  return std::make_unique<HttpEmbedder>(config);
}

// ---------------------------------------------------------------- offline

std::string offline_key(std::string_view input) { return content_hash(input); }

OfflineEmbedder::OfflineEmbedder(std::filesystem::path dir, std::size_t dim)
    : dir_(std::move(dir)), dim_(dim) {
  if (!std::filesystem::is_directory(dir_)) {
    throw Error(ErrorCode::EmbedderUnavailable, "offline store " + dir_.string() + " is not a directory");
  }
}

const EmbeddingSet& OfflineEmbedder::store(Modality modality) {
  std::lock_guard lock(mutex_);
  auto& slot = modality == Modality::Text ? text_ : image_;
  if (!slot) {
    const auto path = store_path(dir_, modality);
    if (std::filesystem::exists(path)) {
      slot = load_embedding_set(path);
      if (slot->dim() != dim_) {
        throw Error(ErrorCode::DimMismatch, "offline store " + path.string() + " has dim " +
                                                std::to_string(slot->dim()) + ", expected " +
                                                std::to_string(dim_));
      }
    } else {
      slot = EmbeddingSet(modality, dim_, {}, {});
    }
  }
  return *slot;
}

std::vector<Vector> OfflineEmbedder::lookup_all(Modality modality,
                                                std::span<const std::string> inputs) {
  const EmbeddingSet& set = store(modality);
  std::vector<Vector> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto row = set.find(offline_key(inputs[i]));
    if (!row) {
      throw Error(ErrorCode::MissingOfflineEntry,
                  "input #" + std::to_string(i) + " (" + std::string(modality_name(modality)) +
                      ") has no entry in " + dir_.string());
    }
    out.push_back(set.row_vector(*row));
  }
  return out;
}

std::vector<Vector> OfflineEmbedder::embed_text(std::span<const std::string> inputs) {
  return lookup_all(Modality::Text, inputs);
}

std::vector<Vector> OfflineEmbedder::embed_image(std::span<const std::string> payloads) {
  return lookup_all(Modality::Image, payloads);
}

void write_offline_entries(const std::filesystem::path& dir, Modality modality,
                           std::span<const std::string> inputs, std::span<const Vector> vectors) {
  if (inputs.size() != vectors.size()) {
    throw Error(ErrorCode::InvalidArgument, "inputs and vectors differ in count");
  }
  if (vectors.empty()) return;
  const auto dim = static_cast<std::size_t>(vectors.front().size());
  std::filesystem::create_directories(dir);
  const auto path = store_path(dir, modality);

  std::vector<std::string> ids;
  std::vector<Vector> rows;
  if (std::filesystem::exists(path)) {
    const auto existing = load_embedding_set(path);
    if (existing.dim() != dim) {
      throw Error(ErrorCode::DimMismatch, "offline store " + path.string() + " has dim " +
                                              std::to_string(existing.dim()));
    }
    ids = existing.ids();
    for (std::size_t i = 0; i < existing.size(); ++i) rows.push_back(existing.row_vector(i));
  }
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < ids.size(); ++i) position.emplace(ids[i], i);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    check_vector(vectors[i], dim, i);
    const auto key = offline_key(inputs[i]);
    if (auto it = position.find(key); it != position.end()) {
      rows[it->second] = vectors[i];
    } else {
      position.emplace(key, ids.size());
      ids.push_back(key);
      rows.push_back(vectors[i]);
    }
  }

  EmbeddingSet::RowMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose().cast<float>();
  }
  save_embedding_set(EmbeddingSet(modality, dim, std::move(ids), std::move(m)), path);
}

// ------------------------------------------------------------------- http

std::string base64_encode(std::string_view bytes) {
  static constexpr char kTable[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                   (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
    out += kTable[(n >> 18) & 63];
    out += kTable[(n >> 12) & 63];
    out += kTable[(n >> 6) & 63];
    out += kTable[n & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out += kTable[(n >> 18) & 63];
    out += kTable[(n >> 12) & 63];
    out += rest == 2 ? kTable[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

HttpEmbedder::HttpEmbedder(EmbedderConfig config) : config_(std::move(config)) {
  const auto& ep = config_.endpoint;
  const auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos || ep.substr(0, scheme_end) != "http") {
    throw Error(ErrorCode::InvalidArgument,
                "embedder endpoint must be http://host:port or offline:<dir>, got '" + ep + "'");
  }
  const auto path_start = ep.find('/', scheme_end + 3);
  host_ = ep.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : ep.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

HealthStatus HttpEmbedder::health() const {
  httplib::Client cli(host_);
  cli.set_connection_timeout(config_.timeout);
  cli.set_read_timeout(config_.timeout);
  auto res = cli.Get(prefix_ + "/v1/health");
  if (!res) {
    throw Error(ErrorCode::EmbedderUnavailable,
                "GET " + host_ + prefix_ + "/v1/health failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::EmbedderUnavailable, "health check returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto doc = Json::parse(res->body);
    return {doc.at("status").get<std::string>(), doc.at("dim").get<std::size_t>(),
            doc.value("model", std::string{})};
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("health response: ") + e.what());
  }
}

std::vector<Vector> HttpEmbedder::embed_text(std::span<const std::string> inputs) {
  return embed(Modality::Text, inputs);
}

std::vector<Vector> HttpEmbedder::embed_image(std::span<const std::string> payloads) {
  std::vector<std::string> encoded;
  encoded.reserve(payloads.size());
  for (const auto& p : payloads) encoded.push_back(base64_encode(p));
  return embed(Modality::Image, encoded);
}

std::vector<Vector> HttpEmbedder::embed(Modality modality, std::span<const std::string> wire_inputs) {
  std::vector<Vector> out;
  out.reserve(wire_inputs.size());
  for (std::size_t offset = 0; offset < wire_inputs.size(); offset += config_.batch_size) {
    const auto n = std::min(config_.batch_size, wire_inputs.size() - offset);
    auto batch = embed_batch(modality, wire_inputs.subspan(offset, n), offset);
    for (auto& v : batch) out.push_back(std::move(v));
  }
  return out;
}

std::vector<Vector> HttpEmbedder::embed_batch(Modality modality,
                                              std::span<const std::string> wire_inputs,
                                              std::size_t offset) {
  const Json body = {{"modality", modality_name(modality)},
                     {"inputs", std::vector<std::string>(wire_inputs.begin(), wire_inputs.end())}};
  const auto payload = body.dump();

  std::string failure;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    httplib::Client cli(host_);
    cli.set_connection_timeout(config_.timeout);
    cli.set_read_timeout(config_.timeout);
    cli.set_write_timeout(config_.timeout);
    auto res = cli.Post(prefix_ + "/v1/embed", payload, "application/json");
    if (!res) {
      failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      std::string detail = res->body;
      std::string where;
      try {
        const auto err = Json::parse(res->body);
        detail = err.value("error", res->body);
        if (err.contains("index")) {
          where = " at input #" + std::to_string(offset + err.at("index").get<std::size_t>());
        }
      } catch (const Json::exception&) {
      }
      throw Error(ErrorCode::InputRejected,
                  "embedder rejected batch" + where + " (HTTP " + std::to_string(res->status) + "): " + detail);
    }

    std::vector<Vector> vectors;
    try {
      const auto doc = Json::parse(res->body);
      if (doc.at("dim").get<std::size_t>() != config_.dim) {
        throw Error(ErrorCode::DimMismatch, "service dim " + doc.at("dim").dump() +
                                                " differs from expected " + std::to_string(config_.dim));
      }
      for (const auto& row : doc.at("vectors")) {
        const auto values = row.get<std::vector<double>>();
        vectors.emplace_back(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("embed response: ") + e.what());
    }
    if (vectors.size() != wire_inputs.size()) {
      throw Error(ErrorCode::EmbedderUnavailable, "service returned " + std::to_string(vectors.size()) +
                                                      " vectors for " + std::to_string(wire_inputs.size()) +
                                                      " inputs");
    }
    for (std::size_t i = 0; i < vectors.size(); ++i) check_vector(vectors[i], config_.dim, offset + i);
    return vectors;
  }
  throw Error(ErrorCode::EmbedderUnavailable, "POST " + host_ + prefix_ + "/v1/embed failed after " +
                                                  std::to_string(config_.retries + 1) +
                                                  " attempts: " + failure);
}

}  // namespace cirfuse
