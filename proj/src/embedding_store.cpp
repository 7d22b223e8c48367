#include "cirfuse/embedding_store.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cirfuse/error.hpp"
#include "cirfuse/json_io.hpp"

namespace cirfuse {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and written with raw copies");

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::IoError, "truncated header in " + path.string());
  return value;
}

}  // namespace

std::string_view modality_name(Modality m) noexcept {
  return m == Modality::Image ? "image" : "text";
}

Modality parse_modality(std::string_view name) {
  if (name == "image") return Modality::Image;
  if (name == "text") return Modality::Text;
  throw Error(ErrorCode::ParseError, "unknown modality '" + std::string(name) + "'");
}

EmbeddingSet::EmbeddingSet(Modality modality, std::size_t dim, std::vector<std::string> ids,
                           RowMatrix rows)
    : modality_(modality), dim_(dim), ids_(std::move(ids)), rows_(std::move(rows)) {
  if (dim_ == 0) throw Error(ErrorCode::DimMismatch, "embedding dimension must be positive");
  if (static_cast<std::size_t>(rows_.rows()) != ids_.size()) {
    throw Error(ErrorCode::DimMismatch, "id count " + std::to_string(ids_.size()) +
                                            " does not match row count " +
                                            std::to_string(rows_.rows()));
  }
  if (!ids_.empty() && static_cast<std::size_t>(rows_.cols()) != dim_) {
    throw Error(ErrorCode::DimMismatch, "matrix has " + std::to_string(rows_.cols()) +
                                            " columns, declared dim " + std::to_string(dim_));
  }
  if (ids_.empty()) rows_.resize(0, static_cast<Eigen::Index>(dim_));

  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate id '" + ids_[i] + "'");
    }
    auto r = rows_.row(static_cast<Eigen::Index>(i));
    if (!r.allFinite()) {
      throw Error(ErrorCode::NonFiniteEntry, "row '" + ids_[i] + "' has a non-finite entry");
    }
    const double norm = r.cast<double>().norm();
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
      throw Error(ErrorCode::NotUnitNorm,
                  "row '" + ids_[i] + "' has L2 norm " + std::to_string(norm));
    }
  }
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t EmbeddingSet::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw Error(ErrorCode::UnknownId, "unknown id '" + std::string(id) + "'");
}

Vector EmbeddingSet::lookup(std::string_view id) const { return row_vector(index_of(id)); }

Vector EmbeddingSet::row_vector(std::size_t i) const {
  return rows_.row(static_cast<Eigen::Index>(i)).transpose().cast<double>();
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::string> ids) const {
  RowMatrix rows(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = rows_.row(static_cast<Eigen::Index>(index_of(ids[i])));
  }
  return EmbeddingSet(modality_, dim_, std::vector<std::string>(ids.begin(), ids.end()),
                      std::move(rows));
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

EmbeddingSet load_embedding_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, path.string() + " is not an EMB1 file");
  }
  const auto dim = read_pod<std::uint32_t>(in, path);
  const auto count = read_pod<std::uint64_t>(in, path);

  const Json manifest = read_json_file(sidecar_path(path));
  std::vector<std::string> ids;
  Modality modality;
  try {
    if (manifest.at("dim").get<std::uint64_t>() != dim) {
      throw Error(ErrorCode::DimMismatch, "manifest dim " + manifest.at("dim").dump() +
                                              " differs from header dim " + std::to_string(dim));
    }
    if (manifest.at("count").get<std::uint64_t>() != count) {
      throw Error(ErrorCode::DimMismatch, "manifest count " + manifest.at("count").dump() +
                                              " differs from header count " +
                                              std::to_string(count));
    }
    modality = parse_modality(manifest.at("modality").get<std::string>());
    ids = manifest.at("ids").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, sidecar_path(path).string() + ": " + e.what());
  }
  if (ids.size() != count) {
    throw Error(ErrorCode::DimMismatch, "manifest lists " + std::to_string(ids.size()) +
                                            " ids for " + std::to_string(count) + " rows");
  }

  EmbeddingSet::RowMatrix rows(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  const auto bytes = static_cast<std::streamsize>(count * dim * sizeof(float));
  in.read(reinterpret_cast<char*>(rows.data()), bytes);
  if (in.gcount() != bytes) throw Error(ErrorCode::IoError, "truncated payload in " + path.string());
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::IoError, "trailing bytes after payload in " + path.string());
  }
  return EmbeddingSet(modality, dim, std::move(ids), std::move(rows));
}

void save_embedding_set(const EmbeddingSet& set, const std::filesystem::path& path) {
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(kMagic, 4);
    write_pod(out, static_cast<std::uint32_t>(set.dim()));
    write_pod(out, static_cast<std::uint64_t>(set.size()));
    out.write(reinterpret_cast<const char*>(set.matrix().data()),
              static_cast<std::streamsize>(set.size() * set.dim() * sizeof(float)));
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
  Json manifest = {{"dim", set.dim()},
                   {"count", set.size()},
                   {"modality", modality_name(set.modality())},
                   {"ids", set.ids()}};
  write_json_file(manifest, sidecar_path(path));
}

}  // namespace cirfuse
