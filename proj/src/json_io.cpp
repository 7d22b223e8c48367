#include "cirfuse/json_io.hpp"

#include <fstream>

#include "cirfuse/error.hpp"

namespace cirfuse {

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

void write_json_file(const Json& doc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace cirfuse
