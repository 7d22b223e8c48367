#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cirfuse {

/// Entry point of the command suite (stats, projection, contextualize,
/// search, evaluate, sweep). `args` excludes the program name. Human
/// progress goes to `log`; failures are one-line JSON objects on `err`.
/// Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

/// Name of the environment variable holding the default embedder endpoint.
inline constexpr const char* kEmbedderEnvVar = "BASIC_EMBEDDER_URL";

}  // namespace cirfuse
