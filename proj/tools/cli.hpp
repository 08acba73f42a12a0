#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spainmob/fetcher.hpp"
#include "spainmob/http.hpp"

namespace spainmob::cli {

// Process-level dependencies; empty members fall back to the real network,
// clock, environment and standard streams.
struct CliEnvironment {
  std::shared_ptr<HttpTransport> transport;
  Clock clock;
  std::function<std::optional<std::string>(const std::string&)> getenv;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

inline constexpr const char* kCacheEnvVar = "SPAINMOB_CACHE";

// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, const CliEnvironment& env = {});

}  // namespace spainmob::cli
