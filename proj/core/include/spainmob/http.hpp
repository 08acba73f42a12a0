#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spainmob {

struct HttpHead {
  int status = 0;
  std::map<std::string, std::string> headers;  // names lower-cased

  std::optional<std::string> header(std::string_view name) const;
};

struct HttpOutcome {
  // False when no complete response was received (connect failure, reset,
  // timeout, or the body handler aborted).
  bool completed = false;
  int status = 0;
  std::string error;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;
// Return false to abort the transfer.
using HeadHandler = std::function<bool(const HttpHead&)>;
using BodyHandler = std::function<bool(const char* data, std::size_t size)>;

// Streaming HTTP GET. Implementations must be safe to call concurrently.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpOutcome get(const std::string& url, const HttpHeaders& headers,
                          const HeadHandler& on_head, const BodyHandler& on_body) = 0;
};

struct HttpTimeouts {
  std::chrono::seconds connect{15};
  std::chrono::seconds read{120};
};

// HTTP/1.1 client over cpp-httplib (http and https, redirects followed).
std::shared_ptr<HttpTransport> make_default_transport(HttpTimeouts timeouts = {});

}  // namespace spainmob
