#include "spainmob/http.hpp"

#include <algorithm>
#include <cctype>
#include <httplib.h>

namespace spainmob {

std::optional<std::string> HttpHead::header(std::string_view name) const {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto it = headers.find(key);
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(HttpTimeouts t) : timeouts_(t) {}

  HttpOutcome get(const std::string& url, const HttpHeaders& headers, const HeadHandler& on_head,
                  const BodyHandler& on_body) override {
    HttpOutcome outcome;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      outcome.error = "not an absolute url: " + url;
      return outcome;
    }
    auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(timeouts_.connect);
    client.set_read_timeout(timeouts_.read);
    client.set_keep_alive(false);

    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) hdrs.emplace(k, v);

    int status = 0;
    auto result = client.Get(
        path, hdrs,
        [&](const httplib::Response& res) {
          HttpHead head;
          head.status = res.status;
          status = res.status;
          for (const auto& [k, v] : res.headers) {
            std::string key = k;
            std::transform(key.begin(), key.end(), key.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            head.headers[key] = v;
          }
          return on_head(head);
        },
        [&](const char* data, size_t len) { return on_body(data, len); });

    if (!result) {
      outcome.error = httplib::to_string(result.error());
      outcome.status = status;
      return outcome;
    }
    outcome.completed = true;
    outcome.status = result->status;
    return outcome;
  }

 private:
  HttpTimeouts timeouts_;
};

}  // namespace

std::shared_ptr<HttpTransport> make_default_transport(HttpTimeouts timeouts) {
  return std::make_shared<HttplibTransport>(timeouts);
}

}  // namespace spainmob
