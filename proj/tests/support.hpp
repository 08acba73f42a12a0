#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "spainmob/analytics.hpp"
#include "spainmob/error.hpp"
#include "spainmob/catalog.hpp"
#include "spainmob/fetcher.hpp"
#include "spainmob/http.hpp"
#include "spainmob/records.hpp"

// Asserts that `stmt` throws spainmob::Error with code `errc`.
#define EXPECT_ERRC(stmt, errc)                                                   \
  do {                                                                            \
    try {                                                                         \
      stmt;                                                                       \
      ADD_FAILURE() << "expected " << ::spainmob::to_string(errc) << ": " #stmt;  \
    } catch (const ::spainmob::Error& e_) {                                       \
      EXPECT_EQ(::spainmob::to_string(e_.code()), ::spainmob::to_string(errc))    \
          << e_.what();                                                           \
    }                                                                             \
  } while (0)

namespace spainmob::test {

std::filesystem::path fixture_dir();
std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);
std::string gzip_text(std::string_view text);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// Fixed clock at the given UTC instant.
Clock fixed_clock(int year, unsigned month, unsigned day, int hour = 12);

// ---------------------------------------------------------------------------
// Scripted in-memory transport
// ---------------------------------------------------------------------------

struct FakeResponse {
  int status = 200;
  // Deliver only this many body bytes, then report an incomplete transfer.
  std::optional<std::size_t> cut_after;
  // Connection failure before any response.
  bool refuse = false;
};

struct FakeResource {
  std::string body;
  std::optional<std::string> etag;
  bool accept_ranges = false;
  // Consumed one per request; when empty the resource is served normally.
  std::vector<FakeResponse> script;
};

struct RecordedRequest {
  std::string url;
  HttpHeaders headers;
};

class FakeTransport : public HttpTransport {
 public:
  void add(const std::string& url, FakeResource r);
  HttpOutcome get(const std::string& url, const HttpHeaders& headers, const HeadHandler& on_head,
                  const BodyHandler& on_body) override;

  std::size_t request_count() const;
  std::size_t request_count(const std::string& url) const;
  std::vector<RecordedRequest> requests() const;
  int max_in_flight() const { return max_in_flight_; }
  std::chrono::milliseconds delay{0};

 private:
  mutable std::mutex mu_;
  std::map<std::string, FakeResource> resources_;
  std::vector<RecordedRequest> requests_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

// ---------------------------------------------------------------------------
// Local HTTP portal over a directory
// ---------------------------------------------------------------------------

class PortalServer {
 public:
  explicit PortalServer(std::filesystem::path root);
  ~PortalServer();
  PortalServer(const PortalServer&) = delete;
  PortalServer& operator=(const PortalServer&) = delete;

  std::string base_url() const;
  // Answer the next `n` requests for `path` with `status`.
  void fail_next(const std::string& path, int n, int status = 503);
  // Per-request handler latency.
  void set_delay(std::chrono::milliseconds d) { delay_ms_ = static_cast<int>(d.count()); }
  // Send the body in chunks with a pause between them.
  void set_trickle(std::size_t chunk, std::chrono::milliseconds pause);

  std::size_t request_count() const { return requests_; }
  std::size_t request_count(const std::string& path) const;
  int max_in_flight() const { return max_in_flight_; }
  void reset_counters();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::filesystem::path root_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<int> delay_ms_{0};
  std::atomic<std::size_t> trickle_chunk_{0};
  std::atomic<int> trickle_pause_ms_{0};
  mutable std::mutex mu_;
  std::map<std::string, std::pair<int, int>> failures_;  // path -> (remaining, status)
  std::map<std::string, std::size_t> per_path_;
};

// Fixture catalog text with its base URL substituted.
std::string fixture_catalog_json(const std::string& base_url);
CatalogConfig fixture_catalog(const std::string& base_url);
// Writes the fixture catalog into `dir` and returns its path.
std::filesystem::path write_fixture_catalog(const std::filesystem::path& dir, const std::string& base_url);

// ---------------------------------------------------------------------------
// Random tables
// ---------------------------------------------------------------------------

struct RandomOdOptions {
  std::size_t rows = 200;
  std::vector<ZoneId> zones;
  std::vector<Date> days;
  ZoneLevel level = ZoneLevel::Districts;
  bool has_activity = true;
  // Probability of a NotDisaggregated demographic value.
  double null_share = 0.1;
};

OdTable random_od_table(std::mt19937_64& rng, const RandomOdOptions& o);
std::vector<ZoneId> zone_ids(const std::string& prefix, std::size_t n);
std::vector<Date> consecutive_days(Date first, std::size_t n);

}  // namespace spainmob::test
