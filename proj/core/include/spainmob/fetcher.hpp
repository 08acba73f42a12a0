#pragma once

// Download of catalog resources into a local cache.
//
// Cache layout: <cache_root>/<relative_cache_path> plus <cache_root>/manifest.jsonl.
// Downloads are written to "<path>.part" and renamed into place only after
// integrity checks pass, then recorded with a single manifest append. A file
// is visible under its final name only once complete.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "spainmob/catalog.hpp"
#include "spainmob/error.hpp"
#include "spainmob/http.hpp"

namespace spainmob {

using Clock = std::function<std::chrono::system_clock::time_point()>;

struct CacheEntry {
  ResourceDescriptor descriptor;
  std::filesystem::path local_path;
  std::uint64_t size_bytes = 0;
  std::optional<std::string> digest;  // sha256, lowercase hex
  std::string fetched_at;             // UTC, "YYYY-MM-DDTHH:MM:SSZ"
  std::optional<std::string> validator;  // ETag, or Last-Modified prefixed "lm:"

  friend bool operator==(const CacheEntry&, const CacheEntry&) = default;
};

struct FetchPolicy {
  int max_concurrent = 4;
  int max_retries = 3;
  int backoff_base_ms = 500;
  int backoff_cap_ms = 60'000;
  int publication_delay_days = 4;
  bool offline_mode = false;
  // Issue a conditional GET for cache hits that carry a validator.
  bool revalidate = false;
};

// Injection points for tests; defaults use the real network and clock.
struct FetchContext {
  std::shared_ptr<HttpTransport> transport;
  Clock clock;
  // Seed for backoff jitter; 0 draws from std::random_device.
  std::uint64_t jitter_seed = 0;
  // Progress lines (one per finished transfer); may be empty.
  std::function<void(const std::string&)> progress;
};

FetchContext default_fetch_context();

struct FetchFailure {
  std::size_t index = 0;
  ResourceDescriptor descriptor;
  Errc code = Errc::Io;
  std::string message;
};

class PartialFailure : public Error {
 public:
  PartialFailure(std::vector<CacheEntry> succeeded, std::vector<FetchFailure> failed);

  const std::vector<CacheEntry>& succeeded() const { return succeeded_; }
  const std::vector<FetchFailure>& failed() const { return failed_; }

 private:
  std::vector<CacheEntry> succeeded_;
  std::vector<FetchFailure> failed_;
};

// Open cache root. One instance serializes manifest writes for its root;
// instances for the same root within a process share one lock.
class Cache {
 public:
  explicit Cache(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path manifest_path() const { return root_ / "manifest.jsonl"; }

  // Replays the manifest. Entries whose file is missing or has the wrong size
  // are dropped from the result. Throws ManifestCorrupt.
  std::vector<CacheEntry> entries() const;
  std::optional<CacheEntry> lookup(const ResourceDescriptor& descriptor) const;

  void record(const CacheEntry& entry);
  // Rewrites the manifest without entries matching `remove`, then deletes
  // their files. Returns the number removed.
  std::size_t remove_if(const std::function<bool(const CacheEntry&)>& remove);

 private:
  std::filesystem::path root_;
  std::shared_ptr<std::mutex> lock_;
};

struct CacheReport {
  std::size_t entries = 0;
  std::vector<std::string> missing_files;
  std::vector<std::string> size_mismatches;
  std::vector<std::string> digest_mismatches;
  std::vector<std::string> unrecorded_files;  // present on disk, not in manifest
  std::vector<std::string> partial_files;     // ".part" leftovers

  bool consistent() const {
    return missing_files.empty() && size_mismatches.empty() && digest_mismatches.empty();
  }
};

// Full consistency check; `check_digests` re-hashes every recorded file.
CacheReport verify_cache(const std::filesystem::path& cache_root, bool check_digests = false);

CacheEntry fetch(const ResourceDescriptor& descriptor, const FetchPolicy& policy,
                 const std::filesystem::path& cache_root, const FetchContext& ctx = default_fetch_context());

// Results in input order. Throws NotYetPublished before any transfer when a
// day is inside the publication delay. Otherwise every descriptor is
// attempted; if any fails, throws PartialFailure carrying the successes and
// per-descriptor causes.
std::vector<CacheEntry> fetch_all(const std::vector<ResourceDescriptor>& descriptors,
                                  const FetchPolicy& policy, const std::filesystem::path& cache_root,
                                  const FetchContext& ctx = default_fetch_context());

// Removes entries fetched at or before now - older_than (all entries when
// older_than is empty) and, if given, only those of `version`.
std::size_t purge(const std::filesystem::path& cache_root,
                  std::optional<std::chrono::seconds> older_than,
                  std::optional<DatasetVersion> version, const Clock& clock = {});

// Parses "30d", "12h", "45m", "10s" or a bare number of seconds.
std::chrono::seconds parse_duration(std::string_view text);

std::string format_utc(std::chrono::system_clock::time_point t);
std::optional<std::chrono::system_clock::time_point> parse_utc(std::string_view text);

// Hex SHA-256 of a file's content.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace spainmob
