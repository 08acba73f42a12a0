#include "spainmob/fetcher.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace spainmob {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// small utilities
// ---------------------------------------------------------------------------

std::string format_utc(std::chrono::system_clock::time_point t) {
  const auto secs = std::chrono::floor<std::chrono::seconds>(t);
  const auto day = std::chrono::floor<std::chrono::days>(secs);
  const std::chrono::year_month_day ymd(day);
  const std::chrono::hh_mm_ss hms(secs - day);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

std::optional<std::chrono::system_clock::time_point> parse_utc(std::string_view text) {
  int y, mo, d, h, mi, s;
  if (text.size() != 20 || text[19] != 'Z') return std::nullopt;
  const std::string str(text);
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2dZ", &y, &mo, &d, &h, &mi, &s) != 6)
    return std::nullopt;
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(mo),
                                        std::chrono::day(d)};
  if (!ymd.ok()) return std::nullopt;
  return std::chrono::sys_days(ymd) + std::chrono::hours(h) + std::chrono::minutes(mi) +
         std::chrono::seconds(s);
}

std::chrono::seconds parse_duration(std::string_view text) {
  if (text.empty()) fail(Errc::InvalidArgument, "empty duration");
  std::int64_t mult = 1;
  std::string_view digits = text;
  switch (text.back()) {
    case 'd': mult = 86400; digits.remove_suffix(1); break;
    case 'h': mult = 3600; digits.remove_suffix(1); break;
    case 'm': mult = 60; digits.remove_suffix(1); break;
    case 's': digits.remove_suffix(1); break;
    default: break;
  }
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
    fail(Errc::InvalidArgument, "malformed duration '" + std::string(text) + "'; expected e.g. 30d, 12h");
  return std::chrono::seconds(std::stoll(std::string(digits)) * mult);
}

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 0xF]);
    }
    return out;
  }

 private:
  EVP_MD_CTX* ctx_;
};

void hash_file_into(Sha256& h, const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  Sha256 h;
  hash_file_into(h, path);
  return h.hex();
}

// ---------------------------------------------------------------------------
// manifest serialization
// ---------------------------------------------------------------------------

namespace {

json descriptor_to_json(const ResourceDescriptor& d) {
  json j;
  j["url"] = d.url;
  j["kind"] = d.kind ? json(std::string(to_string(*d.kind))) : json(nullptr);
  j["version"] = to_int(d.version);
  j["level"] = d.level ? json(std::string(to_string(*d.level))) : json(nullptr);
  j["day"] = d.day ? json(d.day->iso()) : json(nullptr);
  j["relative_cache_path"] = d.relative_cache_path;
  j["schema_id"] = d.schema_id;
  j["digest"] = d.digest ? json(*d.digest) : json(nullptr);
  return j;
}

ResourceDescriptor descriptor_from_json(const json& j) {
  ResourceDescriptor d;
  d.url = j.at("url").get<std::string>();
  if (!j.at("kind").is_null()) d.kind = parse_dataset_kind(j.at("kind").get<std::string>());
  d.version = parse_dataset_version(j.at("version").get<int>());
  if (!j.at("level").is_null()) d.level = parse_zone_level(j.at("level").get<std::string>());
  if (!j.at("day").is_null()) d.day = Date::parse_iso(j.at("day").get<std::string>());
  d.relative_cache_path = j.at("relative_cache_path").get<std::string>();
  d.schema_id = j.at("schema_id").get<std::string>();
  if (j.contains("digest") && !j.at("digest").is_null()) d.digest = j.at("digest").get<std::string>();
  return d;
}

std::string entry_line(const CacheEntry& e) {
  json j;
  j["op"] = "put";
  j["descriptor"] = descriptor_to_json(e.descriptor);
  j["size"] = e.size_bytes;
  j["digest"] = e.digest ? json(*e.digest) : json(nullptr);
  j["fetched_at"] = e.fetched_at;
  j["validator"] = e.validator ? json(*e.validator) : json(nullptr);
  return j.dump() + "\n";
}

CacheEntry entry_from_json(const json& j, const fs::path& root) {
  CacheEntry e;
  e.descriptor = descriptor_from_json(j.at("descriptor"));
  e.local_path = root / e.descriptor.relative_cache_path;
  e.size_bytes = j.at("size").get<std::uint64_t>();
  if (!j.at("digest").is_null()) e.digest = j.at("digest").get<std::string>();
  e.fetched_at = j.at("fetched_at").get<std::string>();
  if (!j.at("validator").is_null()) e.validator = j.at("validator").get<std::string>();
  return e;
}

// Replays the manifest into (path -> entry) in order of last write. A final
// line without a newline is a torn append from a crash and is ignored.
std::vector<CacheEntry> replay_manifest(const fs::path& root, const fs::path& manifest) {
  std::vector<CacheEntry> out;
  std::ifstream in(manifest, std::ios::binary);
  if (!in) return out;
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();

  std::map<std::string, std::size_t> index;
  std::vector<std::optional<CacheEntry>> ordered;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;
    ++line_no;
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string op = j.at("op").get<std::string>();
      if (op == "put") {
        CacheEntry e = entry_from_json(j, root);
        const std::string key = e.descriptor.relative_cache_path;
        if (auto it = index.find(key); it != index.end()) ordered[it->second].reset();
        index[key] = ordered.size();
        ordered.emplace_back(std::move(e));
      } else if (op == "del") {
        const std::string key = j.at("path").get<std::string>();
        if (auto it = index.find(key); it != index.end()) {
          ordered[it->second].reset();
          index.erase(it);
        }
      } else {
        throw std::runtime_error("unknown op '" + op + "'");
      }
    } catch (const std::exception& ex) {
      fail(Errc::ManifestCorrupt, manifest.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  for (auto& e : ordered)
    if (e) out.push_back(std::move(*e));
  return out;
}

// Advisory lock on <root>/manifest.lock for cross-process serialization.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(Errc::Io, "cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

std::shared_ptr<std::mutex> root_mutex(const fs::path& root) {
  static std::mutex registry_mu;
  static std::map<std::string, std::weak_ptr<std::mutex>> registry;
  std::lock_guard guard(registry_mu);
  const std::string key = fs::weakly_canonical(root).string();
  auto& slot = registry[key];
  if (auto existing = slot.lock()) return existing;
  auto created = std::make_shared<std::mutex>();
  slot = created;
  return created;
}

void write_all(int fd, const std::string& data, const fs::path& what) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) fail(Errc::Io, "write failed: " + what.string());
    off += static_cast<std::size_t>(n);
  }
}

bool file_matches(const CacheEntry& e) {
  std::error_code ec;
  auto sz = fs::file_size(e.local_path, ec);
  return !ec && sz == e.size_bytes;
}

}  // namespace

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

Cache::Cache(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) fail(Errc::Io, "cannot create cache root " + root_.string() + ": " + ec.message());
  lock_ = root_mutex(root_);
}

std::vector<CacheEntry> Cache::entries() const {
  std::lock_guard guard(*lock_);
  auto all = replay_manifest(root_, manifest_path());
  std::erase_if(all, [](const CacheEntry& e) { return !file_matches(e); });
  return all;
}

std::optional<CacheEntry> Cache::lookup(const ResourceDescriptor& descriptor) const {
  for (auto& e : entries()) {
    if (e.descriptor.relative_cache_path == descriptor.relative_cache_path &&
        e.descriptor.url == descriptor.url)
      return e;
  }
  return std::nullopt;
}

void Cache::record(const CacheEntry& entry) {
  std::lock_guard guard(*lock_);
  FileLock flock(root_ / "manifest.lock");
  const fs::path manifest = manifest_path();
  int fd = ::open(manifest.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) fail(Errc::Io, "cannot open manifest " + manifest.string());
  // Drop a torn trailing line left by a crash before appending.
  off_t size = ::lseek(fd, 0, SEEK_END);
  if (size > 0) {
    std::string tail;
    off_t back = size;
    char c = 0;
    if (::pread(fd, &c, 1, size - 1) == 1 && c != '\n') {
      while (back > 0) {
        if (::pread(fd, &c, 1, back - 1) != 1) break;
        if (c == '\n') break;
        --back;
      }
      if (::ftruncate(fd, back) != 0) {
        ::close(fd);
        fail(Errc::Io, "cannot repair manifest " + manifest.string());
      }
    }
  }
  write_all(fd, entry_line(entry), manifest);
  ::fsync(fd);
  ::close(fd);
}

std::size_t Cache::remove_if(const std::function<bool(const CacheEntry&)>& remove) {
  std::lock_guard guard(*lock_);
  FileLock flock(root_ / "manifest.lock");
  const auto all = replay_manifest(root_, manifest_path());
  std::vector<CacheEntry> keep;
  std::vector<CacheEntry> drop;
  for (const auto& e : all) (remove(e) ? drop : keep).push_back(e);
  if (drop.empty()) return 0;

  const fs::path tmp = root_ / "manifest.jsonl.tmp";
  {
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) fail(Errc::Io, "cannot write " + tmp.string());
    std::string body;
    for (const auto& e : keep) body += entry_line(e);
    write_all(fd, body, tmp);
    ::fsync(fd);
    ::close(fd);
  }
  fs::rename(tmp, manifest_path());
  for (const auto& e : drop) {
    std::error_code ec;
    fs::remove(e.local_path, ec);
  }
  return drop.size();
}

CacheReport verify_cache(const fs::path& cache_root, bool check_digests) {
  CacheReport report;
  const auto all = replay_manifest(cache_root, cache_root / "manifest.jsonl");
  report.entries = all.size();
  std::set<std::string> recorded;
  for (const auto& e : all) {
    recorded.insert(e.descriptor.relative_cache_path);
    std::error_code ec;
    if (!fs::exists(e.local_path, ec)) {
      report.missing_files.push_back(e.descriptor.relative_cache_path);
      continue;
    }
    if (fs::file_size(e.local_path, ec) != e.size_bytes) {
      report.size_mismatches.push_back(e.descriptor.relative_cache_path);
      continue;
    }
    if (check_digests && e.digest && sha256_file(e.local_path) != *e.digest)
      report.digest_mismatches.push_back(e.descriptor.relative_cache_path);
  }
  std::error_code ec;
  if (fs::exists(cache_root, ec)) {
    for (const auto& it : fs::recursive_directory_iterator(cache_root)) {
      if (!it.is_regular_file()) continue;
      const std::string rel = fs::relative(it.path(), cache_root).generic_string();
      if (rel.starts_with("manifest.")) continue;
      if (rel.ends_with(".part") || rel.ends_with(".part.meta")) {
        if (rel.ends_with(".part")) report.partial_files.push_back(rel);
        continue;
      }
      if (!recorded.contains(rel)) report.unrecorded_files.push_back(rel);
    }
  }
  std::sort(report.unrecorded_files.begin(), report.unrecorded_files.end());
  std::sort(report.partial_files.begin(), report.partial_files.end());
  return report;
}

// ---------------------------------------------------------------------------
// fetch
// ---------------------------------------------------------------------------

PartialFailure::PartialFailure(std::vector<CacheEntry> succeeded, std::vector<FetchFailure> failed)
    : Error(Errc::PartialFailure,
            [&] {
              std::string msg = std::to_string(failed.size()) + " of " +
                                std::to_string(failed.size() + succeeded.size()) +
                                " downloads failed:";
              for (const auto& f : failed) {
                msg += "\n  ";
                if (f.descriptor.day) msg += f.descriptor.day->iso() + " ";
                msg += f.descriptor.url + ": " + std::string(to_string(f.code)) + ": " + f.message;
              }
              return msg;
            }()),
      succeeded_(std::move(succeeded)),
      failed_(std::move(failed)) {}

FetchContext default_fetch_context() {
  FetchContext ctx;
  ctx.transport = make_default_transport();
  ctx.clock = [] { return std::chrono::system_clock::now(); };
  return ctx;
}

namespace {

struct PartMeta {
  bool accept_ranges = false;
  std::optional<std::string> validator;
};

PartMeta read_part_meta(const fs::path& p) {
  PartMeta m;
  std::ifstream in(p);
  if (!in) return m;
  try {
    json j = json::parse(in);
    m.accept_ranges = j.value("accept_ranges", false);
    if (j.contains("validator") && j["validator"].is_string()) m.validator = j["validator"].get<std::string>();
  } catch (...) {
    return PartMeta{};
  }
  return m;
}

void write_part_meta(const fs::path& p, const PartMeta& m) {
  json j;
  j["accept_ranges"] = m.accept_ranges;
  j["validator"] = m.validator ? json(*m.validator) : json(nullptr);
  std::ofstream out(p, std::ios::trunc);
  out << j.dump() << "\n";
}

std::optional<std::string> validator_of(const HttpHead& h) {
  if (auto etag = h.header("etag")) return *etag;
  if (auto lm = h.header("last-modified")) return "lm:" + *lm;
  return std::nullopt;
}

void add_conditional(HttpHeaders& hdrs, const std::string& validator, bool if_range) {
  if (validator.starts_with("lm:")) {
    hdrs.emplace_back(if_range ? "If-Range" : "If-Modified-Since", validator.substr(3));
  } else {
    hdrs.emplace_back(if_range ? "If-Range" : "If-None-Match", validator);
  }
}

std::optional<std::uint64_t> parse_u64(const std::optional<std::string>& s) {
  if (!s || s->empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    auto v = std::stoull(*s, &used);
    if (used != s->size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

// start of "bytes <start>-<end>/<total>"
std::optional<std::uint64_t> content_range_start(const std::optional<std::string>& s) {
  if (!s || !s->starts_with("bytes ")) return std::nullopt;
  auto dash = s->find('-');
  if (dash == std::string::npos) return std::nullopt;
  return parse_u64(s->substr(6, dash - 6));
}

enum class AttemptStatus { Done, NotModified, Retryable, Fatal };

struct AttemptResult {
  AttemptStatus status = AttemptStatus::Retryable;
  Errc code = Errc::HttpError;
  std::string message;
  CacheEntry entry;
};

class Downloader {
 public:
  Downloader(const ResourceDescriptor& d, const FetchPolicy& p, Cache& cache, const FetchContext& ctx)
      : desc_(d), policy_(p), cache_(cache), ctx_(ctx) {
    final_ = cache.root() / d.relative_cache_path;
    part_ = final_;
    part_ += ".part";
    meta_ = final_;
    meta_ += ".part.meta";
  }

  CacheEntry run(const std::optional<CacheEntry>& revalidate_from) {
    std::error_code ec;
    fs::create_directories(final_.parent_path(), ec);
    if (ec) fail(Errc::Io, "cannot create " + final_.parent_path().string() + ": " + ec.message());

    std::mt19937_64 rng(ctx_.jitter_seed ? ctx_.jitter_seed : std::random_device{}());
    AttemptResult last;
    for (int attempt = 0; attempt <= policy_.max_retries; ++attempt) {
      if (attempt > 0) {
        const double ceiling = std::min<double>(policy_.backoff_cap_ms,
                                                policy_.backoff_base_ms * std::pow(2.0, attempt - 1));
        std::uniform_real_distribution<double> jitter(0.0, ceiling);
        std::this_thread::sleep_for(std::chrono::microseconds(static_cast<long long>(jitter(rng) * 1000)));
      }
      last = attempt_once(revalidate_from);
      if (last.status == AttemptStatus::Done) return last.entry;
      if (last.status == AttemptStatus::NotModified) return *revalidate_from;
      if (last.status == AttemptStatus::Fatal) break;
    }
    fail(last.code, last.message);
  }

 private:
  AttemptResult attempt_once(const std::optional<CacheEntry>& revalidate_from) {
    AttemptResult result;
    std::error_code ec;
    PartMeta meta = read_part_meta(meta_);
    std::uint64_t offset = 0;
    if (fs::exists(part_, ec)) {
      if (meta.accept_ranges) {
        offset = fs::file_size(part_, ec);
      } else {
        fs::remove(part_, ec);
      }
    }

    HttpHeaders headers;
    if (offset > 0) {
      headers.emplace_back("Range", "bytes=" + std::to_string(offset) + "-");
      if (meta.validator) add_conditional(headers, *meta.validator, true);
    } else if (revalidate_from && revalidate_from->validator) {
      add_conditional(headers, *revalidate_from->validator, false);
    }

    std::FILE* out = nullptr;
    std::uint64_t expected_total = 0;
    bool have_expected = false;
    bool write_failed = false;
    int status = 0;
    std::optional<std::string> validator;

    auto on_head = [&](const HttpHead& h) {
      status = h.status;
      if (h.status == 304) return true;
      if (h.status != 200 && h.status != 206) return true;
      const auto length = parse_u64(h.header("content-length"));
      if (h.status == 206) {
        if (content_range_start(h.header("content-range")) != offset) {
          status = -206;  // unusable range answer
          return false;
        }
      } else {
        offset = 0;
      }
      if (length) {
        expected_total = offset + *length;
        have_expected = true;
      }
      validator = validator_of(h);
      PartMeta m;
      m.accept_ranges = h.header("accept-ranges").value_or("") == "bytes" || h.status == 206;
      m.validator = validator;
      write_part_meta(meta_, m);
      out = std::fopen(part_.c_str(), h.status == 206 ? "ab" : "wb");
      return out != nullptr;
    };
    auto on_body = [&](const char* data, std::size_t n) {
      if (!out) return true;  // error body, discarded
      // Flushed per chunk so a killed process leaves resumable bytes behind.
      if (std::fwrite(data, 1, n, out) != n || std::fflush(out) != 0) {
        write_failed = true;
        return false;
      }
      return true;
    };

    const HttpOutcome outcome = ctx_.transport->get(desc_.url, headers, on_head, on_body);
    if (out) {
      std::fflush(out);
      ::fsync(::fileno(out));
      std::fclose(out);
    }

    if (write_failed) {
      result.status = AttemptStatus::Fatal;
      result.code = Errc::Io;
      result.message = "cannot write " + part_.string();
      return result;
    }
    if (status == -206) {
      fs::remove(part_, ec);
      fs::remove(meta_, ec);
      result.message = "server answered a range request with a mismatched Content-Range: " + desc_.url;
      return result;
    }
    if (!outcome.completed) {
      result.message = "transfer failed for " + desc_.url + ": " + outcome.error;
      return result;
    }
    if (outcome.status == 304 && revalidate_from) {
      result.status = AttemptStatus::NotModified;
      return result;
    }
    if (outcome.status == 416) {
      // Stale partial file; restart from zero next attempt.
      fs::remove(part_, ec);
      fs::remove(meta_, ec);
      result.message = "range not satisfiable for " + desc_.url;
      return result;
    }
    if (outcome.status != 200 && outcome.status != 206) {
      result.code = Errc::HttpError;
      result.message = "HTTP " + std::to_string(outcome.status) + " for " + desc_.url;
      result.status = (outcome.status >= 500 || outcome.status == 408 || outcome.status == 429)
                          ? AttemptStatus::Retryable
                          : AttemptStatus::Fatal;
      return result;
    }

    const std::uint64_t actual = fs::file_size(part_, ec);
    if (have_expected && actual != expected_total) {
      // Truncated transfer: keep the partial file for range resumption.
      result.message = "short read for " + desc_.url + ": " + std::to_string(actual) + " of " +
                       std::to_string(expected_total) + " bytes";
      return result;
    }
    const std::string digest = sha256_file(part_);
    if (desc_.digest && *desc_.digest != digest) {
      fs::remove(part_, ec);
      fs::remove(meta_, ec);
      result.status = AttemptStatus::Fatal;
      result.code = Errc::IntegrityError;
      result.message = "digest mismatch for " + desc_.url + ": expected " + *desc_.digest + ", got " + digest;
      return result;
    }

    fs::rename(part_, final_, ec);
    if (ec) {
      result.status = AttemptStatus::Fatal;
      result.code = Errc::Io;
      result.message = "cannot move download into place: " + ec.message();
      return result;
    }
    fs::remove(meta_, ec);

    CacheEntry entry;
    entry.descriptor = desc_;
    entry.local_path = final_;
    entry.size_bytes = actual;
    entry.digest = digest;
    entry.fetched_at = format_utc(ctx_.clock ? ctx_.clock() : std::chrono::system_clock::now());
    entry.validator = validator;
    cache_.record(entry);
    result.status = AttemptStatus::Done;
    result.entry = std::move(entry);
    return result;
  }

  const ResourceDescriptor& desc_;
  const FetchPolicy& policy_;
  Cache& cache_;
  const FetchContext& ctx_;
  fs::path final_;
  fs::path part_;
  fs::path meta_;
};

void check_published(const ResourceDescriptor& descriptor, const FetchPolicy& policy, const FetchContext& ctx) {
  if (!descriptor.day) return;
  const auto now = ctx.clock ? ctx.clock() : std::chrono::system_clock::now();
  const Date latest = madrid_civil_date(now) - policy.publication_delay_days;
  if (*descriptor.day > latest) {
    fail(Errc::NotYetPublished, "data for " + descriptor.day->iso() + " is not published yet (" +
                                    std::to_string(policy.publication_delay_days) +
                                    "-day publication delay; latest available day is " + latest.iso() + ")");
  }
}

CacheEntry fetch_one(const ResourceDescriptor& descriptor, const FetchPolicy& policy, Cache& cache,
                     const FetchContext& ctx) {
  check_published(descriptor, policy, ctx);

  std::optional<CacheEntry> hit = cache.lookup(descriptor);
  if (hit && !(policy.revalidate && hit->validator && !policy.offline_mode)) return *hit;
  if (policy.offline_mode) {
    fail(Errc::OfflineMiss, "offline mode: " + descriptor.url + " is not cached at " +
                                descriptor.relative_cache_path);
  }
  if (!ctx.transport) fail(Errc::Io, "no HTTP transport configured");
  Downloader dl(descriptor, policy, cache, ctx);
  CacheEntry entry = dl.run(hit);
  if (ctx.progress) ctx.progress("fetched " + descriptor.url + " (" + std::to_string(entry.size_bytes) + " bytes)");
  return entry;
}

}  // namespace

CacheEntry fetch(const ResourceDescriptor& descriptor, const FetchPolicy& policy,
                 const fs::path& cache_root, const FetchContext& ctx) {
  Cache cache(cache_root);
  return fetch_one(descriptor, policy, cache, ctx);
}

std::vector<CacheEntry> fetch_all(const std::vector<ResourceDescriptor>& descriptors,
                                  const FetchPolicy& policy, const fs::path& cache_root,
                                  const FetchContext& ctx) {
  if (policy.max_concurrent < 1) fail(Errc::InvalidArgument, "max_concurrent must be positive");
  // Unpublished days are a request error, not a per-file failure.
  for (const auto& d : descriptors) check_published(d, policy, ctx);
  Cache cache(cache_root);
  const std::size_t n = descriptors.size();
  std::vector<std::optional<CacheEntry>> results(n);
  std::vector<std::optional<FetchFailure>> failures(n);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = fetch_one(descriptors[i], policy, cache, ctx);
      } catch (const Error& e) {
        failures[i] = FetchFailure{i, descriptors[i], e.code(), e.what()};
      } catch (const std::exception& e) {
        failures[i] = FetchFailure{i, descriptors[i], Errc::Io, e.what()};
      }
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(policy.max_concurrent), n);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  if (workers > 0) worker();
  for (auto& t : pool) t.join();

  std::vector<CacheEntry> ok;
  std::vector<FetchFailure> bad;
  for (std::size_t i = 0; i < n; ++i) {
    if (results[i]) ok.push_back(*results[i]);
    if (failures[i]) bad.push_back(*failures[i]);
  }
  if (!bad.empty()) throw PartialFailure(std::move(ok), std::move(bad));
  return ok;
}

std::size_t purge(const fs::path& cache_root, std::optional<std::chrono::seconds> older_than,
                  std::optional<DatasetVersion> version, const Clock& clock) {
  if (!fs::exists(cache_root / "manifest.jsonl")) return 0;
  Cache cache(cache_root);
  const auto now = clock ? clock() : std::chrono::system_clock::now();
  return cache.remove_if([&](const CacheEntry& e) {
    if (version && e.descriptor.version != *version) return false;
    if (older_than) {
      auto when = parse_utc(e.fetched_at);
      if (!when) return true;
      if (*when > now - *older_than) return false;
    }
    return true;
  });
}

}  // namespace spainmob
