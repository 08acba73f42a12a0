#include "support.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "spainmob/error.hpp"
#include "spainmob/gzip.hpp"

#ifndef SPAINMOB_FIXTURE_DIR
#error "SPAINMOB_FIXTURE_DIR must be defined"
#endif

namespace spainmob::test {

namespace fs = std::filesystem;

fs::path fixture_dir() { return SPAINMOB_FIXTURE_DIR; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

std::string gzip_text(std::string_view text) { return gzip_compress(text); }

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "spainmob-test-XXXXXX").string();
  if (!::mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

Clock fixed_clock(int year, unsigned month, unsigned day, int hour) {
  const auto t = std::chrono::sys_days(std::chrono::year(year) / month / day) + std::chrono::hours(hour);
  return [t] { return std::chrono::system_clock::time_point(t); };
}

// ---------------------------------------------------------------------------
// FakeTransport
// ---------------------------------------------------------------------------

void FakeTransport::add(const std::string& url, FakeResource r) {
  std::lock_guard lock(mu_);
  resources_[url] = std::move(r);
}

std::size_t FakeTransport::request_count() const {
  std::lock_guard lock(mu_);
  return requests_.size();
}

std::size_t FakeTransport::request_count(const std::string& url) const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(requests_.begin(), requests_.end(), [&](const RecordedRequest& r) { return r.url == url; }));
}

std::vector<RecordedRequest> FakeTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

namespace {

std::optional<std::string> find_header(const HttpHeaders& h, std::string_view name) {
  for (const auto& [k, v] : h)
    if (k == name) return v;
  return std::nullopt;
}

}  // namespace

HttpOutcome FakeTransport::get(const std::string& url, const HttpHeaders& headers, const HeadHandler& on_head,
                               const BodyHandler& on_body) {
  const int now = ++in_flight_;
  for (int prev = max_in_flight_; now > prev && !max_in_flight_.compare_exchange_weak(prev, now);) {
  }
  struct Leave {
    std::atomic<int>& n;
    ~Leave() { --n; }
  } leave{in_flight_};

  std::optional<FakeResource> res;
  FakeResponse response;
  {
    std::lock_guard lock(mu_);
    requests_.push_back({url, headers});
    auto it = resources_.find(url);
    if (it != resources_.end()) {
      if (!it->second.script.empty()) {
        response = it->second.script.front();
        it->second.script.erase(it->second.script.begin());
      }
      res = it->second;
    }
  }
  if (delay.count() > 0) std::this_thread::sleep_for(delay);

  if (response.refuse) return {false, 0, "connection refused"};
  HttpHead head;
  if (!res) {
    head.status = 404;
    on_head(head);
    return {true, 404, ""};
  }
  if (response.status != 200) {
    head.status = response.status;
    on_head(head);
    return {true, response.status, ""};
  }
  if (res->etag && find_header(headers, "If-None-Match") == res->etag) {
    head.status = 304;
    on_head(head);
    return {true, 304, ""};
  }

  std::size_t offset = 0;
  head.status = 200;
  if (auto range = find_header(headers, "Range"); range && res->accept_ranges) {
    const auto if_range = find_header(headers, "If-Range");
    if (!if_range || if_range == res->etag) {
      offset = std::stoull(range->substr(6));
      if (offset >= res->body.size()) {
        head.status = 416;
        on_head(head);
        return {true, 416, ""};
      }
      head.status = 206;
      head.headers["content-range"] = "bytes " + std::to_string(offset) + "-" +
                                      std::to_string(res->body.size() - 1) + "/" +
                                      std::to_string(res->body.size());
    }
  }
  head.headers["content-length"] = std::to_string(res->body.size() - offset);
  if (res->etag) head.headers["etag"] = *res->etag;
  if (res->accept_ranges) head.headers["accept-ranges"] = "bytes";
  if (!on_head(head)) return {false, head.status, "aborted by handler"};

  std::size_t end = res->body.size();
  if (response.cut_after) end = std::min(end, offset + *response.cut_after);
  for (std::size_t p = offset; p < end; p += 1024) {
    const std::size_t n = std::min<std::size_t>(1024, end - p);
    if (!on_body(res->body.data() + p, n)) return {false, head.status, "aborted by handler"};
  }
  if (end < res->body.size()) return {false, head.status, "connection reset"};
  return {true, head.status, ""};
}

// ---------------------------------------------------------------------------
// PortalServer
// ---------------------------------------------------------------------------

struct PortalServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

PortalServer::PortalServer(fs::path root) : impl_(std::make_unique<Impl>()), root_(std::move(root)) {
  impl_->server.Get(R"(/(.*))", [this](const httplib::Request& req, httplib::Response& res) {
    ++requests_;
    const int now = ++in_flight_;
    for (int prev = max_in_flight_; now > prev && !max_in_flight_.compare_exchange_weak(prev, now);) {
    }
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{in_flight_};

    const std::string path = req.path;
    {
      std::lock_guard lock(mu_);
      ++per_path_[path];
      auto it = failures_.find(path);
      if (it != failures_.end() && it->second.first > 0) {
        --it->second.first;
        res.status = it->second.second;
        return;
      }
    }
    if (delay_ms_ > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms_.load()));
    if (path.find("..") != std::string::npos) {
      res.status = 400;
      return;
    }
    const fs::path file = root_ / path.substr(1);
    std::error_code ec;
    if (!fs::is_regular_file(file, ec)) {
      res.status = 404;
      return;
    }
    auto data = std::make_shared<std::string>(read_file(file));
    const std::size_t chunk = trickle_chunk_;
    if (chunk > 0) {
      const int pause = trickle_pause_ms_;
      res.set_content_provider(data->size(), "application/octet-stream",
                               [data, chunk, pause](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
                                 const std::size_t n = std::min(chunk, length);
                                 std::this_thread::sleep_for(std::chrono::milliseconds(pause));
                                 return sink.write(data->data() + offset, n);
                               });
    } else {
      res.set_content(*data, "application/octet-stream");
    }
  });
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  if (impl_->port <= 0) throw std::runtime_error("cannot bind test server");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

PortalServer::~PortalServer() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string PortalServer::base_url() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

void PortalServer::fail_next(const std::string& path, int n, int status) {
  std::lock_guard lock(mu_);
  failures_[path] = {n, status};
}

void PortalServer::set_trickle(std::size_t chunk, std::chrono::milliseconds pause) {
  trickle_chunk_ = chunk;
  trickle_pause_ms_ = static_cast<int>(pause.count());
}

std::size_t PortalServer::request_count(const std::string& path) const {
  std::lock_guard lock(mu_);
  auto it = per_path_.find(path);
  return it == per_path_.end() ? 0 : it->second;
}

void PortalServer::reset_counters() {
  std::lock_guard lock(mu_);
  requests_ = 0;
  max_in_flight_ = 0;
  per_path_.clear();
}

std::string fixture_catalog_json(const std::string& base_url) {
  std::string text = read_file(fixture_dir() / "catalog.json");
  const std::string marker = "@PORTAL@";
  for (std::size_t p = text.find(marker); p != std::string::npos; p = text.find(marker, p + base_url.size()))
    text.replace(p, marker.size(), base_url);
  return text;
}

CatalogConfig fixture_catalog(const std::string& base_url) {
  return parse_catalog(fixture_catalog_json(base_url), "fixture catalog");
}

fs::path write_fixture_catalog(const fs::path& dir, const std::string& base_url) {
  const fs::path p = dir / "catalog.json";
  write_file(p, fixture_catalog_json(base_url));
  return p;
}

// ---------------------------------------------------------------------------
// Random tables
// ---------------------------------------------------------------------------

std::vector<ZoneId> zone_ids(const std::string& prefix, std::size_t n) {
  std::vector<ZoneId> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = std::to_string(i);
    out.emplace_back(prefix + std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s);
  }
  return out;
}

std::vector<Date> consecutive_days(Date first, std::size_t n) {
  std::vector<Date> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(first + static_cast<int>(i));
  return out;
}

OdTable random_od_table(std::mt19937_64& rng, const RandomOdOptions& o) {
  OdTable t;
  t.level = o.level;
  t.has_activity = o.has_activity;
  std::uniform_int_distribution<std::size_t> zone(0, o.zones.size() - 1), day(0, o.days.size() - 1);
  std::uniform_int_distribution<int> hour(0, 23), age(0, 3), gender(0, 1), income(0, 2), act(0, 3), band(0, 3);
  std::uniform_real_distribution<double> amount(0.0, 1000.0), unit(0.0, 1.0), km(1.0, 50.0);
  static const char* bands[] = {"0.5-2", "2-10", "10-50", ">50"};
  for (std::size_t i = 0; i < o.rows; ++i) {
    ODRecord r;
    r.day = o.days[day(rng)];
    r.hour = hour(rng);
    r.origin = o.zones[zone(rng)];
    r.destination = o.zones[zone(rng)];
    if (o.has_activity) {
      r.activity_origin = static_cast<ActivityKind>(act(rng));
      r.activity_destination = static_cast<ActivityKind>(act(rng));
    }
    r.age = unit(rng) < o.null_share ? AgeBand::NotDisaggregated : static_cast<AgeBand>(age(rng));
    r.gender = unit(rng) < o.null_share ? Gender::NotDisaggregated : static_cast<Gender>(gender(rng));
    r.income = unit(rng) < o.null_share ? IncomeBand::NotDisaggregated : static_cast<IncomeBand>(income(rng));
    r.distance_band = bands[band(rng)];
    r.trips = amount(rng);
    r.trips_km = r.trips * km(rng);
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace spainmob::test
