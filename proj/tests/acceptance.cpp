// Acceptance suite: one PASS/FAIL/SKIP line per criterion. Criteria 9 and 10
// need the live portal and run only when SPAINMOB_ACCEPTANCE_NETWORK=1.

#include <fcntl.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "oracles.hpp"
#include "spainmob/analytics.hpp"
#include "spainmob/catalog.hpp"
#include "spainmob/fetcher.hpp"
#include "spainmob/geometry.hpp"
#include "spainmob/normalizer.hpp"
#include "spainmob/table_io.hpp"
#include "spainmob/zones.hpp"
#include "support.hpp"

extern char** environ;

namespace spainmob {
namespace {

namespace fs = std::filesystem;

constexpr const char* kNetworkVar = "SPAINMOB_ACCEPTANCE_NETWORK";

struct Outcome {
  enum { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

Outcome pass(std::string detail) { return {Outcome::Pass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Fail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::Skip, std::move(detail)}; }

bool rel_close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

ZoneRelations fixture_relations() {
  return parse_relations_file(test::fixture_dir() / "portal/zonificacion/relacion_ine_zonificacionMitma.csv",
                              test::fixture_catalog("http://x").schema("v2_relations"));
}

// ---------------------------------------------------------------------------
// 1. End-to-end OD pipeline
// ---------------------------------------------------------------------------

Outcome od_pipeline() {
  test::PortalServer server(test::fixture_dir() / "portal");
  test::TempDir dir;
  const fs::path catalog = test::write_fixture_catalog(dir.path(), server.base_url());
  std::ostringstream out, err;
  cli::CliEnvironment env;
  env.out = &out;
  env.err = &err;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = cli::run({"--catalog", catalog.string(), "--out", (dir / "data").string(), "od", "--version", "2",
                             "--zones", "municipalities", "--start", "2022-03-20", "--end", "2022-03-24",
                             "--keep-activity"},
                            env);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (code != 0) return fail("exit " + std::to_string(code) + ": " + err.str());
  std::string path = out.str();
  while (!path.empty() && path.back() == '\n') path.pop_back();
  const OdTable got = read_od_table(path);
  const OdTable want = read_od_table(test::fixture_dir() / "expected/od_v2_municipalities_20220320_20220324_activity.csv",
                                     ZoneLevel::Municipalities);
  if (!got.has_activity) return fail("activity columns missing");
  if (got.rows.size() != want.rows.size())
    return fail(std::to_string(got.rows.size()) + " rows, expected " + std::to_string(want.rows.size()));
  for (std::size_t i = 0; i < got.rows.size(); ++i)
    if (!(got.rows[i] == want.rows[i])) return fail("row " + std::to_string(i) + " differs");
  if (secs >= 5) return fail("took " + std::to_string(secs) + " s");
  std::ostringstream d;
  d << got.rows.size() << " rows equal, " << secs << " s";
  return pass(d.str());
}

// ---------------------------------------------------------------------------
// 2. Conservation
// ---------------------------------------------------------------------------

Outcome conservation() {
  const ZoneRelations rel = fixture_relations();
  std::vector<ZoneId> districts;
  for (const auto& r : rel.rows()) districts.push_back(r.district_id);
  const std::vector<std::vector<Dimension>> dimension_sets = {
      {Dimension::Age}, {Dimension::Gender}, {Dimension::Income}, {Dimension::Age, Dimension::Gender, Dimension::Income}};
  std::mt19937_64 rng(2022);
  double worst = 0;
  auto check = [&](double got, double want) {
    const double e = std::abs(got - want) / std::max(std::abs(want), 1e-300);
    worst = std::max(worst, e);
    return e <= 1e-9;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    test::RandomOdOptions o;
    o.zones = districts;
    o.days = test::consecutive_days(Date(2022, 3, 14), 1 + static_cast<std::size_t>(trial % 7));
    o.rows = 20 + static_cast<std::size_t>(rng() % 400);
    const OdTable t = test::random_od_table(rng, o);
    double trips = 0, km = 0;
    for (const auto& r : t.rows) {
      trips += r.trips;
      km += r.trips_km;
    }
    auto sums = [](const OdTable& x) {
      double a = 0, b = 0;
      for (const auto& r : x.rows) {
        a += r.trips;
        b += r.trips_km;
      }
      return std::pair{a, b};
    };
    const auto [ct, ck] = sums(collapse_activity(t));
    if (!check(ct, trips) || !check(ck, km)) return fail("activity collapse, fixture " + std::to_string(trial));
    const auto [at, ak] = sums(aggregate_to_level(t, rel, ZoneLevel::Municipalities));
    if (!check(at, trips) || !check(ak, km)) return fail("district to municipality, fixture " + std::to_string(trial));
    const AnalyticsTable b = demographic_breakdown(t, std::nullopt, dimension_sets[trial % dimension_sets.size()]);
    double bt = 0, bk = 0;
    for (const auto& r : b.rows) {
      bt += r.measures[0];
      bk += r.measures[1];
    }
    if (!check(bt, trips) || !check(bk, km)) return fail("demographic group-by, fixture " + std::to_string(trial));
  }
  std::ostringstream d;
  d << "1000 fixtures, worst relative error " << worst;
  return pass(d.str());
}

// ---------------------------------------------------------------------------
// 3. Validation matrix
// ---------------------------------------------------------------------------

Outcome validation_matrix() {
  const AvailabilityTable avail = test::fixture_catalog("http://x").availability;
  const std::vector<std::string> dates = {"2019-12-31", "2020-02-13", "2020-02-14", "2020-03-01", "2021-05-09",
                                          "2021-05-10", "2021-12-31", "2022-01-01", "2022-03-20", "2023-07-01"};
  const char* levels[] = {"districts", "municipalities", "gau"};
  std::size_t accepted = 0, rejected = 0;
  std::array<std::size_t, 4> classes{};
  for (int version : {1, 2}) {
    const Availability& a = avail.of(version == 1 ? DatasetVersion::V1 : DatasetVersion::V2);
    for (DatasetKind kind : kAllKinds) {
      for (const char* level : levels) {
        for (std::size_t i = 0; i < dates.size(); ++i) {
          for (std::size_t j = i; j < dates.size(); ++j) {
            const Date s = Date::parse_iso(dates[i]), e = Date::parse_iso(dates[j]);
            // Expected outcome, derived from the four invalid classes.
            std::optional<Errc> want;
            int cls = -1;
            if (version == 1 && std::string(level) == "gau") {
              want = Errc::VersionZoneConflict;
              cls = 0;
            } else if (s < Date(2020, 2, 14)) {
              want = Errc::DateOutOfAvailability;
              cls = 1;
            } else if (version == 1 && a.end && *a.end < e) {
              want = Errc::DateOutOfAvailability;
              cls = 2;
            } else if (version == 2 && s < Date(2022, 1, 1)) {
              want = Errc::DateOutOfAvailability;
              cls = 3;
            }
            std::optional<Errc> got;
            try {
              validate_request(version, kind, level, dates[i], dates[j], "out", avail);
            } catch (const Error& err) {
              got = err.code();
            }
            const std::string what = "v" + std::to_string(version) + " " + std::string(to_string(kind)) + " " + level +
                                     " " + dates[i] + ".." + dates[j];
            if (got != want)
              return fail(what + ": got " + (got ? std::string(to_string(*got)) : "accepted") + ", expected " +
                          (want ? std::string(to_string(*want)) : "accepted"));
            if (want) {
              ++rejected;
              ++classes[static_cast<std::size_t>(cls)];
            } else {
              ++accepted;
            }
          }
        }
      }
    }
  }
  for (std::size_t c : classes)
    if (c == 0) return fail("an invalid class was never exercised");
  return pass(std::to_string(accepted) + " accepted, " + std::to_string(rejected) + " rejected (" +
              std::to_string(classes[0]) + "/" + std::to_string(classes[1]) + "/" + std::to_string(classes[2]) + "/" +
              std::to_string(classes[3]) + " per class)");
}

// ---------------------------------------------------------------------------
// 4. Quantile choropleth
// ---------------------------------------------------------------------------

Outcome quantile_choropleth() {
  std::mt19937_64 rng(4);
  const auto zones = test::zone_ids("46", 1000);
  std::size_t maps = 0;
  for (int instance = 0; instance < 10; ++instance) {
    OvernightTable t;
    std::uniform_real_distribution<double> cont(0, 1e5);
    std::uniform_int_distribution<int> coarse(0, 30);
    for (const auto& z : zones)
      t.rows.push_back({Date(2022, 7, 2), z, z, instance % 2 ? cont(rng) : static_cast<double>(coarse(rng))});
    for (int nc : {2, 4, 10}) {
      const QuantileMap m = overnight_quantile_map(t, nc, OvernightStatistic::Total);
      std::vector<double> values;
      for (const auto& [z, v] : m.values) values.push_back(v);
      const auto want = oracle::quantile_classes(values, nc);
      std::size_t i = 0;
      for (const auto& [z, c] : m.assignments)
        if (c != want[i++]) return fail("zone " + z.value + " with n_classes " + std::to_string(nc));
      ++maps;
      if (instance == 0 && nc == 10) {
        for (int k = 0; k < 10000; ++k) {
          const ZoneId& a = zones[rng() % zones.size()];
          const ZoneId& b = zones[rng() % zones.size()];
          if (m.values.at(a) < m.values.at(b) && m.assignments.at(a) > m.assignments.at(b))
            return fail("monotonicity broken for " + a.value + ", " + b.value);
        }
      }
    }
  }
  return pass(std::to_string(maps) + " maps of 1000 zones match, 10000 pairs monotone");
}

// ---------------------------------------------------------------------------
// 5. Top-percentile flows
// ---------------------------------------------------------------------------

Outcome top_flows() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pct(0.01, 100);
  for (int instance = 0; instance < 500; ++instance) {
    test::RandomOdOptions o;
    o.zones = test::zone_ids("08", 2 + static_cast<std::size_t>(rng() % 200));
    o.days = test::consecutive_days(Date(2022, 3, 14), 3);
    o.rows = 100 + static_cast<std::size_t>(rng() % 2000);
    OdTable t = test::random_od_table(rng, o);
    const ZoneId origin = t.rows[0].origin;
    if (instance == 0) {
      // Every destination ties.
      for (auto& r : t.rows) r.origin = origin;
      std::map<ZoneId, int> seen;
      for (auto& r : t.rows) r.trips = seen[r.destination]++ == 0 ? 1.0 : 0.0;
    } else if (instance % 3 == 0) {
      for (auto& r : t.rows) r.trips = static_cast<double>(rng() % 4);
    }
    const double p = instance % 4 == 0 ? 3.0 : pct(rng);
    const auto got = top_percentile_flows(t, origin, p);
    const auto want = oracle::top_flows(t, origin, p);
    if (got != want) return fail("instance " + std::to_string(instance) + ", percentile " + std::to_string(p));
    if (instance == 0) {
      std::set<ZoneId> all;
      for (const auto& r : t.rows) all.insert(r.destination);
      if (got.size() != all.size()) return fail("all-ties case returned " + std::to_string(got.size()));
    }
  }
  return pass("500 instances equal, all-ties case returns every destination");
}

// ---------------------------------------------------------------------------
// 6. Fetcher robustness
// ---------------------------------------------------------------------------

ResourceDescriptor fake_descriptor(const std::string& name, std::optional<Date> day = std::nullopt) {
  ResourceDescriptor d;
  d.url = "http://portal.test/" + name;
  d.relative_cache_path = "files/" + name;
  d.day = day;
  return d;
}

FetchPolicy quick_policy() {
  FetchPolicy p;
  p.backoff_base_ms = 1;
  p.backoff_cap_ms = 4;
  return p;
}

FetchContext fake_context(const std::shared_ptr<test::FakeTransport>& t) {
  FetchContext ctx;
  ctx.transport = t;
  ctx.clock = test::fixed_clock(2024, 6, 1);
  ctx.jitter_seed = 1;
  return ctx;
}

std::optional<std::string> crash_injection() {
#ifndef SPAINMOB_CLI_PATH
  return "command-line tool not built";
#else
  test::PortalServer server(test::fixture_dir() / "portal");
  server.set_trickle(256, std::chrono::milliseconds(15));
  test::TempDir dir;
  const fs::path catalog = test::write_fixture_catalog(dir.path(), server.base_url());
  const fs::path cache = dir / "cache";
  std::vector<std::string> args{SPAINMOB_CLI_PATH, "--catalog", catalog.string(), "--cache", cache.string(),
                                "--out", (dir / "out").string(), "--max-concurrent", "2", "fetch", "--kind", "od", "--version", "2", "--zones",
                                "municipalities", "--start", "2022-03-20", "--end", "2022-03-24"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
  posix_spawn_file_actions_addopen(&actions, 2, "/dev/null", O_WRONLY, 0);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) return "cannot start " + args[0];
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(20);
  bool mid = false;
  while (!mid && std::chrono::steady_clock::now() < deadline) {
    std::error_code ec;
    std::size_t complete = 0;
    bool partial = false;
    if (fs::exists(cache, ec))
      for (const auto& f : fs::recursive_directory_iterator(cache, ec)) {
        const std::string n = f.path().filename().string();
        if (n.ends_with(".part") && f.file_size(ec) > 0) partial = true;
        if (n.ends_with(".csv.gz")) ++complete;
      }
    mid = partial && complete >= 1;
    if (!mid) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (!mid) return "child never reached a mid-transfer state";
  const CacheReport r = verify_cache(cache, true);
  if (!r.consistent() || !r.unrecorded_files.empty()) return "manifest inconsistent after kill";
  return std::nullopt;
#endif
}

Outcome fetcher_robustness() {
  // (a) concurrency
  for (int limit : {1, 2, 4}) {
    auto t = std::make_shared<test::FakeTransport>();
    t->delay = std::chrono::milliseconds(10);
    std::vector<ResourceDescriptor> ds;
    for (int i = 0; i < 10; ++i) {
      ds.push_back(fake_descriptor("c" + std::to_string(i)));
      t->add(ds.back().url, {std::string(64, 'x')});
    }
    test::TempDir dir;
    FetchPolicy p = quick_policy();
    p.max_concurrent = limit;
    fetch_all(ds, p, dir / "cache", fake_context(t));
    if (t->max_in_flight() > limit) return fail("(a) " + std::to_string(t->max_in_flight()) + " connections > " +
                                                std::to_string(limit));
  }
  // (b) retry count
  for (int max_retries : {0, 1, 3}) {
    for (int needed = 0; needed <= 5; ++needed) {
      auto t = std::make_shared<test::FakeTransport>();
      test::FakeResource res{"payload"};
      res.script.assign(static_cast<std::size_t>(needed), test::FakeResponse{503});
      t->add("http://portal.test/r", res);
      test::TempDir dir;
      FetchPolicy p = quick_policy();
      p.max_retries = max_retries;
      try {
        fetch(fake_descriptor("r"), p, dir / "cache", fake_context(t));
      } catch (const Error&) {
      }
      if (t->request_count() != static_cast<std::size_t>(std::min(needed + 1, max_retries + 1)))
        return fail("(b) " + std::to_string(t->request_count()) + " requests with " + std::to_string(needed) +
                    " failures and max_retries " + std::to_string(max_retries));
    }
  }
  // (c) crash injection
  if (auto problem = crash_injection()) return fail("(c) " + *problem);
  // (d) second fetch
  {
    auto t = std::make_shared<test::FakeTransport>();
    std::vector<ResourceDescriptor> ds;
    for (int i = 0; i < 5; ++i) {
      ds.push_back(fake_descriptor("s" + std::to_string(i)));
      t->add(ds.back().url, {std::string(1000 + i, 'y')});
    }
    test::TempDir dir;
    fetch_all(ds, quick_policy(), dir / "cache", fake_context(t));
    const std::size_t first = t->request_count();
    fetch_all(ds, quick_policy(), dir / "cache", fake_context(t));
    if (t->request_count() != first) return fail("(d) second fetch issued requests");
  }
  // (e) publication delay
  {
    auto t = std::make_shared<test::FakeTransport>();
    t->add("http://portal.test/today", {"x"});
    test::TempDir dir;
    FetchContext ctx = fake_context(t);
    bool rejected = false;
    try {
      fetch(fake_descriptor("today", Date(2024, 6, 1)), quick_policy(), dir / "cache", ctx);
    } catch (const Error& e) {
      rejected = e.code() == Errc::NotYetPublished;
    }
    if (!rejected || t->request_count() != 0) return fail("(e) day = today was not rejected before transfer");
  }
  return pass("(a) concurrency bounded, (b) retry counts exact, (c) manifest consistent after SIGKILL, "
              "(d) no requests on refetch, (e) today rejected");
}

// ---------------------------------------------------------------------------
// 7. Geodesic area
// ---------------------------------------------------------------------------

Ring quad(double lon0, double lat0, double lon1, double lat1) {
  return {{lon0, lat0}, {lon1, lat0}, {lon1, lat1}, {lon0, lat1}, {lon0, lat0}};
}

Outcome geodesic_area() {
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const double lat = 70.0 * i / 19;
    Geometry g;
    g.polygons.push_back({quad(-3.0, std::min(lat, 69.5), -2.5, std::min(lat, 69.5) + 0.5), {}});
    g = repair(g);
    const double want = oracle::authalic_sphere_area_m2(g.polygons[0].exterior) / 1e6;
    const double got = compute_area_km2(g);
    const double e = std::abs(got - want) / want;
    worst = std::max(worst, e);
    if (e > 1e-3) return fail("latitude " + std::to_string(lat) + ": " + std::to_string(got) + " vs " +
                              std::to_string(want) + " km2");
  }
  // Additivity: a multipolygon is the sum of its parts.
  Geometry a, b, both;
  a.polygons.push_back({quad(-4, 40, -3.5, 40.5), {}});
  b.polygons.push_back({quad(2, 41, 2.3, 41.2), {}});
  both.polygons = {a.polygons[0], b.polygons[0]};
  if (compute_area_km2(both) != compute_area_km2(a) + compute_area_km2(b)) return fail("additivity not exact");
  // Zero-area rings.
  const Ring flat[] = {{{-3, 40}, {-2, 41}, {-3, 40}}, {{-3, 40}, {-3, 41}, {-3, 42}, {-3, 40}}};
  for (const Ring& r : flat)
    if (geodesic_ring_area_m2(r) != 0) return fail("zero-area ring gave " + std::to_string(geodesic_ring_area_m2(r)));
  std::ostringstream d;
  d << "20 quads, worst relative deviation " << worst << "; additivity and zero area exact";
  return pass(d.str());
}

// ---------------------------------------------------------------------------
// 8. Analytics oracle equivalence
// ---------------------------------------------------------------------------

Outcome analytics_oracles() {
  std::mt19937_64 rng(8);
  const std::optional<Dimension> groupings[] = {std::nullopt, Dimension::Age, Dimension::Gender, Dimension::Income};
  auto fixture = [&](int i) {
    test::RandomOdOptions o;
    o.zones = test::zone_ids("28", 2 + static_cast<std::size_t>(i % 15));
    o.days = test::consecutive_days(Date(2022, 3, 16), 1 + static_cast<std::size_t>(i % 10));
    o.rows = 20 + static_cast<std::size_t>(rng() % 500);
    return test::random_od_table(rng, o);
  };
  for (int i = 0; i < 200; ++i) {
    const OdTable t = fixture(i);
    const ZoneId origin = t.rows[rng() % t.rows.size()].origin;
    const auto g = groupings[i % 4];
    const auto got = weekday_weekend_summary(t, origin, g);
    const auto want = oracle::weekday_weekend(t, origin, g ? std::string(to_string(*g)) : "");
    if (got.size() != want.size()) return fail("weekday/weekend fixture " + std::to_string(i) + ": row count");
    for (const auto& s : got) {
      const auto it = want.find({s.group.value_or(""), std::string(to_string(s.segment))});
      if (it == want.end() || !oracle::close(s.avg_daily_trips, it->second.avg) ||
          s.distinct_destinations != it->second.destinations)
        return fail("weekday/weekend fixture " + std::to_string(i));
    }
  }
  for (int i = 0; i < 200; ++i) {
    const OdTable t = fixture(i);
    HourlyOptions o;
    o.group_by = groupings[i % 4];
    o.reducer = i % 2 ? Reducer::MeanPerDay : Reducer::SumOverRange;
    o.exclude_internal = i % 3 == 0;
    if (i % 5 == 0) o.destination = t.rows[rng() % t.rows.size()].destination;
    const auto got = hourly_profile(t, o);
    const auto want = oracle::hourly(t, o);
    if (got.size() != want.size()) return fail("hourly fixture " + std::to_string(i) + ": group count");
    for (const auto& p : got) {
      const auto it = want.find(p.group_key);
      if (it == want.end()) return fail("hourly fixture " + std::to_string(i) + ": group " + p.group_key);
      for (int h = 0; h < 24; ++h)
        if (!oracle::close(p.values[h], it->second[h])) return fail("hourly fixture " + std::to_string(i));
    }
  }
  const std::vector<std::vector<Dimension>> sets = {{Dimension::Age},
                                                    {Dimension::Gender, Dimension::Income},
                                                    {Dimension::Age, Dimension::Gender, Dimension::Income}};
  for (int i = 0; i < 200; ++i) {
    const OdTable t = fixture(i);
    const auto& dims = sets[static_cast<std::size_t>(i) % sets.size()];
    std::vector<std::string> names;
    for (Dimension d : dims) names.emplace_back(to_string(d));
    std::optional<ZoneId> origin;
    if (i % 2) origin = t.rows[rng() % t.rows.size()].origin;
    const AnalyticsTable got = demographic_breakdown(t, origin, dims);
    const auto want = oracle::breakdown(t, origin, names);
    if (got.rows.size() != want.size()) return fail("breakdown fixture " + std::to_string(i) + ": row count");
    for (const auto& r : got.rows) {
      const auto it = want.find(r.keys);
      if (it == want.end() || !oracle::close(r.measures[0], it->second.trips) ||
          !oracle::close(r.measures[1], it->second.trips_km) || !oracle::close(r.measures[2], it->second.avg) ||
          r.measures[3] != static_cast<double>(it->second.destinations))
        return fail("breakdown fixture " + std::to_string(i));
    }
  }
  return pass("weekday/weekend, hourly and breakdown equal on 200 fixtures each");
}

// ---------------------------------------------------------------------------
// 9-10. Live portal
// ---------------------------------------------------------------------------

bool network_enabled() {
  const char* v = std::getenv(kNetworkVar);
  return v && std::string(v) == "1";
}

struct Live {
  CatalogConfig catalog;
  fs::path cache;
  std::optional<test::TempDir> tmp;

  Live() {
    const char* env_catalog = std::getenv(kCatalogEnvVar);
    catalog = discover_catalog(std::nullopt, env_catalog ? std::optional<std::string>(env_catalog) : std::nullopt).config;
    if (const char* c = std::getenv("SPAINMOB_CACHE"); c && *c) {
      cache = c;
    } else {
      tmp.emplace();
      cache = tmp->path() / "cache";
    }
  }
};

Outcome mean_areas() {
  if (!network_enabled()) return skip("set " + std::string(kNetworkVar) + "=1 to run against the live portal");
  Live live;
  const std::pair<ZoneLevel, double> targets[] = {
      {ZoneLevel::Districts, 133.56}, {ZoneLevel::Municipalities, 193.45}, {ZoneLevel::GreaterUrbanAreas, 242.79}};
  std::ostringstream d;
  bool ok = true;
  for (const auto& [level, want] : targets) {
    const ZoneCollection z = get_zone_geodataframe(level, DatasetVersion::V2, live.catalog, {}, live.cache);
    const double mean = mean_area_by_level(z.zones);
    const bool within = rel_close(mean, want, 0.01);
    ok = ok && within;
    d << to_string(level) << " " << mean << " (target " << want << (within ? ") " : ", outside 1%) ");
  }
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome madrid_patterns() {
  if (!network_enabled()) return skip("set " + std::string(kNetworkVar) + "=1 to run against the live portal");
  Live live;
  // Two full weeks; the reference figures do not state their dates, so only
  // the direction of the differences is checked.
  const DatasetRequest req = validate_request(2, DatasetKind::OriginDestination, "municipalities", "2022-03-07",
                                              "2022-03-20", live.cache, live.catalog.availability);
  DatasetOptions opts;
  opts.cache_root = live.cache;
  const OdTable t = load_od_table(req, false, live.catalog, {}, default_fetch_context(), opts);
  const auto s = weekday_weekend_summary(t, ZoneId("28079"));
  const FlowSummary& wd = s.at(0);
  const FlowSummary& we = s.at(1);
  std::ostringstream d;
  d << "weekday avg " << wd.avg_daily_trips << ", weekend avg " << we.avg_daily_trips << "; destinations "
    << wd.distinct_destinations << " vs " << we.distinct_destinations;
  const bool ok = we.avg_daily_trips > wd.avg_daily_trips && wd.distinct_destinations > we.distinct_destinations;
  return ok ? pass(d.str()) : fail(d.str());
}

}  // namespace
}  // namespace spainmob

int main() {
  using namespace spainmob;
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"end-to-end OD pipeline", od_pipeline},
      {"conservation", conservation},
      {"validation matrix", validation_matrix},
      {"quantile choropleth", quantile_choropleth},
      {"top-percentile flows", top_flows},
      {"fetcher robustness", fetcher_robustness},
      {"geodesic area", geodesic_area},
      {"analytics oracle equivalence", analytics_oracles},
      {"mean zone areas (live)", mean_areas},
      {"Madrid weekday/weekend direction (live)", madrid_patterns},
  };
  int failures = 0, n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
    if (o.status == Outcome::Fail) ++failures;
    std::cout << tag << ' ' << n << ' ' << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
