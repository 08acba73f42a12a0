#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spainmob/analytics.hpp"
#include "spainmob/catalog.hpp"
#include "spainmob/error.hpp"
#include "spainmob/fetcher.hpp"
#include "spainmob/model.hpp"
#include "spainmob/normalizer.hpp"
#include "spainmob/table_io.hpp"
#include "spainmob/zones.hpp"

#ifndef SPAINMOB_VERSION_STRING
#define SPAINMOB_VERSION_STRING "0.0.0"
#endif

namespace spainmob::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string catalog;
  std::string out = "data";
  std::string cache;
  bool offline = false;
  bool verbose = false;
  bool json_errors = false;
  bool strict = false;
  int max_concurrent = 4;
  int max_retries = 3;
};

struct RequestFlags {
  int version = 0;
  std::string zones;
  std::string start;
  std::string end;
  CLI::Option* version_opt = nullptr;
  CLI::Option* zones_opt = nullptr;
  CLI::Option* start_opt = nullptr;
  CLI::Option* end_opt = nullptr;

  bool any() const { return version_opt->count() || start_opt->count() || end_opt->count(); }
};

class Session {
 public:
  Session(const CliEnvironment& env, const Globals& g) : env_(env), g_(g) {}

  std::ostream& out() const { return env_.out ? *env_.out : std::cout; }
  std::ostream& err() const { return env_.err ? *env_.err : std::cerr; }

  std::optional<std::string> getenv(const std::string& name) const {
    if (env_.getenv) return env_.getenv(name);
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  }

  std::chrono::system_clock::time_point now() const {
    return env_.clock ? env_.clock() : std::chrono::system_clock::now();
  }

  void log(const std::string& msg) {
    std::lock_guard lock(mu_);
    err() << format_utc(now()) << ' ' << msg << '\n';
  }
  void info(const std::string& msg) {
    if (g_.verbose) log(msg);
  }

  const CatalogConfig& catalog() {
    if (!catalog_) {
      std::optional<fs::path> flag;
      if (!g_.catalog.empty()) flag = g_.catalog;
      CatalogSelection sel = discover_catalog(flag, getenv(kCatalogEnvVar));
      info("catalog: " + sel.source);
      catalog_ = std::move(sel.config);
    }
    return *catalog_;
  }

  FetchPolicy policy() const {
    FetchPolicy p;
    p.offline_mode = g_.offline;
    p.max_concurrent = g_.max_concurrent;
    p.max_retries = g_.max_retries;
    return p;
  }

  FetchContext context() {
    FetchContext ctx;
    ctx.transport = env_.transport ? env_.transport : make_default_transport();
    ctx.clock = [this] { return now(); };
    ctx.progress = [this](const std::string& line) { log(line); };
    return ctx;
  }

  fs::path out_dir() const { return g_.out; }

  fs::path cache_root() {
    fs::path root;
    if (!g_.cache.empty()) {
      root = g_.cache;
    } else if (auto v = getenv(kCacheEnvVar); v && !v->empty()) {
      root = *v;
    } else {
      root = fs::path(g_.out) / "cache";
    }
    if (!cache_logged_) {
      info("cache: " + root.string());
      cache_logged_ = true;
    }
    return root;
  }

  ParseMode mode() const { return g_.strict ? ParseMode::Strict : ParseMode::Lenient; }

  DatasetOptions dataset_options(bool write_csv) {
    DatasetOptions o;
    o.cache_root = cache_root();
    o.mode = mode();
    o.write_csv = write_csv;
    return o;
  }

  void emit_path(const fs::path& p) { out() << p.string() << '\n'; }

 private:
  const CliEnvironment& env_;
  const Globals& g_;
  std::optional<CatalogConfig> catalog_;
  bool cache_logged_ = false;
  std::mutex mu_;
};

void add_request_flags(CLI::App* cmd, RequestFlags& f, bool required) {
  f.version_opt = cmd->add_option("--version", f.version, "Dataset version (1 or 2)");
  f.zones_opt = cmd->add_option("--zones", f.zones, "Zone level: districts, municipalities or gau");
  f.start_opt = cmd->add_option("--start", f.start, "First day, YYYY-MM-DD");
  f.end_opt = cmd->add_option("--end", f.end, "Last day, YYYY-MM-DD (default: --start)");
  if (required) {
    f.version_opt->required();
    f.zones_opt->required();
    f.start_opt->required();
  }
}

DatasetRequest make_request(Session& s, DatasetKind kind, const RequestFlags& f) {
  if (!f.version_opt->count() || !f.zones_opt->count() || !f.start_opt->count())
    throw UsageError("--version, --zones and --start are required");
  std::optional<std::string_view> end;
  if (f.end_opt->count()) end = f.end;
  return validate_request(f.version, kind, f.zones, f.start, end, s.out_dir(), s.catalog().availability);
}

void report_parsing(Session& s, const std::vector<std::pair<fs::path, ParseReport>>& reports) {
  std::size_t read = 0, emitted = 0, skipped = 0, files_with_skips = 0;
  for (const auto& [path, r] : reports) {
    read += r.rows_read;
    emitted += r.rows_emitted;
    skipped += r.rows_skipped;
    if (r.rows_skipped || !r.first_errors.empty()) ++files_with_skips;
  }
  s.info("parsed " + std::to_string(read) + " rows from " + std::to_string(reports.size()) + " files");
  if (files_with_skips == 0) return;
  s.log("WARNING: skipped " + std::to_string(skipped) + " of " + std::to_string(read) + " rows in " +
        std::to_string(files_with_skips) + " file(s); " + std::to_string(emitted) + " rows kept");
  std::size_t shown = 0;
  for (const auto& [path, r] : reports) {
    for (const auto& e : r.first_errors) {
      if (shown++ == 5) return;
      s.log("  " + path.filename().string() + ":" + std::to_string(e.line) + ": " + e.message);
    }
  }
}

std::string file_token(std::string text) {
  for (char& c : text)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  return text;
}

// ---------------------------------------------------------------------------
// Subcommand actions
// ---------------------------------------------------------------------------

int do_fetch(Session& s, const std::string& kind_text, const RequestFlags& f) {
  const DatasetKind kind = parse_dataset_kind(kind_text);
  const DatasetRequest request = make_request(s, kind, f);
  const auto descriptors = resolve_resources(request, s.catalog());
  const auto entries = fetch_all(descriptors, s.policy(), s.cache_root(), s.context());
  for (const auto& e : entries) s.emit_path(e.local_path);
  return 0;
}

int do_dataset(Session& s, DatasetKind kind, const RequestFlags& f, bool keep_activity,
               const std::string& format) {
  const DatasetRequest request = make_request(s, kind, f);
  const bool csv = parse_table_format(format) == TableFormat::Csv;
  const DatasetOptions options = s.dataset_options(csv);
  ExportedTable t;
  switch (kind) {
    case DatasetKind::OriginDestination:
      t = get_od_data(request, keep_activity, s.catalog(), s.policy(), s.context(), options);
      break;
    case DatasetKind::TripsPerPerson:
      t = get_number_of_trips_data(request, s.catalog(), s.policy(), s.context(), options);
      break;
    case DatasetKind::OvernightStays:
      t = get_overnight_stays_data(request, s.catalog(), s.policy(), s.context(), options);
      break;
  }
  report_parsing(s, t.reports);
  s.info("wrote " + std::to_string(t.row_count) + " rows in " + std::to_string(t.row_groups) + " row groups");
  s.emit_path(t.parquet_path);
  if (t.csv_path) s.emit_path(*t.csv_path);
  return 0;
}

int do_zones_get(Session& s, const RequestFlags& f) {
  if (!f.version_opt->count() || !f.zones_opt->count()) throw UsageError("--version and --zones are required");
  const DatasetVersion version = parse_dataset_version(f.version);
  const ZoneLevel level = parse_zone_level(f.zones);
  const ZoneCollection zones =
      get_zone_geodataframe(level, version, s.catalog(), s.policy(), s.cache_root(), s.context());
  const fs::path path = zones_geojson_path(s.out_dir(), level, version);
  write_zones_geojson(zones, path);
  std::ostringstream msg;
  msg << zones.zones.size() << " zones, mean area " << format_double(mean_area_by_level(zones.zones)) << " km2";
  s.log(msg.str());
  s.emit_path(path);
  return 0;
}

int do_relations(Session& s, const std::string& format) {
  const ZoneRelations relations = get_zone_relations(s.catalog(), s.policy(), s.cache_root(), s.context());
  const fs::path path = s.out_dir() / (std::string("relations.") + format);
  write_relations(relations, path);
  s.info(std::to_string(relations.rows().size()) + " district relations");
  s.emit_path(path);
  return 0;
}

struct AnalyzeInput {
  std::string input;
  CLI::Option* input_opt = nullptr;
  RequestFlags request;
  std::string format = "csv";
};

void add_analyze_input(CLI::App* cmd, AnalyzeInput& a) {
  a.input_opt = cmd->add_option("--input", a.input, "Normalized table (Parquet or CSV) to analyze")
                    ->check(CLI::ExistingFile);
  add_request_flags(cmd, a.request, false);
  cmd->add_option("--format", a.format, "Output table format")->check(CLI::IsMember({"csv", "parquet"}));
}

ZoneLevel input_level(const AnalyzeInput& a) {
  return a.request.zones_opt->count() ? parse_zone_level(a.request.zones) : ZoneLevel::Districts;
}

OdTable load_od(Session& s, const AnalyzeInput& a) {
  if (a.input_opt->count()) {
    if (a.request.any()) throw UsageError("--input cannot be combined with --version, --start or --end");
    return read_od_table(a.input, input_level(a));
  }
  const DatasetRequest request = make_request(s, DatasetKind::OriginDestination, a.request);
  std::vector<std::pair<fs::path, ParseReport>> reports;
  OdTable t = load_od_table(request, false, s.catalog(), s.policy(), s.context(), s.dataset_options(false),
                            &reports);
  report_parsing(s, reports);
  return t;
}

OvernightTable load_overnight(Session& s, const AnalyzeInput& a) {
  if (a.input_opt->count()) {
    if (a.request.any()) throw UsageError("--input cannot be combined with --version, --start or --end");
    return read_overnight_table(a.input, input_level(a));
  }
  const DatasetRequest request = make_request(s, DatasetKind::OvernightStays, a.request);
  const ExportedTable t =
      get_overnight_stays_data(request, s.catalog(), s.policy(), s.context(), s.dataset_options(false));
  report_parsing(s, t.reports);
  return read_overnight_table(t.parquet_path, request.level());
}

void write_analysis(Session& s, const AnalyticsTable& table, const std::string& stem, const std::string& format) {
  const fs::path path = s.out_dir() / (stem + "." + format);
  write_analytics_table(table, path);
  s.info(std::to_string(table.rows.size()) + " result rows");
  s.emit_path(path);
}

std::optional<Dimension> optional_dimension(const std::string& text) {
  if (text.empty()) return std::nullopt;
  return parse_dimension(text);
}

// ---------------------------------------------------------------------------
// Completion
// ---------------------------------------------------------------------------

void collect_words(const CLI::App* app, const std::string& path, const std::vector<std::string>& inherited,
                   std::map<std::string, std::vector<std::string>>& out) {
  std::vector<std::string> words = inherited;
  std::vector<std::string> own;
  for (const CLI::Option* o : app->get_options()) {
    for (const auto& n : o->get_lnames()) own.push_back("--" + n);
    for (const auto& n : o->get_snames()) own.push_back("-" + n);
  }
  words.insert(words.end(), own.begin(), own.end());
  for (const CLI::App* sub : app->get_subcommands([](const CLI::App*) { return true; }))
    words.push_back(sub->get_name());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  out[path] = words;
  // Root options fall through to every subcommand.
  const std::vector<std::string>& pass = path.empty() ? own : inherited;
  for (const CLI::App* sub : app->get_subcommands([](const CLI::App*) { return true; }))
    collect_words(sub, path.empty() ? sub->get_name() : path + " " + sub->get_name(), pass, out);
}

std::string completion_script(const CLI::App& app, const std::string& shell) {
  std::map<std::string, std::vector<std::string>> table;
  collect_words(&app, "", {}, table);
  std::ostringstream os;
  if (shell == "zsh") os << "autoload -U +X bashcompinit && bashcompinit\n";
  os << "_spainmob_words() {\n  case \"$1\" in\n";
  for (const auto& [path, words] : table) {
    os << "    \"" << path << "\") echo \"";
    for (std::size_t i = 0; i < words.size(); ++i) os << (i ? " " : "") << words[i];
    os << "\" ;;\n";
  }
  os << "  esac\n}\n"
        "_spainmob() {\n"
        "  local cur=\"${COMP_WORDS[COMP_CWORD]}\" path=\"\" i w words\n"
        "  for ((i = 1; i < COMP_CWORD; i++)); do\n"
        "    w=\"${COMP_WORDS[i]}\"\n"
        "    [[ \"$w\" == -* ]] && continue\n"
        "    words=\" $(_spainmob_words \"$path\") \"\n"
        "    [[ \"$words\" == *\" $w \"* ]] && path=\"${path:+$path }$w\"\n"
        "  done\n"
        "  COMPREPLY=($(compgen -W \"$(_spainmob_words \"$path\")\" -- \"$cur\"))\n"
        "}\n"
        "complete -F _spainmob spainmob\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Error reporting
// ---------------------------------------------------------------------------

int report_error(const Session& s, bool as_json, std::string_view kind, int code, const std::string& message,
                 const json& extra = json::object()) {
  if (as_json) {
    json j = extra;
    j["error"] = kind;
    j["exit_code"] = code;
    j["message"] = message;
    s.err() << j.dump() << '\n';
  } else {
    s.err() << "error: " << message << '\n';
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, const CliEnvironment& env) {
  Globals g;
  Session session(env, g);

  CLI::App app{"Download, normalize and analyze the Spanish open mobility datasets", "spainmob"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::Throw);
  app.set_version_flag("--version", SPAINMOB_VERSION_STRING);
  app.require_subcommand(1);
  app.fallthrough();

  app.add_option("--catalog", g.catalog, "Catalog file (overrides " + std::string(kCatalogEnvVar) + ")");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--cache", g.cache, "Cache root (default: $" + std::string(kCacheEnvVar) + " or <out>/cache)");
  app.add_flag("--offline", g.offline, "Serve from the cache only; never open a connection");
  app.add_flag("-v,--verbose", g.verbose, "Log catalog source, cache root and row counts");
  app.add_flag("--json-errors", g.json_errors, "Report errors as one JSON object on standard error");
  app.add_flag("--strict", g.strict, "Fail on the first malformed row instead of skipping it");
  app.add_option("--max-concurrent", g.max_concurrent, "Parallel downloads")
      ->check(CLI::Range(1, 64))
      ->capture_default_str();
  app.add_option("--max-retries", g.max_retries, "Retries per download")
      ->check(CLI::Range(0, 20))
      ->capture_default_str();

  std::vector<std::pair<CLI::App*, std::function<int()>>> actions;

  // fetch
  std::string fetch_kind;
  RequestFlags fetch_flags;
  {
    CLI::App* cmd = app.add_subcommand("fetch", "Download raw daily files into the cache");
    cmd->add_option("--kind", fetch_kind, "od, trips or overnight")->required();
    add_request_flags(cmd, fetch_flags, true);
    actions.emplace_back(cmd, [&] { return do_fetch(session, fetch_kind, fetch_flags); });
  }

  // od / trips / overnight
  struct DatasetCmd {
    RequestFlags flags;
    std::string format = "parquet";
    bool keep_activity = false;
  };
  DatasetCmd od_cmd, trips_cmd, overnight_cmd;
  const auto add_dataset = [&](const char* name, const char* help, DatasetKind kind, DatasetCmd& c) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_request_flags(cmd, c.flags, true);
    cmd->add_option("--format", c.format, "parquet, or csv to also write a CSV copy")
        ->check(CLI::IsMember({"parquet", "csv"}));
    if (kind == DatasetKind::OriginDestination)
      cmd->add_flag("--keep-activity", c.keep_activity, "Keep activity_origin/activity_destination columns");
    actions.emplace_back(cmd, [&, kind] { return do_dataset(session, kind, c.flags, c.keep_activity, c.format); });
  };
  add_dataset("od", "Origin-destination trips", DatasetKind::OriginDestination, od_cmd);
  add_dataset("trips", "Persons by number of trips", DatasetKind::TripsPerPerson, trips_cmd);
  add_dataset("overnight", "Overnight stays by residence zone", DatasetKind::OvernightStays, overnight_cmd);

  // zones
  RequestFlags zones_flags;
  std::string relations_format = "csv";
  {
    CLI::App* zones = app.add_subcommand("zones", "Zone geometries and relations");
    zones->require_subcommand(1);
    CLI::App* get = zones->add_subcommand("get", "Write the zone tessellation as GeoJSON");
    get->add_option("--version", zones_flags.version, "Dataset version (1 or 2)")->required();
    get->add_option("--zones", zones_flags.zones, "Zone level")->required();
    zones_flags.version_opt = get->get_option("--version");
    zones_flags.zones_opt = get->get_option("--zones");
    actions.emplace_back(get, [&] { return do_zones_get(session, zones_flags); });

    CLI::App* rel = zones->add_subcommand("relations", "Write the district/municipality/GAU relation table");
    rel->add_option("--format", relations_format, "Output format")->check(CLI::IsMember({"csv", "parquet"}));
    actions.emplace_back(rel, [&] { return do_relations(session, relations_format); });
  }
  {
    CLI::App* rel = app.add_subcommand("relations", "Same as 'zones relations'");
    rel->add_option("--format", relations_format, "Output format")->check(CLI::IsMember({"csv", "parquet"}));
    actions.emplace_back(rel, [&] { return do_relations(session, relations_format); });
  }

  // analyze
  CLI::App* analyze = app.add_subcommand("analyze", "Aggregates over OD and overnight tables");
  analyze->require_subcommand(1);

  AnalyzeInput ww_in;
  std::string ww_origin, ww_group;
  {
    CLI::App* cmd = analyze->add_subcommand("weekday-weekend", "Average daily trips and destinations by day type");
    add_analyze_input(cmd, ww_in);
    cmd->add_option("--origin", ww_origin, "Origin zone id")->required();
    cmd->add_option("--group-by", ww_group, "age, gender or income");
    actions.emplace_back(cmd, [&] {
      const OdTable t = load_od(session, ww_in);
      const auto group = optional_dimension(ww_group);
      const auto summary = weekday_weekend_summary(t, ZoneId(ww_origin), group);
      std::string stem = "weekday_weekend_" + file_token(ww_origin);
      if (group) stem += "_by_" + std::string(to_string(*group));
      write_analysis(session, to_table(summary, group), stem, ww_in.format);
      return 0;
    });
  }

  AnalyzeInput hourly_in;
  std::string hourly_dest, hourly_group, hourly_reducer = "sum";
  bool hourly_exclude_internal = false;
  {
    CLI::App* cmd = analyze->add_subcommand("hourly", "Trips per hour of day");
    add_analyze_input(cmd, hourly_in);
    cmd->add_option("--destination", hourly_dest, "Only trips arriving at this zone");
    cmd->add_option("--group-by", hourly_group, "age, gender or income");
    cmd->add_option("--reducer", hourly_reducer, "sum over the range, or mean per day")
        ->check(CLI::IsMember({"sum", "mean"}));
    cmd->add_flag("--exclude-internal", hourly_exclude_internal, "Drop trips whose origin equals the destination");
    actions.emplace_back(cmd, [&] {
      const OdTable t = load_od(session, hourly_in);
      HourlyOptions o;
      if (!hourly_dest.empty()) o.destination = ZoneId(hourly_dest);
      o.group_by = optional_dimension(hourly_group);
      o.reducer = hourly_reducer == "mean" ? Reducer::MeanPerDay : Reducer::SumOverRange;
      o.exclude_internal = hourly_exclude_internal;
      std::string stem = "hourly";
      if (o.destination) stem += "_to_" + file_token(hourly_dest);
      if (o.group_by) stem += "_by_" + std::string(to_string(*o.group_by));
      write_analysis(session, to_table(hourly_profile(t, o)), stem, hourly_in.format);
      return 0;
    });
  }

  AnalyzeInput top_in;
  std::string top_origin, top_basis = "destinations";
  double top_pct = 3.0;
  {
    CLI::App* cmd = analyze->add_subcommand("top-flows", "Destinations in the top percentile of trips from an origin");
    add_analyze_input(cmd, top_in);
    cmd->add_option("--origin", top_origin, "Origin zone id")->required();
    cmd->add_option("--percentile", top_pct, "Percentile rank in (0, 100]")->capture_default_str();
    cmd->add_option("--basis", top_basis, "destinations (count) or trips (cumulative share)")
        ->check(CLI::IsMember({"destinations", "trips"}));
    actions.emplace_back(cmd, [&] {
      const OdTable t = load_od(session, top_in);
      const PercentileBasis basis = top_basis == "trips" ? PercentileBasis::TripMass : PercentileBasis::Destinations;
      const auto flows = top_percentile_flows(t, ZoneId(top_origin), top_pct, basis);
      std::string stem = "top_flows_" + file_token(top_origin) + "_p" + file_token(format_double(top_pct));
      if (basis == PercentileBasis::TripMass) stem += "_trips";
      write_analysis(session, to_table(flows), stem, top_in.format);
      return 0;
    });
  }

  AnalyzeInput map_in;
  int map_classes = 10;
  std::string map_statistic = "mean", map_zones_file;
  {
    CLI::App* cmd = analyze->add_subcommand("overnight-map", "Quantile classes of overnight stays per zone");
    add_analyze_input(cmd, map_in);
    cmd->add_option("--classes", map_classes, "Number of classes")->capture_default_str();
    cmd->add_option("--statistic", map_statistic, "mean per day, or total")
        ->check(CLI::IsMember({"mean", "total"}));
    cmd->add_option("--zones-file", map_zones_file, "GeoJSON written by 'zones get' (default: fetch)")
        ->check(CLI::ExistingFile);
    actions.emplace_back(cmd, [&] {
      const OvernightTable t = load_overnight(session, map_in);
      const OvernightStatistic stat =
          map_statistic == "total" ? OvernightStatistic::Total : OvernightStatistic::MeanPerDay;
      const QuantileMap qm = overnight_quantile_map(t, map_classes, stat);
      ZoneCollection zones;
      if (!map_zones_file.empty()) {
        zones = read_zones_geojson(map_zones_file);
      } else {
        const DatasetVersion v =
            map_in.request.version_opt->count() ? parse_dataset_version(map_in.request.version) : DatasetVersion::V2;
        zones = get_zone_geodataframe(t.level, v, session.catalog(), session.policy(), session.cache_root(),
                                      session.context());
      }
      const std::string stem = "overnight_map_" + std::string(to_string(t.level)) + "_" +
                               std::to_string(map_classes) + "_" + map_statistic;
      const fs::path geo = session.out_dir() / (stem + ".geojson");
      fs::create_directories(session.out_dir());
      {
        const std::string text = quantile_map_geojson(qm, zones);
        const fs::path tmp = fs::path(geo.string() + ".tmp");
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << text;
        f.close();
        if (!f) fail(Errc::Io, "cannot write " + geo.string());
        fs::rename(tmp, geo);
      }
      write_analysis(session, to_table(qm), stem, map_in.format);
      session.emit_path(geo);
      return 0;
    });
  }

  AnalyzeInput bd_in;
  std::string bd_origin;
  std::vector<std::string> bd_dims;
  {
    CLI::App* cmd = analyze->add_subcommand("breakdown", "Trips by demographic dimensions and day type");
    add_analyze_input(cmd, bd_in);
    cmd->add_option("--origin", bd_origin, "Origin zone id (default: all origins)");
    cmd->add_option("--dimensions", bd_dims, "Comma-separated: age, gender, income")
        ->required()
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    actions.emplace_back(cmd, [&] {
      const OdTable t = load_od(session, bd_in);
      std::vector<Dimension> dims;
      for (const auto& d : bd_dims) dims.push_back(parse_dimension(d));
      std::optional<ZoneId> origin;
      if (!bd_origin.empty()) origin = ZoneId(bd_origin);
      std::string stem = "breakdown_" + (origin ? file_token(bd_origin) : std::string("all"));
      for (Dimension d : dims) stem += "_" + std::string(to_string(d));
      write_analysis(session, demographic_breakdown(t, origin, dims), stem, bd_in.format);
      return 0;
    });
  }

  // cache
  std::string purge_older;
  int purge_version = 0;
  bool verify_digests = false;
  {
    CLI::App* cache = app.add_subcommand("cache", "Inspect and maintain the download cache");
    cache->require_subcommand(1);

    CLI::App* purge_cmd = cache->add_subcommand("purge", "Delete cached files");
    purge_cmd->add_option("--older-than", purge_older, "Age such as 30d, 12h, 45m (default: everything)");
    CLI::Option* pv = purge_cmd->add_option("--dataset-version", purge_version, "Only files of this version");
    actions.emplace_back(purge_cmd, [&, pv] {
      std::optional<std::chrono::seconds> age;
      if (!purge_older.empty()) age = parse_duration(purge_older);
      std::optional<DatasetVersion> version;
      if (pv->count()) version = parse_dataset_version(purge_version);
      const std::size_t n = purge(session.cache_root(), age, version, [&] { return session.now(); });
      session.log("removed " + std::to_string(n) + " cache entries");
      return 0;
    });

    CLI::App* verify = cache->add_subcommand("verify", "Check the manifest against the files on disk");
    verify->add_flag("--digests", verify_digests, "Re-hash every file");
    actions.emplace_back(verify, [&] {
      const CacheReport r = verify_cache(session.cache_root(), verify_digests);
      session.log(std::to_string(r.entries) + " entries");
      const auto list = [&](const char* what, const std::vector<std::string>& items) {
        for (const auto& i : items) session.log(std::string(what) + ": " + i);
      };
      list("missing", r.missing_files);
      list("size mismatch", r.size_mismatches);
      list("digest mismatch", r.digest_mismatches);
      list("unrecorded", r.unrecorded_files);
      list("partial download", r.partial_files);
      if (!r.consistent()) fail(Errc::IntegrityError, "cache at " + session.cache_root().string() + " is inconsistent");
      return 0;
    });

    CLI::App* list = cache->add_subcommand("list", "Print the path of every cached file");
    actions.emplace_back(list, [&] {
      std::vector<fs::path> paths;
      for (const auto& e : Cache(session.cache_root()).entries()) paths.push_back(e.local_path);
      std::sort(paths.begin(), paths.end());
      for (const auto& p : paths) session.emit_path(p);
      return 0;
    });
  }

  // completion
  std::string shell = "bash";
  {
    CLI::App* cmd = app.add_subcommand("completion", "Print a shell completion script");
    cmd->add_option("shell", shell, "bash or zsh")->check(CLI::IsMember({"bash", "zsh"}));
    actions.emplace_back(cmd, [&] {
      session.out() << completion_script(app, shell);
      return 0;
    });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, session.out(), session.err());
      return 0;
    }
    return report_error(session, g.json_errors, "UsageError", 2,
                        std::string(e.what()) + "\nRun with --help for usage.");
  }

  // CLI11 accepts repeated boolean flags; scalars must appear at most once.
  std::vector<const CLI::App*> pending{&app};
  while (!pending.empty()) {
    const CLI::App* a = pending.back();
    pending.pop_back();
    for (const CLI::Option* o : a->get_options())
      if (o->get_items_expected_max() <= 1 && o->count() > 1)
        return report_error(session, g.json_errors, "UsageError", 2,
                            o->get_name() + " given more than once\nRun with --help for usage.");
    for (const CLI::App* sub : a->get_subcommands()) pending.push_back(sub);
  }

  const std::function<int()>* action = nullptr;
  for (auto& [cmd, fn] : actions)
    if (cmd->parsed()) action = &fn;  // deeper subcommands are registered after their parents
  if (!action) return report_error(session, g.json_errors, "UsageError", 2, "no subcommand given");

  try {
    return (*action)();
  } catch (const PartialFailure& e) {
    json failed = json::array();
    for (const auto& f : e.failed())
      failed.push_back({{"url", f.descriptor.url}, {"error", to_string(f.code)}, {"message", f.message}});
    return report_error(session, g.json_errors, to_string(e.code()), exit_code_for(e.code()), e.what(),
                        json{{"failed", failed}});
  } catch (const Error& e) {
    return report_error(session, g.json_errors, to_string(e.code()), exit_code_for(e.code()), e.what());
  } catch (const UsageError& e) {
    return report_error(session, g.json_errors, "UsageError", 2, e.what());
  } catch (const std::exception& e) {
    return report_error(session, g.json_errors, "InternalError", 1, e.what());
  }
}

}  // namespace spainmob::cli
