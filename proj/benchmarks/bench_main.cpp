#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>

#include <benchmark/benchmark.h>

#include "spainmob/analytics.hpp"
#include "spainmob/catalog.hpp"
#include "spainmob/geometry.hpp"
#include "spainmob/normalizer.hpp"
#include "spainmob/table_io.hpp"

namespace spainmob {
namespace {

namespace fs = std::filesystem;

std::string raw_od_text(std::size_t rows) {
  static const char* zones[] = {"28079", "28065", "08019", "48020", "01059", "50297", "46250", "41091"};
  static const char* dist[] = {"0.5-2", "2-10", "10-50", ">50"};
  static const char* act[] = {"casa", "trabajo_estudio", "frecuente", "no_frecuente"};
  static const char* age[] = {"0-25", "25-45", "45-65", "65-100", "NA"};
  static const char* sex[] = {"hombre", "mujer", "NA"};
  static const char* income[] = {"<10", "10-15", ">15", "NA"};
  std::mt19937_64 rng(1);
  std::ostringstream os;
  os << "fecha|periodo|origen|destino|distancia|actividad_origen|actividad_destino|estudio_origen_posible|"
        "estudio_destino_posible|residencia|renta|edad|sexo|viajes|viajes_km\n";
  for (std::size_t i = 0; i < rows; ++i) {
    os << "20220320|" << (i % 24 < 10 ? "0" : "") << i % 24 << '|' << zones[rng() % 8] << '|' << zones[rng() % 8]
       << '|' << dist[rng() % 4] << '|' << act[rng() % 4] << '|' << act[rng() % 4] << "|no|no|28|"
       << income[rng() % 4] << '|' << age[rng() % 5] << '|' << sex[rng() % 3] << '|' << (rng() % 100000) / 100.0
       << '|' << (rng() % 1000000) / 100.0 << '\n';
  }
  return os.str();
}

void BM_ParseOd(benchmark::State& state) {
  const CatalogConfig catalog = default_catalog();
  const SchemaMap& schema = catalog.schema("v2_od");
  const std::string text = raw_od_text(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    std::size_t n = 0;
    StreamParser<ODRecord> p(schema, ParseMode::Strict, [&](ODRecord&&) { ++n; });
    for (std::size_t off = 0; off < text.size(); off += 64 * 1024) p.feed(std::string_view(text).substr(off, 64 * 1024));
    p.finish();
    benchmark::DoNotOptimize(n);
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * text.size()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ParseOd)->Arg(10'000)->Arg(100'000);

void BM_GeodesicArea(benchmark::State& state) {
  // A ring of n vertices around Madrid.
  Geometry g;
  Ring r;
  const auto n = static_cast<int>(state.range(0));
  for (int k = 0; k < n; ++k) {
    const double t = 2 * std::numbers::pi * k / n;
    r.push_back({-3.7 + 0.3 * std::cos(t), 40.4 + 0.2 * std::sin(t)});
  }
  r.push_back(r.front());
  g.polygons.push_back({r, {}});
  g = repair(g);
  for (auto _ : state) benchmark::DoNotOptimize(compute_area_km2(g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeodesicArea)->Arg(100)->Arg(10'000);

void BM_QuantileBreaks(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::lognormal_distribution<double> d(3, 1);
  std::vector<double> v(static_cast<std::size_t>(state.range(0)));
  for (auto& x : v) x = d(rng);
  for (auto _ : state) {
    const auto b = quantile_breaks(v, 10);
    int sum = 0;
    for (double x : v) sum += quantile_class(x, b);
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_QuantileBreaks)->Arg(3'000)->Arg(100'000);

void BM_WriteParquet(benchmark::State& state) {
  const CatalogConfig catalog = default_catalog();
  OdTable t;
  t.level = ZoneLevel::Municipalities;
  StreamParser<ODRecord> p(catalog.schema("v2_od"), ParseMode::Strict,
                           [&](ODRecord&& r) { t.rows.push_back(std::move(r)); });
  p.feed(raw_od_text(static_cast<std::size_t>(state.range(0))));
  p.finish();
  sort_rows(t);
  const fs::path path = fs::temp_directory_path() / "spainmob_bench.parquet";
  for (auto _ : state) write_table(t, path);
  state.SetItemsProcessed(state.iterations() * state.range(0));
  fs::remove(path);
}
BENCHMARK(BM_WriteParquet)->Arg(100'000);

}  // namespace
}  // namespace spainmob

BENCHMARK_MAIN();
