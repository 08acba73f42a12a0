#pragma once

// Polygon geometry in WGS84 longitude/latitude degrees: load-time repair,
// geodesic area on the WGS84 ellipsoid, and inverse projections for the
// planar CRSs used by the official zone files.

#include <string>
#include <string_view>
#include <vector>

namespace spainmob {

struct LonLat {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

// Closed ring: front() == back().
using Ring = std::vector<LonLat>;

struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;

  friend bool operator==(const Polygon&, const Polygon&) = default;
};

struct Geometry {
  std::vector<Polygon> polygons;
  // Emitted as MultiPolygon even with a single part.
  bool multi = false;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

namespace wgs84 {
inline constexpr double a = 6378137.0;
inline constexpr double f = 1.0 / 298.257223563;
}  // namespace wgs84

// Closes the ring, drops consecutive duplicate vertices and orients it
// counter-clockwise (exterior) or clockwise (hole). Throws DegenerateGeometry
// for fewer than three distinct vertices and GeometryParseError for
// self-intersections or non-finite coordinates.
Ring repair_ring(Ring ring, bool exterior);
Geometry repair(Geometry g);

// True when two non-adjacent edges cross or overlap.
bool ring_self_intersects(const Ring& ring);

// Signed area of the region enclosed by geodesic edges, m². Positive for
// counter-clockwise rings.
double geodesic_ring_area_m2(const Ring& ring);

// Holes subtracted, parts summed. Throws DegenerateGeometry when the result
// is not positive.
double compute_area_km2(const Geometry& g);

// Planar (x, y) pair in the units of its CRS.
struct XY {
  double x = 0.0;
  double y = 0.0;
};

// Supported: EPSG:4326, OGC:CRS84, EPSG:3857, EPSG:25829, EPSG:25830,
// EPSG:25831, EPSG:32629..32631. Throws InvalidArgument otherwise.
void check_crs(std::string_view crs);
LonLat to_wgs84(const XY& p, std::string_view crs);
// Forward transverse Mercator for UTM zone `zone` (north), used by tests.
XY utm_forward(const LonLat& p, int zone);

// Even-odd test in lon/lat space.
bool point_in_ring(const LonLat& p, const Ring& ring);

}  // namespace spainmob
