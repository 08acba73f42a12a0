#include "spainmob/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <tuple>

#include "spainmob/error.hpp"

namespace spainmob {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double shoelace(const Ring& r) {
  double s = 0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) s += r[i].lon * r[i + 1].lat - r[i + 1].lon * r[i].lat;
  return s / 2;
}

int orient(const LonLat& a, const LonLat& b, const LonLat& c) {
  const double v = (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
  return (v > 0) - (v < 0);
}

// Proper crossing, or collinear overlap of positive length. Touching at a
// single point is allowed.
bool segments_conflict(const LonLat& p1, const LonLat& p2, const LonLat& q1, const LonLat& q2) {
  const int o1 = orient(p1, p2, q1), o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1), o4 = orient(q1, q2, p2);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  if (o1 == 0 && o2 == 0) {
    // Collinear: project on the dominant axis and compare interval overlap.
    const bool use_lon = std::abs(p2.lon - p1.lon) >= std::abs(p2.lat - p1.lat);
    auto key = [&](const LonLat& v) { return use_lon ? v.lon : v.lat; };
    const double lo = std::max(std::min(key(p1), key(p2)), std::min(key(q1), key(q2)));
    const double hi = std::min(std::max(key(p1), key(p2)), std::max(key(q1), key(q2)));
    return hi > lo;
  }
  return false;
}

}  // namespace

bool ring_self_intersects(const Ring& ring) {
  const std::size_t m = ring.size() - 1;  // edge count
  if (m < 4) return false;
  struct Edge {
    double xmin, xmax, ymin, ymax;
    std::size_t i;
  };
  std::vector<Edge> edges(m);
  for (std::size_t i = 0; i < m; ++i) {
    const LonLat& a = ring[i];
    const LonLat& b = ring[i + 1];
    edges[i] = {std::min(a.lon, b.lon), std::max(a.lon, b.lon), std::min(a.lat, b.lat),
                std::max(a.lat, b.lat), i};
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) { return x.xmin < y.xmin; });
  std::vector<const Edge*> active;
  for (const Edge& e : edges) {
    std::erase_if(active, [&](const Edge* a) { return a->xmax < e.xmin; });
    for (const Edge* a : active) {
      if (a->ymax < e.ymin || e.ymax < a->ymin) continue;
      const std::size_t i = std::min(a->i, e.i), j = std::max(a->i, e.i);
      if (j == i + 1 || (i == 0 && j == m - 1)) continue;
      if (segments_conflict(ring[i], ring[i + 1], ring[j], ring[j + 1])) return true;
    }
    active.push_back(&e);
  }
  return false;
}

Ring repair_ring(Ring ring, bool exterior) {
  for (const LonLat& p : ring)
    if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || std::abs(p.lat) > 90.0 || std::abs(p.lon) > 540.0)
      fail(Errc::GeometryParseError, "coordinate out of range");
  Ring out;
  out.reserve(ring.size() + 1);
  for (const LonLat& p : ring)
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  if (out.size() < 3) fail(Errc::DegenerateGeometry, "ring has fewer than three distinct vertices");
  out.push_back(out.front());
  if (ring_self_intersects(out)) fail(Errc::GeometryParseError, "ring is self-intersecting");
  const double s = shoelace(out);
  if ((exterior && s < 0) || (!exterior && s > 0)) std::reverse(out.begin(), out.end());
  return out;
}

Geometry repair(Geometry g) {
  if (g.polygons.empty()) fail(Errc::DegenerateGeometry, "geometry has no polygons");
  for (Polygon& p : g.polygons) {
    p.exterior = repair_ring(std::move(p.exterior), true);
    for (Ring& h : p.holes) h = repair_ring(std::move(h), false);
  }
  return g;
}

bool point_in_ring(const LonLat& p, const Ring& ring) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const LonLat& a = ring[i];
    const LonLat& b = ring[j];
    if ((a.lat > p.lat) != (b.lat > p.lat) &&
        p.lon < (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon)
      inside = !inside;
  }
  return inside;
}

// ---------------------------------------------------------------------------
// Geodesic area
// ---------------------------------------------------------------------------

namespace {

struct Ellipsoid {
  double a, f, b, e2, ep2, e, c2;
  Ellipsoid(double a_, double f_) : a(a_), f(f_) {
    b = a * (1 - f);
    e2 = f * (2 - f);
    ep2 = e2 / (1 - e2);
    e = std::sqrt(e2);
    c2 = (a * a + b * b * std::atanh(e) / e) / 2;
  }
};

const Ellipsoid& wgs84_ellipsoid() {
  static const Ellipsoid el(wgs84::a, wgs84::f);
  return el;
}

// sqrt(1 + x) * asinh(sqrt x) / sqrt x
double h_term(double x) {
  if (x < 1e-4) return std::sqrt(1 + x) * (1 - x / 6 + 3 * x * x / 40);
  const double s = std::sqrt(x);
  return std::sqrt(1 + x) * std::asinh(s) / s;
}

double t_func(double x) { return x + h_term(x); }

double t_deriv(double x) {
  // d/dx [sqrt(1+x) * q(x)], q = asinh(sqrt x)/sqrt x
  double q, dq;
  if (x < 1e-3) {
    q = 1 - x / 6 + 3 * x * x / 40;
    dq = -1.0 / 6 + 3 * x / 20;
  } else {
    const double s = std::sqrt(x);
    q = std::asinh(s) / s;
    dq = (1 / std::sqrt(1 + x) - q) / (2 * x);
  }
  return 1 + q / (2 * std::sqrt(1 + x)) + std::sqrt(1 + x) * dq;
}

double divided_t(double x, double y) {
  const double d = x - y;
  if (std::abs(d) <= 1e-4 * std::max(std::abs(x), 1e-12)) return t_deriv((x + y) / 2);
  return (t_func(x) - t_func(y)) / d;
}

// 10-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 5> kGlNodes{0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                         0.8650633666889845, 0.9739065285171717};
constexpr std::array<double, 5> kGlWeights{0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                           0.1494513491505806, 0.0666713443086881};

struct Inverse {
  double alpha1 = 0, alpha2 = 0, sigma = 0, sin_u1 = 0, cos_u1 = 0;
  bool ok = false;
};

Inverse vincenty(const Ellipsoid& el, double lat1, double lon1, double lat2, double lon2) {
  Inverse r;
  const double L = std::remainder(lon2 - lon1, 2 * std::numbers::pi);
  const double u1 = std::atan((1 - el.f) * std::tan(lat1));
  const double u2 = std::atan((1 - el.f) * std::tan(lat2));
  const double su1 = std::sin(u1), cu1 = std::cos(u1), su2 = std::sin(u2), cu2 = std::cos(u2);
  double lambda = L, sin_sigma = 0, cos_sigma = 0, sigma = 0;
  for (int it = 0; it < 200; ++it) {
    const double sl = std::sin(lambda), cl = std::cos(lambda);
    sin_sigma = std::hypot(cu2 * sl, cu1 * su2 - su1 * cu2 * cl);
    if (sin_sigma == 0) return r;
    cos_sigma = su1 * su2 + cu1 * cu2 * cl;
    sigma = std::atan2(sin_sigma, cos_sigma);
    const double sin_alpha = cu1 * cu2 * sl / sin_sigma;
    const double cos2_alpha = 1 - sin_alpha * sin_alpha;
    const double cos_2sm = cos2_alpha != 0 ? cos_sigma - 2 * su1 * su2 / cos2_alpha : 0;
    const double C = el.f / 16 * cos2_alpha * (4 + el.f * (4 - 3 * cos2_alpha));
    const double prev = lambda;
    lambda = L + (1 - C) * el.f * sin_alpha *
                     (sigma + C * sin_sigma * (cos_2sm + C * cos_sigma * (-1 + 2 * cos_2sm * cos_2sm)));
    if (std::abs(lambda - prev) < 1e-13) break;
  }
  const double sl = std::sin(lambda), cl = std::cos(lambda);
  r.alpha1 = std::atan2(cu2 * sl, cu1 * su2 - su1 * cu2 * cl);
  r.alpha2 = std::atan2(cu1 * sl, -su1 * cu2 + cu1 * su2 * cl);
  r.sigma = sigma;
  r.sin_u1 = su1;
  r.cos_u1 = cu1;
  r.ok = true;
  return r;
}

// Area between the geodesic from p1 to p2 and the equator. Evaluated in one
// canonical direction so that reversing an edge negates it exactly.
double edge_area(const Ellipsoid& el, const LonLat& p1, const LonLat& p2) {
  if (std::tie(p2.lon, p2.lat) < std::tie(p1.lon, p1.lat)) return -edge_area(el, p2, p1);
  if (p1.lon == p2.lon) return 0;  // meridian arc
  const Inverse g = vincenty(el, p1.lat * kDeg, p1.lon * kDeg, p2.lat * kDeg, p2.lon * kDeg);
  if (!g.ok) return 0;
  const double sin_a0 = std::sin(g.alpha1) * g.cos_u1;
  const double cos_a0 = std::hypot(std::cos(g.alpha1), std::sin(g.alpha1) * g.sin_u1);
  const double sigma1 = std::atan2(g.sin_u1, std::cos(g.alpha1) * g.cos_u1);
  const double sigma2 = sigma1 + g.sigma;
  const double k2 = el.ep2 * cos_a0 * cos_a0;

  // I4(sigma2) - I4(sigma1) = -integral over [sigma1, sigma2].
  const double mid = (sigma1 + sigma2) / 2, half = (sigma2 - sigma1) / 2;
  double integral = 0;
  for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
    for (double sign : {-1.0, 1.0}) {
      const double s = mid + sign * half * kGlNodes[i];
      const double ss = std::sin(s);
      integral += kGlWeights[i] * divided_t(el.ep2, k2 * ss * ss) * ss / 2;
    }
  }
  integral *= half;

  const double dalpha = std::remainder(g.alpha2 - g.alpha1, 2 * std::numbers::pi);
  return el.c2 * dalpha - el.e2 * el.a * el.a * cos_a0 * sin_a0 * integral;
}

}  // namespace

double geodesic_ring_area_m2(const Ring& ring) {
  const Ellipsoid& el = wgs84_ellipsoid();
  double sum = 0, comp = 0;  // Kahan summation
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double y = edge_area(el, ring[i], ring[i + 1]) - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return -sum;
}

double compute_area_km2(const Geometry& g) {
  double total = 0;
  for (const Polygon& p : g.polygons) {
    double area = std::abs(geodesic_ring_area_m2(p.exterior));
    for (const Ring& h : p.holes) area -= std::abs(geodesic_ring_area_m2(h));
    total += area;
  }
  const double km2 = total / 1e6;
  // Below a square millimetre is rounding noise from collinear vertices.
  if (!(km2 > 1e-12)) fail(Errc::DegenerateGeometry, "geometry has zero area");
  return km2;
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

namespace {

constexpr double kGrs80F = 1.0 / 298.257222101;

struct Utm {
  int zone;
  double f;
};

std::optional<Utm> utm_for(std::string_view crs) {
  if (crs == "EPSG:25829") return Utm{29, kGrs80F};
  if (crs == "EPSG:25830") return Utm{30, kGrs80F};
  if (crs == "EPSG:25831") return Utm{31, kGrs80F};
  if (crs == "EPSG:32629") return Utm{29, wgs84::f};
  if (crs == "EPSG:32630") return Utm{30, wgs84::f};
  if (crs == "EPSG:32631") return Utm{31, wgs84::f};
  return std::nullopt;
}

bool is_geographic(std::string_view crs) {
  return crs == "EPSG:4326" || crs == "OGC:CRS84" || crs == "CRS84" || crs == "WGS84" ||
         crs == "urn:ogc:def:crs:OGC:1.3:CRS84" || crs == "urn:ogc:def:crs:EPSG::4326";
}

bool is_web_mercator(std::string_view crs) {
  return crs == "EPSG:3857" || crs == "EPSG:900913" || crs == "urn:ogc:def:crs:EPSG::3857";
}

constexpr double kK0 = 0.9996;
constexpr double kFalseEasting = 500000.0;

struct Kruger {
  double A;
  std::array<double, 6> alpha, beta, delta;
  double e;
};

Kruger kruger(double a, double f) {
  const double n = f / (2 - f);
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n, n5 = n4 * n, n6 = n5 * n;
  Kruger k;
  k.A = a / (1 + n) * (1 + n2 / 4 + n4 / 64 + n6 / 256);
  k.alpha = {n / 2 - 2 * n2 / 3 + 5 * n3 / 16 + 41 * n4 / 180 - 127 * n5 / 288 + 7891 * n6 / 37800,
             13 * n2 / 48 - 3 * n3 / 5 + 557 * n4 / 1440 + 281 * n5 / 630 - 1983433 * n6 / 1935360,
             61 * n3 / 240 - 103 * n4 / 140 + 15061 * n5 / 26880 + 167603 * n6 / 181440,
             49561 * n4 / 161280 - 179 * n5 / 168 + 6601661 * n6 / 7257600,
             34729 * n5 / 80640 - 3418889 * n6 / 1995840,
             212378941 * n6 / 319334400};
  k.beta = {n / 2 - 2 * n2 / 3 + 37 * n3 / 96 - n4 / 360 - 81 * n5 / 512 + 96199 * n6 / 604800,
            n2 / 48 + n3 / 15 - 437 * n4 / 1440 + 46 * n5 / 105 - 1118711 * n6 / 3870720,
            17 * n3 / 480 - 37 * n4 / 840 - 209 * n5 / 4480 + 5569 * n6 / 90720,
            4397 * n4 / 161280 - 11 * n5 / 504 - 830251 * n6 / 7257600,
            4583 * n5 / 161280 - 108847 * n6 / 3991680,
            20648693 * n6 / 638668800};
  k.delta = {2 * n - 2 * n2 / 3 - 2 * n3 + 116 * n4 / 45 + 26 * n5 / 45 - 2854 * n6 / 675,
             7 * n2 / 3 - 8 * n3 / 5 - 227 * n4 / 45 + 2704 * n5 / 315 + 2323 * n6 / 945,
             56 * n3 / 15 - 136 * n4 / 35 - 1262 * n5 / 105 + 73814 * n6 / 2835,
             4279 * n4 / 630 - 332 * n5 / 35 - 399572 * n6 / 14175,
             4174 * n5 / 315 - 144838 * n6 / 6237,
             601676 * n6 / 22275};
  k.e = std::sqrt(f * (2 - f));
  return k;
}

const Kruger& kruger_cached(double f) {
  static const Kruger grs80 = kruger(wgs84::a, kGrs80F);
  static const Kruger w84 = kruger(wgs84::a, wgs84::f);
  return f == kGrs80F ? grs80 : w84;
}

double central_meridian(int zone) { return (zone * 6 - 183) * kDeg; }

LonLat utm_inverse(const XY& p, const Utm& u) {
  const Kruger& k = kruger_cached(u.f);
  const double xi = p.y / (kK0 * k.A);
  const double eta = (p.x - kFalseEasting) / (kK0 * k.A);
  double xip = xi, etap = eta;
  for (int j = 1; j <= 6; ++j) {
    xip -= k.beta[j - 1] * std::sin(2 * j * xi) * std::cosh(2 * j * eta);
    etap -= k.beta[j - 1] * std::cos(2 * j * xi) * std::sinh(2 * j * eta);
  }
  const double chi = std::asin(std::sin(xip) / std::cosh(etap));
  double phi = chi;
  for (int j = 1; j <= 6; ++j) phi += k.delta[j - 1] * std::sin(2 * j * chi);
  const double lambda = central_meridian(u.zone) + std::atan2(std::sinh(etap), std::cos(xip));
  return {lambda / kDeg, phi / kDeg};
}

}  // namespace

XY utm_forward(const LonLat& p, int zone) {
  const Kruger& k = kruger_cached(wgs84::f);
  const double phi = p.lat * kDeg;
  const double lambda = p.lon * kDeg - central_meridian(zone);
  const double t = std::sinh(std::atanh(std::sin(phi)) - k.e * std::atanh(k.e * std::sin(phi)));
  const double xip = std::atan2(t, std::cos(lambda));
  const double etap = std::atanh(std::sin(lambda) / std::sqrt(1 + t * t));
  double xi = xip, eta = etap;
  for (int j = 1; j <= 6; ++j) {
    xi += k.alpha[j - 1] * std::sin(2 * j * xip) * std::cosh(2 * j * etap);
    eta += k.alpha[j - 1] * std::cos(2 * j * xip) * std::sinh(2 * j * etap);
  }
  return {kFalseEasting + kK0 * k.A * eta, kK0 * k.A * xi};
}

void check_crs(std::string_view crs) {
  if (is_geographic(crs) || is_web_mercator(crs) || utm_for(crs)) return;
  fail(Errc::InvalidArgument, "unsupported CRS '" + std::string(crs) + "'");
}

LonLat to_wgs84(const XY& p, std::string_view crs) {
  if (is_geographic(crs)) return {p.x, p.y};
  if (is_web_mercator(crs)) {
    return {p.x / wgs84::a / kDeg, std::atan(std::sinh(p.y / wgs84::a)) / kDeg};
  }
  if (auto u = utm_for(crs)) return utm_inverse(p, *u);
  fail(Errc::InvalidArgument, "unsupported CRS '" + std::string(crs) + "'");
}

}  // namespace spainmob
