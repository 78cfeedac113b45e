#include "agro/geocode.hpp"

#include <cmath>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <numbers>

#include "agro/csv.hpp"
#include "agro/error.hpp"

namespace agro {
namespace {

std::string normalize_address(std::string_view address) {
  while (!address.empty() && std::isspace(static_cast<unsigned char>(address.front()))) address.remove_prefix(1);
  while (!address.empty() && std::isspace(static_cast<unsigned char>(address.back()))) address.remove_suffix(1);
  return csv::lower(address);
}

}  // namespace

GeoPoint GeoPoint::checked(double lat, double lon) {
  require(std::isfinite(lat) && lat >= -90.0 && lat <= 90.0, "latitude must be in [-90, 90]");
  require(std::isfinite(lon) && lon >= -180.0 && lon <= 180.0, "longitude must be in [-180, 180]");
  return {lat, lon};
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double s = std::sin(dlat / 2.0);
  const double t = std::sin(dlon / 2.0);
  double h = s * s + std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * t * t;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

const DistrictCentroid& nearest_centroid(const GeoPoint& point, std::span<const DistrictCentroid> centroids) {
  if (centroids.empty()) fail(Errc::EmptyCentroidSet, "nearest_district: no district centroids loaded");
  const DistrictCentroid* best = nullptr;
  double best_distance = 0.0;
  for (const auto& c : centroids) {
    const double d = haversine_km(point, {c.lat, c.lon});
    if (best == nullptr || d < best_distance || (d == best_distance && c.district < best->district)) {
      best = &c;
      best_distance = d;
    }
  }
  return *best;
}

FixtureResolver::FixtureResolver(std::map<std::string, GeoPoint> entries) {
  for (auto& [address, point] : entries) entries_.emplace(normalize_address(address), point);
}

FixtureResolver FixtureResolver::from_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  constexpr std::string_view kColumns[] = {"address", "lat", "lon"};
  const auto cols = csv::bind_columns(table, kColumns, path.string());
  std::map<std::string, GeoPoint> entries;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size()) {
      fail(Errc::RowParseError, "row " + std::to_string(r + 1) + ": wrong field count");
    }
    try {
      const auto lat = csv::parse_number(row[cols[1]]);
      const auto lon = csv::parse_number(row[cols[2]]);
      if (!lat || !lon) throw std::invalid_argument("missing coordinate");
      entries[row[cols[0]]] = GeoPoint::checked(*lat, *lon);
    } catch (const std::exception& e) {
      fail(Errc::RowParseError, "row " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  return FixtureResolver(std::move(entries));
}

GeoPoint FixtureResolver::resolve(std::string_view address) const {
  const auto it = entries_.find(normalize_address(address));
  if (it == entries_.end()) fail(Errc::AddressNotFound, "address not found: " + std::string(address));
  return it->second;
}

HttpResolver::HttpResolver(HttpResolverConfig config, HttpTransport transport)
    : config_(std::move(config)), transport_(std::move(transport)) {}

GeoPoint HttpResolver::resolve(std::string_view address) const {
  std::string url = substitute(config_.url_template, "address", url_encode(address));
  if (const char* key = std::getenv(config_.api_key_env.c_str())) {
    url = substitute(std::move(url), "key", url_encode(key));
  }
  const auto response = transport_(url, config_.timeout);
  if (response.status == 0 || response.status >= 500) {
    fail(Errc::ResolverUnavailable,
         "geocoder unavailable: " + (response.status ? "HTTP " + std::to_string(response.status) : response.error));
  }
  if (response.status == 404) fail(Errc::AddressNotFound, "address not found: " + std::string(address));
  if (response.status >= 400) {
    fail(Errc::ResolverUnavailable, "geocoder rejected request: HTTP " + std::to_string(response.status));
  }
  try {
    const auto body = nlohmann::json::parse(response.body);
    const nlohmann::json::json_pointer lat_ptr(config_.lat_pointer);
    const nlohmann::json::json_pointer lon_ptr(config_.lon_pointer);
    if (!body.contains(lat_ptr) || !body.contains(lon_ptr)) {
      fail(Errc::AddressNotFound, "address not found: " + std::string(address));
    }
    // Some providers return coordinates as strings.
    const auto number = [](const nlohmann::json& v) {
      return v.is_string() ? std::stod(v.get<std::string>()) : v.get<double>();
    };
    return GeoPoint::checked(number(body.at(lat_ptr)), number(body.at(lon_ptr)));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ResolverUnavailable, std::string("geocoder response unreadable: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(Errc::ResolverUnavailable, std::string("geocoder response unreadable: ") + e.what());
  }
}

GeoPoint geocode_address(std::string_view address, const AddressResolver& resolver) {
  require(!normalize_address(address).empty(), "geocode_address: address must not be empty");
  return resolver.resolve(address);
}

}  // namespace agro
