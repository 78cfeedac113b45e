#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "agro/data_ingest.hpp"
#include "agro/http_client.hpp"

namespace agro {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  /// Throws Precondition when outside [-90, 90] x [-180, 180].
  static GeoPoint checked(double lat, double lon);
  bool operator==(const GeoPoint&) const = default;
};

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

/// k=1 nearest centroid by great-circle distance; exact distance ties go to
/// the lexicographically smallest district name.
const DistrictCentroid& nearest_centroid(const GeoPoint& point, std::span<const DistrictCentroid> centroids);

inline std::string nearest_district(const GeoPoint& point, std::span<const DistrictCentroid> centroids) {
  return nearest_centroid(point, centroids).district;
}

/// Address -> coordinates. Implementations must be safe for concurrent calls.
class AddressResolver {
 public:
  virtual ~AddressResolver() = default;
  virtual GeoPoint resolve(std::string_view address) const = 0;
};

/// Offline resolver backed by an `address,lat,lon` CSV. Lookups are
/// case-insensitive on the trimmed address.
class FixtureResolver final : public AddressResolver {
 public:
  explicit FixtureResolver(std::map<std::string, GeoPoint> entries);
  static FixtureResolver from_csv(const std::filesystem::path& path);

  GeoPoint resolve(std::string_view address) const override;

 private:
  std::map<std::string, GeoPoint> entries_;  // keyed by lower-cased address
};

struct HttpResolverConfig {
  std::string url_template;  // `{address}` and optional `{key}` placeholders
  std::string lat_pointer = "/lat";  // JSON pointers into the response body
  std::string lon_pointer = "/lon";
  std::string api_key_env = "GEOCODER_API_KEY";
  std::chrono::milliseconds timeout{5000};
};

/// Generic live resolver. Network failure, timeouts and 5xx map to
/// ResolverUnavailable; 404 or a body without coordinates map to
/// AddressNotFound.
class HttpResolver final : public AddressResolver {
 public:
  explicit HttpResolver(HttpResolverConfig config, HttpTransport transport = default_http_transport());

  GeoPoint resolve(std::string_view address) const override;

 private:
  HttpResolverConfig config_;
  HttpTransport transport_;
};

GeoPoint geocode_address(std::string_view address, const AddressResolver& resolver);

}  // namespace agro
