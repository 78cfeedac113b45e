#include <doctest.h>

#include <nlohmann/json.hpp>

#include "agro/engine.hpp"
#include "agro/service.hpp"

// after the Eigen-using headers: <resolv.h> defines a _res macro
#include <httplib.h>

#include "golden.hpp"
#include "paths.hpp"
#include "service_cases.hpp"

using namespace agro;
using nlohmann::json;

namespace {

RegistryHandle& loaded_handle() {
  static RegistryHandle handle(testing::fixture("manifest_stub.json"), {.force_fixtures = true});
  static const bool loaded = (handle.reload(), true);
  (void)loaded;
  return handle;
}

ApiRequest request(const std::string& method, const std::string& target, std::string body = {}) {
  ApiRequest r{method, target, {}, std::move(body)};
  const auto q = target.find('?');
  if (q != std::string::npos) {
    r.path = target.substr(0, q);
    std::string rest = target.substr(q + 1);
    std::size_t start = 0;
    while (start < rest.size()) {
      const auto end = std::min(rest.find('&', start), rest.size());
      const auto item = rest.substr(start, end - start);
      const auto eq = item.find('=');
      r.query[item.substr(0, eq)] = eq == std::string::npos ? "" : item.substr(eq + 1);
      start = end + 1;
    }
  }
  return r;
}

ApiResponse call(const std::string& method, const std::string& target, std::string body = {}) {
  static ApiHandler handler(loaded_handle());
  return handler.handle(request(method, target, std::move(body)));
}

void check_api_error(const ApiResponse& r) {
  const auto doc = json::parse(r.body);
  CHECK(doc.is_object());
  CHECK(doc.size() == 3);
  CHECK(doc.at("code").is_string());
  CHECK(doc.at("message").is_string());
  CHECK(doc.at("details").is_object());
}

}  // namespace

TEST_CASE("responses match the committed golden bodies") {
  for (const auto& c : testing::golden_cases()) {
    CAPTURE(c.target);
    CAPTURE(c.body);
    const auto r = call(c.method, c.target, c.body);
    CHECK(r.status == c.status);
    CHECK(testing::matches_golden(c.golden, r.body));
    if (r.status >= 400) check_api_error(r);
  }
}

TEST_CASE("not ready before the registry loads") {
  RegistryHandle empty;
  ApiHandler handler(empty);
  for (const auto& target : {"/api/v1/districts", "/api/v1/forecast/pepper", "/api/v1/capabilities"}) {
    const auto r = handler.handle(request("GET", target));
    CHECK(r.status == 503);
    CHECK(json::parse(r.body)["code"] == "not_ready");
  }
  const auto health = handler.handle(request("GET", "/api/v1/health"));
  CHECK(health.status == 200);
  CHECK(json::parse(health.body)["ready"] == false);
}

TEST_CASE("districts re-serialise to the loaded fixture content") {
  const auto doc = json::parse(call("GET", "/api/v1/districts").body);
  const auto soil = load_soil_csv(testing::fixture("soil.csv"));
  const auto centroids = load_centroids_csv(testing::fixture("centroids.csv"));
  const auto rainfall = load_rainfall_csv(testing::fixture("rainfall.csv"));
  REQUIRE(doc.size() == soil.size());
  std::vector<SoilProfile> served;
  std::vector<DistrictCentroid> served_centroids;
  std::vector<DistrictRainfall> served_rain;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& d = doc[i];
    if (i > 0) CHECK(doc[i - 1]["district"].get<std::string>() < d["district"].get<std::string>());
    served.push_back({d["district"], d["soil"]["ph"], d["soil"]["n"], d["soil"]["p"], d["soil"]["k"]});
    served_centroids.push_back({d["district"], d["lat"], d["lon"]});
    served_rain.push_back({d["district"], d["rainfall"]});
  }
  auto by_name = [](auto v) {
    std::ranges::sort(v, {}, [](const auto& x) { return x.district; });
    return v;
  };
  CHECK(write_soil_csv(served) == write_soil_csv(by_name(soil)));
  CHECK(write_centroids_csv(served_centroids) == write_centroids_csv(by_name(centroids)));
  const auto rain_sorted = by_name(rainfall);
  for (std::size_t i = 0; i < rain_sorted.size(); ++i) CHECK(served_rain[i].rainfall_mm == rain_sorted[i].rainfall_mm);
}

TEST_CASE("recommend request validation") {
  CHECK(call("POST", "/api/v1/recommend", R"({"district":"Hassan","lat":13,"lon":76})").status == 400);
  CHECK(call("POST", "/api/v1/recommend", "{}").status == 400);
  CHECK(call("POST", "/api/v1/recommend", R"({"lat":13})").status == 400);
  CHECK(call("POST", "/api/v1/recommend", R"({"lat":95,"lon":76})").status == 400);
  const auto bad_json = call("POST", "/api/v1/recommend", "{not json");
  CHECK(bad_json.status == 400);
  CHECK(json::parse(bad_json.body)["code"] == "invalid_json");
  check_api_error(bad_json);

  const auto ph = json::parse(call("POST", "/api/v1/recommend", R"({"district":"Hassan","overrides":{"ph":99}})").body);
  CHECK(ph["message"].get<std::string>().find("ph") != std::string::npos);

  const auto custom = json::parse(
      call("POST", "/api/v1/recommend", R"({"district":"Hassan","horizons":{"Pepper":9}})").body);
  CHECK(custom["candidates"][1]["horizon_months"] == 9);
}

TEST_CASE("forecast endpoint: stub echo, case-insensitive crop, horizon bounds") {
  const auto doc = json::parse(call("GET", "/api/v1/forecast/PePpEr?horizon=6").body);
  CHECK(doc["crop"] == "Pepper");
  CHECK(doc["trajectory"] == json(std::vector<double>(6, 480.0)));
  CHECK(doc["price_at_harvest"] == 480.0);
  const auto by_growth = json::parse(call("GET", "/api/v1/forecast/coffee").body);
  CHECK(by_growth["horizon_months"] == 9);
  CHECK(call("GET", "/api/v1/forecast/pepper?horizon=25").status == 400);
  CHECK(call("GET", "/api/v1/forecast/pepper?horizon=six").status == 400);
  CHECK(call("GET", "/api/v1/forecast/pepper?horizon=24").status == 200);
}

TEST_CASE("query endpoint composes intent parsing with the engine") {
  const auto rec = json::parse(call("POST", "/api/v1/query", R"({"text":"recommend a crop for Hassan"})").body);
  CHECK(rec["intent"]["kind"] == "GetRecommendation");
  CHECK(rec["result"]["selected"] == "Pepper");
  const auto price = json::parse(call("POST", "/api/v1/query", R"({"text":"price of pepper in 6 months"})").body);
  CHECK(price["result"]["horizon_months"] == 6);
  const auto unknown = json::parse(call("POST", "/api/v1/query", R"({"text":"hello"})").body);
  CHECK(unknown["intent"]["kind"] == "Unknown");
  CHECK(unknown["result"].is_null());
  CHECK(unknown["message"].is_string());
  CHECK(call("POST", "/api/v1/query", R"({"text":5})").status == 400);
}

TEST_CASE("capabilities mirror the validation bounds") {
  const auto doc = json::parse(call("GET", "/api/v1/capabilities").body);
  for (const auto& b : feature_bounds()) {
    const auto& entry = doc["bounds"][std::string(b.name)];
    CHECK(entry["min"] == b.min);
    if (std::isinf(b.max)) {
      CHECK(entry["max"].is_null());
    } else {
      CHECK(entry["max"] == b.max);
    }
  }
  CHECK(doc["horizon"]["max"] == kMaxHorizon);
}

TEST_CASE("routing errors are ApiErrors") {
  const auto missing = call("GET", "/api/v1/nope");
  CHECK(missing.status == 404);
  check_api_error(missing);
  const auto outside = call("GET", "/elsewhere");
  CHECK(outside.status == 404);
  const auto method = call("DELETE", "/api/v1/recommend");
  CHECK(method.status == 405);
  check_api_error(method);
}

TEST_CASE("engine failures map to 424 and 502") {
  auto reg = std::make_shared<Registry>(*loaded_handle().get());
  reg->forecasters.clear();
  RegistryHandle handle;
  handle.set(reg);
  ApiHandler handler(handle);
  const auto none = handler.handle(request("POST", "/api/v1/recommend", R"({"district":"Hassan"})"));
  CHECK(none.status == 424);
  CHECK(json::parse(none.body)["code"] == "missing_price_model");

  auto live = std::make_shared<Registry>(*loaded_handle().get());
  WeatherConfig cfg;
  cfg.mode = WeatherConfig::Mode::Live;
  cfg.url_template = "http://wx.test/{lat}/{lon}";
  live->weather = std::make_shared<WeatherClient>(
      cfg, [](const std::string&, std::chrono::milliseconds) { return HttpResponse{0, "", "refused"}; });
  handle.set(live);
  const auto down = handler.handle(request("POST", "/api/v1/recommend", R"({"district":"Hassan"})"));
  CHECK(down.status == 502);
  CHECK(json::parse(down.body)["code"] == "weather_unavailable");
}

TEST_CASE("identical requests give identical responses") {
  const auto a = call("POST", "/api/v1/recommend", R"({"district":"Hassan"})");
  const auto b = call("POST", "/api/v1/recommend", R"({"district":"Hassan"})");
  CHECK(a.body == b.body);
}

TEST_CASE("admin reload swaps the registry") {
  RegistryHandle handle(testing::fixture("manifest_stub.json"), {.force_fixtures = true});
  ApiHandler handler(handle);
  CHECK(handler.handle(request("GET", "/api/v1/districts")).status == 503);
  CHECK(handler.handle(request("GET", "/api/v1/admin/reload")).status == 405);
  CHECK(handler.handle(request("POST", "/api/v1/admin/reload")).status == 200);
  CHECK(handler.handle(request("GET", "/api/v1/districts")).status == 200);
}

TEST_CASE("committed OpenAPI document is current") {
  CHECK(testing::read_file(testing::data_dir().parent_path() / "docs" / "openapi.json") ==
        render_json(openapi_document()));
}

TEST_CASE("HTTP server: real requests, CORS headers, preflight") {
  ApiHandler handler(loaded_handle());
  HttpServer server(handler, {"127.0.0.1", 0, "http://localhost:5173", {}});
  const int port = server.start();
  httplib::Client client("127.0.0.1", port);
  const auto res = client.Post("/api/v1/recommend", R"({"district":"Hassan"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  CHECK(res->body == call("POST", "/api/v1/recommend", R"({"district":"Hassan"})").body);

  const auto forecast = client.Get("/api/v1/forecast/Pepper?horizon=3");
  REQUIRE(forecast);
  CHECK(json::parse(forecast->body)["trajectory"].size() == 3);

  const auto pre = client.Options("/api/v1/recommend");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  server.stop();
}
