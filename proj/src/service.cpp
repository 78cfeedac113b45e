#include "agro/service.hpp"

#include <httplib.h>

#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>

#include "agro/csv.hpp"
#include "agro/engine.hpp"

namespace agro {
namespace {

using nlohmann::json;

constexpr std::string_view kPrefix = "/api/v1";

ApiResponse reply(int status, const json& body) { return {status, render_json(body)}; }

ApiResponse error_reply(int status, std::string_view code, std::string_view message, const json& details = nullptr) {
  return reply(status, api_error(code, message, details));
}

std::string_view api_code(Errc code) { return code == Errc::Precondition ? "invalid_request" : to_string(code); }

json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json doc = json::parse(body);
  require(doc.is_object(), "request body must be a JSON object");
  return doc;
}

int parse_horizon(std::string_view text) {
  int value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  require(ec == std::errc() && ptr == end, "horizon must be an integer, got '" + std::string(text) + "'");
  return value;
}

int default_horizon(const Registry& reg, const std::string& crop) {
  const auto months = reg.growth.months(crop);
  require(months.has_value(), "horizon is required: no growth period for " + crop);
  return *months;
}

json districts_payload(const Registry& reg) {
  json out = json::array();
  for (const auto& [key, info] : reg.districts) {
    out.push_back({{"district", info.centroid.district},
                   {"lat", info.centroid.lat},
                   {"lon", info.centroid.lon},
                   {"soil", {{"n", info.soil.n}, {"p", info.soil.p}, {"k", info.soil.k}, {"ph", info.soil.ph}}},
                   {"rainfall", info.rainfall_mm ? json(*info.rainfall_mm) : json(nullptr)}});
  }
  return out;
}

json capabilities_payload(const Registry& reg) {
  json bounds = json::object();
  for (const auto& b : feature_bounds()) {
    bounds[std::string(b.name)] = {{"min", b.min}, {"max", std::isinf(b.max) ? json(nullptr) : json(b.max)}};
  }
  json crops = json::array();
  for (const auto& [key, f] : reg.forecasters) {
    const auto months = reg.growth.months(f.crop);
    crops.push_back({{"crop", f.crop},
                     {"growth_months", months ? json(*months) : json(nullptr)},
                     {"stub", f.stub}});
  }
  return {{"bounds", bounds},
          {"horizon", {{"min", 1}, {"max", kMaxHorizon}}},
          {"crops", crops},
          {"labels", reg.forest.labels},
          {"languages", explanation_languages()},
          {"fixture_mode", reg.fixture_mode}};
}

RecommendQuery recommend_query(const json& body) {
  RecommendQuery q;
  const bool has_district = body.contains("district") && !body["district"].is_null();
  const bool has_point = (body.contains("lat") && !body["lat"].is_null()) || (body.contains("lon") && !body["lon"].is_null());
  require(has_district != has_point, "exactly one of district or lat/lon is required");
  if (has_district) {
    require(body["district"].is_string(), "district must be a string");
    q.location = body["district"].get<std::string>();
  } else {
    require(body.contains("lat") && body["lat"].is_number() && body.contains("lon") && body["lon"].is_number(),
            "lat and lon must both be numbers");
    q.location = GeoPoint::checked(body["lat"].get<double>(), body["lon"].get<double>());
  }
  if (body.contains("overrides")) q.overrides = FeatureOverrides::from_json(body["overrides"]);
  if (body.contains("horizons") && !body["horizons"].is_null()) {
    require(body["horizons"].is_object(), "horizons must map crop names to months");
    for (const auto& [crop, months] : body["horizons"].items()) {
      require(months.is_number_integer(), "horizon for " + crop + " must be an integer");
      q.horizons[crop] = months.get<int>();
    }
  }
  if (body.contains("language")) q.language = body["language"].get<std::string>();
  return q;
}

json query_payload(const Registry& reg, const IntentKeywords& keywords, const json& body) {
  require(body.contains("text") && body["text"].is_string(), "text must be a string");
  Transcript t;
  t.text = body["text"].get<std::string>();
  t.language = body.value("language", "en");

  std::vector<std::string> districts;
  for (const auto& [key, info] : reg.districts) districts.push_back(info.centroid.district);
  std::vector<std::string> crops;
  for (const auto& [key, f] : reg.forecasters) crops.push_back(f.crop);

  const Intent intent = parse_intent(t, districts, crops, keywords);
  json out = {{"intent", {{"kind", std::string(to_string(intent.kind))}, {"slots", intent.slots}}},
              {"result", nullptr},
              {"message", nullptr}};
  switch (intent.kind) {
    case IntentKind::GetRecommendation: {
      RecommendQuery q;
      q.location = intent.slots.at("location");
      q.language = t.language;
      out["result"] = to_json(recommend(q, reg));
      break;
    }
    case IntentKind::GetPriceForecast: {
      const auto& crop = reg.require_forecaster(intent.slots.at("crop")).crop;
      const auto h = intent.slots.find("horizon");
      const int horizon = h != intent.slots.end() ? parse_horizon(h->second) : default_horizon(reg, crop);
      out["result"] = to_json(forecast_crop(reg, crop, horizon));
      break;
    }
    case IntentKind::Unknown:
      out["message"] =
          "Sorry, I did not understand. Try \"recommend a crop for <district>\" or "
          "\"price of <crop> in <n> months\".";
      break;
  }
  return out;
}

}  // namespace

int http_status(Errc code) {
  switch (code) {
    case Errc::UnknownCrop:
    case Errc::AddressNotFound:
      return 404;
    case Errc::MissingPriceModel:
      return 424;
    case Errc::WeatherUnavailable:
    case Errc::ProviderUnavailable:
    case Errc::MalformedResponse:
    case Errc::ResolverUnavailable:
      return 502;
    default:
      break;
  }
  return category(code) == ErrorCategory::Usage || code == Errc::UnknownDistrict ||
                 code == Errc::NonFiniteFeature || code == Errc::HorizonNonPositive
             ? 400
             : 500;
}

json api_error(std::string_view code, std::string_view message, const json& details) {
  return {{"code", code}, {"message", message}, {"details", details.is_null() ? json::object() : details}};
}

ApiHandler::ApiHandler(RegistryHandle& registry, IntentKeywords keywords)
    : registry_(registry), keywords_(std::move(keywords)) {}

ApiResponse ApiHandler::handle(const ApiRequest& request) const {
  try {
    return route(request);
  } catch (const Error& e) {
    return error_reply(http_status(e.code()), api_code(e.code()), e.what());
  } catch (const json::exception& e) {
    return error_reply(400, "invalid_json", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

ApiResponse ApiHandler::route(const ApiRequest& req) const {
  if (!req.path.starts_with(kPrefix)) return error_reply(404, "not_found", "no route for " + req.path);
  const std::string path = req.path.substr(kPrefix.size());
  const bool get = req.method == "GET";
  const bool post = req.method == "POST";
  auto wrong_method = [&] {
    return error_reply(405, "method_not_allowed", req.method + " not allowed on " + req.path);
  };

  if (path == "/health") {
    return reply(200, {{"status", "ok"}, {"ready", registry_.get() != nullptr}});
  }
  if (path == "/admin/reload") {
    if (!post) return wrong_method();
    registry_.reload();
    return reply(200, {{"status", "reloaded"}});
  }

  const auto reg = registry_.get();
  const bool known = path == "/districts" || path == "/recommend" || path == "/query" || path == "/capabilities" ||
                     path.starts_with("/forecast/");
  if (!known) return error_reply(404, "not_found", "no route for " + req.path);
  if (!reg) return error_reply(503, "not_ready", "models and datasets are not loaded yet");

  if (path == "/districts") {
    if (!get) return wrong_method();
    return reply(200, districts_payload(*reg));
  }
  if (path == "/capabilities") {
    if (!get) return wrong_method();
    return reply(200, capabilities_payload(*reg));
  }
  if (path == "/recommend") {
    if (!post) return wrong_method();
    return reply(200, to_json(recommend(recommend_query(parse_body(req.body)), *reg)));
  }
  if (path == "/query") {
    if (!post) return wrong_method();
    return reply(200, query_payload(*reg, keywords_, parse_body(req.body)));
  }
  // /forecast/{crop}
  if (!get) return wrong_method();
  const std::string crop_name = path.substr(std::string_view("/forecast/").size());
  const auto& forecaster = reg->require_forecaster(crop_name);
  const auto h = req.query.find("horizon");
  const int horizon = h != req.query.end() ? parse_horizon(h->second) : default_horizon(*reg, forecaster.crop);
  return reply(200, to_json(forecast_crop(*reg, forecaster.crop, horizon)));
}

json openapi_document() {
  const json error_ref = {{"$ref", "#/components/schemas/ApiError"}};
  auto responses = [&](std::initializer_list<int> errors, std::string ok) {
    json r = {{"200", {{"description", ok}}}};
    for (int code : errors) {
      r[std::to_string(code)] = {{"description", "ApiError"},
                                 {"content", {{"application/json", {{"schema", error_ref}}}}}};
    }
    return r;
  };
  json paths = json::object();
  paths["/api/v1/health"]["get"] = {{"summary", "Liveness and readiness"}, {"responses", responses({}, "status")}};
  paths["/api/v1/districts"]["get"] = {
      {"summary", "Districts with centroid, soil profile and long-term rainfall, sorted by name"},
      {"responses", responses({503}, "district list")}};
  paths["/api/v1/capabilities"]["get"] = {
      {"summary", "Override bounds, horizon range, registered crops and explanation languages"},
      {"responses", responses({503}, "capabilities")}};
  paths["/api/v1/recommend"]["post"] = {
      {"summary", "Top-3 suitable crops with harvest-time price forecasts; selects the highest price"},
      {"requestBody",
       {{"content",
         {{"application/json",
           {{"schema",
             {{"type", "object"},
              {"properties",
               {{"district", {{"type", "string"}}},
                {"lat", {{"type", "number"}}},
                {"lon", {{"type", "number"}}},
                {"overrides", {{"type", "object"}, {"description", "n, p, k, temperature, humidity, ph, rainfall"}}},
                {"horizons", {{"type", "object"}, {"description", "crop -> months"}}},
                {"language", {{"type", "string"}}}}}}}}}}}}},
      {"responses", responses({400, 424, 502, 503}, "Recommendation")}};
  paths["/api/v1/forecast/{crop}"]["get"] = {
      {"summary", "Iterative monthly price forecast for one crop"},
      {"parameters",
       {{{"name", "crop"}, {"in", "path"}, {"required", true}, {"schema", {{"type", "string"}}}},
        {{"name", "horizon"},
         {"in", "query"},
         {"required", false},
         {"schema", {{"type", "integer"}, {"minimum", 1}, {"maximum", kMaxHorizon}}}}}},
      {"responses", responses({400, 404, 503}, "ForecastResult")}};
  paths["/api/v1/query"]["post"] = {
      {"summary", "Parse a text query into an intent and run it"},
      {"requestBody",
       {{"content",
         {{"application/json",
           {{"schema",
             {{"type", "object"},
              {"required", {"text"}},
              {"properties", {{"text", {{"type", "string"}}}, {"language", {{"type", "string"}}}}}}}}}}}}},
      {"responses", responses({400, 404, 424, 502, 503}, "intent and result")}};
  paths["/api/v1/admin/reload"]["post"] = {{"summary", "Reload the manifest and swap the registry atomically"},
                                           {"responses", responses({400, 500}, "reloaded")}};
  json api_error_schema = {{"type", "object"}, {"required", {"code", "message", "details"}}};
  api_error_schema["properties"] = {{"code", {{"type", "string"}}},
                                    {"message", {{"type", "string"}}},
                                    {"details", {{"type", "object"}}}};
  json doc = {{"openapi", "3.0.3"}, {"info", {{"title", "agro advisory API"}, {"version", "1"}}}, {"paths", paths}};
  doc["components"]["schemas"]["ApiError"] = api_error_schema;
  return doc;
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(const ApiHandler& handler, ServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& srv = impl_->server;
  const std::string origin = options_.cors_origin;
  auto dispatch = [&handler, origin](const httplib::Request& req, httplib::Response& res) {
    ApiRequest api{req.method, req.path, {}, req.body};
    for (const auto& [key, value] : req.params) api.query.emplace(key, value);
    const auto out = handler.handle(api);
    res.status = out.status;
    res.set_content(out.body, "application/json");
    if (!origin.empty()) res.set_header("Access-Control-Allow-Origin", origin);
  };
  srv.Get("/api/.*", dispatch);
  srv.Post("/api/.*", dispatch);
  srv.Put("/api/.*", dispatch);
  srv.Delete("/api/.*", dispatch);
  srv.Options("/api/.*", [origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    if (!origin.empty()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    }
  });
  if (!options_.ui_dir.empty()) srv.set_mount_point("/ui", options_.ui_dir.string());
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::bind() {
  auto& srv = impl_->server;
  if (options_.port == 0) {
    port_ = srv.bind_to_any_port(options_.host);
  } else {
    port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    fail(Errc::Precondition, "cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
}

int HttpServer::start() {
  bind();
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HttpServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace agro
