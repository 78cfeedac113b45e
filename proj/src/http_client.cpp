#include "agro/http_client.hpp"

#include <httplib.h>

namespace agro {

HttpTransport default_http_transport() {
  return [](const std::string& url, std::chrono::milliseconds timeout) -> HttpResponse {
    // Split "scheme://host[:port]" from the path and query.
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) return {0, {}, "malformed url: " + url};
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

    httplib::Client client(origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_follow_location(true);
    auto result = client.Get(path);
    if (!result) return {0, {}, httplib::to_string(result.error())};
    return {result->status, result->body, {}};
  };
}

std::string url_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string substitute(std::string text, std::string_view name, std::string_view value) {
  const std::string token = "{" + std::string(name) + "}";
  for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size())) {
    text.replace(pos, token.size(), value);
  }
  return text;
}

}  // namespace agro
