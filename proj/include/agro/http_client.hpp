#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace agro {

struct HttpResponse {
  int status = 0;  // 0 means the request never completed (connect/timeout)
  std::string body;
  std::string error;
};

/// GET `url`; returns the response rather than throwing so callers can map
/// failures onto their own error codes.
using HttpTransport = std::function<HttpResponse(const std::string& url, std::chrono::milliseconds timeout)>;

HttpTransport default_http_transport();

std::string url_encode(std::string_view text);

/// Replaces every `{name}` occurrence.
std::string substitute(std::string text, std::string_view name, std::string_view value);

}  // namespace agro
