// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "http_client.hpp"

#include "geoquery/error.hpp"
#include "httplib.h"

namespace geoquery::detail {

Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.compare(0, scheme_end, "http") != 0) {
    throw InputError("endpoint must be an http:// URL: '" + url + "'");
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.base = url.substr(0, path_start);
  ep.path = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (ep.base.size() <= scheme_end + 3) throw InputError("endpoint has no host: '" + url + "'");
  return ep;
}

nlohmann::json post_json(const std::string& url, const nlohmann::json& body, int timeout_ms) {
  const auto ep = parse_endpoint(url);
  const auto payload = body.dump();
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    httplib::Client client(ep.base);
    const auto sec = timeout_ms / 1000;
    const auto usec = (timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    auto res = client.Post(ep.path, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProviderUnavailable(url + " returned HTTP " + std::to_string(res->status));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(std::string("response from ") + url + " is not JSON: " + e.what());
    }
  }
  throw ProviderUnavailable(url + " unreachable: " + last_error);
}

}  // namespace geoquery::detail
