// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal JSON-over-HTTP POST used by the remote embedding provider and the
// remote describe oracle.

#include <string>

#include "json.hpp"

namespace geoquery::detail {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // always starts with '/'
};

/// Splits "http://host:port/path". Throws InputError on anything else.
Endpoint parse_endpoint(const std::string& url);

/// POSTs `body`, retrying once on transport failure. Throws
/// ProviderUnavailable on transport failure or a non-2xx status, and
/// FormatError if the response is not JSON.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body, int timeout_ms);

}  // namespace geoquery::detail
