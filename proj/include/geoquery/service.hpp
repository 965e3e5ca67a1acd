// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Read-only /v1 HTTP API over a loaded visual index and proxy corpus.

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "geoquery/corpus.hpp"
#include "geoquery/embedding.hpp"
#include "geoquery/geo.hpp"
#include "geoquery/index.hpp"

namespace httplib {
class Server;
}

namespace geoquery {

struct ServiceConfig {
  std::string listen_addr = "127.0.0.1:8080";
  std::filesystem::path visual_index_path;
  std::filesystem::path proxy_path;
  GridSpec grid;
  ProviderConfig provider;
  std::string default_config_name = "balanced_large";
  /// "*" allows any origin; empty disables CORS headers.
  std::vector<std::string> cors_allowed_origins;
  int threads = 8;

  /// Reads JSON, or TOML-style `key = value` lines with a [provider]
  /// section. Relative paths resolve against the file's directory.
  static ServiceConfig from_file(const std::filesystem::path& path);
  /// Applies GEOQUERY_LISTEN_ADDR and GEOQUERY_PROVIDER_URL when set.
  void apply_environment();
  /// Throws ConfigError unless the paths exist and the default config resolves.
  void validate() const;
};

/// host and port of "host:port" (or ":port"). Throws ConfigError.
std::pair<std::string, int> parse_listen_addr(std::string_view addr);

struct HttpReply {
  int status = 200;
  std::string body;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Loads both corpora from the configured paths, then marks ready.
  void load();
  /// Adopts already-loaded corpora (the proxy must reference `visual`).
  void adopt(std::shared_ptr<const Index> visual, std::shared_ptr<const ProxyCorpus> proxy);
  bool ready() const noexcept { return ready_.load(); }
  const ServiceConfig& config() const noexcept { return config_; }

  /// Routes one request; never throws.
  HttpReply handle(std::string_view method, std::string_view path, std::string_view body) const;

  /// Binds to `listen_addr` (port 0 picks a free port) and returns the port.
  int bind();
  /// Serves until stop(); call after bind().
  void run();
  void stop();

 private:
  struct State {
    std::shared_ptr<const Index> visual;
    std::shared_ptr<const ProxyCorpus> proxy;
  };

  HttpReply query(std::string_view body) const;
  HttpReply similar(std::string_view body) const;
  HttpReply tile(std::string_view col, std::string_view row) const;
  HttpReply configs() const;
  HttpReply health() const;
  std::shared_ptr<const State> state() const;

  ServiceConfig config_;
  std::atomic<bool> ready_{false};
  mutable std::mutex state_mutex_;
  std::shared_ptr<const State> state_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace geoquery
