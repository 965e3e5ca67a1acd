// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/service.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>

#include "geoquery/error.hpp"
#include "geoquery/search.hpp"
#include "httplib.h"
#include "json_util.hpp"

namespace geoquery {

using detail::json;

namespace {

constexpr std::size_t kMaxK = 10000;
constexpr std::size_t kDefaultSimilarK = 10;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

/// One TOML-style value: quoted string, array, bool or number.
json toml_value(const std::string& raw, const std::string& where) {
  if (raw.empty()) throw ConfigError(where + ": missing value");
  try {
    return json::parse(raw);
  } catch (const json::parse_error&) {
    throw ConfigError(where + ": cannot parse value " + raw);
  }
}

json parse_toml(const std::string& text, const std::filesystem::path& path) {
  json root = json::object();
  json* section = &root;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string line = text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
    pos = end == std::string::npos ? text.size() + 1 : end + 1;
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (const auto hash = line.find('#'); hash != std::string::npos && line.find('"') > hash) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      const auto name = trim(std::string_view(line).substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(where + ": empty section name");
      root[name] = json::object();
      section = &root[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    (*section)[key] = toml_value(trim(std::string_view(line).substr(eq + 1)), where);
  }
  return root;
}

ProviderConfig provider_from_json(const json& j) {
  ProviderConfig p;
  if (!j.is_object()) throw ConfigError("provider must be an object");
  const auto kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    p.kind = ProviderConfig::Kind::Synthetic;
  } else if (kind == "remote") {
    p.kind = ProviderConfig::Kind::Remote;
  } else {
    throw ConfigError("provider kind must be 'synthetic' or 'remote', got '" + kind + "'");
  }
  p.dim = j.value("dim", p.dim);
  p.seed = j.value("seed", p.seed);
  p.timeout_ms = j.value("timeout_ms", p.timeout_ms);
  if (j.contains("endpoint_url")) p.endpoint_url = j["endpoint_url"].get<std::string>();
  return p;
}

HttpReply error_reply(int status, std::string_view code, std::string_view message) {
  return {status, json{{"error_code", code}, {"message", message}}.dump()};
}

HttpReply from_exception(const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const InputError& e) {
    return error_reply(400, e.code(), e.what());
  } catch (const ConfigError& e) {
    return error_reply(400, e.code(), e.what());
  } catch (const RangeError& e) {
    return error_reply(400, e.code(), e.what());
  } catch (const NotFoundError& e) {
    return error_reply(404, e.code(), e.what());
  } catch (const ProviderUnavailable& e) {
    return error_reply(503, e.code(), e.what());
  } catch (const NotReadyError& e) {
    return error_reply(503, e.code(), e.what());
  } catch (const Error& e) {
    return error_reply(500, e.code(), e.what());
  } catch (...) {
    return error_reply(500, "InternalError", "internal error");
  }
}

json parse_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw InputError("request body is not valid JSON");
  }
  if (!j.is_object()) throw InputError("request body must be a JSON object");
  return j;
}

std::size_t positive_field(const json& j, const char* name, std::size_t fallback) {
  if (!j.contains(name) || j[name].is_null()) return fallback;
  if (!j[name].is_number_integer() || j[name].get<long long>() <= 0 ||
      j[name].get<unsigned long long>() > kMaxK) {
    throw InputError(std::string("'") + name + "' must be an integer in 1.." + std::to_string(kMaxK));
  }
  return j[name].get<std::size_t>();
}

std::uint32_t index_field(const json& j, const char* name) {
  if (!j.contains(name) || !j[name].is_number_unsigned() ||
      j[name].get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError(std::string("'") + name + "' must be a non-negative integer");
  }
  return static_cast<std::uint32_t>(j[name].get<std::uint64_t>());
}

Season season_field(const json& j) {
  if (!j.contains("season") || !j["season"].is_string()) throw InputError("'season' must be one of Q1..Q4");
  const auto s = parse_season(j["season"].get<std::string>());
  if (!s) throw InputError("'season' must be one of Q1..Q4");
  return *s;
}

json geometry(const GridSpec& grid, TileId t) {
  const auto b = tile_bounds(grid, t);
  const auto c = tile_centre(grid, t);
  return json{{"bounds", {{"south", b.south}, {"west", b.west}, {"north", b.north}, {"east", b.east}}},
              {"centre", {{"lat", c.lat()}, {"lon", c.lon()}}}};
}

void add_geometry(json& j, const GridSpec& grid, TileId t) {
  const auto g = geometry(grid, t);
  for (const auto& [k, v] : g.items()) j[k] = v;
}

bool parse_index(std::string_view s, std::uint32_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

// ---- configuration ---------------------------------------------------------

ServiceConfig ServiceConfig::from_file(const std::filesystem::path& path) {
  const auto text = detail::read_file(path);
  json j;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  } else {
    j = parse_toml(text, path);
  }

  ServiceConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  try {
    cfg.listen_addr = j.value("listen_addr", cfg.listen_addr);
    if (j.contains("visual_index_path")) cfg.visual_index_path = resolve(j["visual_index_path"].get<std::string>());
    if (j.contains("proxy_path")) cfg.proxy_path = resolve(j["proxy_path"].get<std::string>());
    if (j.contains("tile_size_deg")) cfg.grid = GridSpec(j["tile_size_deg"].get<double>());
    if (j.contains("provider")) cfg.provider = provider_from_json(j["provider"]);
    cfg.default_config_name = j.value("default_config", cfg.default_config_name);
    if (j.contains("cors_allowed_origins")) {
      cfg.cors_allowed_origins = j["cors_allowed_origins"].get<std::vector<std::string>>();
    }
    cfg.threads = j.value("threads", cfg.threads);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return cfg;
}

void ServiceConfig::apply_environment() {
  if (const char* addr = std::getenv("GEOQUERY_LISTEN_ADDR"); addr && *addr) listen_addr = addr;
  if (const char* url = std::getenv("GEOQUERY_PROVIDER_URL"); url && *url) {
    provider.kind = ProviderConfig::Kind::Remote;
    provider.endpoint_url = url;
  }
}

void ServiceConfig::validate() const {
  for (const auto& [name, p] : {std::pair{"visual_index_path", &visual_index_path}, {"proxy_path", &proxy_path}}) {
    if (p->empty()) throw ConfigError(std::string(name) + " is not set");
    if (!std::filesystem::exists(*p)) throw ConfigError(std::string(name) + " '" + p->string() + "' does not exist");
  }
  resolve_config(default_config_name);
  parse_listen_addr(listen_addr);
  if (threads < 1) throw ConfigError("threads must be positive");
  try {
    provider.validate();
  } catch (const InputError& e) {
    throw ConfigError(std::string("provider: ") + e.what());
  }
}

std::pair<std::string, int> parse_listen_addr(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos) throw ConfigError("listen address '" + std::string(addr) + "' lacks a port");
  std::string host(addr.substr(0, colon));
  if (host.empty()) host = "0.0.0.0";
  int port = -1;
  const auto digits = addr.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw ConfigError("listen address '" + std::string(addr) + "' has an invalid port");
  }
  return {host, port};
}

// ---- service ---------------------------------------------------------------

Service::Service(ServiceConfig config) : config_(std::move(config)) {}

Service::~Service() { stop(); }

void Service::load() {
  config_.validate();
  auto visual = std::make_shared<const Index>(Index::load(config_.visual_index_path));
  auto proxy = std::make_shared<const ProxyCorpus>(load_proxy(config_.proxy_path, visual.get()));
  adopt(std::move(visual), std::move(proxy));
}

void Service::adopt(std::shared_ptr<const Index> visual, std::shared_ptr<const ProxyCorpus> proxy) {
  if (!visual || !proxy) throw InputError("service needs both corpora");
  resolve_config(config_.default_config_name);
  {
    std::lock_guard lock(state_mutex_);
    state_ = std::make_shared<const State>(State{std::move(visual), std::move(proxy)});
  }
  ready_.store(true);
}

std::shared_ptr<const Service::State> Service::state() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

HttpReply Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  try {
    if (const auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
    if (method == "GET" && path == "/v1/health") return health();
    if (method == "GET" && path == "/v1/configs") return configs();
    const bool known = path == "/v1/query" || path == "/v1/similar" || path.starts_with("/v1/tiles/");
    if (!known) return error_reply(404, "NotFoundError", "no route for " + std::string(path));
    if (path.starts_with("/v1/tiles/")) {
      if (method != "GET") return error_reply(405, "MethodNotAllowed", "use GET");
      const auto rest = path.substr(std::string_view("/v1/tiles/").size());
      const auto slash = rest.find('/');
      if (slash == std::string_view::npos || rest.find('/', slash + 1) != std::string_view::npos) {
        return error_reply(404, "NotFoundError", "expected /v1/tiles/{col}/{row}");
      }
      return tile(rest.substr(0, slash), rest.substr(slash + 1));
    }
    if (method != "POST") return error_reply(405, "MethodNotAllowed", "use POST");
    return path == "/v1/query" ? query(body) : similar(body);
  } catch (...) {
    return from_exception(std::current_exception());
  }
}

HttpReply Service::query(std::string_view body) const {
  const auto st = state();
  if (!ready() || !st) throw NotReadyError("corpora are not loaded");
  const auto req = parse_body(body);
  if (!req.contains("text") || !req["text"].is_string()) throw InputError("'text' must be a string");
  const auto text = req["text"].get<std::string>();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw InputError("query text is empty");
  std::string config_name = config_.default_config_name;
  if (req.contains("config") && !req["config"].is_null()) {
    if (!req["config"].is_string()) throw ConfigError("'config' must be a string");
    config_name = req["config"].get<std::string>();
  }
  const auto config = resolve_config(config_name);
  QueryOptions options;
  if (req.contains("season") && !req["season"].is_null()) options.season = season_field(req);
  const auto top_n = positive_field(req, "top_n", 0);

  const SearchEngine engine{st->proxy.get(), st->visual.get(), config_.provider};
  auto result = two_stage_query(text, config, engine, options);
  if (top_n && result.results.size() > top_n) result.results.resize(top_n);
  auto j = to_json(result);
  for (std::size_t i = 0; i < result.results.size(); ++i) {
    add_geometry(j["results"][i], config_.grid, result.results[i].key.tile);
  }
  return {200, j.dump()};
}

HttpReply Service::similar(std::string_view body) const {
  const auto st = state();
  if (!ready() || !st) throw NotReadyError("corpora are not loaded");
  const auto req = parse_body(body);
  const TileKey key{{index_field(req, "col"), index_field(req, "row")}, season_field(req)};
  const auto k = positive_field(req, "k", kDefaultSimilarK);
  const auto res = similar_by_tile(key, k, *st->visual);
  json out = json::array();
  for (const auto& n : res) {
    auto j = to_json(n);
    add_geometry(j, config_.grid, n.key.tile);
    out.push_back(std::move(j));
  }
  return {200, json{{"query", detail::key_to_json(key)}, {"k", k}, {"results", std::move(out)}}.dump()};
}

HttpReply Service::tile(std::string_view col_s, std::string_view row_s) const {
  const auto st = state();
  if (!ready() || !st) throw NotReadyError("corpora are not loaded");
  TileId t;
  if (!parse_index(col_s, t.col) || !parse_index(row_s, t.row)) {
    throw InputError("tile col and row must be non-negative integers");
  }
  if (!config_.grid.contains(t)) throw NotFoundError("tile " + std::to_string(t.col) + "/" + std::to_string(t.row) + " is off the grid");
  json seasons = json::array();
  json descriptions = json::array();
  for (auto s : {Season::Q1, Season::Q2, Season::Q3, Season::Q4}) {
    const TileKey key{t, s};
    if (!st->visual->contains(key)) continue;
    seasons.push_back(std::string(to_string(s)));
    if (const auto* rec = st->proxy->find(key)) {
      descriptions.push_back(json{{"season", std::string(to_string(s))}, {"description", rec->description}});
    }
  }
  if (seasons.empty()) {
    throw NotFoundError("tile " + std::to_string(t.col) + "/" + std::to_string(t.row) + " is not in the visual index");
  }
  json j{{"col", t.col}, {"row", t.row}, {"seasons", std::move(seasons)}, {"descriptions", std::move(descriptions)}};
  add_geometry(j, config_.grid, t);
  return {200, j.dump()};
}

HttpReply Service::configs() const {
  json list = json::array();
  for (const auto& c : preset_configs()) list.push_back(to_json(c));
  return {200, json{{"configs", std::move(list)}, {"default", config_.default_config_name}}.dump()};
}

HttpReply Service::health() const {
  const auto st = state();
  if (!ready() || !st) {
    return {503, json{{"status", "loading"}, {"error_code", "NotReadyError"}, {"message", "corpora are not loaded"}}.dump()};
  }
  const auto& v = *st->visual;
  const auto& p = *st->proxy;
  json j{{"status", "ok"},
         {"visual", {{"size", v.size()},
                     {"dim", v.dim()},
                     {"backend", v.backend() == Index::Backend::Exact ? "exact" : "pruned_clusters"}}},
         {"proxy", {{"size", p.records.size()}, {"dim", p.dim}, {"provider", p.provider_identity}}},
         {"default_config", config_.default_config_name}};
  return {200, j.dump()};
}

int Service::bind() {
  if (server_) throw InputError("service is already bound");
  server_ = std::make_unique<httplib::Server>();
  const auto threads = static_cast<std::size_t>(config_.threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    const auto origin = req.get_header_value("Origin");
    const auto& allowed = config_.cors_allowed_origins;
    if (!origin.empty() && !allowed.empty()) {
      const bool any = std::find(allowed.begin(), allowed.end(), "*") != allowed.end();
      if (any || std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
        res.set_header("Access-Control-Allow-Origin", any ? "*" : origin);
        res.set_header("Vary", "Origin");
      }
    }
    if (req.method == "OPTIONS") {
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
      return;
    }
    const auto reply = handle(req.method, req.path, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  };
  server_->Get(".*", dispatch);
  server_->Post(".*", dispatch);
  server_->Options(".*", dispatch);
  server_->Put(".*", dispatch);
  server_->Delete(".*", dispatch);

  const auto [host, port] = parse_listen_addr(config_.listen_addr);
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw ConfigError("cannot bind " + config_.listen_addr);
  return bound;
}

void Service::run() {
  if (!server_) throw InputError("call bind() before run()");
  server_->listen_after_bind();
}

void Service::stop() {
  if (server_) server_->stop();
}

}  // namespace geoquery
