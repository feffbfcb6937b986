#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>

#include <httplib.h>

#include "convplan/error.hpp"

namespace convplan::detail {

struct HttpTarget {
  std::string origin;     // scheme://host[:port]
  std::string base_path;  // no trailing slash
};

inline HttpTarget parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::kConfigError, "endpoint must include a scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  HttpTarget t;
  t.origin = std::string(url.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    t.base_path = std::string(url.substr(path_start));
    while (!t.base_path.empty() && t.base_path.back() == '/') t.base_path.pop_back();
  }
  return t;
}

inline std::unique_ptr<httplib::Client> make_client(const HttpTarget& target,
                                                    std::chrono::milliseconds timeout) {
  auto client = std::make_unique<httplib::Client>(target.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client->set_connection_timeout(secs.count(), usecs.count());
  client->set_read_timeout(secs.count(), usecs.count());
  client->set_write_timeout(secs.count(), usecs.count());
  return client;
}

/// Maps a transport failure to the library error taxonomy.
inline Error transport_error(httplib::Error err, const std::string& what) {
  const bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                       err == httplib::Error::Write;
  return Error(timeout ? ErrorCode::kTimeout : ErrorCode::kProviderUnavailable,
               what + ": " + httplib::to_string(err));
}

/// Bearer header from the named environment variable; empty name sends none.
inline httplib::Headers auth_headers(const std::string& credential_env) {
  httplib::Headers headers;
  if (credential_env.empty()) return headers;
  const char* key = std::getenv(credential_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::kAuthError, "environment variable " + credential_env + " is not set");
  }
  headers.emplace("Authorization", std::string("Bearer ") + key);
  return headers;
}

inline Error status_error(int status, const std::string& body, const std::string& what) {
  if (status == 401 || status == 403) {
    return Error(ErrorCode::kAuthError, what + ": HTTP " + std::to_string(status));
  }
  if (status == 408) return Error(ErrorCode::kTimeout, what + ": HTTP 408");
  if (status == 429 || status >= 500) {
    return Error(ErrorCode::kProviderUnavailable, what + ": HTTP " + std::to_string(status));
  }
  return Error(ErrorCode::kValidationRejected,
               what + ": HTTP " + std::to_string(status) + ": " + body.substr(0, 300));
}

}  // namespace convplan::detail
