#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "atlas/util/error.hpp"
#include "atlas/util/socket.hpp"
#include "httplib.h"
#include "json.hpp"

// JSON-over-HTTP conventions shared by the management, provider admin and
// billing endpoints: success bodies carry "ok": true, failures carry
// {"ok": false, "error": {"code", "message", "retry_after"?}}.
namespace atlas::http {

using Json = nlohmann::json;
using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

int status_for(Errc code);
Json error_json(const Error& e);
void reply(httplib::Response& res, Json body, int status = 200);
void reply_error(httplib::Response& res, const Error& e);
// Converts thrown Errors (and JSON errors) into the failure envelope.
Handler guarded(Handler h);
// Throws Error(ValidationError) when the body is not a JSON object.
Json parse_body(const httplib::Request& req);

class Server {
 public:
  Server();
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  httplib::Server& raw() { return *server_; }
  // Binds (port 0 = ephemeral) and serves on a background thread.
  // Throws Error(BindFailure).
  std::uint16_t start(const net::Endpoint& ep);
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::uint16_t port_ = 0;
};

class Client {
 public:
  explicit Client(const std::string& base_url, std::chrono::milliseconds timeout = std::chrono::seconds{10});

  // Errors: EndpointUnreachable on transport failure; the server's error
  // code on a failure envelope.
  Json get(const std::string& path);
  Json get(const std::string& path, const httplib::Headers& headers);
  Json post(const std::string& path, const Json& body = Json::object());
  Json del(const std::string& path);
  // Raw body for non-JSON resources.
  std::string get_raw(const std::string& path);
  const std::string& base() const { return base_; }

 private:
  Json handle(const httplib::Result& r, const std::string& what);
  std::string base_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace atlas::http
