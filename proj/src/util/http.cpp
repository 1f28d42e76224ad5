#include "atlas/util/http.hpp"

namespace atlas::http {

int status_for(Errc code) {
  switch (code) {
    case Errc::ValidationError:
    case Errc::ParseError:
    case Errc::InvalidProfile:
    case Errc::MalformedApdu:
    case Errc::InvalidFingerprint:
    case Errc::NegativeBilled:
      return 400;
    case Errc::AuthRejected:
    case Errc::BadToken:
      return 403;
    case Errc::UnknownSim:
    case Errc::UnknownProbe:
    case Errc::UnknownJob:
    case Errc::UnknownCircuit:
    case Errc::UnknownImsi:
      return 404;
    case Errc::SimBusy:
    case Errc::ProbeBusy:
    case Errc::DuplicateImsi:
    case Errc::PreconditionFailed:
    case Errc::ProbeOffline:
      return 409;
    case Errc::CooldownActive:
    case Errc::Capacity:
      return 429;
    case Errc::EndpointUnreachable:
      return 502;
    default:
      return 500;
  }
}

Json error_json(const Error& e) {
  Json err{{"code", std::string(to_string(e.code()))}, {"message", e.detail()}};
  if (e.retry_after_s()) err["retry_after"] = *e.retry_after_s();
  return Json{{"ok", false}, {"error", err}};
}

void reply(httplib::Response& res, Json body, int status) {
  if (body.is_object() && !body.contains("ok")) body["ok"] = true;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const Error& e) {
  res.status = status_for(e.code());
  res.set_content(error_json(e).dump(), "application/json");
}

Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const Error& e) {
      reply_error(res, e);
    } catch (const Json::exception& e) {
      reply_error(res, Error(Errc::ValidationError, e.what()));
    } catch (const std::exception& e) {
      reply_error(res, Error(Errc::Internal, e.what()));
    }
  };
}

Json parse_body(const httplib::Request& req) {
  Json j;
  try {
    j = req.body.empty() ? Json::object() : Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(Errc::ValidationError, std::string("body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::ValidationError, "body must be a JSON object");
  return j;
}

Server::Server() : server_(std::make_unique<httplib::Server>()) {}

Server::~Server() { stop(); }

std::uint16_t Server::start(const net::Endpoint& ep) {
  int port = ep.port == 0 ? server_->bind_to_any_port(ep.host) : (server_->bind_to_port(ep.host, ep.port) ? ep.port : -1);
  if (port <= 0) throw Error(Errc::BindFailure, "cannot bind HTTP " + ep.str());
  port_ = static_cast<std::uint16_t>(port);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void Server::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

Client::Client(const std::string& base_url, std::chrono::milliseconds timeout) {
  net::Endpoint ep = net::parse_endpoint(base_url);
  base_ = "http://" + ep.str();
  client_ = std::make_unique<httplib::Client>(ep.host, ep.port);
  client_->set_connection_timeout(timeout);
  client_->set_read_timeout(timeout);
  client_->set_write_timeout(timeout);
}

Json Client::handle(const httplib::Result& r, const std::string& what) {
  if (!r) throw Error(Errc::EndpointUnreachable, what + " on " + base_ + ": " + httplib::to_string(r.error()));
  Json j;
  try {
    j = r->body.empty() ? Json::object() : Json::parse(r->body);
  } catch (const Json::exception&) {
    if (r->status >= 400) throw Error(Errc::Internal, what + " returned HTTP " + std::to_string(r->status));
    return Json(r->body);
  }
  if (r->status >= 400 || (j.is_object() && j.value("ok", true) == false)) {
    if (j.is_object() && j.contains("error")) {
      const Json& e = j["error"];
      auto code = errc_from_string(e.value("code", std::string{}));
      std::optional<std::int64_t> retry;
      if (e.contains("retry_after")) retry = e["retry_after"].get<std::int64_t>();
      throw Error(code.value_or(Errc::Internal), e.value("message", std::string{}), retry);
    }
    throw Error(Errc::Internal, what + " returned HTTP " + std::to_string(r->status));
  }
  return j;
}

Json Client::get(const std::string& path) { return handle(client_->Get(path), "GET " + path); }

Json Client::get(const std::string& path, const httplib::Headers& headers) {
  return handle(client_->Get(path, headers), "GET " + path);
}

Json Client::post(const std::string& path, const Json& body) {
  return handle(client_->Post(path, body.dump(), "application/json"), "POST " + path);
}

Json Client::del(const std::string& path) { return handle(client_->Delete(path), "DELETE " + path); }

std::string Client::get_raw(const std::string& path) {
  auto r = client_->Get(path);
  if (!r) throw Error(Errc::EndpointUnreachable, "GET " + path + " on " + base_ + ": " + httplib::to_string(r.error()));
  if (r->status >= 400) handle(r, "GET " + path);
  return r->body;
}

}  // namespace atlas::http
