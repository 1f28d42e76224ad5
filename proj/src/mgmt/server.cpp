#include "atlas/mgmt/server.hpp"

#include "atlas/util/error.hpp"

namespace atlas::mgmt {

void EventQueue::push(Json ev) {
  {
    std::lock_guard lock(mu_);
    if (closed_) return;
    if (q_.size() >= capacity_) {
      q_.pop_front();
      ++dropped_;
    }
    q_.push_back(std::move(ev));
  }
  cv_.notify_one();
}

std::optional<Json> EventQueue::pop(std::chrono::milliseconds wait) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, wait, [this] { return closed_ || dropped_ > 0 || !q_.empty(); });
  if (dropped_ > 0) {
    Json gap{{"type", "gap"}, {"dropped", dropped_}};
    dropped_ = 0;
    return gap;
  }
  if (q_.empty()) return std::nullopt;
  Json ev = std::move(q_.front());
  q_.pop_front();
  return ev;
}

void EventQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool EventQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

std::string sse_frame(const Json& ev) {
  std::string out;
  if (ev.contains("seq")) out += "id: " + std::to_string(ev.at("seq").get<std::uint64_t>()) + "\n";
  out += "event: " + ev.value("type", std::string{"message"}) + "\n";
  out += "data: " + ev.dump() + "\n\n";
  return out;
}

Json redact_state(Json state) {
  for (auto& [id, c] : state["circuits"].items()) {
    if (c.contains("token")) c["token"] = "redacted";
  }
  return state;
}

namespace {

std::string required(const Json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_string()) {
    throw Error(Errc::ValidationError, std::string("missing string field ") + key);
  }
  return body.at(key).get<std::string>();
}

}  // namespace

MgmtServer::MgmtServer(Broker& broker, std::chrono::milliseconds reap_every, std::size_t sse_capacity)
    : broker_(broker), reap_every_(reap_every), sse_capacity_(sse_capacity) {
  auto& s = http_.raw();
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type, Authorization");
    res.status = 204;
  });

  s.Post("/probes/register", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           http::reply(res, {{"probe", broker_.register_probe(required(body, "probe_id"), required(body, "country"))},
                             {"heartbeat_interval_s",
                              std::chrono::duration<double>(broker_.config().heartbeat_interval).count()}});
         }));
  s.Post(R"(/probes/([^/]+)/heartbeat)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           Json body = req.body.empty() ? Json::object() : http::parse_body(req);
           http::reply(res, broker_.heartbeat(req.matches[1], body.value("status", Json::object())));
         }));
  s.Post(R"(/probes/([^/]+)/restart)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           broker_.request_restart(req.matches[1]);
           http::reply(res, Json::object(), 202);
         }));
  s.Get("/probes", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"probes", broker_.probes()}});
        }));
  s.Get(R"(/probes/([^/]+)/jobs/next)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
          http::reply(res, broker_.next_job(req.matches[1]));
        }));

  s.Get("/sims", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"sims", broker_.sims()}});
        }));
  s.Get("/providers", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"providers", broker_.providers()}});
        }));
  s.Post(R"(/providers/([^/]+)/sims)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           broker_.update_inventory(req.matches[1], body.value("address", std::string{}),
                                    body.value("admin", std::string{}), body.value("sims", Json::array()));
           http::reply(res, Json::object());
         }));

  s.Post("/circuits", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           auto a = broker_.allocate_circuit(required(body, "imsi"), required(body, "probe_id"));
           http::reply(res, to_json(a), 201);
         }));
  s.Get("/circuits", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"circuits", broker_.circuits()}});
        }));
  s.Delete(R"(/circuits/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
             std::string reason = req.has_param("reason") ? req.get_param_value("reason") : "released";
             broker_.close_circuit(req.matches[1], reason);
             http::reply(res, Json::object());
           }));

  s.Post("/jobs", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto id = broker_.submit_job(probe::job_from_json(http::parse_body(req)));
           http::reply(res, {{"job_id", id}, {"job", broker_.job(id)}}, 201);
         }));
  s.Get("/jobs", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"jobs", broker_.jobs()}});
        }));
  s.Get(R"(/jobs/([^/]+))", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
          http::reply(res, {{"job", broker_.job(req.matches[1])}});
        }));
  s.Post(R"(/jobs/([^/]+)/result)", http::guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = http::parse_body(req);
           body["job_id"] = std::string(req.matches[1]);
           broker_.job_result(req.matches[1], probe::result_from_json(body));
           http::reply(res, {{"job", broker_.job(req.matches[1])}});
         }));

  s.Get("/state", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          http::reply(res, {{"state", redact_state(broker_.state())}});
        }));
  s.Get("/log", http::guarded([this](const httplib::Request&, httplib::Response& res) {
          Json arr = Json::array();
          for (auto ev : broker_.event_history()) {
            if (ev.contains("token")) ev["token"] = "redacted";
            arr.push_back(std::move(ev));
          }
          http::reply(res, {{"events", arr}});
        }));

  s.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
    auto queue = std::make_shared<EventQueue>(sse_capacity_);
    // Snapshot and subscription under one broker lock would be ideal; the
    // seq in the snapshot lets clients discard duplicates instead.
    auto sub = broker_.subscribe([queue](const Json& ev) { queue->push(ev); });
    queue->push({{"type", "snapshot"}, {"seq", broker_.last_seq()}, {"state", redact_state(broker_.state())}});
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, queue](std::size_t, httplib::DataSink& sink) {
          if (stopping_ || queue->closed()) return false;
          auto ev = queue->pop(std::chrono::milliseconds{500});
          std::string out = ev ? sse_frame(*ev) : std::string(": keepalive\n\n");
          if (!sink.is_writable() || !sink.write(out.data(), out.size())) return false;
          return true;
        },
        [this, sub, queue](bool) {
          broker_.unsubscribe(sub);
          queue->close();
        });
  });
}

MgmtServer::~MgmtServer() { stop(); }

void MgmtServer::mount_ui(const std::string& dir) {
  if (!http_.raw().set_mount_point("/ui", dir)) throw Error(Errc::ValidationError, "no UI directory at " + dir);
}

std::uint16_t MgmtServer::start(const net::Endpoint& ep) {
  stopping_ = false;
  auto port = http_.start(ep);
  reaper_ = std::thread([this] {
    std::unique_lock lock(reap_mu_);
    while (!stopping_) {
      reap_cv_.wait_for(lock, reap_every_, [this] { return stopping_.load(); });
      if (stopping_) break;
      try {
        broker_.reap_stale();
      } catch (const std::exception&) {
        // next sweep retries
      }
    }
  });
  return port;
}

void MgmtServer::stop() {
  {
    std::lock_guard lock(reap_mu_);
    if (stopping_ && !reaper_.joinable()) return;
    stopping_ = true;
  }
  reap_cv_.notify_all();
  if (reaper_.joinable()) reaper_.join();
  http_.stop();
}

}  // namespace atlas::mgmt
