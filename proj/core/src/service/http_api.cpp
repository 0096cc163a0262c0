#include "nextmin/service/http_api.hpp"

#include <atomic>

#include <httplib.h>

#include "nextmin/error.hpp"

namespace nextmin::service {

int http_status(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::validation: return 400;
    case ErrorCode::not_found: return 404;
    case ErrorCode::state:
    case ErrorCode::end_of_case: return 409;
    case ErrorCode::corrupt:
    case ErrorCode::version_mismatch:
    case ErrorCode::catalog_mismatch: return 422;
    case ErrorCode::io:
    case ErrorCode::numeric: return 500;
  }
  return 500;
}

namespace {

void send_json(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, {{"error", code}, {"message", message}}, status);
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, std::string("malformed JSON body: ") + e.what());
  }
}

/// Wraps a handler so domain errors map onto HTTP statuses.
httplib::Server::Handler guarded(std::function<void(const httplib::Request&, httplib::Response&)> fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "invalid_argument", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

std::uint64_t parse_id(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::invalid_argument, "bad id '" + text + "'");
}

Json model_json(const LoadedModel& m) {
  return {{"model_id", m.id},
          {"path", m.path.string()},
          {"mask", m.bundle.mask.to_string()},
          {"k", m.bundle.k},
          {"labels", m.encoder.manifest().catalog.labels()},
          {"has_report", m.report.has_value()}};
}

}  // namespace

struct ApiServer::Impl {
  SessionManager& manager;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  explicit Impl(SessionManager& m) : manager(m) { routes(); }

  void routes() {
    server.Post("/models", guarded([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      std::optional<std::filesystem::path> report;
      if (body.contains("report") && !body.at("report").is_null()) report = body.at("report").get<std::string>();
      const auto id = manager.load_model(body.at("path").get<std::string>(), report);
      send_json(res, model_json(*manager.model(id)), 201);
    }));
    server.Get("/models", guarded([this](const auto&, auto& res) {
      Json out = Json::array();
      for (const auto& m : manager.models()) out.push_back(model_json(*m));
      send_json(res, out);
    }));

    server.Post("/sessions", guarded([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      SessionRequest r;
      const auto mode = body.value("mode", std::string("replay"));
      if (mode != "replay" && mode != "live") throw Error(ErrorCode::invalid_argument, "mode must be replay or live");
      r.mode = mode == "replay" ? SessionMode::replay : SessionMode::live;
      r.model_id = body.at("model_id").get<std::string>();
      r.case_id = body.value("case_id", std::string());
      if (body.contains("static_context")) r.static_context = static_context_from_json(body.at("static_context"));
      send_json(res, manager.create_session(r)->describe(), 201);
    }));
    server.Get("/sessions", guarded([this](const auto&, auto& res) {
      Json out = Json::array();
      for (const auto& s : manager.sessions()) out.push_back(s->describe());
      send_json(res, out);
    }));
    server.Get("/sessions/:id", guarded([this](const auto& req, auto& res) {
      send_json(res, manager.session(req.path_params.at("id"))->describe());
    }));
    server.Delete("/sessions/:id", guarded([this](const auto& req, auto& res) {
      manager.close_session(req.path_params.at("id"));
      res.status = 204;
    }));

    server.Post("/sessions/:id/tick", guarded([this](const auto& req, auto& res) {
      send_json(res, frame_to_json(manager.session(req.path_params.at("id"))->tick()));
    }));
    server.Post("/sessions/:id/overrides", guarded([this](const auto& req, auto& res) {
      auto s = manager.session(req.path_params.at("id"));
      const auto& manifest = s->model().encoder.manifest();
      auto o = s->apply_override(override_from_json(parse_body(req), manifest, s->minute()));
      send_json(res, override_to_json(o, manifest.catalog), 201);
    }));
    server.Delete("/sessions/:id/overrides/:oid", guarded([this](const auto& req, auto& res) {
      manager.session(req.path_params.at("id"))->remove_override(parse_id(req.path_params.at("oid")));
      res.status = 204;
    }));
    server.Post("/sessions/:id/events", guarded([this](const auto& req, auto& res) {
      const Json body = parse_body(req);
      manager.session(req.path_params.at("id"))
          ->record_event(body.at("activity").get<std::string>(), body.at("start_s").get<std::int64_t>(),
                         body.at("end_s").get<std::int64_t>());
      send_json(res, {{"accepted", true}}, 201);
    }));
    server.Post("/sessions/:id/vitals", guarded([this](const auto& req, auto& res) {
      manager.session(req.path_params.at("id"))->record_vitals(vitals_record_from_json(parse_body(req)));
      send_json(res, {{"accepted", true}}, 201);
    }));
    server.Get("/sessions/:id/frames", guarded([this](const auto& req, auto& res) {
      const std::size_t since = req.has_param("since") ? parse_id(req.get_param_value("since")) : 0;
      Json out = Json::array();
      for (const auto& f : manager.session(req.path_params.at("id"))->frames(since)) out.push_back(frame_to_json(f));
      send_json(res, out);
    }));
    server.Get("/sessions/:id/stream", guarded([this](const auto& req, auto& res) {
      auto sub = std::make_shared<FrameSubscription>(manager.session(req.path_params.at("id"))->subscribe());
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, sub](std::size_t, httplib::DataSink& sink) {
        while (!stopping && sink.is_writable()) {
          if (auto frame = sub->next(std::chrono::milliseconds(200))) {
            const std::string msg = "event: frame\ndata: " + frame_to_json(*frame).dump() + "\n\n";
            return sink.write(msg.data(), msg.size());
          }
          if (sub->closed()) break;
        }
        const std::string end = "event: end\ndata: {}\n\n";
        sink.write(end.data(), end.size());
        sink.done();
        return true;
      });
    }));

    server.Get("/catalog", guarded([this](const auto&, auto& res) {
      const auto* m = manager.manifest();
      if (!m) throw Error(ErrorCode::state, "no corpus loaded");
      send_json(res, manifest_to_json(*m));
    }));
    server.Get("/cases", guarded([this](const auto&, auto& res) {
      const auto* c = manager.corpus();
      if (!c) throw Error(ErrorCode::state, "no corpus loaded");
      Json out = Json::array();
      for (const auto& log : c->cases) {
        out.push_back({{"case_id", log.case_id}, {"duration_s", log.duration_s}, {"minutes", log.minutes()}});
      }
      send_json(res, out);
    }));
    server.Get("/reports/timeline/:case", guarded([this](const auto& req, auto& res) {
      std::string model_id = req.get_param_value("model_id");
      if (model_id.empty()) {
        const auto models = manager.models();
        if (models.empty()) throw Error(ErrorCode::state, "no model loaded");
        model_id = models.front()->id;
      }
      const double cutoff = req.has_param("cutoff") ? std::stod(req.get_param_value("cutoff")) : 0.5;
      send_json(res, timeline_to_json(manager.timeline(req.path_params.at("case"), model_id, cutoff)));
    }));

    server.set_post_routing_handler([](const auto&, auto& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
    });
  }
};

ApiServer::ApiServer(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ApiServer::listen() { return impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

}  // namespace nextmin::service
