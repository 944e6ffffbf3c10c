#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/review.hpp"

// After Eigen: a system header pulled in here defines macros that collide
// with Eigen's parameter names.
#include <httplib.h>

namespace cadfit {

using json = nlohmann::json;

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::invalid_argument:
    case ErrorCode::parse_error: return 400;
    case ErrorCode::invalid_state:
    case ErrorCode::unobservable:
    case ErrorCode::degenerate: return 422;
    case ErrorCode::size_limit: return 413;
    default: return 500;
  }
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message,
                const std::string& detail) {
  res.status = status;
  res.set_content(json{{"code", code}, {"message", message}, {"detail", detail}}.dump(), "application/json");
}

void send_json(httplib::Response& res, const json& body) { res.set_content(body.dump(), "application/json"); }

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body.empty() ? std::string("{}") : req.body);
    if (!body.is_object()) throw Error(ErrorCode::invalid_argument, "request body must be a JSON object");
    return body;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "malformed JSON body", "offset " + std::to_string(e.byte));
  }
}

int required_revision(const json& body) {
  auto it = body.find("expected_revision");
  if (it == body.end() || !it->is_number_integer()) {
    throw Error(ErrorCode::invalid_argument, "expected_revision (integer) is required");
  }
  return it->get<int>();
}

template <class T>
T field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end()) throw Error(ErrorCode::invalid_argument, std::string("missing field ") + name);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::invalid_argument, std::string("bad field type ") + name);
  }
}

json annotation_body(const std::string& scene_id, const Annotation& a, std::size_t views) {
  json j = json::parse(annotation_to_json(a));
  j["id"] = annotation_wire_id(scene_id, a.instance_id);
  json thumbs = json::array();
  for (std::size_t v = 0; v < views; ++v) {
    thumbs.push_back("/annotations/" + annotation_wire_id(scene_id, a.instance_id) + "/overlay/" + std::to_string(v));
  }
  j["thumbnails"] = thumbs;
  return j;
}

std::size_t view_count(const ReviewSession& s, const std::string& instance_id) {
  for (const auto& sum : s.list()) {
    if (sum.instance_id == instance_id) return sum.views;
  }
  return 0;
}

}  // namespace

struct ReviewServer::Impl {
  ReviewService& service;
  ServerOptions options;
  httplib::Server server;

  Impl(ReviewService& svc, ServerOptions opts) : service(svc), options(std::move(opts)) { routes(); }

  // Runs `fn`, mapping library errors to JSON error responses.
  template <class Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), to_string(e.code()), e.what(), e.detail());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what(), "");
      }
    };
  }

  std::pair<ReviewSession*, std::string> resolve(const httplib::Request& req) {
    const auto [scene, instance] = split_wire_id(req.path_params.at("id"));
    return {&service.session(scene), instance};
  }

  void mutation_response(httplib::Response& res, ReviewSession& s, const MutationResult& r) {
    json j = annotation_body(s.scene_id(), r.annotation, view_count(s, r.annotation.instance_id));
    j["timed_out"] = r.timed_out;
    send_json(res, j);
  }

  void routes() {
    // The browser client is served from another origin.
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!options.token || req.method == "OPTIONS") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("Authorization") == "Bearer " + *options.token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_error(res, 401, "unauthorized", "missing or wrong bearer token", "");
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.status == 404 && res.body.empty()) send_error(res, 404, "not_found", "no such endpoint", req.path);
    });

    server.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
      json scenes = json::array();
      for (const auto& id : service.scene_ids()) {
        std::size_t total = 0, pending = 0;
        for (const auto& s : service.session(id).list()) {
          ++total;
          pending += s.status == Status::auto_;
        }
        scenes.push_back({{"scene_id", id}, {"annotations", total}, {"auto", pending}});
      }
      send_json(res, {{"scenes", scenes}});
    }));

    server.Get("/scenes/:id/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      ReviewSession& s = service.session(req.path_params.at("id"));
      const AnnotationSet snap = s.snapshot();
      json list = json::array();
      for (const auto& a : snap.annotations) list.push_back(annotation_body(s.scene_id(), a, view_count(s, a.instance_id)));
      send_json(res, {{"scene_id", s.scene_id()}, {"annotations", list}});
    }));

    server.Get("/scenes/:id/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const ReviewSession& s = service.session(req.path_params.at("id"));
      res.set_content(to_json(s.export_set()), "application/json");
    }));

    server.Get("/scenes/:id/journal", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const ReviewSession& s = service.session(req.path_params.at("id"));
      std::string out;
      for (const auto& e : s.journal()) out += e.to_json() + "\n";
      res.set_content(out, "application/x-ndjson");
    }));

    server.Get("/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string label = req.has_param("class") ? req.get_param_value("class") : "";
      json models = json::array();
      for (const auto& m : service.database().models()) {
        if (label.empty() || m->class_label == label) models.push_back({{"cad_id", m->id}, {"class", m->class_label}});
      }
      send_json(res, {{"models", models}});
    }));

    server.Get("/annotations/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      send_json(res, annotation_body(s->scene_id(), s->get(instance), view_count(*s, instance)));
    }));

    server.Get("/annotations/:id/overlay/:view", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      const std::string& view_text = req.path_params.at("view");
      std::size_t view = 0;
      try {
        std::size_t used = 0;
        const long v = std::stol(view_text, &used);
        if (used != view_text.size() || v < 0) throw std::invalid_argument("view");
        view = static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_argument, "view must be a non-negative integer", view_text);
      }
      const std::string raw_text = req.has_param("raw") ? req.get_param_value("raw") : "false";
      if (raw_text != "true" && raw_text != "false" && raw_text != "1" && raw_text != "0") {
        throw Error(ErrorCode::invalid_argument, "raw must be a boolean", raw_text);
      }
      const bool raw = raw_text == "true" || raw_text == "1";
      const Overlay o = s->overlay(instance, view, raw);
      res.set_header("X-Overlay-IoU", std::to_string(o.iou));
      res.set_header("X-Overlay-Difference-Density", std::to_string(o.difference_density));
      res.set_header("X-Overlay-Pane-Width", std::to_string(o.width));
      res.set_header("X-Annotation-Revision", std::to_string(o.revision));
      res.set_header("X-Cache", o.cached ? "hit" : "miss");
      res.set_content(o.png, "image/png");
    }));

    server.Post("/annotations/:id/rotate", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      const json body = parse_body(req);
      mutation_response(res, *s, s->rotate(instance, field<int>(body, "degrees"), required_revision(body)));
    }));

    server.Post("/annotations/:id/swap", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      const json body = parse_body(req);
      const bool override_class = body.contains("override_class") ? field<bool>(body, "override_class") : false;
      mutation_response(res, *s,
                        s->swap(instance, field<std::string>(body, "cad_id"), override_class, required_revision(body)));
    }));

    server.Post("/annotations/:id/refine", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      const json body = parse_body(req);
      mutation_response(res, *s, s->refine(instance, required_revision(body)));
    }));

    server.Post("/annotations/:id/status", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto [s, instance] = resolve(req);
      const json body = parse_body(req);
      const Status status = status_from_string(field<std::string>(body, "status"));
      mutation_response(res, *s, s->set_status(instance, status, required_revision(body)));
    }));
  }
};

ReviewServer::ReviewServer(ReviewService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {}

ReviewServer::~ReviewServer() { stop(); }

bool ReviewServer::listen() {
  if (bind() < 0) return false;
  return listen_after_bind();
}

int ReviewServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) return impl_->server.bind_to_any_port(o.host);
  return impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
}

bool ReviewServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void ReviewServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void ReviewServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace cadfit
