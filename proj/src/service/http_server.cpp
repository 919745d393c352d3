#include "crowdlocal/http_server.hpp"

#include "crowdlocal/errors.hpp"

#include <httplib.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace crowdlocal {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, json{{"error", message}}, status);
}

void send_png(httplib::Response& res, const std::vector<unsigned char>& png) {
  res.set_content(std::string(reinterpret_cast<const char*>(png.data()), png.size()), "image/png");
}

double parse_number(const std::string& text, const char* name) {
  double v = 0;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
  if (r.ec != std::errc() || r.ptr != text.data() + text.size()) {
    throw ServiceError(400, std::string("bad ") + name + " parameter");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0" || text.empty()) return false;
  throw ServiceError(400, "bad boolean parameter");
}

struct PreviewQuery {
  double alpha = 0;
  bool reversed = false;
  std::optional<int> max_edge;
};

PreviewQuery preview_query(const httplib::Request& req) {
  if (!req.has_param("alpha")) throw ServiceError(400, "alpha parameter required");
  PreviewQuery q;
  q.alpha = parse_number(req.get_param_value("alpha"), "alpha");
  if (req.has_param("reversed")) q.reversed = parse_bool(req.get_param_value("reversed"));
  if (req.has_param("max_edge")) {
    const double e = parse_number(req.get_param_value("max_edge"), "max_edge");
    if (e != std::floor(e) || e < 1 || e > 1e5) throw ServiceError(400, "bad max_edge parameter");
    q.max_edge = int(e);
  }
  return q;
}

/// Runs `fn`, translating service and parse failures into HTTP errors.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.what());
  } catch (const json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void register_routes(httplib::Server& server, SessionService& service,
                     const std::optional<std::filesystem::path>& static_dir) {
  server.Post("/sessions", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_file("image")) throw ServiceError(400, "multipart field 'image' required");
      const auto& file = req.get_file_value("image");
      json config = nullptr;
      if (req.has_file("config")) {
        const auto& text = req.get_file_value("config").content;
        if (!text.empty()) config = json::parse(text);
      }
      const auto* bytes = reinterpret_cast<const unsigned char*>(file.content.data());
      const std::string id = service.create_session(std::span(bytes, file.content.size()), config);
      send_json(res, json{{"id", id}});
    });
  });

  server.Get("/sessions", [&service](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service.list_sessions()); });
  });

  server.Get(R"(/sessions/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service.session_state(req.matches[1])); });
  });

  server.Get(R"(/sessions/([^/]+)/preview)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto q = preview_query(req);
      send_png(res, service.render_preview(req.matches[1], q.alpha, q.reversed, q.max_edge));
    });
  });

  server.Get("/check/preview", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto q = preview_query(req);
      send_png(res, service.render_check(q.alpha, q.reversed, q.max_edge));
    });
  });

  server.Get(R"(/sessions/([^/]+)/result)", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, service.result(req.matches[1])); });
  });

  server.Get(R"(/sessions/([^/]+)/(result\.png|trace\.csv|params\.csv))",
             [&service](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] {
                 const std::string name = req.matches[2];
                 const auto path = service.artifact(req.matches[1], name);
                 const char* type = name.ends_with(".png") ? "image/png" : "text/csv";
                 res.set_content(read_all(path), type);
               });
             });

  server.Get("/microtask", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string worker = req.get_param_value("worker");
      auto mt = service.get_microtask(worker);
      if (!mt) throw ServiceError(404, "no work available");
      send_json(res, *mt);
    });
  });

  server.Post("/responses", [&service](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body);
      if (!body.is_object() || !body.contains("worker_id") || !body.contains("microtask_id") ||
          !body.contains("alphas") || !body.at("alphas").is_array()) {
        throw ServiceError(400, "expected worker_id, microtask_id and alphas");
      }
      std::vector<double> alphas;
      for (const auto& a : body.at("alphas")) {
        if (!a.is_number()) throw ServiceError(400, "alphas must be numbers");
        alphas.push_back(a.get<double>());
      }
      send_json(res, service.submit_response(body.at("worker_id").get<std::string>(),
                                             body.at("microtask_id").get<std::string>(), alphas));
    });
  });

  if (static_dir) server.set_mount_point("/", static_dir->string());
}

}  // namespace crowdlocal
