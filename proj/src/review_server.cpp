#include "dishforge/review_server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "dishforge/error.hpp"

namespace dishforge::review {
namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::UnknownPair:
    case Errc::MissingBlob:
    case Errc::NothingPending:
      return 404;
    case Errc::AlreadyReviewed:
    case Errc::InvalidState:
      return 409;
    case Errc::InvalidArgument:
    case Errc::SchemaViolation:
      return 400;
    default:
      return 500;
  }
}

void reply_json(httplib::Response& res, const Json& body) { res.set_content(body.dump(), "application/json"); }

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  reply_json(res, Json{{"error_code", code}, {"message", message}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      reply_error(res, status_for(e.code()), errc_name(e.code()), e.what());
    } catch (const Json::exception& e) {
      reply_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "IoFailure", e.what());
    }
  };
}

std::string reviewer_param(const httplib::Request& req) {
  auto r = req.get_param_value("reviewer");
  if (r.empty()) fail(Errc::InvalidArgument, "reviewer query parameter is required");
  return r;
}

Json image_entry(const ImageRef& ref) {
  return Json{{"blob_id", ref.blob_id},
              {"media_type", media_type_name(ref.media_type)},
              {"width", ref.width},
              {"height", ref.height},
              {"url", "/api/blobs/" + ref.blob_id}};
}

Json pair_view(const editset::EditPair& p) {
  Json j;
  to_json(j, p);
  return Json{{"pair", j}, {"images", {{"source", image_entry(p.source)}, {"target", image_entry(p.target)}}}};
}

Json item_view(const PreferenceItem& item) {
  Json j;
  to_json(j, item);
  return Json{{"item", j}, {"images", {{"a", image_entry(item.image_a)}, {"b", image_entry(item.image_b)}}}};
}

Json body_of(const httplib::Request& req) {
  Json j = Json::parse(req.body);
  if (!j.is_object()) fail(Errc::InvalidArgument, "request body must be a JSON object");
  return j;
}

}  // namespace

ReviewServer::ReviewServer(ReviewServerOptions options, std::shared_ptr<BlobStore> blobs)
    : options_(std::move(options)),
      blobs_(std::move(blobs)),
      queue_(options_.lease, options_.clock),
      preferences_(options_.lease, options_.clock),
      server_(std::make_unique<httplib::Server>()) {
  require(blobs_ != nullptr, "review server needs a blob store");
  // httplib defaults to SO_REUSEPORT, which would let a second server share
  // a busy port instead of failing to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  if (!std::filesystem::exists(options_.queue_path)) {
    fail(Errc::IoFailure, "review queue " + options_.queue_path.string() + " does not exist");
  }
  queue_.load(options_.queue_path);
  if (!options_.preference_path.empty() && std::filesystem::exists(options_.preference_path)) {
    preferences_.load(options_.preference_path);
  }
  install_routes();
}

ReviewServer::~ReviewServer() {
  try {
    stop();
  } catch (const std::exception& e) {
    spdlog::error("review server shutdown: {}", e.what());
  }
}

void ReviewServer::persist() {
  std::lock_guard lock(persist_mutex_);
  queue_.save(options_.queue_path);
  if (!options_.preference_path.empty()) preferences_.save(options_.preference_path);
}

void ReviewServer::install_routes() {
  auto& s = *server_;

  s.Get("/api/pairs/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto pair = queue_.next(reviewer_param(req), req.get_param_value("include_skipped") == "1");
          persist();
          reply_json(res, pair_view(pair));
        }));
  s.Post(R"(/api/pairs/([^/]+)/verdict)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_of(req);
           const auto verdict = editset::review_status_from_name(body.at("verdict").get<std::string>());
           auto pair = queue_.verdict(req.matches[1], verdict, body.at("reviewer").get<std::string>());
           persist();
           reply_json(res, pair_view(pair));
         }));
  s.Get(R"(/api/pairs/([^/]+)/images)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          reply_json(res, pair_view(queue_.get(req.matches[1]))["images"]);
        }));
  s.Get("/api/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
          reply_json(res, queue_.stats());
        }));
  s.Get(R"(/api/blobs/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const std::string id = req.matches[1];
          auto ref = blobs_->lookup(id);
          if (!ref) fail(Errc::MissingBlob, "no blob " + id);
          auto bytes = blobs_->get(*ref);
          res.set_content(std::string(bytes.begin(), bytes.end()), std::string(media_type_mime(ref->media_type)));
        }));

  s.Get("/api/preference/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
          auto item = preferences_.next(reviewer_param(req), req.get_param_value("include_skipped") == "1");
          persist();
          reply_json(res, item_view(item));
        }));
  s.Post(R"(/api/preference/([^/]+)/verdict)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const Json body = body_of(req);
           const auto choice = body.at("choice").get<std::string>();
           std::optional<PreferenceItem::Choice> c;
           if (choice == "A") c = PreferenceItem::Choice::A;
           else if (choice == "B") c = PreferenceItem::Choice::B;
           else if (choice != "Skip") fail(Errc::InvalidArgument, "choice must be A, B or Skip");
           auto item = preferences_.choose(req.matches[1], c, body.at("reviewer").get<std::string>());
           persist();
           reply_json(res, item_view(item));
         }));
  s.Get(R"(/api/preference/([^/]+)/images)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          reply_json(res, item_view(preferences_.get(req.matches[1]))["images"]);
        }));
  s.Get("/api/preference/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
          reply_json(res, preferences_.stats());
        }));

  if (!options_.ui_dir.empty()) {
    if (!s.set_mount_point("/", options_.ui_dir.string())) {
      spdlog::warn("UI directory {} not found; serving the API only", options_.ui_dir.string());
    }
  }
}

int ReviewServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) fail(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ReviewServer::listen(const std::string& host, int port) {
  if (!server_->bind_to_port(host, port)) fail(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
  persist();
}

void ReviewServer::stop() {
  if (stopped_) return;
  stopped_ = true;
  server_->stop();
  if (thread_.joinable()) thread_.join();
  persist();
}

}  // namespace dishforge::review
