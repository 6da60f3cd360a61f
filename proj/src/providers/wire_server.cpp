#include "dishforge/providers/wire_server.hpp"

#include <httplib.h>

#include <functional>

#include "dishforge/error.hpp"

namespace dishforge::providers {
namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::InvalidRho:
    case Errc::EmptyMask:
    case Errc::ZeroVector:
    case Errc::UndecodableImage:
      return 400;
    case Errc::MissingBlob:
    case Errc::UnknownJob:
      return 404;
    case Errc::ProviderTimeout:
      return 504;
    default:
      return 503;
  }
}

void reply_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  res.status = status;
  res.set_content(Json{{"error_code", code}, {"message", message}}.dump(), "application/json");
}

using Handler = std::function<Json(const Json&)>;

httplib::Server::Handler wrap(Handler fn) {
  return [fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
    try {
      Json body = req.body.empty() ? Json::object() : Json::parse(req.body);
      res.set_content(fn(body).dump(), "application/json");
    } catch (const Error& e) {
      reply_error(res, status_for(e.code()), errc_name(e.code()), e.what());
    } catch (const Json::exception& e) {
      reply_error(res, 400, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
      reply_error(res, 500, "ProviderUnavailable", e.what());
    }
  };
}

}  // namespace

ProviderServer::ProviderServer(ProviderSet providers, std::shared_ptr<BlobStore> blobs)
    : providers_(std::move(providers)), blobs_(std::move(blobs)), server_(std::make_unique<httplib::Server>()) {
  // httplib defaults to SO_REUSEPORT, which would let a second server share
  // a busy port instead of failing to bind.
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  require(blobs_ != nullptr, "provider server needs a blob store");
  install_routes();
}

ProviderServer::~ProviderServer() { stop(); }

void ProviderServer::install_routes() {
  auto& s = *server_;
  auto blobs = blobs_;
  auto image_in = [blobs](const Json& body, const char* name) {
    return blobs->put(base64_decode(body.at(name).get<std::string>()));
  };
  auto image_out = [blobs](const ImageRef& ref) { return base64_encode(blobs->get(ref)); };
  auto need = [](const auto& ptr, const char* role) {
    if (!ptr) fail(Errc::ProviderUnavailable, std::string("no ") + role + " provider configured");
  };
  ProviderSet p = providers_;

  s.Post("/v1/chat", wrap([p, need](const Json& b) {
           need(p.chat, "chat");
           return Json{{"text", p.chat->chat(b.at("prompt").get<std::string>())}};
         }));
  s.Post("/v1/inspect", wrap([p, need, image_in](const Json& b) {
           need(p.vision, "vision");
           return Json(p.vision->inspect_image(image_in(b, "blob_b64")));
         }));
  s.Post("/v1/caption", wrap([p, need, image_in](const Json& b) {
           need(p.vision, "vision");
           return Json{{"text", p.vision->caption_image(image_in(b, "blob_b64"), b.value("context", ""))}};
         }));
  s.Post("/v1/embed", wrap([p, need, image_in](const Json& b) {
           need(p.embed, "embed");
           auto kind = b.at("kind").get<std::string>();
           if (kind == "text") return Json{{"values", p.embed->embed_text(b.at("payload").get<std::string>()).values()}};
           if (kind == "image") return Json{{"values", p.embed->embed_image(image_in(b, "payload")).values()}};
           fail(Errc::InvalidArgument, "embed kind must be 'text' or 'image'");
         }));
  s.Post("/v1/detect", wrap([p, need, image_in](const Json& b) {
           need(p.tools, "tools");
           return Json{{"boxes", p.tools->detect(image_in(b, "blob_b64"), b.at("query").get<std::string>())}};
         }));
  s.Post("/v1/segment", wrap([p, need, image_in, image_out](const Json& b) {
           need(p.tools, "tools");
           auto mask = p.tools->segment(image_in(b, "blob_b64"), b.at("box").get<BBox>());
           return Json{{"mask_b64", image_out(mask)}};
         }));
  s.Post("/v1/inpaint", wrap([p, need, image_in, image_out](const Json& b) {
           need(p.tools, "tools");
           auto out = p.tools->inpaint(image_in(b, "blob_b64"), image_in(b, "mask_b64"));
           return Json{{"image_b64", image_out(out)}};
         }));
  s.Post("/v1/generate", wrap([p, need, image_out](const Json& b) {
           need(p.generation, "generation");
           auto img = p.generation->generate(b.at("prompt").get<std::string>(), b.at("seed").get<std::uint64_t>(),
                                             b.at("checkpoint").get<std::string>());
           return Json{{"image_b64", image_out(img)}};
         }));
  s.Post("/v1/generate_pair", wrap([p, need, image_out](const Json& b) {
           need(p.generation, "generation");
           auto [src, tgt] = p.generation->generate_pair(
               b.at("source_prompt").get<std::string>(), b.at("target_prompt").get<std::string>(),
               b.at("rho").get<double>(), b.at("seed").get<std::uint64_t>(), b.at("checkpoint").get<std::string>());
           return Json{{"source_b64", image_out(src)}, {"target_b64", image_out(tgt)}};
         }));
  s.Post("/v1/finetune", wrap([p, need, blobs](const Json& b) {
           need(p.finetune, "finetune");
           std::vector<ImageRef> images;
           for (const auto& id : b.at("blob_ids")) {
             auto ref = blobs->lookup(id.get<std::string>());
             if (!ref) fail(Errc::MissingBlob, "unknown blob " + id.get<std::string>());
             images.push_back(*ref);
           }
           auto job = p.finetune->submit_finetune(b.at("base").get<std::string>(), images);
           return Json{{"job_id", job.job_id}};
         }));
  s.Get(R"(/v1/finetune/([^/]+))", [p](const httplib::Request& req, httplib::Response& res) {
    auto handler = wrap([&](const Json&) {
      if (!p.finetune) fail(Errc::ProviderUnavailable, "no finetune provider configured");
      return Json(p.finetune->poll_finetune(req.matches[1].str()));
    });
    httplib::Request copy = req;
    copy.body.clear();
    handler(copy, res);
  });
}

int ProviderServer::start(const std::string& host, int port) {
  host_ = host;
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ <= 0) fail(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void ProviderServer::listen(const std::string& host, int port) {
  host_ = host;
  if (!server_->bind_to_port(host, port)) fail(Errc::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  port_ = port;
  server_->listen_after_bind();
}

void ProviderServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string ProviderServer::base_url() const { return "http://" + host_ + ":" + std::to_string(port_); }

}  // namespace dishforge::providers
