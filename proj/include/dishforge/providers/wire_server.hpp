#pragma once

#include <memory>
#include <string>
#include <thread>

#include "dishforge/blob_store.hpp"
#include "dishforge/providers/provider.hpp"

namespace httplib {
class Server;
}

namespace dishforge::providers {

/// Serves a ProviderSet over the JSON wire protocol the gateway speaks.
/// Incoming images are stored in `blobs` before the wrapped provider sees
/// them. Library errors map to {error_code, message} bodies: argument errors
/// 400, missing resources 404, everything else 503.
class ProviderServer {
 public:
  ProviderServer(ProviderSet providers, std::shared_ptr<BlobStore> blobs);
  ~ProviderServer();

  ProviderServer(const ProviderServer&) = delete;
  ProviderServer& operator=(const ProviderServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Throws BindFailure.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);

  void stop();
  int port() const noexcept { return port_; }
  std::string base_url() const;

 private:
  void install_routes();

  ProviderSet providers_;
  std::shared_ptr<BlobStore> blobs_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace dishforge::providers
