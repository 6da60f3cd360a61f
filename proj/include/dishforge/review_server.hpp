#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "dishforge/blob_store.hpp"
#include "dishforge/review.hpp"

namespace httplib {
class Server;
}

namespace dishforge::review {

struct ReviewServerOptions {
  std::filesystem::path queue_path;       // must exist
  std::filesystem::path preference_path;  // optional; created on first save
  std::filesystem::path ui_dir;           // static assets mounted at /
  std::chrono::milliseconds lease = kDefaultLease;
  Clock clock;
};

/// HTTP front end for the review and preference queues.
///
///   GET  /api/pairs/next?reviewer=R       leased pair + image URLs
///   POST /api/pairs/{id}/verdict          {verdict, reviewer}
///   GET  /api/pairs/{id}/images           source/target refs and URLs
///   GET  /api/stats                       counts by review status
///   GET  /api/blobs/{blob_id}             raw image bytes
///   GET  /api/preference/next?reviewer=R
///   POST /api/preference/{id}/verdict     {choice: A|B|Skip, reviewer}
///   GET  /api/preference/{id}/images
///   GET  /api/preference/stats
///
/// Errors come back as {error_code, message}: 400 bad request, 404
/// UnknownPair / MissingBlob / NothingPending, 409 AlreadyReviewed /
/// InvalidState. Queues are written back after every state change and on
/// stop(), leases included.
class ReviewServer {
 public:
  /// Throws IoFailure when the queue file is missing, ParseError when it is
  /// malformed.
  ReviewServer(ReviewServerOptions options, std::shared_ptr<BlobStore> blobs);
  ~ReviewServer();

  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  /// Throws BindFailure.
  int start(const std::string& host = "127.0.0.1", int port = 0);

  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);

  /// Stops serving and persists both queues. Idempotent.
  void stop();

  int port() const noexcept { return port_; }
  ReviewQueue& queue() noexcept { return queue_; }
  PreferenceQueue& preferences() noexcept { return preferences_; }

 private:
  void install_routes();
  void persist();

  ReviewServerOptions options_;
  std::shared_ptr<BlobStore> blobs_;
  ReviewQueue queue_;
  PreferenceQueue preferences_;
  std::mutex persist_mutex_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
  bool stopped_ = false;
};

}  // namespace dishforge::review
