#pragma once

#include <memory>
#include <string>

#include "docs2synth/config.hpp"
#include "docs2synth/review_service.hpp"

namespace docs2synth::review {

// HTTP front end over ReviewService (cpp-httplib). Routes:
//   GET   /api/qa                      ?status= &doc_id= &page= &page_size=
//   POST  /api/qa/{id}/approve | /reject
//   PATCH /api/qa/{id}                 {"field", "new_value", "reviewer"?}
//   GET   /api/documents/{id}/image    ?boxes=i,j,k
//   POST  /api/compare
//   GET   /api/stats
//   GET   /artifacts/...               annotated images
//   GET   /...                         static UI bundle when configured
class ReviewServer {
 public:
  ReviewServer(ReviewService& service, config::ReviewServerConfig config);
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  // Blocks until stop(). Returns false if the socket could not be bound.
  bool listen();
  // Binds an ephemeral port on the configured host and returns it (tests).
  int bind_any_port();
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace docs2synth::review
