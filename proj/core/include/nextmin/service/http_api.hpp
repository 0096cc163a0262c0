#pragma once

#include <memory>
#include <string>

#include "nextmin/error.hpp"
#include "nextmin/service/session.hpp"

namespace nextmin::service {

/// JSON over HTTP for a SessionManager, with a server-sent event stream of
/// frames per session.
class ApiServer {
 public:
  explicit ApiServer(SessionManager& manager);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds to `port` (0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code) noexcept;

}  // namespace nextmin::service
