#pragma once

#include <memory>
#include <string>

#include "cctsne/session_service.hpp"

namespace cctsne::service {

/// JSON over HTTP for a SessionService:
///
///   POST /session                     create (features / features_csv / preloaded)
///   GET  /session/{id}                snapshot
///   POST /session/{id}/alpha          {"alpha": a}
///   POST /session/{id}/labels         {"indices": [...], "class": c}
///   POST /session/{id}/retrain
///   GET  /session/{id}/frames?since=k
///   GET  /health
///
/// Failures answer {"code", "message"} with status 400, 404, 409 or 422.
class HttpFrontend {
public:
    explicit HttpFrontend(SessionService& service);
    ~HttpFrontend();

    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    /// Binds without serving. Port 0 picks a free port. False if the port is taken.
    bool bind(const std::string& host, int port);
    int port() const noexcept { return port_; }

    /// Serves until `stop` is called.
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = -1;
};

}  // namespace cctsne::service
