#include "cctsne/http_frontend.hpp"

#include "cctsne/io_formats.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cctsne::service {

using json = nlohmann::json;

namespace {

json points_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back({m(r, 0), m(r, 1)});
    return rows;
}

json snapshot_json(const Snapshot& s) {
    json landmarks = json::array();
    for (std::size_t u = 0; u < s.V.rows(); ++u) {
        landmarks.push_back({{"name", s.class_names[u]},
                             {"x", s.V(u, 0)},
                             {"y", s.V(u, 1)},
                             {"count", s.label_counts[u]}});
    }
    json labels = json::array();
    for (int l : s.labels) labels.push_back(l < 0 ? json(nullptr) : json(l));
    json out = {{"id", s.id},
                {"points", points_json(s.Y)},
                {"landmarks", std::move(landmarks)},
                {"alpha", s.alpha},
                {"lambda", s.lambda},
                {"iteration", s.iteration},
                {"running", s.running},
                {"job", s.job},
                {"label_counts", s.label_counts},
                {"labels", std::move(labels)},
                {"predicted", s.predicted},
                {"probabilities_summary", s.max_probability},
                {"trained", s.trained},
                {"last_accuracy", s.last_accuracy ? json(*s.last_accuracy) : json(nullptr)}};
    if (!s.last_error.empty()) out["last_error"] = s.last_error;
    return out;
}

Matrix matrix_field(const json& rows, const char* name) {
    if (!rows.is_array() || rows.empty()) {
        throw ServiceError(400, "ParseError", std::string(name) + " must be a non-empty array of rows");
    }
    const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!rows[r].is_array() || rows[r].size() != cols) {
            throw ServiceError(400, "ParseError", std::string(name) + " row " + std::to_string(r) + " has the wrong length");
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!rows[r][c].is_number()) {
                throw ServiceError(400, "ParseError",
                                   std::string(name) + " row " + std::to_string(r) + " holds a non-numeric entry");
            }
            m(r, c) = rows[r][c].get<double>();
        }
    }
    return m;
}

CreateRequest parse_create(const json& body) {
    CreateRequest req;
    io::FeatureLoadOptions load;
    load.standardize = body.value("standardize", false);
    if (body.contains("features_csv")) {
        req.features = io::parse_features_csv(body.at("features_csv").get<std::string>(), load).values();
    } else if (body.contains("features")) {
        Matrix X = matrix_field(body.at("features"), "features");
        if (load.standardize) io::standardize_columns(X);
        req.features = std::move(X);
    }
    if (body.contains("probabilities_csv")) {
        auto T = io::parse_probabilities_csv(body.at("probabilities_csv").get<std::string>());
        req.probabilities = T.values();
        req.class_names = T.class_names();
    } else if (body.contains("probabilities")) {
        req.probabilities = matrix_field(body.at("probabilities"), "probabilities");
    }
    if (body.contains("classes")) {
        const auto& classes = body.at("classes");
        if (classes.is_number_integer()) {
            req.num_classes = classes.get<std::size_t>();
        } else {
            req.class_names = classes.get<std::vector<std::string>>();
        }
    }
    if (body.contains("seed")) req.seed = body.at("seed").get<std::uint64_t>();
    if (body.contains("lambda")) req.lambda = body.at("lambda").get<double>();
    if (body.contains("perplexity")) req.perplexity = body.at("perplexity").get<double>();
    return req;
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json body = json::parse(req.body);
    if (!body.is_object()) throw ServiceError(400, "ParseError", "request body must be a JSON object");
    return body;
}

void send(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ServiceError& e) {
            send(res, e.status(), {{"code", e.code()}, {"message", e.what()}});
        } catch (const Error& e) {
            send(res, 400, {{"code", to_string(e.code())}, {"message", e.what()}});
        } catch (const json::exception& e) {
            send(res, 400, {{"code", "ParseError"}, {"message", e.what()}});
        } catch (const std::exception& e) {
            send(res, 500, {{"code", "Internal"}, {"message", e.what()}});
        }
    };
}

}  // namespace

struct HttpFrontend::Impl {
    explicit Impl(SessionService& s) : service(s) {}
    SessionService& service;
    httplib::Server server;
};

HttpFrontend::HttpFrontend(SessionService& service) : impl_(std::make_unique<Impl>(service)) {
    auto& server = impl_->server;
    SessionService* svc = &service;
    server.set_payload_max_length(std::size_t{1} << 31);
    // The library default adds SO_REUSEPORT, which lets a second server share
    // an occupied port instead of failing to bind.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });

    server.Get("/health", guarded([svc](const httplib::Request&, httplib::Response& res) {
                   send(res, 200, {{"status", "ok"}, {"sessions", svc->session_ids().size()}});
               }));

    server.Post("/session", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                    const json body = parse_body(req);
                    CreateRequest create;
                    try {
                        create = parse_create(body);
                    } catch (const json::exception& e) {
                        throw ServiceError(400, "ParseError", e.what());
                    }
                    const std::string id = svc->create_session(create);
                    const Snapshot snap = svc->get_state(id);
                    send(res, 201,
                         {{"id", id}, {"n", snap.Y.rows()}, {"m", snap.V.rows()}, {"alpha", snap.alpha}});
                }));

    server.Get(R"(/session/([0-9a-zA-Z]+))", guarded([svc](const httplib::Request& req, httplib::Response& res) {
                   send(res, 200, snapshot_json(svc->get_state(req.matches[1])));
               }));

    server.Post(R"(/session/([0-9a-zA-Z]+)/alpha)",
                guarded([svc](const httplib::Request& req, httplib::Response& res) {
                    const std::string id = req.matches[1];
                    const json body = parse_body(req);
                    if (!body.contains("alpha") || !body.at("alpha").is_number()) {
                        svc->get_state(id);  // 404 takes precedence
                        throw ServiceError(422, "InvalidArgument", "body needs a numeric \"alpha\"");
                    }
                    const double alpha = body.at("alpha").get<double>();
                    const std::uint64_t job = svc->set_alpha(id, alpha);
                    send(res, 202, {{"job", job}, {"alpha", alpha}});
                }));

    server.Post(R"(/session/([0-9a-zA-Z]+)/labels)",
                guarded([svc](const httplib::Request& req, httplib::Response& res) {
                    const std::string id = req.matches[1];
                    const json body = parse_body(req);
                    const bool ok = body.contains("indices") && body.at("indices").is_array() &&
                                    body.contains("class") && body.at("class").is_number_integer() &&
                                    std::all_of(body.at("indices").begin(), body.at("indices").end(),
                                                [](const json& v) { return v.is_number_integer(); });
                    if (!ok) {
                        svc->get_state(id);
                        throw ServiceError(422, "InvalidArgument", "body needs integer \"indices\" and \"class\"");
                    }
                    const auto indices = body.at("indices").get<std::vector<std::int64_t>>();
                    const auto counts = svc->label_instances(id, indices, body.at("class").get<std::int64_t>());
                    send(res, 200, {{"label_counts", counts}});
                }));

    server.Post(R"(/session/([0-9a-zA-Z]+)/retrain)",
                guarded([svc](const httplib::Request& req, httplib::Response& res) {
                    const RetrainResult r = svc->retrain(req.matches[1]);
                    send(res, 200,
                         {{"test_accuracy", r.test_accuracy},
                          {"new_alpha", r.new_alpha},
                          {"train_size", r.train_size},
                          {"test_size", r.test_size},
                          {"held_out", r.held_out},
                          {"job", r.job}});
                }));

    server.Get(R"(/session/([0-9a-zA-Z]+)/frames)",
               guarded([svc](const httplib::Request& req, httplib::Response& res) {
                   std::uint64_t since = 0;
                   if (req.has_param("since")) {
                       try {
                           since = std::stoull(req.get_param_value("since"));
                       } catch (const std::exception&) {
                           throw ServiceError(422, "InvalidArgument", "since must be a non-negative integer");
                       }
                   }
                   const FramesPage page = svc->frames(req.matches[1], since);
                   json frames = json::array();
                   for (const Frame& f : page.frames) {
                       frames.push_back({{"index", f.index},
                                         {"job", f.job},
                                         {"iteration", f.iteration},
                                         {"points", points_json(f.Y)},
                                         {"landmarks", points_json(f.V)}});
                   }
                   send(res, 200, {{"frames", std::move(frames)}, {"next", page.next}, {"running", page.running}});
               }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            res.set_content(json{{"code", res.status == 404 ? "NotFound" : "HttpError"},
                                 {"message", httplib::status_message(res.status)}}
                                .dump(),
                            "application/json");
        }
    });
}

HttpFrontend::~HttpFrontend() { stop(); }

bool HttpFrontend::bind(const std::string& host, int port) {
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
        return port_ > 0;
    }
    if (!impl_->server.bind_to_port(host, port)) return false;
    port_ = port;
    return true;
}

void HttpFrontend::listen() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
    if (impl_) impl_->server.stop();
}

void HttpFrontend::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace cctsne::service
