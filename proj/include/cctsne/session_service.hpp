#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cctsne/classifier.hpp"
#include "cctsne/core_model.hpp"

namespace cctsne::service {

/// Request failure carrying the HTTP status it maps to (400, 404, 409, 422)
/// and a short machine-readable code.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

struct ServiceConfig {
    Hyperparams hyper;            // alpha is ignored: sessions start at 0
    int cold_iterations = 1000;   // initial embedding of a new session
    int job_iterations = 300;     // every later (warm-started) job
    int frame_every = 10;         // publish a frame every this many iterations
    std::size_t max_frames = 2000;  // oldest frames are dropped beyond this
    TrainConfig train;            // retraining schedule (hidden, epochs, lr, batch, seed)
    std::filesystem::path state_dir;  // empty: no persistence
};

/// Server-side data a session can reference instead of uploading features.
/// With `truth` set, retraining evaluates on `test_indices` (or, if those are
/// empty, on a fixed stratified third of all instances) and never trains on them.
struct Preloaded {
    std::optional<FeatureMatrix> features;
    std::optional<ClassProbabilityMatrix> probabilities;
    std::vector<int> truth;
    std::vector<std::size_t> test_indices;
};

struct CreateRequest {
    std::optional<Matrix> features;  // absent: use the preloaded features
    std::optional<Matrix> probabilities;
    bool use_preloaded_probabilities = true;
    std::vector<std::string> class_names;
    std::size_t num_classes = 0;  // used when neither probabilities nor names are given
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;
    std::optional<double> perplexity;
};

struct Frame {
    std::uint64_t index = 0;  // session-wide sequence number
    std::uint64_t job = 0;
    int iteration = 0;        // iterations completed within the job
    Matrix Y;
    Matrix V;
};

struct FramesPage {
    std::vector<Frame> frames;
    std::uint64_t next = 0;  // pass as `since` to continue
    bool running = false;
};

struct Snapshot {
    std::string id;
    Matrix Y;
    Matrix V;
    std::vector<std::string> class_names;
    double alpha = 0.0;
    double lambda = 0.0;
    int iteration = 0;
    bool running = false;
    std::uint64_t job = 0;
    std::vector<std::size_t> label_counts;
    std::vector<int> labels;           // -1 where unlabeled
    std::vector<int> predicted;        // argmax class per point
    std::vector<double> max_probability;
    bool trained = false;
    std::optional<double> last_accuracy;
    std::string last_error;
};

struct RetrainResult {
    double test_accuracy = 0.0;
    double new_alpha = 0.0;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    bool held_out = true;  // false when the accuracy was taken on the training set
    std::uint64_t job = 0;
};

class SessionService {
public:
    explicit SessionService(ServiceConfig config = {}, Preloaded preloaded = {});
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    /// Validates inputs, computes the data affinities and starts the cold
    /// embedding job. Returns the session token.
    std::string create_session(const CreateRequest& request);

    Snapshot get_state(const std::string& id) const;

    /// Warm-started re-embedding at `alpha`. Returns the job number.
    std::uint64_t set_alpha(const std::string& id, double alpha);

    /// Assigns `cls` to every index (overwriting). Returns label counts.
    std::vector<std::size_t> label_instances(const std::string& id, std::span<const std::int64_t> indices,
                                             std::int64_t cls);

    /// Updates the classifier on the labeled instances, replaces the
    /// probabilities with its predictions, sets alpha = accuracy^2 and starts
    /// the warm-started re-embedding.
    RetrainResult retrain(const std::string& id);

    FramesPage frames(const std::string& id, std::uint64_t since) const;

    /// Blocks until no job runs on the session or the timeout expires.
    bool wait_idle(const std::string& id, std::chrono::milliseconds timeout) const;

    std::vector<std::string> session_ids() const;
    bool has_preloaded_features() const { return preloaded_.features.has_value(); }

    /// Writes every session to `state_dir` (no-op without one).
    std::size_t persist() const;
    /// Loads every session file from `state_dir`.
    std::size_t restore();
    /// Stops running jobs, joins workers and persists. Idempotent.
    void shutdown();

    struct Session;

private:
    std::shared_ptr<Session> find(const std::string& id) const;
    std::uint64_t launch_locked(const std::shared_ptr<Session>& s, double alpha, bool cold);

    ServiceConfig config_;
    Preloaded preloaded_;
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<Session>> sessions_;
    bool shut_down_ = false;
};

/// 128 random bits as 32 lowercase hex digits.
std::string new_token();

}  // namespace cctsne::service
