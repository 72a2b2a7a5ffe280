#include "cctsne/session_service.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <map>
#include <random>
#include <thread>

#include "cctsne/affinities.hpp"
#include "cctsne/io_formats.hpp"
#include "cctsne/optimizer.hpp"
#include "json.hpp"

namespace cctsne::service {

using json = nlohmann::json;

struct SessionService::Session {
    mutable std::mutex mu;
    mutable std::condition_variable idle;
    std::string id;
    std::uint64_t seed = 0;
    std::optional<FeatureMatrix> features;
    std::shared_ptr<const PairwiseAffinityMatrix> Pd;
    std::optional<ClassProbabilityMatrix> probabilities;
    std::vector<int> labels;
    std::optional<MlpModel> model;
    EmbeddingState embedding;
    Hyperparams hyper;
    bool running = false;
    std::uint64_t job = 0;
    std::deque<Frame> frames;
    std::uint64_t next_frame = 0;
    std::thread worker;
    std::atomic<bool> stop{false};
    std::vector<double> split_keys;
    std::vector<int> truth;
    std::vector<std::size_t> test_indices;
    std::optional<double> last_accuracy;
    std::string last_error;
    int retrains = 0;
};

namespace {

[[noreturn]] void fail(int status, const std::string& code, const std::string& message) {
    throw ServiceError(status, code, message);
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(json(std::vector<double>(row.begin(), row.end())));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows, std::size_t cols_if_empty = 0) {
    const std::size_t n = rows.size();
    const std::size_t cols = n == 0 ? cols_if_empty : rows[0].size();
    Matrix m(n, cols);
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r].size() != cols) {
            throw Error(ErrorCode::DimensionMismatch, "ragged matrix row " + std::to_string(r), r);
        }
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

std::vector<double> split_keys_for(std::uint64_t seed, std::size_t n) {
    // separate stream from the embedding initialization
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<double> keys(n);
    for (double& k : keys) k = rng.uniform();
    return keys;
}

/// The ceil-free third of each class, lowest keys first.
std::vector<std::size_t> stratified_third(std::span<const std::size_t> candidates, std::span<const int> labels,
                                          std::span<const double> keys) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i : candidates) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> out;
    for (auto& [cls, members] : by_class) {
        std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
        });
        const std::size_t take = members.size() / 3;
        out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::size_t> counts_of(std::span<const int> labels, std::size_t m) {
    std::vector<std::size_t> counts(m, 0);
    for (int l : labels) {
        if (l >= 0) ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

double effective_perplexity(double requested, std::size_t n) {
    // small sessions cannot support the default neighbourhood size
    return std::max(2.0, std::min(requested, (static_cast<double>(n) - 1.0) / 3.0));
}

}  // namespace

std::string new_token() {
    std::random_device rd;
    std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(hi),
                  static_cast<unsigned long long>(lo));
    return buf;
}

SessionService::SessionService(ServiceConfig config, Preloaded preloaded)
    : config_(std::move(config)), preloaded_(std::move(preloaded)) {
    if (config_.frame_every < 1) config_.frame_every = 1;
    if (preloaded_.features && !preloaded_.truth.empty() && preloaded_.truth.size() != preloaded_.features->n()) {
        throw Error(ErrorCode::DimensionMismatch, "preloaded truth labels do not match the feature rows");
    }
}

SessionService::~SessionService() { shutdown(); }

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const auto& s : sessions_) {
        if (s->id == id) return s;
    }
    fail(404, "NotFound", "unknown session " + id);
}

std::string SessionService::create_session(const CreateRequest& request) {
    auto s = std::make_shared<Session>();
    try {
        const bool preloaded_features = !request.features.has_value();
        if (preloaded_features && !preloaded_.features) {
            fail(400, "InvalidArgument", "no features supplied and none preloaded");
        }
        FeatureMatrix features = preloaded_features ? *preloaded_.features : FeatureMatrix::from(*request.features);
        const std::size_t n = features.n();

        std::optional<ClassProbabilityMatrix> probs;
        if (request.probabilities) {
            if (request.probabilities->rows() != n) {
                throw Error(ErrorCode::DimensionMismatch, "probabilities have " +
                                                              std::to_string(request.probabilities->rows()) +
                                                              " rows, features have " + std::to_string(n));
            }
            probs = validate_inputs(features.values(), *request.probabilities, request.class_names).probabilities;
        } else if (preloaded_features && request.use_preloaded_probabilities && preloaded_.probabilities) {
            probs = *preloaded_.probabilities;
        } else {
            std::vector<std::string> names = request.class_names;
            std::size_t m = request.num_classes;
            if (names.empty() && m == 0 && preloaded_features && !preloaded_.truth.empty()) {
                m = static_cast<std::size_t>(*std::max_element(preloaded_.truth.begin(), preloaded_.truth.end())) + 1;
            }
            if (names.empty()) {
                for (std::size_t c = 0; c < m; ++c) names.push_back(std::to_string(c));
            }
            if (names.size() < 2) {
                fail(400, "InvalidSize", "sessions need at least two classes (give probabilities or class names)");
            }
            probs = ClassProbabilityMatrix::uniform(n, std::move(names));
        }

        Hyperparams h = config_.hyper;
        h.alpha = 0.0;
        if (request.lambda) h.lambda = *request.lambda;
        h.perplexity = effective_perplexity(request.perplexity.value_or(h.perplexity), n);
        h.seed = request.seed.value_or(h.seed);
        h.iterations = std::max(1, config_.cold_iterations);
        h.validate(n);

        s->Pd = std::make_shared<const PairwiseAffinityMatrix>(data_affinities(features.values(), h.perplexity));
        s->id = new_token();
        s->seed = h.seed;
        s->hyper = h;
        s->labels.assign(n, -1);
        s->split_keys = split_keys_for(h.seed, n);
        Rng rng(h.seed);
        Matrix Y = gaussian_init(rng, n);
        Matrix V = gaussian_init(rng, probs->m());
        s->embedding = EmbeddingState::from_positions(std::move(Y), std::move(V));
        s->features = std::move(features);
        s->probabilities = std::move(probs);
        if (preloaded_features && !preloaded_.truth.empty()) {
            s->truth = preloaded_.truth;
            if (!preloaded_.test_indices.empty()) {
                s->test_indices = preloaded_.test_indices;
            } else {
                std::vector<std::size_t> all(n);
                for (std::size_t i = 0; i < n; ++i) all[i] = i;
                s->test_indices = stratified_third(all, s->truth, s->split_keys);
            }
        }
    } catch (const Error& e) {
        fail(400, to_string(e.code()), e.what());
    }

    {
        std::lock_guard lock(mu_);
        if (shut_down_) fail(409, "ShuttingDown", "service is shutting down");
        sessions_.push_back(s);
    }
    std::lock_guard lock(s->mu);
    launch_locked(s, 0.0, true);
    return s->id;
}

std::uint64_t SessionService::launch_locked(const std::shared_ptr<Session>& sp, double alpha, bool cold) {
    Session& s = *sp;
    if (s.running) {
        fail(409, "Busy", "an optimizer job is already running on this session");
    }
    if (s.worker.joinable()) s.worker.join();
    s.hyper.alpha = alpha;
    s.running = true;
    s.stop = false;
    s.last_error.clear();
    const std::uint64_t job = ++s.job;

    Hyperparams h = s.hyper;
    h.iterations = cold ? std::max(1, config_.cold_iterations) : std::max(1, config_.job_iterations);
    std::optional<EmbeddingState> init;
    if (!cold) init = EmbeddingState::from_positions(s.embedding.Y, s.embedding.V);
    auto Pd = s.Pd;
    ClassProbabilityMatrix Pc = *s.probabilities;
    const int frame_every = config_.frame_every;
    const std::size_t max_frames = std::max<std::size_t>(1, config_.max_frames);

    s.worker = std::thread([sp, h, init = std::move(init), Pd, Pc = std::move(Pc), job, frame_every, max_frames] {
        Session& s = *sp;
        RunOptions options;
        options.trace_every = 0;
        options.progress_every = frame_every;
        options.stop = &s.stop;
        options.on_progress = [&](const EmbeddingState& state) {
            std::lock_guard lock(s.mu);
            s.embedding.Y = state.Y;
            s.embedding.V = state.V;
            s.embedding.iteration = state.iteration;
            s.frames.push_back(Frame{s.next_frame++, job, state.iteration, state.Y, state.V});
            while (s.frames.size() > max_frames) s.frames.pop_front();
        };
        std::string error;
        std::optional<EmbeddingState> final_state;
        try {
            final_state = run(*Pd, Pc, h, init, options).state;
        } catch (const std::exception& e) {
            error = e.what();
        }
        std::lock_guard lock(s.mu);
        if (final_state) {
            s.embedding = std::move(*final_state);
        }
        s.last_error = error;
        s.running = false;
        s.idle.notify_all();
    });
    return job;
}

Snapshot SessionService::get_state(const std::string& id) const {
    auto sp = find(id);
    std::lock_guard lock(sp->mu);
    const Session& s = *sp;
    Snapshot snap;
    snap.id = s.id;
    snap.Y = s.embedding.Y;
    snap.V = s.embedding.V;
    snap.class_names = s.probabilities->class_names();
    snap.alpha = s.hyper.alpha;
    snap.lambda = s.hyper.lambda;
    snap.iteration = s.embedding.iteration;
    snap.running = s.running;
    snap.job = s.job;
    snap.label_counts = counts_of(s.labels, s.probabilities->m());
    snap.labels = s.labels;
    snap.predicted = s.probabilities->argmax_labels();
    const Matrix& T = s.probabilities->values();
    snap.max_probability.resize(T.rows());
    for (std::size_t i = 0; i < T.rows(); ++i) {
        auto row = T.row(i);
        snap.max_probability[i] = *std::max_element(row.begin(), row.end());
    }
    snap.trained = s.model.has_value();
    snap.last_accuracy = s.last_accuracy;
    snap.last_error = s.last_error;
    return snap;
}

std::uint64_t SessionService::set_alpha(const std::string& id, double alpha) {
    auto sp = find(id);
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        fail(422, "InvalidArgument", "alpha must lie in [0, 1]");
    }
    std::lock_guard lock(sp->mu);
    return launch_locked(sp, alpha, false);
}

std::vector<std::size_t> SessionService::label_instances(const std::string& id, std::span<const std::int64_t> indices,
                                                         std::int64_t cls) {
    auto sp = find(id);
    std::lock_guard lock(sp->mu);
    Session& s = *sp;
    const auto n = static_cast<std::int64_t>(s.labels.size());
    const auto m = static_cast<std::int64_t>(s.probabilities->m());
    if (cls < 0 || cls >= m) {
        fail(422, "InvalidArgument", "class " + std::to_string(cls) + " outside [0, " + std::to_string(m) + ")");
    }
    for (std::int64_t i : indices) {
        if (i < 0 || i >= n) {
            fail(422, "InvalidArgument", "index " + std::to_string(i) + " outside [0, " + std::to_string(n) + ")");
        }
    }
    for (std::int64_t i : indices) s.labels[static_cast<std::size_t>(i)] = static_cast<int>(cls);
    return counts_of(s.labels, static_cast<std::size_t>(m));
}

RetrainResult SessionService::retrain(const std::string& id) {
    auto sp = find(id);
    std::lock_guard lock(sp->mu);
    Session& s = *sp;
    if (s.running) {
        fail(409, "Busy", "an optimizer job is already running on this session");
    }
    const std::size_t n = s.labels.size();
    const Matrix& X = s.features->values();

    std::vector<std::size_t> labeled;
    for (std::size_t i = 0; i < n; ++i) {
        if (s.labels[i] >= 0) labeled.push_back(i);
    }
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
    std::vector<int> test_labels;
    if (!s.truth.empty()) {
        std::vector<bool> is_test(n, false);
        for (std::size_t i : s.test_indices) is_test[i] = true;
        for (std::size_t i : labeled) {
            if (!is_test[i]) train_rows.push_back(i);
        }
        test_rows = s.test_indices;
        for (std::size_t i : test_rows) test_labels.push_back(s.truth[i]);
    } else {
        test_rows = stratified_third(labeled, s.labels, s.split_keys);
        std::vector<bool> is_test(n, false);
        for (std::size_t i : test_rows) is_test[i] = true;
        for (std::size_t i : labeled) {
            if (!is_test[i]) train_rows.push_back(i);
        }
        for (std::size_t i : test_rows) test_labels.push_back(s.labels[i]);
    }
    std::vector<int> train_labels;
    for (std::size_t i : train_rows) train_labels.push_back(s.labels[i]);
    std::vector<int> distinct(train_labels);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) {
        fail(422, "SingleClassTrainingSet", "retraining needs labeled instances from at least two classes");
    }

    TrainConfig tc = config_.train;
    tc.num_classes = s.probabilities->m();
    tc.class_names = s.probabilities->class_names();
    tc.seed = config_.train.seed + s.seed + static_cast<std::uint64_t>(s.retrains);
    const Matrix Xtrain = [&] {
        Matrix out(train_rows.size(), X.cols());
        for (std::size_t r = 0; r < train_rows.size(); ++r) {
            std::copy(X.row(train_rows[r]).begin(), X.row(train_rows[r]).end(), out.row(r).begin());
        }
        return out;
    }();
    MlpModel model;
    try {
        model = train(Xtrain, train_labels, tc, s.model);
    } catch (const Error& e) {
        fail(422, to_string(e.code()), e.what());
    }

    RetrainResult result;
    result.train_size = train_rows.size();
    result.held_out = !test_rows.empty();
    if (test_rows.empty()) {
        // too few labels for a held-out third: score the training set
        result.test_size = train_rows.size();
        result.test_accuracy = accuracy(model, Xtrain, train_labels);
    } else {
        Matrix Xtest(test_rows.size(), X.cols());
        for (std::size_t r = 0; r < test_rows.size(); ++r) {
            std::copy(X.row(test_rows[r]).begin(), X.row(test_rows[r]).end(), Xtest.row(r).begin());
        }
        result.test_size = test_rows.size();
        result.test_accuracy = accuracy(model, Xtest, test_labels);
    }
    result.new_alpha = alpha_for(result.test_accuracy);

    s.probabilities = predict_proba(model, X);
    s.model = std::move(model);
    s.last_accuracy = result.test_accuracy;
    ++s.retrains;
    result.job = launch_locked(sp, result.new_alpha, false);
    return result;
}

FramesPage SessionService::frames(const std::string& id, std::uint64_t since) const {
    auto sp = find(id);
    std::lock_guard lock(sp->mu);
    FramesPage page;
    for (const Frame& f : sp->frames) {
        if (f.index >= since) page.frames.push_back(f);
    }
    page.next = sp->next_frame;
    page.running = sp->running;
    return page;
}

bool SessionService::wait_idle(const std::string& id, std::chrono::milliseconds timeout) const {
    auto sp = find(id);
    std::unique_lock lock(sp->mu);
    return sp->idle.wait_for(lock, timeout, [&] { return !sp->running; });
}

std::vector<std::string> SessionService::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& s : sessions_) ids.push_back(s->id);
    return ids;
}

std::size_t SessionService::persist() const {
    if (config_.state_dir.empty()) return 0;
    std::filesystem::create_directories(config_.state_dir);
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        all = sessions_;
    }
    std::size_t written = 0;
    for (const auto& sp : all) {
        std::lock_guard lock(sp->mu);
        const Session& s = *sp;
        json doc;
        doc["version"] = 1;
        doc["id"] = s.id;
        doc["seed"] = s.seed;
        doc["alpha"] = s.hyper.alpha;
        doc["lambda"] = s.hyper.lambda;
        doc["perplexity"] = s.hyper.perplexity;
        doc["iteration"] = s.embedding.iteration;
        doc["job"] = s.job;
        doc["retrains"] = s.retrains;
        doc["features"] = matrix_json(s.features->values());
        doc["probabilities"] = matrix_json(s.probabilities->values());
        doc["class_names"] = s.probabilities->class_names();
        doc["labels"] = s.labels;
        doc["model"] = s.model ? json(model_to_string(*s.model)) : json(nullptr);
        doc["points"] = matrix_json(s.embedding.Y);
        doc["landmarks"] = matrix_json(s.embedding.V);
        doc["truth"] = s.truth;
        doc["test_indices"] = s.test_indices;
        doc["last_accuracy"] = s.last_accuracy ? json(*s.last_accuracy) : json(nullptr);
        io::write_text(config_.state_dir / (s.id + ".json"), doc.dump());
        ++written;
    }
    return written;
}

std::size_t SessionService::restore() {
    if (config_.state_dir.empty() || !std::filesystem::is_directory(config_.state_dir)) return 0;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(config_.state_dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::size_t loaded = 0;
    for (const auto& path : files) {
        json doc;
        try {
            doc = json::parse(io::read_text(path));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
        }
        auto s = std::make_shared<Session>();
        try {
            s->id = doc.at("id").get<std::string>();
            s->seed = doc.at("seed").get<std::uint64_t>();
            s->hyper = config_.hyper;
            s->hyper.seed = s->seed;
            s->hyper.alpha = doc.at("alpha").get<double>();
            s->hyper.lambda = doc.at("lambda").get<double>();
            s->hyper.perplexity = doc.at("perplexity").get<double>();
            s->job = doc.at("job").get<std::uint64_t>();
            s->retrains = doc.value("retrains", 0);
            s->features = FeatureMatrix::from(matrix_from_json(doc.at("features")));
            s->probabilities = ClassProbabilityMatrix::from(matrix_from_json(doc.at("probabilities")),
                                                            doc.at("class_names").get<std::vector<std::string>>());
            s->labels = doc.at("labels").get<std::vector<int>>();
            if (!doc.at("model").is_null()) s->model = model_from_string(doc.at("model").get<std::string>());
            s->embedding = EmbeddingState::from_positions(matrix_from_json(doc.at("points"), 2),
                                                          matrix_from_json(doc.at("landmarks"), 2));
            s->embedding.iteration = doc.at("iteration").get<int>();
            s->truth = doc.at("truth").get<std::vector<int>>();
            s->test_indices = doc.at("test_indices").get<std::vector<std::size_t>>();
            if (!doc.at("last_accuracy").is_null()) s->last_accuracy = doc.at("last_accuracy").get<double>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
        }
        const std::size_t n = s->features->n();
        if (s->labels.size() != n || s->probabilities->n() != n || s->embedding.n() != n ||
            s->embedding.m() != s->probabilities->m()) {
            throw Error(ErrorCode::DimensionMismatch, path.string() + ": session parts disagree in size");
        }
        s->Pd = std::make_shared<const PairwiseAffinityMatrix>(data_affinities(s->features->values(), s->hyper.perplexity));
        s->split_keys = split_keys_for(s->seed, n);
        std::lock_guard lock(mu_);
        const bool known = std::any_of(sessions_.begin(), sessions_.end(), [&](const auto& o) { return o->id == s->id; });
        if (!known) {
            sessions_.push_back(std::move(s));
            ++loaded;
        }
    }
    return loaded;
}

void SessionService::shutdown() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        if (shut_down_) return;
        shut_down_ = true;
        all = sessions_;
    }
    for (const auto& sp : all) sp->stop = true;
    for (const auto& sp : all) {
        std::thread worker;
        {
            std::lock_guard lock(sp->mu);
            worker = std::move(sp->worker);
        }
        if (worker.joinable()) worker.join();
    }
    persist();
}

}  // namespace cctsne::service
