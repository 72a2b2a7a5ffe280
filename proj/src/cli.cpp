#include "cctsne/cli.hpp"

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "cctsne/affinities.hpp"
#include "cctsne/baseline.hpp"
#include "cctsne/http_frontend.hpp"
#include "cctsne/io_formats.hpp"
#include "cctsne/metrics.hpp"
#include "cctsne/optimizer.hpp"
#include "cctsne/parallel.hpp"
#include "cctsne/session_service.hpp"
#include "cctsne/synthetic.hpp"
#include "json.hpp"

namespace cctsne {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

template <typename First, typename... Rest>
void log(const char* fmt, First first, Rest... rest) {
    std::fprintf(stderr, "cctsne: ");
    std::fprintf(stderr, fmt, first, rest...);
    std::fputc('\n', stderr);
}

void log(const std::string& message) { std::fprintf(stderr, "cctsne: %s\n", message.c_str()); }

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, std::string(flag) + ": empty list");
    return out;
}

struct RunFlags {
    std::string features;
    std::string probs;
    bool standardize = false;
    std::string method = "cctsne";
    Hyperparams h;
    std::string init;
    int progress_every = 100;
};

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_alpha) {
    cmd->add_option("--features", f.features, "Feature CSV (one row per instance)")->required();
    cmd->add_option("--probs", f.probs, "Class probability CSV with class-name header");
    cmd->add_flag("--standardize", f.standardize, "z-score feature columns");
    cmd->add_option("--method", f.method, "cctsne | baseline | vanilla")
        ->check(CLI::IsMember({"cctsne", "baseline", "vanilla"}));
    if (with_alpha) {
        cmd->add_option("--alpha", f.h.alpha, "Structure balance in [0, 1]")->check(CLI::Range(0.0, 1.0));
    }
    cmd->add_option("--lambda", f.h.lambda, "Landmark distance penalty weight (> 0)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--perplexity", f.h.perplexity, "Perplexity of the feature-space affinities");
    cmd->add_option("--iters", f.h.iterations, "Iterations")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", f.h.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", f.h.seed, "Seed of the initialization");
    cmd->add_option("--exaggeration", f.h.early_exaggeration_factor, "Early exaggeration factor (cold starts)");
    cmd->add_option("--exaggeration-iters", f.h.early_exaggeration_iters, "Early exaggeration iterations");
    cmd->add_option("--progress-every", f.progress_every, "Log progress every N iterations (0 = quiet)");
}

struct Inputs {
    std::optional<FeatureMatrix> features;
    std::optional<ClassProbabilityMatrix> probabilities;
    std::optional<PairwiseAffinityMatrix> Pd;
};

Inputs load_inputs(const RunFlags& f, Method method) {
    Inputs in;
    io::FeatureLoadOptions options;
    options.standardize = f.standardize;
    in.features = io::load_features(f.features, options);
    if (method != Method::Vanilla) {
        if (f.probs.empty()) {
            throw Error(ErrorCode::InvalidArgument, "--probs is required for method " + to_string(method));
        }
        auto T = io::load_probabilities(f.probs);
        in.probabilities = validate_inputs(in.features->values(), T.values(), T.class_names()).probabilities;
    }
    f.h.validate(in.features->n());
    log("%zu instances, %zu features; computing affinities (perplexity %g)", in.features->n(), in.features->d(),
        f.h.perplexity);
    in.Pd = data_affinities(in.features->values(), f.h.perplexity);
    return in;
}

RunOptions progress_options(const RunFlags& f) {
    RunOptions options;
    options.trace_every = 0;
    if (f.progress_every > 0) {
        options.progress_every = f.progress_every;
        options.on_progress = [](const EmbeddingState& s) { log("iteration %d", s.iteration); };
    }
    return options;
}

std::optional<EmbeddingState> load_init(const std::string& path, const Inputs& in, Method method) {
    if (path.empty()) return std::nullopt;
    auto doc = io::load_embedding(path);
    if (doc.state.n() != in.features->n()) {
        throw Error(ErrorCode::DimensionMismatch, "--init: " + std::to_string(doc.state.n()) +
                                                      " points but " + std::to_string(in.features->n()) +
                                                      " instances");
    }
    if (method == Method::CcTsne) {
        if (doc.state.m() != in.probabilities->m()) {
            throw Error(ErrorCode::DimensionMismatch, "--init: landmark count differs from the class count");
        }
        return EmbeddingState::from_positions(doc.state.Y, doc.state.V);
    }
    return EmbeddingState::from_positions(doc.state.Y, Matrix(0, 2));
}

RunResult run_method(Method method, const Inputs& in, const Hyperparams& h, const std::optional<EmbeddingState>& init,
                     const RunOptions& options) {
    switch (method) {
    case Method::CcTsne:
        return run(*in.Pd, *in.probabilities, h, init, options);
    case Method::Baseline: {
        const auto Pprob = class_space_affinities(*in.probabilities, h.perplexity);
        return run_baseline(*in.Pd, Pprob, h, init, options);
    }
    case Method::Vanilla:
        return run_vanilla(*in.Pd, h, init, options);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown method");
}

std::vector<std::string> landmark_names(Method method, const Inputs& in) {
    if (method == Method::CcTsne) return in.probabilities->class_names();
    return {};
}

void write_outputs(const fs::path& out, const std::string& svg, const RunResult& result, Method method,
                   const Hyperparams& h, const Inputs& in) {
    io::EmbeddingMeta meta{to_string(method), method == Method::Vanilla ? 0.0 : h.alpha,
                           method == Method::CcTsne ? h.lambda : 0.0, h.seed, result.state.iteration};
    const auto names = landmark_names(method, in);
    io::save_embedding(out, result.state, meta, names);
    log("wrote %s", out.string().c_str());
    if (!svg.empty()) {
        std::vector<int> colors(result.state.n(), -1);
        if (in.probabilities) colors = in.probabilities->argmax_labels();
        io::emit_scatter_svg(svg, result.state, colors, names);
        log("wrote %s", svg.c_str());
    }
}

// embed ----------------------------------------------------------------------

struct EmbedFlags {
    RunFlags run;
    std::string out = "embedding.json";
    std::string svg;
};

int cmd_embed(const EmbedFlags& f) {
    const Method method = parse_method(f.run.method);
    const Inputs in = load_inputs(f.run, method);
    const auto init = load_init(f.run.init, in, method);
    if (init) log("warm start: early exaggeration disabled");
    const RunResult result = run_method(method, in, f.run.h, init, progress_options(f.run));
    write_outputs(f.out, f.svg, result, method, f.run.h, in);
    return kExitOk;
}

// sweep ----------------------------------------------------------------------

struct SweepFlags {
    RunFlags run;
    std::string alphas;
    std::string lambdas;
    std::string out_dir = "sweep";
    bool svg = false;
};

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

int cmd_sweep(const SweepFlags& f) {
    if (f.alphas.empty() == f.lambdas.empty()) {
        throw Error(ErrorCode::InvalidArgument, "give exactly one of --alphas or --lambdas");
    }
    const Method method = parse_method(f.run.method);
    const bool alpha_mode = !f.alphas.empty();
    const auto values = parse_list(alpha_mode ? f.alphas : f.lambdas, alpha_mode ? "--alphas" : "--lambdas");
    for (double v : values) {
        if (alpha_mode && !(v >= 0.0 && v <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "--alphas: " + fixed(v) + " is outside [0, 1]");
        }
        if (!alpha_mode && !(v > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "--lambdas: " + fixed(v) + " must be > 0");
        }
    }
    if (!alpha_mode && method != Method::CcTsne) {
        throw Error(ErrorCode::InvalidArgument, "--lambdas only applies to --method cctsne");
    }
    const Inputs in = load_inputs(f.run, method);
    fs::create_directories(f.out_dir);

    // alpha sweeps chain warm starts; lambda sweeps start every run cold
    std::optional<EmbeddingState> previous = load_init(f.run.init, in, method);
    std::string previous_file = f.run.init.empty() ? std::string() : f.run.init;
    json runs = json::array();
    for (std::size_t k = 0; k < values.size(); ++k) {
        Hyperparams h = f.run.h;
        (alpha_mode ? h.alpha : h.lambda) = values[k];
        const std::optional<EmbeddingState> init = alpha_mode ? previous : std::nullopt;
        log("run %zu/%zu: %s = %g%s", k + 1, values.size(), alpha_mode ? "alpha" : "lambda", values[k],
            init ? " (warm start: early exaggeration disabled)" : "");
        const RunResult result = run_method(method, in, h, init, progress_options(f.run));
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%02zu.json", alpha_mode ? "alpha" : "lambda", k);
        const fs::path file = fs::path(f.out_dir) / name;
        std::string svg;
        if (f.svg) svg = (fs::path(f.out_dir) / (std::string(name, std::strlen(name) - 5) + ".svg")).string();
        write_outputs(file, svg, result, method, h, in);
        runs.push_back({{"index", k},
                        {"alpha", method == Method::Vanilla ? 0.0 : h.alpha},
                        {"lambda", h.lambda},
                        {"file", name},
                        {"init", init && !previous_file.empty() ? json(previous_file) : json(nullptr)},
                        {"warm_start", init.has_value()}});
        previous = EmbeddingState::from_positions(result.state.Y, result.state.V);
        previous_file = name;
    }
    json manifest = {{"method", to_string(method)},
                     {"mode", alpha_mode ? "alpha" : "lambda"},
                     {"seed", f.run.h.seed},
                     {"runs", std::move(runs)}};
    io::write_text(fs::path(f.out_dir) / "manifest.json", manifest.dump(2));
    log("wrote %s", (fs::path(f.out_dir) / "manifest.json").string().c_str());
    return kExitOk;
}

// metrics --------------------------------------------------------------------

struct MetricsFlags {
    std::string features;
    std::string probs;
    std::string labels;
    bool standardize = false;
    std::vector<std::string> embeddings;
    int k = 7;
    std::string out = "metrics.csv";
};

int cmd_metrics(const MetricsFlags& f) {
    io::FeatureLoadOptions options;
    options.standardize = f.standardize;
    const FeatureMatrix X = io::load_features(f.features, options);
    std::vector<int> labels;
    if (!f.labels.empty()) {
        labels = io::load_labels(f.labels);
    } else if (!f.probs.empty()) {
        labels = io::load_probabilities(f.probs).argmax_labels();
    } else {
        throw Error(ErrorCode::InvalidArgument, "--labels or --probs is required for the class separation metric");
    }
    if (labels.size() != X.n()) {
        throw Error(ErrorCode::DimensionMismatch, "labels have " + std::to_string(labels.size()) +
                                                      " rows but features have " + std::to_string(X.n()));
    }
    std::vector<MetricsReport> rows;
    for (const auto& path : f.embeddings) {
        const auto doc = io::load_embedding(path);
        if (doc.state.n() != X.n()) {
            throw Error(ErrorCode::DimensionMismatch, path + ": " + std::to_string(doc.state.n()) +
                                                          " points but " + std::to_string(X.n()) + " instances");
        }
        MetricsReport r = evaluate(X.values(), doc.state.Y, labels, parse_method(doc.meta.method), doc.meta.alpha,
                                   doc.meta.seed, static_cast<std::size_t>(f.k));
        r.source = path;
        log("%s: trustworthiness %.4f continuity %.4f ccm %.4f", path.c_str(), r.trustworthiness, r.continuity, r.ccm);
        rows.push_back(std::move(r));
    }
    std::ofstream out(f.out);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + f.out);
    write_metrics_csv(out, rows);
    log("wrote %s", f.out.c_str());
    return kExitOk;
}

// synth ----------------------------------------------------------------------

struct SynthFlags {
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

int cmd_synth(const SynthFlags& f) {
    fs::create_directories(f.out_dir);
    const auto exp = synthetic::run_experiment(f.seed);
    const fs::path dir(f.out_dir);
    std::vector<std::string> header;
    for (std::size_t c = 0; c < synthetic::kDims; ++c) header.push_back("f" + std::to_string(c));
    io::save_matrix_csv(dir / "features.csv", exp.data.features.values(), header);
    io::save_labels(dir / "labels.csv", exp.probabilities.argmax_labels());
    io::save_labels(dir / "true_labels.csv", exp.data.labels);
    io::save_probabilities(dir / "probabilities.csv", exp.probabilities);
    std::vector<int> test(exp.split.test.begin(), exp.split.test.end());
    io::save_labels(dir / "test_indices.csv", test, "index");
    log("wrote features.csv, labels.csv, true_labels.csv, probabilities.csv, test_indices.csv to %s",
        dir.string().c_str());
    std::printf("test accuracy: %.4f\n", exp.test_accuracy);
    return kExitOk;
}

// serve ----------------------------------------------------------------------

struct ServeFlags {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string features;
    std::string probs;
    std::string truth;
    std::string test_indices;
    bool standardize = false;
    std::string state_dir;
    service::ServiceConfig config;
};

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

int cmd_serve(const ServeFlags& f) {
    if (f.features.empty()) {
        throw Error(ErrorCode::InvalidArgument, "--features is required");
    }
    service::Preloaded pre;
    io::FeatureLoadOptions options;
    options.standardize = f.standardize;
    pre.features = io::load_features(f.features, options);
    if (!f.probs.empty()) {
        auto T = io::load_probabilities(f.probs);
        pre.probabilities = validate_inputs(pre.features->values(), T.values(), T.class_names()).probabilities;
    }
    if (!f.truth.empty()) {
        pre.truth = io::load_labels(f.truth);
        if (pre.truth.size() != pre.features->n()) {
            throw Error(ErrorCode::DimensionMismatch, "--truth row count differs from --features");
        }
    }
    if (!f.test_indices.empty()) {
        for (int i : io::load_labels(f.test_indices)) {
            if (i < 0 || static_cast<std::size_t>(i) >= pre.features->n()) {
                throw Error(ErrorCode::InvalidArgument, "--test-indices: index " + std::to_string(i) + " out of range");
            }
            pre.test_indices.push_back(static_cast<std::size_t>(i));
        }
    }
    service::ServiceConfig config = f.config;
    config.state_dir = f.state_dir;
    service::SessionService svc(config, std::move(pre));
    if (const auto restored = svc.restore(); restored > 0) {
        log("restored %zu session(s) from %s", restored, f.state_dir.c_str());
    }
    service::HttpFrontend http(svc);
    if (!http.bind(f.host, f.port)) {
        log("port %d on %s is not available", f.port, f.host.c_str());
        return kExitPortInUse;
    }
    g_interrupted = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::atomic<bool> done{false};
    std::thread watcher([&] {
        while (!done) {
            if (g_interrupted) {
                log("interrupt received, shutting down");
                http.stop();
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    });
    log("listening on http://%s:%d", f.host.c_str(), http.port());
    http.listen();
    done = true;
    watcher.join();
    svc.shutdown();
    if (!f.state_dir.empty()) log("sessions flushed to %s", f.state_dir.c_str());
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
    return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Class-constrained t-SNE: embeddings, sweeps, metrics, synthetic data and the labeling service"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    EmbedFlags embed;
    auto* c_embed = app.add_subcommand("embed", "Compute one embedding");
    add_run_flags(c_embed, embed.run, true);
    c_embed->add_option("--init", embed.run.init, "Warm-start embedding JSON (positions only)");
    c_embed->add_option("--out", embed.out, "Output embedding JSON");
    c_embed->add_option("--svg", embed.svg, "Optional scatterplot SVG");

    SweepFlags sweep;
    auto* c_sweep = app.add_subcommand("sweep", "Chained alpha sweep or cold-started lambda sweep");
    add_run_flags(c_sweep, sweep.run, true);
    c_sweep->add_option("--init", sweep.run.init, "Warm-start embedding JSON for the first alpha");
    c_sweep->add_option("--alphas", sweep.alphas, "Comma-separated alphas, warm-started in order");
    c_sweep->add_option("--lambdas", sweep.lambdas, "Comma-separated lambdas, each a cold start at --alpha");
    c_sweep->add_option("--out-dir", sweep.out_dir, "Directory for embeddings and manifest.json");
    c_sweep->add_flag("--svg", sweep.svg, "Also write one SVG per run");

    MetricsFlags metrics;
    auto* c_metrics = app.add_subcommand("metrics", "Trustworthiness, continuity and class separation per embedding");
    c_metrics->add_option("--features", metrics.features, "Feature CSV")->required();
    c_metrics->add_option("--probs", metrics.probs, "Probability CSV (argmax gives the classes)");
    c_metrics->add_option("--labels", metrics.labels, "Label CSV (overrides --probs)");
    c_metrics->add_flag("--standardize", metrics.standardize, "z-score feature columns");
    c_metrics->add_option("--k", metrics.k, "Neighbourhood size")->check(CLI::PositiveNumber);
    c_metrics->add_option("--out", metrics.out, "Output CSV");
    c_metrics->add_option("embeddings", metrics.embeddings, "Embedding JSON files")->required();

    SynthFlags synth;
    auto* c_synth = app.add_subcommand("synth", "Generate the synthetic dataset and train the classifier");
    c_synth->add_option("--seed", synth.seed, "Seed");
    c_synth->add_option("--out-dir", synth.out_dir, "Output directory");

    ServeFlags serve;
    auto* c_serve = app.add_subcommand("serve", "Run the interactive labeling service");
    c_serve->add_option("--host", serve.host, "Listen address");
    c_serve->add_option("--port", serve.port, "Port")->check(CLI::Range(0, 65535));
    c_serve->add_option("--features", serve.features, "Preloaded feature CSV");
    c_serve->add_option("--probs", serve.probs, "Preloaded probability CSV");
    c_serve->add_option("--truth", serve.truth, "Ground-truth label CSV used for held-out accuracy");
    c_serve->add_option("--test-indices", serve.test_indices, "Instances reserved for testing (with --truth)");
    c_serve->add_flag("--standardize", serve.standardize, "z-score feature columns");
    c_serve->add_option("--state-dir", serve.state_dir, "Persist sessions here on shutdown, restore on startup");
    c_serve->add_option("--lambda", serve.config.hyper.lambda, "Landmark distance penalty weight")
        ->check(CLI::PositiveNumber);
    c_serve->add_option("--perplexity", serve.config.hyper.perplexity, "Perplexity");
    c_serve->add_option("--lr", serve.config.hyper.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
    c_serve->add_option("--cold-iters", serve.config.cold_iterations, "Iterations of the initial embedding");
    c_serve->add_option("--job-iters", serve.config.job_iterations, "Iterations per alpha change or retrain");
    c_serve->add_option("--frame-every", serve.config.frame_every, "Publish a frame every N iterations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    apply_env_thread_cap();
    try {
        if (c_embed->parsed()) return cmd_embed(embed);
        if (c_sweep->parsed()) return cmd_sweep(sweep);
        if (c_metrics->parsed()) return cmd_metrics(metrics);
        if (c_synth->parsed()) return cmd_synth(synth);
        if (c_serve->parsed()) return cmd_serve(serve);
    } catch (const Error& e) {
        log(e.what());
        if (e.code() == ErrorCode::NonFiniteUpdate) return kExitDivergence;
        return kExitValidation;
    } catch (const std::exception& e) {
        log(std::string("error: ") + e.what());
        return kExitFailure;
    }
    return kExitFailure;
}

}  // namespace cctsne
