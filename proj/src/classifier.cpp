#include "cctsne/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace cctsne {

namespace {

constexpr const char* kModelHeader = "cctsne-mlp";
constexpr int kModelVersion = 1;

void normalize_row(const MlpModel& model, std::span<const double> x, std::vector<double>& out) {
    for (std::size_t k = 0; k < model.d; ++k) {
        out[k] = (x[k] - model.input_mean[k]) * model.input_scale[k];
    }
}

// hidden activations and scores for one input
void forward(const MlpModel& model, const std::vector<double>& x, std::vector<double>& hidden,
             std::vector<double>& scores) {
    for (std::size_t h = 0; h < model.hidden; ++h) {
        double a = model.b1[h];
        for (std::size_t k = 0; k < model.d; ++k) {
            a += x[k] * model.W1(k, h);
        }
        hidden[h] = a > 0.0 ? a : 0.0;
    }
    for (std::size_t c = 0; c < model.m; ++c) {
        double s = model.b2[c];
        for (std::size_t h = 0; h < model.hidden; ++h) {
            s += hidden[h] * model.W2(h, c);
        }
        scores[c] = s;
    }
}

void softmax_inplace(std::span<double> v) {
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double& x : v) {
        x = std::exp(x - peak);
        total += x;
    }
    for (double& x : v) {
        x /= total;
    }
}

MlpModel fresh_model(const Matrix& X, std::size_t m, const TrainConfig& config, Rng& rng) {
    const std::size_t d = X.cols();
    MlpModel model = MlpModel::zeros(d, config.hidden, m);
    const double n = static_cast<double>(X.rows());
    for (std::size_t k = 0; k < d; ++k) {
        double mean = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            mean += X(i, k);
        }
        mean /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < X.rows(); ++i) {
            var += (X(i, k) - mean) * (X(i, k) - mean);
        }
        const double sd = std::sqrt(var / n);
        model.input_mean[k] = mean;
        model.input_scale[k] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }
    // He initialization for the ReLU layer, Glorot-style for the output layer.
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t h = 0; h < config.hidden; ++h) {
            model.W1(k, h) = rng.normal(0.0, s1);
        }
    }
    const double s2 = std::sqrt(2.0 / static_cast<double>(config.hidden + m));
    for (std::size_t h = 0; h < config.hidden; ++h) {
        for (std::size_t c = 0; c < m; ++c) {
            model.W2(h, c) = rng.normal(0.0, s2);
        }
    }
    return model;
}

}  // namespace

MlpModel MlpModel::zeros(std::size_t d, std::size_t hidden, std::size_t m) {
    if (d == 0 || hidden == 0 || m == 0) {
        throw Error(ErrorCode::InvalidSize, "model dimensions must be positive");
    }
    MlpModel model;
    model.d = d;
    model.hidden = hidden;
    model.m = m;
    model.input_mean.assign(d, 0.0);
    model.input_scale.assign(d, 1.0);
    model.W1 = Matrix(d, hidden);
    model.b1.assign(hidden, 0.0);
    model.W2 = Matrix(hidden, m);
    model.b2.assign(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        model.class_names.push_back(std::to_string(c));
    }
    return model;
}

bool MlpModel::all_finite() const {
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return W1.all_finite() && W2.all_finite() && finite(b1) && finite(b2) && finite(input_mean) && finite(input_scale);
}

MlpModel train(const Matrix& X, std::span<const int> labels, const TrainConfig& config,
               const std::optional<MlpModel>& init) {
    const std::size_t n = X.rows();
    if (labels.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "one label per training row required");
    }
    if (n == 0) {
        throw Error(ErrorCode::EmptySet, "training set is empty");
    }
    if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
        throw Error(ErrorCode::SingleClassTrainingSet, "training needs at least two distinct classes");
    }
    if (*std::min_element(labels.begin(), labels.end()) < 0) {
        throw Error(ErrorCode::InvalidArgument, "labels must be non-negative");
    }
    if (config.batch == 0 || config.epochs < 0 || !(config.learning_rate > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "batch, epochs and learning rate must be positive");
    }

    Rng rng(config.seed);
    MlpModel model;
    if (init) {
        model = *init;
        if (model.d != X.cols()) {
            throw Error(ErrorCode::DimensionMismatch, "model input width differs from the features");
        }
    } else {
        const std::size_t inferred = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
        const std::size_t m = config.num_classes > 0 ? config.num_classes : inferred;
        model = fresh_model(X, m, config, rng);
        if (!config.class_names.empty()) {
            if (config.class_names.size() != m) {
                throw Error(ErrorCode::DimensionMismatch, "class name count differs from class count");
            }
            model.class_names = config.class_names;
        }
    }
    for (int l : labels) {
        if (static_cast<std::size_t>(l) >= model.m) {
            throw Error(ErrorCode::InvalidArgument, "label " + std::to_string(l) + " outside the model's classes");
        }
    }

    const std::size_t H = model.hidden;
    const std::size_t m = model.m;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> x(model.d), hidden(H), scores(m), delta_hidden(H);
    Matrix gW1(model.d, H), gW2(H, m);
    std::vector<double> gb1(H), gb2(m);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < n; start += config.batch) {
            const std::size_t stop = std::min(n, start + config.batch);
            std::fill(gW1.data(), gW1.data() + gW1.size(), 0.0);
            std::fill(gW2.data(), gW2.data() + gW2.size(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gb2.begin(), gb2.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                normalize_row(model, X.row(i), x);
                forward(model, x, hidden, scores);
                softmax_inplace(scores);
                scores[static_cast<std::size_t>(labels[i])] -= 1.0;  // dL/dscore
                std::fill(delta_hidden.begin(), delta_hidden.end(), 0.0);
                for (std::size_t h = 0; h < H; ++h) {
                    for (std::size_t c = 0; c < m; ++c) {
                        gW2(h, c) += hidden[h] * scores[c];
                        delta_hidden[h] += model.W2(h, c) * scores[c];
                    }
                    if (hidden[h] <= 0.0) {
                        delta_hidden[h] = 0.0;
                    }
                }
                for (std::size_t c = 0; c < m; ++c) {
                    gb2[c] += scores[c];
                }
                for (std::size_t k = 0; k < model.d; ++k) {
                    if (x[k] == 0.0) {
                        continue;
                    }
                    for (std::size_t h = 0; h < H; ++h) {
                        gW1(k, h) += x[k] * delta_hidden[h];
                    }
                }
                for (std::size_t h = 0; h < H; ++h) {
                    gb1[h] += delta_hidden[h];
                }
            }
            const double rate = config.learning_rate / static_cast<double>(stop - start);
            for (std::size_t k = 0; k < gW1.size(); ++k) {
                model.W1.data()[k] -= rate * gW1.data()[k];
            }
            for (std::size_t k = 0; k < gW2.size(); ++k) {
                model.W2.data()[k] -= rate * gW2.data()[k];
            }
            for (std::size_t h = 0; h < H; ++h) {
                model.b1[h] -= rate * gb1[h];
            }
            for (std::size_t c = 0; c < m; ++c) {
                model.b2[c] -= rate * gb2[c];
            }
        }
    }
    if (!model.all_finite()) {
        throw Error(ErrorCode::NonFiniteUpdate, "classifier training diverged");
    }
    return model;
}

Matrix decision_scores(const MlpModel& model, const Matrix& X) {
    if (X.cols() != model.d) {
        throw Error(ErrorCode::DimensionMismatch,
                    "model expects " + std::to_string(model.d) + " features, got " + std::to_string(X.cols()));
    }
    Matrix out(X.rows(), model.m);
    std::vector<double> x(model.d), hidden(model.hidden), scores(model.m);
    for (std::size_t i = 0; i < X.rows(); ++i) {
        normalize_row(model, X.row(i), x);
        forward(model, x, hidden, scores);
        std::copy(scores.begin(), scores.end(), out.row(i).begin());
    }
    return out;
}

ClassProbabilityMatrix predict_proba(const MlpModel& model, const Matrix& X) {
    Matrix scores = decision_scores(model, X);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        softmax_inplace(scores.row(i));
    }
    return ClassProbabilityMatrix::from(std::move(scores), model.class_names);
}

std::vector<int> predict(const MlpModel& model, const Matrix& X) {
    const Matrix scores = decision_scores(model, X);
    std::vector<int> out(X.rows());
    for (std::size_t i = 0; i < X.rows(); ++i) {
        auto row = scores.row(i);
        out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double accuracy(const MlpModel& model, const Matrix& X, std::span<const int> labels) {
    if (X.rows() == 0 || labels.empty()) {
        throw Error(ErrorCode::EmptySet, "accuracy of an empty set is undefined");
    }
    if (labels.size() != X.rows()) {
        throw Error(ErrorCode::DimensionMismatch, "one label per row required");
    }
    const auto predicted = predict(model, X);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        hits += predicted[i] == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

void save_model(std::ostream& out, const MlpModel& model) {
    const auto old_precision = out.precision(17);
    out << kModelHeader << ' ' << kModelVersion << '\n';
    out << model.d << ' ' << model.hidden << ' ' << model.m << '\n';
    for (const auto& name : model.class_names) {
        out << name << '\n';
    }
    auto dump = [&](const double* v, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) {
            out << v[k] << (k + 1 == count ? '\n' : ' ');
        }
    };
    dump(model.input_mean.data(), model.d);
    dump(model.input_scale.data(), model.d);
    dump(model.W1.data(), model.W1.size());
    dump(model.b1.data(), model.hidden);
    dump(model.W2.data(), model.W2.size());
    dump(model.b2.data(), model.m);
    out.precision(old_precision);
}

MlpModel load_model(std::istream& in) {
    std::string header;
    int version = 0;
    if (!(in >> header >> version) || header != kModelHeader) {
        throw Error(ErrorCode::ParseError, "not a serialized classifier");
    }
    if (version != kModelVersion) {
        throw Error(ErrorCode::ParseError, "unsupported classifier version " + std::to_string(version));
    }
    std::size_t d = 0, hidden = 0, m = 0;
    if (!(in >> d >> hidden >> m)) {
        throw Error(ErrorCode::ParseError, "truncated classifier header");
    }
    MlpModel model = MlpModel::zeros(d, hidden, m);
    std::string line;
    std::getline(in, line);
    for (std::size_t c = 0; c < m; ++c) {
        if (!std::getline(in, model.class_names[c])) {
            throw Error(ErrorCode::ParseError, "truncated class names");
        }
    }
    auto read = [&](double* v, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k) {
            if (!(in >> v[k])) {
                throw Error(ErrorCode::ParseError, "truncated classifier parameters");
            }
        }
    };
    read(model.input_mean.data(), d);
    read(model.input_scale.data(), d);
    read(model.W1.data(), model.W1.size());
    read(model.b1.data(), hidden);
    read(model.W2.data(), model.W2.size());
    read(model.b2.data(), m);
    return model;
}

std::string model_to_string(const MlpModel& model) {
    std::ostringstream out;
    save_model(out, model);
    return out.str();
}

MlpModel model_from_string(const std::string& text) {
    std::istringstream in(text);
    return load_model(in);
}

}  // namespace cctsne
