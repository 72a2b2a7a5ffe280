#include "cctsne/core_model.hpp"

#include <cmath>
#include <sstream>

namespace cctsne {

const char* to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotRowStochastic: return "NotRowStochastic";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CalibrationFailed: return "CalibrationFailed";
    case ErrorCode::NonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message, std::optional<std::size_t> index)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), index_(index) {}

bool is_validation_error(ErrorCode code) {
    switch (code) {
    case ErrorCode::NonFiniteUpdate:
    case ErrorCode::IoError:
        return false;
    default:
        return true;
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw Error(ErrorCode::DimensionMismatch, "matrix storage does not match its shape");
    }
}

Matrix Matrix::transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            out(c, r) = (*this)(r, c);
        }
    }
    return out;
}

bool Matrix::all_finite() const {
    for (double v : values_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

namespace {

void require_finite(const Matrix& m, const char* what) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (double v : m.row(r)) {
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::NonFiniteValue, std::string(what) + " row " + std::to_string(r) + " holds a non-finite value", r);
            }
        }
    }
}

}  // namespace

FeatureMatrix FeatureMatrix::from(Matrix values) {
    if (values.rows() < 2 || values.cols() < 1) {
        throw Error(ErrorCode::InvalidSize, "features need at least 2 rows and 1 column");
    }
    require_finite(values, "features");
    return FeatureMatrix(std::move(values));
}

ClassProbabilityMatrix ClassProbabilityMatrix::from(Matrix values, std::vector<std::string> class_names) {
    if (values.rows() < 1 || values.cols() < 1) {
        throw Error(ErrorCode::InvalidSize, "class probabilities need at least one row and one class");
    }
    require_finite(values, "probabilities");
    for (std::size_t r = 0; r < values.rows(); ++r) {
        auto row = values.row(r);
        double sum = 0.0;
        for (double v : row) {
            if (v < 0.0) {
                throw Error(ErrorCode::NotRowStochastic, "row " + std::to_string(r) + " has a negative entry", r);
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > kRowStochasticTolerance) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "row " << r << " sums to " << sum;
            throw Error(ErrorCode::NotRowStochastic, msg.str(), r);
        }
        for (double& v : row) {
            v /= sum;
        }
    }
    if (class_names.empty()) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            class_names.push_back(std::to_string(c));
        }
    } else if (class_names.size() != values.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "class name count does not match probability columns");
    }
    return ClassProbabilityMatrix(std::move(values), std::move(class_names));
}

ClassProbabilityMatrix ClassProbabilityMatrix::uniform(std::size_t n, std::vector<std::string> class_names) {
    const std::size_t m = class_names.size();
    if (m == 0) {
        throw Error(ErrorCode::InvalidSize, "uniform probabilities need at least one class");
    }
    return from(Matrix(n, m, 1.0 / static_cast<double>(m)), std::move(class_names));
}

std::vector<int> ClassProbabilityMatrix::argmax_labels() const {
    std::vector<int> labels(n());
    for (std::size_t i = 0; i < n(); ++i) {
        auto row = values_.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) {
                best = c;
            }
        }
        labels[i] = static_cast<int>(best);
    }
    return labels;
}

EmbeddingState EmbeddingState::from_positions(Matrix Y, Matrix V) {
    EmbeddingState s;
    s.velocity_Y = Matrix(Y.rows(), 2);
    s.velocity_V = Matrix(V.rows(), 2);
    s.Y = std::move(Y);
    s.V = std::move(V);
    return s;
}

bool EmbeddingState::all_finite() const {
    return Y.all_finite() && V.all_finite() && velocity_Y.all_finite() && velocity_V.all_finite();
}

void Hyperparams::validate(std::size_t n) const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be > 0");
    if (!(perplexity >= 2.0)) fail("perplexity must be >= 2");
    if (n > 0 && !(perplexity < static_cast<double>(n))) fail("perplexity must be below the instance count");
    if (iterations < 1) fail("iterations must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning rate must be > 0");
    if (!(momentum_early >= 0.0 && momentum_early < 1.0)) fail("early momentum must lie in [0, 1)");
    if (!(momentum_late >= 0.0 && momentum_late < 1.0)) fail("late momentum must lie in [0, 1)");
    if (!(early_exaggeration_factor >= 1.0)) fail("early exaggeration factor must be >= 1");
    if (early_exaggeration_iters < 0) fail("early exaggeration iterations must be >= 0");
    if (momentum_switch_iter < 0) fail("momentum switch iteration must be >= 0");
}

ValidatedInputs validate_inputs(const Matrix& X, const Matrix& T, std::vector<std::string> class_names) {
    require_finite(X, "features");
    require_finite(T, "probabilities");
    if (X.rows() != T.rows()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "features have " + std::to_string(X.rows()) + " rows but probabilities have " + std::to_string(T.rows()));
    }
    if (T.cols() < 2) {
        throw Error(ErrorCode::InvalidSize, "class probabilities need at least two classes");
    }
    auto features = FeatureMatrix::from(X);
    auto probabilities = ClassProbabilityMatrix::from(T, std::move(class_names));
    return {std::move(features), std::move(probabilities)};
}

Matrix gaussian_init(Rng& rng, std::size_t rows) {
    if (rows == 0) {
        throw Error(ErrorCode::InvalidSize, "initialization needs at least one row");
    }
    Matrix out(rows, 2);
    for (std::size_t r = 0; r < rows; ++r) {
        out(r, 0) = rng.normal(0.0, 1e-2);
        out(r, 1) = rng.normal(0.0, 1e-2);
    }
    return out;
}

Matrix seeded_gaussian_init(std::size_t rows, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_init(rng, rows);
}

}  // namespace cctsne
