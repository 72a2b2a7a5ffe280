#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cctsne/core_model.hpp"

namespace cctsne::io {

struct FeatureLoadOptions {
    bool standardize = false;  // z-score every column; constant columns become 0
};

// CSV: comma separated, '.' decimal point, one instance per line. A first
// row containing any non-numeric field is taken as a header. Errors carry the
// 1-based line number (ParseError, NonFiniteValue) or the 0-based data row
// (NotRowStochastic).

/// z-scores each column in place (population stddev); constant columns become 0.
void standardize_columns(Matrix& X);

FeatureMatrix parse_features_csv(std::string_view text, const FeatureLoadOptions& options = {});
FeatureMatrix load_features(const std::filesystem::path& path, const FeatureLoadOptions& options = {});

/// The first row is always the header naming the classes. Rows must sum to 1 within 1e-6
/// and are renormalized.
ClassProbabilityMatrix parse_probabilities_csv(std::string_view text);
ClassProbabilityMatrix load_probabilities(const std::filesystem::path& path);

/// One integer label per line, optional header.
std::vector<int> parse_labels_csv(std::string_view text);
std::vector<int> load_labels(const std::filesystem::path& path);

void save_matrix_csv(const std::filesystem::path& path, const Matrix& values, std::span<const std::string> header = {});
void save_probabilities(const std::filesystem::path& path, const ClassProbabilityMatrix& T);
void save_labels(const std::filesystem::path& path, std::span<const int> labels, std::string_view header = "label");

struct EmbeddingMeta {
    std::string method = "cctsne";
    double alpha = 0.0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    int iteration = 0;
};

struct EmbeddingDocument {
    EmbeddingMeta meta;
    EmbeddingState state;  // velocities are not persisted and load as zero
    std::vector<std::string> class_names;
};

/// {"meta": {...}, "points": [[x, y], ...], "landmarks": [{"name", "x", "y"}, ...]}
/// Doubles are written in shortest round-trip form, so reloading is bit-exact.
std::string embedding_json(const EmbeddingState& state, const EmbeddingMeta& meta,
                           std::span<const std::string> class_names);
EmbeddingDocument parse_embedding_json(std::string_view text);

void save_embedding(const std::filesystem::path& path, const EmbeddingState& state, const EmbeddingMeta& meta,
                    std::span<const std::string> class_names);
EmbeddingDocument load_embedding(const std::filesystem::path& path);

/// Static scatterplot: one <circle> per point filled by class, one
/// <g class="landmark"> glyph per landmark. Output is byte-deterministic.
std::string scatter_svg(const EmbeddingState& state, std::span<const int> colors,
                        std::span<const std::string> class_names);
void emit_scatter_svg(const std::filesystem::path& path, const EmbeddingState& state, std::span<const int> colors,
                      std::span<const std::string> class_names);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace cctsne::io
