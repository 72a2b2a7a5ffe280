#include "cctsne/io_formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "json.hpp"

namespace cctsne::io {

namespace {

using json = nlohmann::json;

struct CsvLine {
    std::size_t number;  // 1-based
    std::vector<std::string> fields;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char c = line[k];
        if (quoted) {
            if (c == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                current.push_back('"');
                ++k;
            } else if (c == '"') {
                quoted = false;
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back(trim(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.emplace_back(trim(current));
    return fields;
}

std::vector<CsvLine> split_lines(std::string_view text) {
    std::vector<CsvLine> lines;
    std::size_t number = 0;
    while (!text.empty()) {
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
        ++number;
        if (trim(line).empty()) {
            continue;
        }
        lines.push_back({number, split_fields(line)});
    }
    return lines;
}

std::optional<double> parse_number(std::string_view field) {
    field = trim(field);
    if (field.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        return std::nullopt;
    }
    return value;
}

bool is_numeric_row(const CsvLine& line) {
    return std::all_of(line.fields.begin(), line.fields.end(),
                       [](const std::string& f) { return parse_number(f).has_value(); });
}

struct NumericTable {
    std::vector<std::string> header;
    Matrix values;
    std::vector<std::size_t> line_numbers;
};

enum class HeaderMode { Detect, Required };

NumericTable parse_numeric_csv(std::string_view text, HeaderMode mode = HeaderMode::Detect) {
    auto lines = split_lines(text);
    if (lines.empty()) {
        throw Error(ErrorCode::EmptyFile, "no data rows");
    }
    NumericTable table;
    std::size_t first = 0;
    if (mode == HeaderMode::Required || !is_numeric_row(lines[0])) {
        table.header = lines[0].fields;
        first = 1;
    }
    if (first >= lines.size()) {
        throw Error(ErrorCode::EmptyFile, "header only, no data rows");
    }
    const std::size_t cols = lines[first].fields.size();
    if (!table.header.empty() && table.header.size() != cols) {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(lines[first].number) + ": column count differs from the header",
                    lines[first].number);
    }
    std::vector<double> values;
    values.reserve((lines.size() - first) * cols);
    for (std::size_t r = first; r < lines.size(); ++r) {
        const auto& line = lines[r];
        if (line.fields.size() != cols) {
            throw Error(ErrorCode::ParseError,
                        "line " + std::to_string(line.number) + ": expected " + std::to_string(cols) + " fields, found " +
                            std::to_string(line.fields.size()),
                        line.number);
        }
        for (const auto& f : line.fields) {
            auto v = parse_number(f);
            if (!v) {
                throw Error(ErrorCode::ParseError, "line " + std::to_string(line.number) + ": '" + f + "' is not a number",
                            line.number);
            }
            if (!std::isfinite(*v)) {
                throw Error(ErrorCode::NonFiniteValue, "line " + std::to_string(line.number) + ": non-finite value",
                            line.number);
            }
            values.push_back(*v);
        }
        table.line_numbers.push_back(line.number);
    }
    table.values = Matrix(lines.size() - first, cols, std::move(values));
    return table;
}

std::string format_double(double v) {
    // shortest representation that round-trips
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string escape_xml(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

const char* palette(int label) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    if (label < 0) {
        return "#000000";
    }
    return colors[label % 10];
}

}  // namespace

void standardize_columns(Matrix& X) {
    const double n = static_cast<double>(X.rows());
    for (std::size_t c = 0; c < X.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < X.rows(); ++r) mean += X(r, c);
        mean /= n;
        double var = 0.0;
        for (std::size_t r = 0; r < X.rows(); ++r) var += (X(r, c) - mean) * (X(r, c) - mean);
        const double sd = std::sqrt(var / n);
        for (std::size_t r = 0; r < X.rows(); ++r) {
            X(r, c) = sd > 0.0 ? (X(r, c) - mean) / sd : 0.0;
        }
    }
}

FeatureMatrix parse_features_csv(std::string_view text, const FeatureLoadOptions& options) {
    NumericTable table = parse_numeric_csv(text);
    if (options.standardize) {
        standardize_columns(table.values);
    }
    return FeatureMatrix::from(std::move(table.values));
}

FeatureMatrix load_features(const std::filesystem::path& path, const FeatureLoadOptions& options) {
    return parse_features_csv(read_text(path), options);
}

ClassProbabilityMatrix parse_probabilities_csv(std::string_view text) {
    // class names may themselves be numbers, so the header cannot be sniffed
    NumericTable table = parse_numeric_csv(text, HeaderMode::Required);
    if (table.values.cols() < 2) {
        throw Error(ErrorCode::InvalidSize, "probabilities need at least two classes");
    }
    return ClassProbabilityMatrix::from(std::move(table.values), std::move(table.header));
}

ClassProbabilityMatrix load_probabilities(const std::filesystem::path& path) {
    return parse_probabilities_csv(read_text(path));
}

std::vector<int> parse_labels_csv(std::string_view text) {
    NumericTable table = parse_numeric_csv(text);
    if (table.values.cols() != 1) {
        throw Error(ErrorCode::ParseError, "label files hold a single column");
    }
    std::vector<int> labels(table.values.rows());
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const double v = table.values(r, 0);
        if (v != std::floor(v)) {
            throw Error(ErrorCode::ParseError, "line " + std::to_string(table.line_numbers[r]) + ": label is not an integer",
                        table.line_numbers[r]);
        }
        labels[r] = static_cast<int>(v);
    }
    return labels;
}

std::vector<int> load_labels(const std::filesystem::path& path) { return parse_labels_csv(read_text(path)); }

void save_matrix_csv(const std::filesystem::path& path, const Matrix& values, std::span<const std::string> header) {
    std::string out;
    for (std::size_t c = 0; c < header.size(); ++c) {
        out += header[c];
        out += c + 1 == header.size() ? "\n" : ",";
    }
    for (std::size_t r = 0; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            out += format_double(values(r, c));
            out += c + 1 == values.cols() ? "\n" : ",";
        }
    }
    write_text(path, out);
}

void save_probabilities(const std::filesystem::path& path, const ClassProbabilityMatrix& T) {
    save_matrix_csv(path, T.values(), T.class_names());
}

void save_labels(const std::filesystem::path& path, std::span<const int> labels, std::string_view header) {
    std::string out(header);
    out += '\n';
    for (int l : labels) {
        out += std::to_string(l);
        out += '\n';
    }
    write_text(path, out);
}

std::string embedding_json(const EmbeddingState& state, const EmbeddingMeta& meta,
                           std::span<const std::string> class_names) {
    json doc;
    doc["meta"] = {{"method", meta.method},
                   {"alpha", meta.alpha},
                   {"lambda", meta.lambda},
                   {"seed", meta.seed},
                   {"iteration", meta.iteration}};
    json points = json::array();
    for (std::size_t i = 0; i < state.n(); ++i) {
        points.push_back({state.Y(i, 0), state.Y(i, 1)});
    }
    doc["points"] = std::move(points);
    json landmarks = json::array();
    for (std::size_t u = 0; u < state.m(); ++u) {
        const std::string name = u < class_names.size() ? class_names[u] : std::to_string(u);
        landmarks.push_back({{"name", name}, {"x", state.V(u, 0)}, {"y", state.V(u, 1)}});
    }
    doc["landmarks"] = std::move(landmarks);
    return doc.dump(1);
}

EmbeddingDocument parse_embedding_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("embedding JSON: ") + e.what());
    }
    try {
        EmbeddingDocument out;
        const auto& meta = doc.at("meta");
        out.meta.method = meta.value("method", std::string("cctsne"));
        out.meta.alpha = meta.at("alpha").get<double>();
        out.meta.lambda = meta.value("lambda", 0.0);
        out.meta.seed = meta.value("seed", std::uint64_t{0});
        out.meta.iteration = meta.value("iteration", 0);
        const auto& points = doc.at("points");
        Matrix Y(points.size(), 2);
        for (std::size_t i = 0; i < points.size(); ++i) {
            Y(i, 0) = points[i].at(0).get<double>();
            Y(i, 1) = points[i].at(1).get<double>();
        }
        const auto& landmarks = doc.at("landmarks");
        Matrix V(landmarks.size(), 2);
        for (std::size_t u = 0; u < landmarks.size(); ++u) {
            out.class_names.push_back(landmarks[u].at("name").get<std::string>());
            V(u, 0) = landmarks[u].at("x").get<double>();
            V(u, 1) = landmarks[u].at("y").get<double>();
        }
        if (!Y.all_finite() || !V.all_finite()) {
            throw Error(ErrorCode::NonFiniteValue, "embedding holds non-finite coordinates");
        }
        out.state = EmbeddingState::from_positions(std::move(Y), std::move(V));
        out.state.iteration = out.meta.iteration;
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("embedding JSON: ") + e.what());
    }
}

void save_embedding(const std::filesystem::path& path, const EmbeddingState& state, const EmbeddingMeta& meta,
                    std::span<const std::string> class_names) {
    write_text(path, embedding_json(state, meta, class_names));
}

EmbeddingDocument load_embedding(const std::filesystem::path& path) { return parse_embedding_json(read_text(path)); }

std::string scatter_svg(const EmbeddingState& state, std::span<const int> colors,
                        std::span<const std::string> class_names) {
    constexpr double kSize = 800.0;
    constexpr double kPad = 40.0;
    double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
    bool any = false;
    auto extend = [&](double x, double y) {
        if (!any) {
            lo_x = hi_x = x;
            lo_y = hi_y = y;
            any = true;
            return;
        }
        lo_x = std::min(lo_x, x);
        hi_x = std::max(hi_x, x);
        lo_y = std::min(lo_y, y);
        hi_y = std::max(hi_y, y);
    };
    for (std::size_t i = 0; i < state.n(); ++i) extend(state.Y(i, 0), state.Y(i, 1));
    for (std::size_t u = 0; u < state.m(); ++u) extend(state.V(u, 0), state.V(u, 1));
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-12});
    const double scale = (kSize - 2.0 * kPad) / span;
    auto sx = [&](double x) { return kPad + (x - lo_x) * scale; };
    // SVG y grows downwards
    auto sy = [&](double y) { return kSize - kPad - (y - lo_y) * scale; };

    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  kSize, kSize, kSize, kSize);
    out += buf;
    out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n<g class=\"points\">\n";
    for (std::size_t i = 0; i < state.n(); ++i) {
        const int label = i < colors.size() ? colors[i] : -1;
        std::snprintf(buf, sizeof(buf), "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.8\"/>\n",
                      sx(state.Y(i, 0)), sy(state.Y(i, 1)), palette(label));
        out += buf;
    }
    out += "</g>\n";
    for (std::size_t u = 0; u < state.m(); ++u) {
        const double x = sx(state.V(u, 0));
        const double y = sy(state.V(u, 1));
        const std::string name = u < class_names.size() ? class_names[u] : std::to_string(u);
        std::snprintf(buf, sizeof(buf),
                      "<g class=\"landmark\"><rect x=\"%.3f\" y=\"%.3f\" width=\"14\" height=\"14\" fill=\"%s\" "
                      "stroke=\"#000000\" stroke-width=\"1.5\"/>",
                      x - 7.0, y - 7.0, palette(static_cast<int>(u)));
        out += buf;
        std::snprintf(buf, sizeof(buf), "<text x=\"%.3f\" y=\"%.3f\" font-size=\"14\" font-family=\"sans-serif\">",
                      x + 10.0, y - 10.0);
        out += buf;
        out += escape_xml(name);
        out += "</text></g>\n";
    }
    out += "</svg>\n";
    return out;
}

void emit_scatter_svg(const std::filesystem::path& path, const EmbeddingState& state, std::span<const int> colors,
                      std::span<const std::string> class_names) {
    write_text(path, scatter_svg(state, colors, class_names));
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error(ErrorCode::IoError, "write failed for " + path.string());
    }
}

}  // namespace cctsne::io
