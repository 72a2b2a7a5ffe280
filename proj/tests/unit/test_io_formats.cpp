#include <cmath>
#include <filesystem>
#include <random>

#include "cctsne/io_formats.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"

using namespace cctsne;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "cctsne_io_test";
    fs::create_directories(dir);
    return dir / name;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

template <typename F>
Error caught(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e;
    }
    FAIL("expected an Error");
    return Error(ErrorCode::IoError, "unreachable");
}

EmbeddingState random_state(std::size_t n, std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return EmbeddingState::from_positions(oracle::random_matrix(rng, n, 2, 37.0), oracle::random_matrix(rng, m, 2, 1e-7));
}

}  // namespace

TEST_CASE("feature rows load into a matrix") {
    const auto F = io::parse_features_csv("1,2\n3,4\n5,6\n");
    CHECK(F.n() == 3);
    CHECK(F.d() == 2);
    CHECK(F.values()(2, 1) == 6.0);
}

TEST_CASE("a non-numeric first row is a header") {
    const auto F = io::parse_features_csv("f0,f1\n1,2\n3,4\n");
    CHECK(F.n() == 2);
    CHECK(F.values()(0, 0) == 1.0);
}

TEST_CASE("bad fields report their line") {
    const auto e = caught([] { io::parse_features_csv("f0,f1\n1,2\nabc,4\n5,6\n"); });
    CHECK(e.code() == ErrorCode::ParseError);
    REQUIRE(e.index().has_value());
    CHECK(*e.index() == 3);
    CHECK(caught([] { io::parse_features_csv("1,2\n3\n"); }).code() == ErrorCode::ParseError);
}

TEST_CASE("empty and non-finite inputs are rejected") {
    CHECK(caught([] { io::parse_features_csv(""); }).code() == ErrorCode::EmptyFile);
    CHECK(caught([] { io::parse_features_csv("f0,f1\n"); }).code() == ErrorCode::EmptyFile);
    const auto e = caught([] { io::parse_features_csv("1,2\n3,inf\n"); });
    CHECK(e.code() == ErrorCode::NonFiniteValue);
    CHECK(*e.index() == 2);
    CHECK(caught([] { io::parse_features_csv("1,2\nnan,4\n"); }).code() == ErrorCode::NonFiniteValue);
}

TEST_CASE("standardization z-scores columns and zeroes constant ones") {
    io::FeatureLoadOptions opt;
    opt.standardize = true;
    const auto F = io::parse_features_csv("1,7\n2,7\n3,7\n", opt);
    CHECK(F.values()(0, 0) == doctest::Approx(-std::sqrt(1.5)));
    CHECK(F.values()(1, 0) == doctest::Approx(0.0));
    for (std::size_t i = 0; i < 3; ++i) CHECK(F.values()(i, 1) == 0.0);
}

TEST_CASE("probability files") {
    const auto T = io::parse_probabilities_csv("c0,c1\n0.3,0.7\n");
    CHECK(T.n() == 1);
    CHECK(T.class_names() == std::vector<std::string>{"c0", "c1"});
    CHECK(T.values()(0, 1) == 0.7);

    const auto e = caught([] { io::parse_probabilities_csv("c0,c1\n0.5,0.5\n0.3,0.3\n"); });
    CHECK(e.code() == ErrorCode::NotRowStochastic);
    CHECK(*e.index() == 1);

    const auto R = io::parse_probabilities_csv("c0,c1\n0.3000001,0.7\n");
    CHECK(R.values()(0, 0) + R.values()(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(caught([] { io::parse_probabilities_csv("c0,c1\n0.3,x\n"); }).code() == ErrorCode::ParseError);
    CHECK(caught([] { io::parse_probabilities_csv("c0\n1\n"); }).code() == ErrorCode::InvalidSize);
}

TEST_CASE("labels with and without header") {
    CHECK(io::parse_labels_csv("label\n0\n2\n1\n") == std::vector<int>{0, 2, 1});
    CHECK(io::parse_labels_csv("3\n4\n") == std::vector<int>{3, 4});
    CHECK(caught([] { io::parse_labels_csv("label\n1.5\n"); }).code() == ErrorCode::ParseError);
}

TEST_CASE("files round-trip through disk") {
    std::mt19937_64 rng(71);
    const auto X = oracle::random_matrix(rng, 6, 3);
    const std::vector<std::string> header = {"a", "b", "c"};
    io::save_matrix_csv(scratch("x.csv"), X, header);
    CHECK(io::load_features(scratch("x.csv")).values() == X);

    const auto T = ClassProbabilityMatrix::from(oracle::random_stochastic(rng, 6, 3), {"u", "v", "w"});
    io::save_probabilities(scratch("p.csv"), T);
    const auto back = io::load_probabilities(scratch("p.csv"));
    CHECK(back.class_names() == T.class_names());
    for (std::size_t k = 0; k < T.values().values().size(); ++k) {
        CHECK(back.values().values()[k] == doctest::Approx(T.values().values()[k]).epsilon(1e-15));
    }

    const std::vector<int> labels = {0, 3, 1};
    io::save_labels(scratch("l.csv"), labels);
    CHECK(io::load_labels(scratch("l.csv")) == labels);
    CHECK(caught([] { io::load_features(scratch("does_not_exist.csv")); }).code() == ErrorCode::IoError);
}

TEST_CASE("embedding documents round-trip bit-exactly") {
    auto s = random_state(50, 4, 72);
    s.Y(0, 0) = 0.1 + 0.2;
    s.Y(1, 1) = -1e-300;
    s.Y(2, 0) = 5e-324;
    io::EmbeddingMeta meta;
    meta.alpha = 0.30000000000000004;
    meta.lambda = 0.25;
    meta.seed = 18446744073709551615ull;
    meta.iteration = 1000;
    const std::vector<std::string> names = {"cat", "dog", "ship", "a \"quoted\" name"};
    io::save_embedding(scratch("e.json"), s, meta, names);
    const auto doc = io::load_embedding(scratch("e.json"));
    CHECK(doc.state.Y == s.Y);
    CHECK(doc.state.V == s.V);
    CHECK(doc.class_names == names);
    CHECK(doc.meta.alpha == meta.alpha);
    CHECK(doc.meta.lambda == 0.25);
    CHECK(doc.meta.seed == meta.seed);
    CHECK(doc.meta.iteration == 1000);
    CHECK(doc.meta.method == "cctsne");
    for (double v : doc.state.velocity_Y.values()) CHECK(v == 0.0);
}

TEST_CASE("embedding json has the documented shape") {
    const auto s = random_state(2, 1, 73);
    const std::vector<std::string> names = {"only"};
    const auto text = io::embedding_json(s, io::EmbeddingMeta{}, names);
    const auto j = nlohmann::json::parse(text);
    CHECK(j["points"].size() == 2);
    CHECK(j["points"][0].size() == 2);
    CHECK(j["landmarks"][0]["name"] == "only");
    CHECK(j["landmarks"][0]["x"].get<double>() == s.V(0, 0));
    CHECK(j["meta"].contains("alpha"));
    CHECK(caught([] { io::parse_embedding_json("{not json"); }).code() == ErrorCode::ParseError);
}

TEST_CASE("scatter svg counts and determinism") {
    const auto s = random_state(30, 3, 74);
    std::vector<int> colors(30);
    for (std::size_t i = 0; i < 30; ++i) colors[i] = static_cast<int>(i % 3);
    const std::vector<std::string> names = {"a", "b", "c"};
    const auto svg = io::scatter_svg(s, colors, names);
    CHECK(count(svg, "<circle") == 30);
    CHECK(count(svg, "<g class=\"landmark\"") == 3);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(io::scatter_svg(s, colors, names) == svg);

    io::emit_scatter_svg(scratch("a.svg"), s, colors, names);
    io::emit_scatter_svg(scratch("b.svg"), s, colors, names);
    CHECK(io::read_text(scratch("a.svg")) == io::read_text(scratch("b.svg")));
}

TEST_CASE("scatter svg without landmarks") {
    const auto s = EmbeddingState::from_positions(random_state(10, 1, 75).Y, Matrix(0, 2));
    const std::vector<int> colors(10, 0);
    const auto svg = io::scatter_svg(s, colors, {});
    CHECK(count(svg, "<circle") == 10);
    CHECK(count(svg, "landmark") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
}
