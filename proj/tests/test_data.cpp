#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "excon/data.hpp"
#include "excon/error.hpp"

using namespace excon;

namespace {

GeneratorConfig small(ModelKind target, std::uint64_t seed = 0) {
    GeneratorConfig g;
    g.d = 6;
    g.target = target;
    g.n = 7;
    g.m = 11;
    g.k = 5;
    g.n_test = 13;
    g.seed = seed;
    return g;
}

}  // namespace

TEST_CASE("bundle shape and determinism") {
    const SyntheticTask t = gen_synthetic(small(ModelKind::two_layer(3)));
    CHECK(t.data.labeled.size() == 7);
    CHECK(t.data.unlabeled.size() == 11);
    CHECK(t.data.explanations.size() == 5);
    CHECK(t.data.explanations.gradient_targets.size() == 5);
    CHECK(t.data.explanations.output_targets.size() == 5);
    CHECK(t.data.test.size() == 13);
    CHECK(t.data.dim() == 6);
    CHECK_FALSE(t.data.provenance.empty());
    CHECK(kind_of(t.target) == ModelKind::two_layer(3));
    const SyntheticTask again = gen_synthetic(small(ModelKind::two_layer(3)));
    CHECK(again.data == t.data);
    CHECK(again.target == t.target);
    CHECK_FALSE(gen_synthetic(small(ModelKind::two_layer(3), 1)).data == t.data);
}

TEST_CASE("parts are separate draws and n does not disturb the other parts") {
    const SyntheticTask t = gen_synthetic(small(ModelKind::linear()));
    std::set<Vec> all;
    std::size_t total = 0;
    for (const auto* part : {&t.data.labeled.x, &t.data.unlabeled, &t.data.explanations.points, &t.data.test.x}) {
        for (const Vec& x : *part) all.insert(x);
        total += part->size();
    }
    CHECK(all.size() == total);
    GeneratorConfig more = small(ModelKind::linear());
    more.n = 20;
    const SyntheticTask t2 = gen_synthetic(more);
    CHECK(t2.data.unlabeled == t.data.unlabeled);
    CHECK(t2.data.test == t.data.test);
    CHECK(t2.target == t.target);
    CHECK(std::equal(t.data.labeled.x.begin(), t.data.labeled.x.end(), t2.data.labeled.x.begin()));
}

TEST_CASE("noise-free targets are exact") {
    for (const ModelKind kind : {ModelKind::linear(), ModelKind::two_layer(4)}) {
        const SyntheticTask t = gen_synthetic(small(kind));
        const auto& e = t.data.explanations;
        for (std::size_t i = 0; i < e.size(); ++i) {
            CHECK(e.gradient_targets[i] == input_gradient(t.target, e.points[i]));
            CHECK(e.output_targets[i] == predict(t.target, e.points[i]));
        }
        CHECK(empirical_surrogate(SurrogateSpec::grad_l2(), t.target, e) == 0.0);
        CHECK(empirical_surrogate(SurrogateSpec::output_abs(), t.target, e) == 0.0);
        for (std::size_t i = 0; i < t.data.test.size(); ++i)
            CHECK(t.data.test.y[i] == predict(t.target, t.data.test.x[i]));
        for (std::size_t i = 0; i < t.data.labeled.size(); ++i)
            CHECK(t.data.labeled.y[i] == predict(t.target, t.data.labeled.x[i]));
    }
}

TEST_CASE("zero input variance puts every point at the origin") {
    GeneratorConfig g = small(ModelKind::linear());
    g.input_variance = 0.0;
    const SyntheticTask t = gen_synthetic(g);
    const double b = std::get<LinearModel>(t.target).bias();
    for (std::size_t i = 0; i < t.data.labeled.size(); ++i) {
        CHECK(t.data.labeled.x[i] == Vec(6, 0.0));
        CHECK(t.data.labeled.y[i] == b);
    }
}

TEST_CASE("gradient noise has the configured variance") {
    GeneratorConfig g;
    g.target = ModelKind::two_layer(10);
    g.noise = {NoiseKind::GradientGaussian, 0.1};
    g.n = 1;
    g.m = 0;
    g.k = 1000;
    g.n_test = 0;
    g.seed = 3;
    const SyntheticTask t = gen_synthetic(g);
    const auto& e = t.data.explanations;
    double mean = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i)
        mean += squared_distance(e.gradient_targets[i], input_gradient(t.target, e.points[i])) / 100.0;
    mean /= 1000.0;
    // Each term is 0.01 chi^2_100 / 100, so the mean has sd 0.01 sqrt(2/100) / sqrt(1000).
    const double sd = 0.01 * std::sqrt(2.0 / 100.0) / std::sqrt(1000.0);
    CHECK(std::abs(mean - 0.01) <= 3.0 * sd);
}

TEST_CASE("label, output and weight noise") {
    GeneratorConfig g = small(ModelKind::two_layer(3));
    g.noise = {NoiseKind::LabelGaussian, 0.5};
    SyntheticTask t = gen_synthetic(g);
    bool differs = false;
    for (std::size_t i = 0; i < t.data.labeled.size(); ++i)
        differs = differs || t.data.labeled.y[i] != predict(t.target, t.data.labeled.x[i]);
    CHECK(differs);
    for (std::size_t i = 0; i < t.data.test.size(); ++i) CHECK(t.data.test.y[i] == predict(t.target, t.data.test.x[i]));

    g.noise = {NoiseKind::OutputGaussian, 0.5};
    t = gen_synthetic(g);
    CHECK(empirical_surrogate(SurrogateSpec::output_abs(), t.target, t.data.explanations) > 0.0);
    CHECK(empirical_surrogate(SurrogateSpec::grad_l2(), t.target, t.data.explanations) == 0.0);

    g.noise = {NoiseKind::WeightGaussian, 0.3};
    t = gen_synthetic(g);
    CHECK(empirical_surrogate(SurrogateSpec::grad_l2(), t.target, t.data.explanations) > 0.0);
    CHECK(empirical_surrogate(SurrogateSpec::output_abs(), t.target, t.data.explanations) > 0.0);

    CHECK(parse_noise_kind(to_string(NoiseKind::WeightGaussian)) == NoiseKind::WeightGaussian);
    CHECK_THROWS_AS(parse_noise_kind("pink"), ParseError);
    g.noise = {NoiseKind::GradientGaussian, -1.0};
    CHECK_THROWS_AS(g.validate(), DomainError);
}

TEST_CASE("split") {
    CHECK(split_indices(10, {0, 0, 0}, 1) == std::vector<std::vector<std::size_t>>(3));
    const auto a = split_indices(50, {10, 5, 20}, 9);
    CHECK(a == split_indices(50, {10, 5, 20}, 9));
    CHECK_FALSE(a == split_indices(50, {10, 5, 20}, 10));
    const auto whole = split_indices(50, {35}, 9);
    std::vector<std::size_t> joined;
    for (const auto& p : a) joined.insert(joined.end(), p.begin(), p.end());
    CHECK(joined == whole[0]);
    CHECK(std::set<std::size_t>(joined.begin(), joined.end()).size() == 35);
    CHECK_THROWS_AS(split_indices(5, {3, 3}, 0), DomainError);

    LabeledSet pool;
    for (int i = 0; i < 20; ++i) {
        pool.x.push_back({static_cast<double>(i), 0.0});
        pool.y.push_back(i * 10.0);
    }
    const DatasetBundle b = split(pool, {4, 3, 2, 5}, 77);
    CHECK(b.labeled.size() == 4);
    CHECK(b.unlabeled.size() == 3);
    CHECK(b.explanations.size() == 2);
    CHECK(b.test.size() == 5);
    for (std::size_t i = 0; i < b.labeled.size(); ++i) CHECK(b.labeled.y[i] == b.labeled.x[i][0] * 10.0);
    CHECK(split(pool, {}, 1).labeled.size() == 0);
    CHECK_THROWS_AS(split(pool, {10, 10, 1, 0}, 1), DomainError);
}

TEST_CASE("CSV round trips") {
    const SyntheticTask t = gen_synthetic(small(ModelKind::two_layer(2)));
    for (bool hex : {true, false}) {
        std::stringstream ss;
        write_csv_dataset(ss, t.data, hex);
        CHECK(read_csv_dataset(ss) == t.data);
    }
    std::stringstream ss;
    write_csv_dataset(ss, t.data);
    CHECK(read_csv_dataset(ss, schema_of(t.data)) == t.data);

    const auto path = std::filesystem::temp_directory_path() / "excon_test_data.csv";
    write_csv_dataset(path.string(), t.data);
    CHECK(read_csv_dataset(path.string()) == t.data);
    std::filesystem::remove(path);

    std::stringstream empty;
    write_csv_dataset(empty, DatasetBundle{});
    CHECK(read_csv_dataset(empty) == DatasetBundle{});
    std::istringstream header_only("role,y,x_0,x_1\n");
    const DatasetBundle e = read_csv_dataset(header_only);
    CHECK(e.labeled.size() == 0);
    CHECK(e.test.size() == 0);
}

TEST_CASE("CSV errors") {
    std::istringstream nan_row("role,y,x_0\nlabeled,1,2\nlabeled,nan,3\n");
    try {
        read_csv_dataset(nan_row);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream bad_role("role,y,x_0\nwizard,1,2\n");
    CHECK_THROWS_AS(read_csv_dataset(bad_role), ParseError);
    std::istringstream short_row("role,y,x_0,x_1\nlabeled,1,2\n");
    CHECK_THROWS_AS(read_csv_dataset(short_row), SchemaError);
    std::istringstream wrong_dim("role,y,x_0\nlabeled,1,2\n");
    CHECK_THROWS_AS(read_csv_dataset(wrong_dim, CsvSchema{3, false, false}), SchemaError);
    std::istringstream no_header("");
    CHECK_THROWS_AS(read_csv_dataset(no_header), SchemaError);
}
