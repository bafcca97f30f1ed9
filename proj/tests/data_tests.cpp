#include "doctest.h"

#include "gmlearn/data.hpp"
#include "gmlearn/exact.hpp"
#include "helpers.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gmlearn;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("shift_x_layer") {
    std::vector<Labeling> s{{0, 1, 0, 1, 1, 0}};  // n = 3: x = (0,1,0), y = (1,1,0)
    CHECK(shift_x_layer(s, 3, 0) == s);
    CHECK(shift_x_layer(s, 3, 3) == s);

    std::vector<Labeling> s1 = shift_x_layer(s, 3, 1);
    CHECK(s1[0] == Labeling{1, 0, 0, 1, 1, 0});  // x rotated, y untouched

    // shifting by a then b equals shifting by a + b
    CHECK(shift_x_layer(shift_x_layer(s, 3, 1), 3, 2) == shift_x_layer(s, 3, 3));
}

TEST_CASE("gen_chain_model is deterministic in the seed") {
    ChainGenConfig c;
    c.n = 4;
    c.samples = 20;
    c.gibbs_sweeps = 200;
    c.seed = 7;
    ChainData a = gen_chain_model(c);
    ChainData b = gen_chain_model(c);
    CHECK(a.samples == b.samples);
    CHECK(a.model.theta.raw() == b.model.theta.raw());
    c.seed = 8;
    ChainData other = gen_chain_model(c);
    CHECK(other.samples != a.samples);

    CHECK(a.model.graph.node_count() == 8);
    CHECK(a.model.graph.edge_count() == 3 + 3 + 4);  // two chains plus rungs
    CHECK(static_cast<int>(a.samples.size()) == 20);
    for (double v : a.model.theta.raw()) CHECK(std::abs(v) <= 1.0);

    c.shift = 4;
    CHECK_THROWS(gen_chain_model(c));
}

TEST_CASE("gibbs samples reproduce the exact marginals") {
    ChainGenConfig c;
    c.n = 2;
    c.samples = 6000;
    c.gibbs_sweeps = 30000;
    c.seed = 11;
    ChainData d = gen_chain_model(c);
    ExactResult exact = brute_force(d.model.graph, d.model.theta);
    std::vector<double> freq(d.model.graph.node_count(), 0.0);
    for (const Labeling& s : d.samples)
        for (size_t i = 0; i < s.size(); ++i) freq[i] += s[i];
    for (int i = 0; i < d.model.graph.node_count(); ++i) {
        freq[i] /= d.samples.size();
        CHECK(std::abs(freq[i] - exact.marginals.u(i, 1)) < 0.02);
    }
}

TEST_CASE("chain_to_dataset unties the features per node and edge") {
    std::vector<Labeling> samples{{0, 1, 1, 1, 0, 0}};  // n = 3
    Dataset d = chain_to_dataset(3, samples);
    CHECK(d.du == 6);
    CHECK(d.dv == 2);
    REQUIRE(d.instances.size() == 1);
    const Instance& inst = d.instances[0];
    CHECK(inst.graph.node_count() == 3);
    CHECK(inst.target == Labeling{0, 1, 1});
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 6; ++k) {
            double expect = 0;
            if (k == 2 * i) expect = 1.0;
            if (k == 2 * i + 1) expect = samples[0][3 + i];
            CHECK(inst.ufeat[i * 6 + k] == expect);
        }
    for (int e = 0; e < 2; ++e)
        for (int k = 0; k < 2; ++k)
            CHECK(inst.efeat[e * 2 + k] == (k == e ? 1.0 : 0.0));
}

TEST_CASE("denoise generation") {
    DenoiseConfig c;
    c.rows = 16;
    c.cols = 16;
    c.train = 6;
    c.test = 2;
    c.noise = 2.0;
    c.seed = 3;
    DenoisePair pair = gen_denoise(c);
    CHECK(pair.train.instances.size() == 6u);
    CHECK(pair.test.instances.size() == 2u);

    double sum_t2 = 0;
    long count = 0, ones = 0;
    for (const auto& inst : pair.train.instances) {
        REQUIRE(inst.graph.node_count() == 256);
        int horiz = 0, vert = 0;
        for (int e = 0; e < inst.graph.edge_count(); ++e) {
            horiz += inst.efeat[2 * e] == 1.0;
            vert += inst.efeat[2 * e + 1] == 1.0;
        }
        CHECK(horiz == 16 * 15);
        CHECK(vert == 15 * 16);
        for (int i = 0; i < 256; ++i) {
            double y = inst.ufeat[2 * i + 1];
            CHECK(inst.ufeat[2 * i] == 1.0);
            CHECK(y >= 0.0);
            CHECK(y <= 1.0);
            int x = inst.target[i];
            ones += x;
            // recover t^n regardless of the pixel value
            sum_t2 += x ? 1.0 - y : y;
            ++count;
        }
    }
    // t is uniform, so E[t^2] = 1/3; median threshold makes classes balanced
    CHECK(std::abs(sum_t2 / count - 1.0 / 3.0) < 0.01);
    CHECK(std::abs(static_cast<double>(ones) / count - 0.5) < 0.05);

    // nearly noiseless channel: y concentrates at the clean pixel
    DenoiseConfig quiet = c;
    quiet.noise = 40.0;
    DenoisePair qp = gen_denoise(quiet);
    long close = 0, total = 0;
    for (const auto& inst : qp.train.instances)
        for (int i = 0; i < 256; ++i) {
            close += std::abs(inst.ufeat[2 * i + 1] - inst.target[i]) < 0.1;
            ++total;
        }
    CHECK(static_cast<double>(close) / total > 0.9);

    c.noise = 1.0;
    CHECK_THROWS(gen_denoise(c));
}

TEST_CASE("sinusoidal_expand") {
    std::vector<double> one = sinusoidal_expand({0.7});
    REQUIRE(one.size() == 4u);
    CHECK(one[0] == 0.0);
    CHECK(one[1] == doctest::Approx(std::sin(0.7)).epsilon(1e-15));
    CHECK(one[2] == 1.0);
    CHECK(one[3] == doctest::Approx(std::cos(0.7)).epsilon(1e-15));

    std::vector<double> two = sinusoidal_expand({0.3, -1.1});
    REQUIRE(two.size() == 8u);
    CHECK(two[1] == doctest::Approx(std::sin(0.3)).epsilon(1e-15));
    CHECK(two[2] == doctest::Approx(std::sin(-1.1)).epsilon(1e-15));
    CHECK(two[3] == doctest::Approx(std::sin(0.3 - 1.1)).epsilon(1e-15));
    CHECK(two[7] == doctest::Approx(std::cos(0.3 - 1.1)).epsilon(1e-15));
}

TEST_CASE("dataset directory round trip and byte-identical regeneration") {
    DenoiseConfig c;
    c.rows = 4;
    c.cols = 5;
    c.train = 2;
    c.test = 1;
    c.noise = 1.5;
    c.seed = 13;
    DenoisePair pair = gen_denoise(c);
    std::string dir = "tmp_dataset_roundtrip";
    std::filesystem::create_directories(dir);
    save_dataset(dir, pair.train, "grid", 4, 5, c.seed);
    Dataset back = load_dataset(dir);
    REQUIRE(back.instances.size() == pair.train.instances.size());
    CHECK(back.du == 2);
    CHECK(back.dv == 2);
    for (size_t k = 0; k < back.instances.size(); ++k) {
        CHECK(back.instances[k].ufeat == pair.train.instances[k].ufeat);
        CHECK(back.instances[k].efeat == pair.train.instances[k].efeat);
        CHECK(back.instances[k].target == pair.train.instances[k].target);
        CHECK(back.instances[k].graph.edges() == pair.train.instances[k].graph.edges());
    }

    std::string bytes = slurp(dir + "/features_unary.csv") + slurp(dir + "/labels.csv") +
                        slurp(dir + "/meta.json");
    DenoisePair again = gen_denoise(c);
    save_dataset(dir, again.train, "grid", 4, 5, c.seed);
    std::string bytes2 = slurp(dir + "/features_unary.csv") +
                         slurp(dir + "/labels.csv") + slurp(dir + "/meta.json");
    CHECK(bytes == bytes2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pgm reader") {
    std::string path = "tmp_read.pgm";
    {
        std::ofstream f(path, std::ios::binary);
        f << "P5\n# a comment line\n3 2\n255\n";
        const unsigned char px[6] = {0, 17, 255, 4, 80, 200};
        f.write(reinterpret_cast<const char*>(px), 6);
    }
    int rows = 0, cols = 0;
    std::vector<int> img = read_pgm(path, rows, cols);
    CHECK(rows == 2);
    CHECK(cols == 3);
    CHECK(img == std::vector<int>{0, 17, 255, 4, 80, 200});
    std::remove(path.c_str());

    {
        std::ofstream f("tmp_bad.pgm", std::ios::binary);
        f << "P2\n3 2\n255\n";
    }
    int r, c2;
    CHECK_THROWS(read_pgm("tmp_bad.pgm", r, c2));
    std::remove("tmp_bad.pgm");
}

}  // TEST_SUITE
