#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "core/dataset.hpp"
#include "core/rng.hpp"

using namespace hsrnn;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("hsrnn_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> f32_payload(const std::vector<float>& values) {
    std::vector<unsigned char> bytes;
    for (float v : values) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(u >> (8 * i)));
    }
    return bytes;
}

}  // namespace

TEST_CASE("envi: 2x2x1 f32 identity load") {
    TempDir dir;
    write_file(dir.file("a.hdr"),
               "ENVI\nsamples = 2\nlines = 2\nbands = 1\ndata type = 4\n"
               "interleave = bsq\nbyte order = 0\n");
    write_bytes(dir.file("a.raw"), f32_payload({1, 2, 3, 4}));
    const HsiCube cube = load_envi_cube(dir.file("a.hdr"), dir.file("a.raw"));
    CHECK(cube.rows == 2);
    CHECK(cube.cols == 2);
    CHECK(cube.bands == 1);
    CHECK(cube.at(0, 0, 0) == 1.0);
    CHECK(cube.at(0, 1, 0) == 2.0);
    CHECK(cube.at(1, 0, 0) == 3.0);
    CHECK(cube.at(1, 1, 0) == 4.0);
}

TEST_CASE("envi: payload size mismatch is a format error") {
    TempDir dir;
    write_file(dir.file("a.hdr"),
               "samples = 3\nlines = 3\nbands = 10\ndata type = 4\n"
               "interleave = bsq\nbyte order = 0\n");
    write_bytes(dir.file("a.raw"), f32_payload(std::vector<float>(3 * 3 * 9, 0.f)));
    try {
        load_envi_cube(dir.file("a.hdr"), dir.file("a.raw"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("324") != std::string::npos);  // actual bytes
        CHECK(msg.find("360") != std::string::npos);  // declared bytes
    }
}

TEST_CASE("envi: missing and unsupported header fields name the field") {
    TempDir dir;
    write_file(dir.file("nobands.hdr"),
               "samples = 2\nlines = 2\ndata type = 4\ninterleave = bsq\nbyte order = 0\n");
    write_bytes(dir.file("nobands.raw"), {});
    try {
        load_envi_cube(dir.file("nobands.hdr"), dir.file("nobands.raw"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("bands") != std::string::npos);
    }

    write_file(dir.file("bil.hdr"),
               "samples = 2\nlines = 2\nbands = 1\ndata type = 4\ninterleave = bil\n"
               "byte order = 0\n");
    write_bytes(dir.file("bil.raw"), f32_payload({1, 2, 3, 4}));
    try {
        load_envi_cube(dir.file("bil.hdr"), dir.file("bil.raw"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("interleave") != std::string::npos);
    }

    write_file(dir.file("cplx.hdr"),
               "samples = 2\nlines = 2\nbands = 1\ndata type = 6\ninterleave = bsq\n"
               "byte order = 0\n");
    write_bytes(dir.file("cplx.raw"), f32_payload({1, 2, 3, 4}));
    try {
        load_envi_cube(dir.file("cplx.hdr"), dir.file("cplx.raw"));
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("data type") != std::string::npos);
    }
}

TEST_CASE("envi: cube and raster round trip through save/load") {
    TempDir dir;
    auto [cube, gt] = synth_dataset({3, 16, 9, 7, 0.05, 42});
    save_envi_cube(cube, dir.file("c.hdr"), dir.file("c.raw"));
    save_envi_gt(gt, dir.file("g.hdr"), dir.file("g.raw"));

    const HsiCube cube2 = load_envi_cube(dir.file("c.hdr"), dir.file("c.raw"));
    CHECK(cube2.values == cube.values);  // f64 payload, bitwise

    const GroundTruth gt2 = load_envi_gt(dir.file("g.hdr"), dir.file("g.raw"));
    CHECK(gt2.labels == gt.labels);
    CHECK(gt2.classes == gt.classes);
}

TEST_CASE("normalize: endpoints, idempotence, constant band") {
    HsiCube cube;
    cube.rows = 1;
    cube.cols = 3;
    cube.bands = 2;
    cube.values = Tensor({1, 3, 2}, {2.0, 7.3, 4.0, 7.3, 6.0, 7.3});
    const HsiCube normed = normalize(cube);
    CHECK(normed.at(0, 0, 0) == 0.0);
    CHECK(normed.at(0, 1, 0) == 0.5);
    CHECK(normed.at(0, 2, 0) == 1.0);
    // constant band maps to zero
    CHECK(normed.at(0, 0, 1) == 0.0);
    CHECK(normed.at(0, 1, 1) == 0.0);
    CHECK(normed.at(0, 2, 1) == 0.0);
    const HsiCube twice = normalize(normed);
    for (std::size_t i = 0; i < twice.values.size(); ++i) {
        CHECK(std::abs(twice.values[i] - normed.values[i]) <= 1e-15);
    }
}

TEST_CASE("extract_patch: interior equals direct slicing") {
    auto [cube, gt] = synth_dataset({2, 12, 10, 10, 0.1, 1});
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t r = 2 + rng.below(6), c = 2 + rng.below(6);
        const Tensor patch = extract_patch(cube, r, c, 5);
        for (std::size_t a = 0; a < 5; ++a) {
            for (std::size_t b = 0; b < 5; ++b) {
                for (std::size_t d = 0; d < 12; ++d) {
                    CHECK(patch.at(a, b, d) == cube.at(r - 2 + a, c - 2 + b, d));
                }
            }
        }
    }
}

TEST_CASE("extract_patch: corner reflection indices") {
    // 3x3 patch at (0,0) must read rows (1,0,1) and cols (1,0,1)
    HsiCube cube;
    cube.rows = 4;
    cube.cols = 4;
    cube.bands = 1;
    cube.values = Tensor({4, 4, 1});
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 4; ++c) cube.values.at(r, c, 0) = 10.0 * r + c;
    }
    const Tensor patch = extract_patch(cube, 0, 0, 3);
    const std::size_t rows[3] = {1, 0, 1}, cols[3] = {1, 0, 1};
    for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
            CHECK(patch.at(a, b, 0) == cube.at(rows[a], cols[b], 0));
        }
    }
}

TEST_CASE("extract_patch: P=1 is the pixel's spectrum; even P rejected") {
    auto [cube, gt] = synth_dataset({2, 10, 6, 6, 0.0, 3});
    const Tensor patch = extract_patch(cube, 2, 3, 1);
    const Tensor spectrum = extract_spectrum(cube, 2, 3);
    for (std::size_t d = 0; d < 10; ++d) CHECK(patch.at(0, 0, d) == spectrum[d]);
    CHECK_THROWS_AS(extract_patch(cube, 2, 3, 4), ArgumentError);
}

TEST_CASE("make_split: exact counts, disjoint, exhaustive") {
    auto [cube, gt] = synth_dataset({4, 16, 20, 20, 0.1, 5});
    SplitSpec spec;
    spec.per_class = 10;
    spec.seed = 7;
    auto [train, test] = make_split(gt, spec);
    CHECK(train.size() == 40);

    std::map<int, int> train_counts;
    std::set<std::pair<int, int>> seen;
    for (const auto& s : train) {
        ++train_counts[s.label];
        seen.insert({static_cast<int>(s.row), static_cast<int>(s.col)});
    }
    for (int c = 1; c <= 4; ++c) CHECK(train_counts[c] == 10);
    for (const auto& s : test) {
        CHECK(seen.insert({static_cast<int>(s.row), static_cast<int>(s.col)}).second);
    }
    CHECK(train.size() + test.size() == 400);  // fully labeled scene
    for (const auto& s : train) CHECK(gt.at(s.row, s.col) == s.label);
    for (const auto& s : test) CHECK(gt.at(s.row, s.col) == s.label);
}

TEST_CASE("make_split: deterministic per seed, different across seeds") {
    auto [cube, gt] = synth_dataset({3, 16, 15, 15, 0.1, 6});
    SplitSpec a;
    a.per_class = 12;
    a.seed = 1;
    auto [train1, test1] = make_split(gt, a);
    auto [train2, test2] = make_split(gt, a);
    REQUIRE(train1.size() == train2.size());
    bool same = true;
    for (std::size_t i = 0; i < train1.size(); ++i) {
        same = same && train1[i].row == train2[i].row && train1[i].col == train2[i].col;
    }
    CHECK(same);

    a.seed = 2;
    auto [train3, test3] = make_split(gt, a);
    bool identical = train1.size() == train3.size();
    for (std::size_t i = 0; identical && i < train1.size(); ++i) {
        identical = train1[i].row == train3[i].row && train1[i].col == train3[i].col;
    }
    CHECK_FALSE(identical);
}

TEST_CASE("make_split: requesting more pixels than a class has is a data error") {
    auto [cube, gt] = synth_dataset({3, 16, 8, 8, 0.1, 8});
    SplitSpec spec;
    spec.counts[1] = 10000;
    spec.seed = 0;
    try {
        make_split(gt, spec);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("class 1") != std::string::npos);
        CHECK(msg.find("10000") != std::string::npos);
    }
    SplitSpec missing;
    missing.counts[9] = 1;
    CHECK_THROWS_AS(make_split(gt, missing), DataError);
}

TEST_CASE("split spec json forms") {
    const SplitSpec nested = SplitSpec::from_json(R"({"seed":3,"counts":{"1":5,"2":7}})");
    CHECK(nested.seed == 3);
    CHECK(nested.counts.at(1) == 5);
    CHECK(nested.counts.at(2) == 7);

    const SplitSpec flat = SplitSpec::from_json(R"({"1":548,"2":540,"seed":9})");
    CHECK(flat.seed == 9);
    CHECK(flat.counts.at(1) == 548);

    const SplitSpec uniform = SplitSpec::from_json(R"({"per_class":50})");
    CHECK(uniform.per_class == 50);

    CHECK_THROWS_AS(SplitSpec::from_json("[1,2]"), FormatError);
    CHECK_THROWS_AS(SplitSpec::from_json(R"({"x":5})"), FormatError);
    CHECK_THROWS_AS(SplitSpec::from_json("{}"), FormatError);
}

TEST_CASE("synth_dataset: determinism and class structure") {
    const SynthConfig cfg{4, 64, 40, 40, 0.05, 0};
    auto [cube1, gt1] = synth_dataset(cfg);
    auto [cube2, gt2] = synth_dataset(cfg);
    CHECK(cube1.values == cube2.values);
    CHECK(gt1.labels == gt2.labels);

    std::map<int, int> counts;
    for (int label : gt1.labels) {
        CHECK(label >= 1);
        CHECK(label <= 4);
        ++counts[label];
    }
    for (int c = 1; c <= 4; ++c) CHECK(counts[c] >= 100);
}

TEST_CASE("synth_dataset: noiseless spectra separate perfectly by nearest signature") {
    auto [cube, gt] = synth_dataset({4, 32, 16, 16, 0.0, 11});
    // within-class spectra identical: pick one prototype per class
    std::map<int, Tensor> prototypes;
    for (std::size_t r = 0; r < gt.rows; ++r) {
        for (std::size_t c = 0; c < gt.cols; ++c) {
            const int label = gt.at(r, c);
            if (!prototypes.count(label)) prototypes.emplace(label, extract_spectrum(cube, r, c));
        }
    }
    REQUIRE(prototypes.size() == 4);
    std::size_t correct = 0, total = 0;
    for (std::size_t r = 0; r < gt.rows; ++r) {
        for (std::size_t c = 0; c < gt.cols; ++c) {
            const Tensor x = extract_spectrum(cube, r, c);
            int best = 0;
            double best_d = 1e300;
            for (const auto& [label, proto] : prototypes) {
                double d = 0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    d += (x[i] - proto[i]) * (x[i] - proto[i]);
                }
                if (d < best_d) {
                    best_d = d;
                    best = label;
                }
            }
            correct += best == gt.at(r, c) ? 1 : 0;
            ++total;
        }
    }
    CHECK(correct == total);
}

TEST_CASE("synth_dataset validates its arguments") {
    CHECK_THROWS_AS(synth_dataset({1, 64, 10, 10, 0.0, 0}), ArgumentError);
    CHECK_THROWS_AS(synth_dataset({2, 4, 10, 10, 0.0, 0}), ArgumentError);
    CHECK_THROWS_AS(synth_dataset({2, 64, 10, 10, -0.5, 0}), ArgumentError);
}
