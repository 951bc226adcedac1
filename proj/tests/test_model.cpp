#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/model.hpp"
#include "core/rng.hpp"

using namespace hsrnn;

namespace {

ModelSpec gru_spec(std::uint64_t seed = 0) {
    ModelSpec s;
    s.variant = Variant::gru;
    s.bands = 103;
    s.classes = 9;
    s.hidden = 128;
    s.seed = seed;
    return s;
}

ModelSpec tiny_pgru_spec(std::uint64_t seed = 0) {
    ModelSpec s;
    s.variant = Variant::st_ss_pgru;
    s.bands = 12;
    s.classes = 3;
    s.patch = 5;
    s.spatial_filters = 4;
    s.shorten_filters = 4;
    s.timesteps = 3;
    s.hidden = 6;
    s.units = 2;
    s.seed = seed;
    return s;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(0.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("band-by-band GRU parameter count matches its tensor shapes") {
    Model model(gru_spec());
    // 3 gates of (128x1 + 128x128 + 128) plus the 9x128+9 head.
    CHECK(model.parameter_count() == 3 * (128 * 1 + 128 * 128 + 128) + 9 * 128 + 9);
    CHECK(model.parameter_count() == 51081);
}

TEST_CASE("st-ss-pgru builds with the Pavia shorten geometry") {
    ModelSpec s;
    s.variant = Variant::st_ss_pgru;
    s.bands = 103;
    s.classes = 9;
    s.patch = 5;
    s.spatial_filters = 16;
    s.shorten_filters = 16;
    s.timesteps = 5;
    s.hidden = 128;
    s.units = 2;
    Model model(s);
    // (L=23, S=20): the shorten kernel tensor is M x L x N.
    bool found = false;
    for (auto& p : model.parameters()) {
        if (p.name == "shorten.kernel") {
            CHECK(p.value->shape() == std::vector<std::size_t>{16, 23, 16});
            found = true;
        }
    }
    CHECK(found);
    Rng rng(2);
    const Tensor logits = model.classify(random_tensor({5, 5, 103}, rng));
    CHECK(logits.extent(0) == 9);
}

TEST_CASE("spec with T > D is a configuration error") {
    ModelSpec s;
    s.variant = Variant::st_gru;
    s.bands = 10;
    s.classes = 3;
    s.shorten_filters = 4;
    s.timesteps = 11;
    s.hidden = 8;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("spec validation lists every violation") {
    ModelSpec s;
    s.variant = Variant::st_ss_pgru;
    s.bands = 10;
    s.classes = 1;  // bad
    s.patch = 4;    // bad (even)
    s.spatial_filters = 4;
    s.shorten_filters = 0;  // bad
    s.timesteps = 3;
    s.hidden = 0;  // bad
    s.units = 2;
    try {
        s.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("classes") != std::string::npos);
        CHECK(msg.find("patch") != std::string::npos);
        CHECK(msg.find("shorten_filters") != std::string::npos);
        CHECK(msg.find("hidden") != std::string::npos);
    }
}

TEST_CASE("zero output head makes logits equal the bias") {
    for (auto variant : {Variant::gru, Variant::st_gru}) {
        ModelSpec s;
        s.variant = variant;
        s.bands = 8;
        s.classes = 3;
        s.hidden = 4;
        if (s.uses_shorten()) {
            s.timesteps = 2;
            s.shorten_filters = 2;
        }
        Model model(s);
        Tensor bias;
        for (auto& p : model.parameters()) {
            if (p.name == "head.W_y") p.value->fill(0.0);
            if (p.name == "head.b_y") {
                (*p.value)[0] = 0.5;
                (*p.value)[1] = -1.5;
                (*p.value)[2] = 2.0;
                bias = *p.value;
            }
        }
        Rng rng(4);
        CHECK(model.classify(random_tensor({8}, rng)) == bias);
    }
}

TEST_CASE("band permutation changes band-by-band GRU logits") {
    Model model(gru_spec(0));
    Rng rng(7);
    Tensor x = random_tensor({103}, rng);
    Tensor permuted = x;
    std::reverse(permuted.data(), permuted.data() + permuted.size());
    const Tensor a = model.classify(x);
    const Tensor b = model.classify(permuted);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != b[i];
    CHECK(differs);
}

TEST_CASE("build is deterministic given the seed") {
    Model a(tiny_pgru_spec(5));
    Model b(tiny_pgru_spec(5));
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(*pa[i].value == *pb[i].value);
    }
    Model c(tiny_pgru_spec(6));
    bool differs = false;
    auto pc = c.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!(*pa[i].value == *pc[i].value)) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("st_ss_pgru with K=1 matches st_ss_gru from the same seed") {
    ModelSpec pgru = tiny_pgru_spec(9);
    pgru.units = 1;
    ModelSpec gru = pgru;
    gru.variant = Variant::st_ss_gru;
    gru.units = 1;
    Model a(pgru), b(gru);
    Rng rng(10);
    const Tensor patch = random_tensor({5, 5, 12}, rng);
    CHECK(a.classify(patch) == b.classify(patch));
}

TEST_CASE("spectral D-vector equals its 1x1xD patch presentation") {
    for (auto variant : {Variant::rnn, Variant::lstm, Variant::gru, Variant::st_gru}) {
        ModelSpec s;
        s.variant = variant;
        s.bands = 10;
        s.classes = 3;
        s.hidden = 5;
        s.seed = 11;
        if (s.uses_shorten()) {
            s.timesteps = 4;
            s.shorten_filters = 3;
        }
        Model model(s);
        Rng rng(12);
        const Tensor x = random_tensor({10}, rng);
        Tensor patch({1, 1, 10}, std::vector<double>(x.data(), x.data() + 10));
        CHECK(model.classify(x) == model.classify(patch));
    }
}

TEST_CASE("train-path forward equals pure classify") {
    Model model(tiny_pgru_spec(13));
    Rng rng(14);
    const Tensor patch = random_tensor({5, 5, 12}, rng);
    Tensor input = patch;
    CHECK(model.forward(input) == model.classify(patch));
}

TEST_CASE("model save/load round-trips bit exactly") {
    Model model(tiny_pgru_spec(21));
    std::stringstream buf;
    model.save(buf);
    Model loaded = Model::load(buf);

    CHECK(loaded.spec().to_json() == model.spec().to_json());
    auto pa = model.parameters(), pb = loaded.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].value == *pb[i].value);

    Rng rng(22);
    const Tensor patch = random_tensor({5, 5, 12}, rng);
    CHECK(model.classify(patch) == loaded.classify(patch));

    // Serialized bytes are identical on a second save.
    std::stringstream buf2;
    loaded.save(buf2);
    std::stringstream buf3;
    model.save(buf3);
    CHECK(buf2.str() == buf3.str());
}

TEST_CASE("corrupted magic bytes raise a format error") {
    Model model(gru_spec());
    std::stringstream buf;
    model.save(buf);
    std::string bytes = buf.str();
    bytes[0] = 'X';
    std::stringstream bad(bytes);
    CHECK_THROWS_AS(Model::load(bad), FormatError);
}

TEST_CASE("truncated model file raises a format error with offset") {
    Model model(gru_spec());
    std::stringstream buf;
    model.save(buf);
    std::string bytes = buf.str();
    std::stringstream bad(bytes.substr(0, bytes.size() / 2));
    try {
        Model::load(bad);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("loaded model rejects input with the wrong band count") {
    Model model(gru_spec());
    std::stringstream buf;
    model.save(buf);
    Model loaded = Model::load(buf);
    CHECK_THROWS_AS(loaded.classify(Tensor({64})), DimensionError);
}

TEST_CASE("spec json round trip and variant spellings") {
    const ModelSpec s = tiny_pgru_spec(3);
    const ModelSpec parsed = ModelSpec::from_json(s.to_json());
    CHECK(parsed.to_json() == s.to_json());

    CHECK(variant_from_name("st-ss-pgru") == Variant::st_ss_pgru);
    CHECK(variant_from_name("ST_SS_PGRU") == Variant::st_ss_pgru);
    CHECK_THROWS_AS(variant_from_name("stss"), ArgumentError);

    CHECK_THROWS_AS(ModelSpec::from_json("{\"variant\":\"gru\",\"bogus\":1}"), ConfigError);
    CHECK_THROWS_AS(ModelSpec::from_json("not json"), ConfigError);
}
