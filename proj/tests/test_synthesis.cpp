#include "nightdehaze/atmospherics.hpp"
#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"
#include "nightdehaze/synthesis.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace nightdehaze;
using namespace nightdehaze::synthesis;
namespace fs = std::filesystem;

namespace {

SynthesisConfig small_config(int size = 24) {
    SynthesisConfig c;
    c.width = size;
    c.height = size;
    c.seed = 42;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(SynthesisConfig{}.validate());
    auto c = small_config();
    c.beta = {1.5, 0.5};
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = small_config();
    c.q_samples = 0;
    CHECK_THROWS_AS(c.validate(), ParameterError);
    c = small_config();
    c.width = 15;
    CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("scene parameter sampling") {
    const SynthesisConfig c;
    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 20; ++i) {
        const auto pa = sample_scene_params(a, c), pb = sample_scene_params(b, c);
        CHECK(pa.beta == pb.beta);
        CHECK(pa.q == pb.q);
        CHECK(pa.light == pb.light);
    }
    std::mt19937_64 rng(6);
    float bmin = 9, bmax = -9, qmin = 9, qmax = -9, lmin = 9, lmax = -9;
    for (int i = 0; i < 10000; ++i) {
        const auto p = sample_scene_params(rng, c);
        bmin = std::min(bmin, p.beta), bmax = std::max(bmax, p.beta);
        qmin = std::min(qmin, p.q), qmax = std::max(qmax, p.q);
        lmin = std::min(lmin, p.light[0]), lmax = std::max(lmax, p.light[0]);
        CHECK(p.light[0] == p.light[1]);
        CHECK(p.light[1] == p.light[2]);
    }
    CHECK(bmin >= 0.5f);
    CHECK(bmax <= 1.5f);
    CHECK(qmin >= 0.2f);
    CHECK(qmax <= 0.9f);
    CHECK(lmin >= 0.5f);
    CHECK(lmax <= 1.0f);
    // Uniform draws cover most of each interval.
    CHECK(bmax - bmin > 0.99f);
    CHECK(qmax - qmin > 0.69f);
}

TEST_CASE("glow attenuation") {
    for (float q : {0.2f, 0.5f, 0.9f}) {
        CHECK(glow_attenuation(q, 0.0f, false) == 1.0f);
        CHECK(glow_attenuation(q, 0.0f, true) == 1.0f);
    }
    CHECK(glow_attenuation(0.5f, 1.0f, false) == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
    CHECK(glow_attenuation(0.5f, 1.0f, false) == doctest::Approx(0.60653).epsilon(1e-5));
    CHECK(glow_attenuation(0.5f, 1.0f, true) == doctest::Approx(0.5f));
    CHECK(glow_attenuation(0.5f, 5.0f, true) == 0.0f);
}

TEST_CASE("glow field rendering") {
    const auto c = small_config(31);
    SUBCASE("no sources") {
        const auto f = render_glow_field(31, 31, {}, c);
        CHECK(f.source_count() == 0);
        for (float v : f.mask.values()) CHECK(v == 0.0f);
        for (float v : f.streak_sum().values()) CHECK(v == 0.0f);
    }
    SUBCASE("centered source is radially non-increasing") {
        for (bool taylor : {false, true}) {
            auto cc = c;
            cc.use_taylor_glow = taylor;
            const GlowSource s{15, 15, {0.9f, 0.7f, 0.4f}, 0.5f, 4.0f};
            const auto f = render_glow_field(31, 31, std::span(&s, 1), cc);
            const auto& layer = f.streaks[0];
            for (int ch = 0; ch < 3; ++ch) CHECK(layer.at(ch, 15, 15) == s.peak[ch]);
            for (int y = 0; y < 31; ++y)
                for (int x = 0; x < 31; ++x) {
                    CHECK(layer.at(0, y, x) >= 0.0f);
                    // Step one pixel away from the center along the dominant axis.
                    const int dx = x - 15, dy = y - 15;
                    if (dx == 0 && dy == 0) continue;
                    const int ox = std::abs(dx) >= std::abs(dy) ? x + (dx > 0 ? 1 : -1) : x;
                    const int oy = std::abs(dx) >= std::abs(dy) ? y : y + (dy > 0 ? 1 : -1);
                    if (ox < 0 || ox > 30 || oy < 0 || oy > 30) continue;
                    CHECK(layer.at(0, oy, ox) <= layer.at(0, y, x));
                }
        }
    }
    SUBCASE("mask covers every bright source") {
        std::vector<GlowSource> sources{{0, 0, {0.5f, 0.5f, 0.5f}, 0.3f, 2.0f},
                                        {30, 12, {0.9f, 0.2f, 0.1f}, 0.8f, 5.0f},
                                        {7, 29, {1.0f, 1.0f, 1.0f}, 0.5f, 1.0f}};
        const auto f = render_glow_field(31, 31, sources, c);
        CHECK(f.streaks.size() == 3);
        for (const auto& s : sources) CHECK(f.mask.at(s.y, s.x) == 1.0f);
        for (float v : f.mask.values()) CHECK((v == 0.0f || v == 1.0f));
    }
    SUBCASE("out-of-frame source") {
        const GlowSource s{31, 0, {1, 1, 1}, 0.5f, 2.0f};
        CHECK_THROWS_AS(render_glow_field(31, 31, std::span(&s, 1), c), ParameterError);
    }
}

TEST_CASE("single example") {
    const auto c = small_config(16);
    std::mt19937_64 rng(7);
    const RadianceImage clean = testing::random_image(rng, 16, 16);
    DepthMap depth(16, 16, 0.5f);

    SUBCASE("hand-computed haze pixel at d = 0.5") {
        SceneParams p{1.0f, 0.5f, AtmosphericLight::gray(0.8f)};
        const auto ex = synthesize_example(clean, depth, p, {}, c);
        const double t = std::exp(-0.5);
        for (int ch = 0; ch < 3; ++ch)
            CHECK(ex.haze.at(ch, 3, 4) == doctest::Approx(t * clean.at(ch, 3, 4) + 0.8 * (1 - t)).epsilon(1e-6));
        CHECK(ex.haze.at(0, 0, 0) == doctest::Approx(0.6065 * clean.at(0, 0, 0) + 0.8 * 0.3935).epsilon(1e-4));
        CHECK(ex.hazy == ex.haze);
    }
    SUBCASE("negligible scattering") {
        SceneParams p{1e-6f, 0.5f, AtmosphericLight::gray(1.0f)};
        const auto ex = synthesize_example(clean, depth, p, {}, c);
        for (std::size_t i = 0; i < clean.size(); ++i) CHECK(ex.hazy.values()[i] == doctest::Approx(clean.values()[i]).epsilon(1e-5));
    }
    SUBCASE("glow only adds light") {
        SceneParams p{1.0f, 0.5f, AtmosphericLight::gray(0.3f)};
        std::mt19937_64 srng(8);
        auto cc = c;
        cc.sources = {3, 3};
        const auto sources = sample_glow_sources(srng, 16, 16, p.q, cc);
        const auto ex = synthesize_example(clean, depth, p, sources, cc);
        CHECK(ex.glow.source_count() == 3);
        for (std::size_t i = 0; i < ex.hazy.size(); ++i) CHECK(ex.hazy.values()[i] >= ex.haze.values()[i]);
    }
    SUBCASE("size mismatch") {
        SceneParams p;
        CHECK_THROWS_AS(synthesize_example(clean, DepthMap(8, 16), p, {}, c), DimensionError);
    }
}

TEST_CASE("record count is the product of samples") {
    const auto pairs = procedural_pairs(10, 20, 20, 1);
    auto c = small_config(16);
    CHECK(synthesize_dataset(pairs, c).size() == 90);
    c.beta_samples = 1;
    c.q_samples = 1;
    CHECK(synthesize_dataset(std::span(pairs).first(1), c).size() == 1);
    c.beta_samples = 2;
    c.q_samples = 4;
    CHECK(synthesize_dataset(std::span(pairs).first(3), c).size() == 24);
    CHECK_THROWS_AS(synthesize_dataset(std::span(pairs).first(0), c), ParameterError);
}

TEST_CASE("synthesized layers satisfy their contracts") {
    const auto pairs = procedural_pairs(3, 30, 40, 2);
    const auto c = small_config(24);
    const auto recs = synthesize_dataset(pairs, c);
    for (const auto& r : recs) {
        const auto& ex = r.example;
        CHECK(ex.hazy.height() == 24);
        CHECK(ex.haze.same_size(ex.transmission));
        CHECK(ex.glow.mask.same_size(ex.transmission));
        CHECK(r.record.beta >= 0.5f);
        CHECK(r.record.beta <= 1.5f);
        CHECK(r.record.q >= 0.2f);
        CHECK(r.record.q <= 0.9f);
        for (float t : ex.transmission.values()) {
            CHECK(t > 0.0f);
            CHECK(t <= 1.0f);
        }
        for (float m : ex.glow.mask.values()) CHECK((m == 0.0f || m == 1.0f));
        for (const auto& layer : ex.glow.streaks)
            for (float v : layer.values()) CHECK(v >= 0.0f);

        // Ground truth recovers the resized clean image.
        const auto back = atmospherics::recover_radiance(ex.haze, ex.transmission, r.record.light, 0.05f);
        double worst = 0.0;
        for (int ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < r.clean.pixels(); ++i)
                if (ex.transmission[i] >= 0.05f)
                    worst = std::max(worst, std::abs(static_cast<double>(back.channel(ch)[i]) - r.clean.channel(ch)[i]));
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("dataset build is byte-deterministic") {
    const auto pairs = procedural_pairs(2, 20, 20, 3);
    auto c = small_config(16);
    testing::TempDir a("synth_a"), b("synth_b"), d("synth_c");
    const auto ra = build_dataset(pairs, c, a.path());
    c.threads = 3;
    build_dataset(pairs, c, b.path());
    c.threads = 1;
    c.seed = 43;
    build_dataset(pairs, c, d.path());
    CHECK(ra.size() == 18);
    CHECK(slurp(a / kManifestName) == slurp(b / kManifestName));
    CHECK(slurp(a / kManifestName) != slurp(d / kManifestName));
    for (const auto& r : ra)
        for (const auto& f : {r.clean, r.hazy, r.haze, r.transmission, r.mask, r.streak})
            CHECK(slurp(a / f) == slurp(b / f));
}

TEST_CASE("manifest round trip") {
    const auto pairs = procedural_pairs(1, 20, 20, 4);
    testing::TempDir dir("manifest");
    const auto recs = build_dataset(pairs, small_config(16), dir.path());
    const auto back = read_manifest(dir / kManifestName);
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        CHECK(format_record(back[i]) == format_record(recs[i]));
        CHECK(back[i].sources.size() == recs[i].sources.size());
    }
    const auto loaded = load_record(dir.path(), back[0]);
    CHECK(loaded.hazy.height() == 16);
    CHECK(loaded.transmission.width() == 16);

    DatasetRecord empty;
    empty.id = "x";
    CHECK(parse_record(format_record(empty)).sources.empty());
    CHECK_THROWS_AS(parse_record("id=x clean=a"), DataError);
    CHECK_THROWS_AS(parse_record("garbage"), DataError);
    CHECK_THROWS_AS(read_manifest(dir / "missing.txt"), IoError);
}

TEST_CASE("loading clean/depth pairs from disk") {
    testing::TempDir clean("pairs_clean"), depth("pairs_depth");
    const auto pairs = procedural_pairs(2, 18, 22, 5);
    for (const auto& p : pairs) {
        netpbm::write_ppm(clean / (p.id + ".ppm"), p.clean);
        netpbm::write_pgm16(depth / (p.id + ".pgm"), p.depth);
    }
    const auto loaded = load_pairs(clean.path(), depth.path());
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == pairs[0].id);
    CHECK(loaded[1].clean.width() == 22);

    netpbm::write_ppm(clean / "orphan.ppm", pairs[0].clean);
    try {
        load_pairs(clean.path(), depth.path());
        FAIL("expected an I/O error");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("orphan") != std::string::npos);
    }
}

TEST_CASE("procedural scenes") {
    const auto a = procedural_pairs(3, 32, 32, 9), b = procedural_pairs(3, 32, 32, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].clean == b[i].clean);
        CHECK(a[i].depth == b[i].depth);
        for (float d : a[i].depth.values()) {
            CHECK(d >= 0.0f);
            CHECK(d <= 1.0f);
        }
    }
    CHECK_FALSE(a[0].clean == a[1].clean);
}
