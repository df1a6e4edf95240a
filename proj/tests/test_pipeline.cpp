#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"
#include "nightdehaze/pipeline.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace nightdehaze;
using namespace nightdehaze::pipeline;

namespace {

template <class Model>
void zero_all(Model& m) {
    for (auto& p : m.parameters())
        for (float& v : p.tensor->data()) v = 0.0f;
}

Pipeline random_pipeline(int features, int tau, std::uint64_t seed) {
    nets::DeGlowModel g({.features = features, .recurrences = tau});
    g.initialize(seed, nets::InitScheme::Scaled);
    nets::DeHazeModel h({.features = features});
    h.initialize(seed + 1, nets::InitScheme::Scaled);
    return Pipeline(std::move(g), std::move(h));
}

double max_abs(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

}  // namespace

TEST_CASE("receptive radii") {
    CHECK(deglow_receptive_radius(1) == 16);
    CHECK(deglow_receptive_radius(3) == 48);
    CHECK(dehaze_receptive_radius() == 13);
}

TEST_CASE("identity DeGlow with injected transmission reduces to the inverse model") {
    nets::DeGlowModel g({.features = 4, .recurrences = 3});
    zero_all(g);
    nets::DeHazeModel h({.features = 4});
    Pipeline p(std::move(g), std::move(h));
    std::mt19937_64 rng(1);
    const RadianceImage input = testing::random_image(rng, 20, 18);
    const TransmissionMap t(testing::random_plane(rng, 20, 18, 0.02f, 1.0f));
    const AtmosphericLight light(0.8f, 0.7f, 0.9f);
    RunOptions o;
    o.quantize_intermediates = false;
    o.transmission_override = t;
    o.light_override = light;
    const auto a = p.run(input, o);
    CHECK(a.deglowed == input);
    CHECK(a.output == atmospherics::recover_radiance(input, t, light, o.t_min));

    o.transmission_override = TransmissionMap(4, 4);
    CHECK_THROWS_AS(p.run(input, o), DimensionError);
}

TEST_CASE("run reports four timed stages") {
    Pipeline p = random_pipeline(4, 2, 2);
    std::mt19937_64 rng(2);
    const auto a = p.run(testing::random_image(rng, 24, 24));
    REQUIRE(a.timings.size() == 4);
    CHECK(a.timings[0].stage == kStageDeGlow);
    CHECK(a.timings[1].stage == kStageDeHaze);
    CHECK(a.timings[2].stage == kStageLight);
    CHECK(a.timings[3].stage == kStageRecovery);
    for (const auto& s : a.timings) CHECK(s.seconds >= 0.0);
    CHECK(a.output.same_size(a.deglowed));
    CHECK(a.transmission.height() == 24);
    for (float v : a.transmission.values()) CHECK(v >= 0.05f - 1e-6f);
    for (float v : a.output.values()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("pipeline output is deterministic") {
    std::mt19937_64 rng(3);
    const RadianceImage input = testing::random_image(rng, 28, 30);
    Pipeline a = random_pipeline(4, 2, 3), b = random_pipeline(4, 2, 3);
    CHECK(a.run(input).output == b.run(input).output);
    CHECK(a.run(input).output == a.run(input).output);
}

TEST_CASE("dumped intermediates reproduce the output") {
    Pipeline p = random_pipeline(4, 2, 4);
    std::mt19937_64 rng(4);
    const RadianceImage input = testing::random_image(rng, 26, 21);
    const auto a = p.run(input);
    testing::TempDir dir("stage");
    netpbm::write_ppm(dir / "x.deglow.ppm", a.deglowed);
    netpbm::write_pgm16(dir / "x.trans.pgm", a.transmission);
    netpbm::write_file(dir / "x.light.txt", format_light(a.light) + "\n");

    const RadianceImage j = netpbm::read_ppm(dir / "x.deglow.ppm");
    const TransmissionMap t(netpbm::read_pgm(dir / "x.trans.pgm"));
    const AtmosphericLight l = parse_light(netpbm::read_file(dir / "x.light.txt"));
    CHECK(j == a.deglowed);
    CHECK(t == a.transmission);
    CHECK(l == a.light);
    CHECK(recover_from_intermediates(j, t, l, 0.05f) == a.output);
    CHECK_THROWS_AS(parse_light("0.5 x"), DataError);
}

TEST_CASE("tiled inference matches whole-frame inference") {
    Pipeline p = random_pipeline(4, 2, 5);
    std::mt19937_64 rng(5);
    const RadianceImage input = testing::random_image(rng, 70, 53);
    const RadianceImage whole = p.deglow(input, 2, 0);
    const TransmissionMap tw = p.dehaze(whole, 0);
    for (int tile : {8, 16, 40}) {
        INFO("tile " << tile);
        CHECK(max_abs(p.deglow(input, 2, tile).values(), whole.values()) <= 1e-6);
        CHECK(max_abs(p.dehaze(whole, tile).values(), tw.values()) <= 1e-6);
    }
}

TEST_CASE("recurrence override") {
    Pipeline p = random_pipeline(4, 2, 6);
    std::mt19937_64 rng(6);
    const RadianceImage input = testing::random_image(rng, 16, 16);
    CHECK_FALSE(p.deglow(input, 1, 0) == p.deglow(input, 2, 0));
    CHECK(p.deglow(input, 0, 0) == p.deglow(input, 2, 0));
    RunOptions o;
    o.t_min = 0.0f;
    CHECK_THROWS_AS(p.run(input, o), ParameterError);
}

TEST_CASE("checkpoint loading") {
    Pipeline p = random_pipeline(4, 2, 7);
    testing::TempDir dir("pipeline_ckpt");
    checkpoint::save(dir / "g.nckp", p.deglow_model().to_checkpoint());
    checkpoint::save(dir / "h.nckp", p.dehaze_model().to_checkpoint());
    Pipeline q = Pipeline::load(dir / "g.nckp", dir / "h.nckp");
    std::mt19937_64 rng(7);
    const RadianceImage input = testing::random_image(rng, 16, 16);
    CHECK(q.run(input).output == p.run(input).output);
    CHECK_THROWS_AS(Pipeline::load(dir / "h.nckp", dir / "g.nckp"), LoadError);
    CHECK_THROWS(Pipeline::load(dir / "missing.nckp", dir / "h.nckp"));
}
