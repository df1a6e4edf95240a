#include "nightdehaze/error.hpp"
#include "nightdehaze/pipeline.hpp"
#include "nightdehaze/training.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace nightdehaze;
using namespace nightdehaze::training;

namespace {

std::vector<TrainingSample> fixture_samples(int count, int size, std::uint64_t seed) {
    synthesis::SynthesisConfig sc;
    sc.width = size;
    sc.height = size;
    sc.seed = seed;
    sc.beta_samples = 1;
    sc.q_samples = 1;
    const auto pairs = synthesis::procedural_pairs(count, size, size, seed);
    const auto recs = synthesis::synthesize_dataset(pairs, sc);
    return samples_from(recs);
}

std::vector<std::vector<float>> snapshot(auto& model) {
    std::vector<std::vector<float>> out;
    for (auto& p : model.parameters()) out.emplace_back(p.tensor->data().begin(), p.tensor->data().end());
    return out;
}

}  // namespace

TEST_CASE("tensor conversion round trip") {
    std::mt19937_64 rng(1);
    const RadianceImage img = testing::random_image(rng, 5, 7);
    CHECK(to_image(to_tensor(img)) == img);
    const Plane p = testing::random_plane(rng, 5, 7);
    CHECK(to_plane(to_tensor(p)) == p);
    CHECK_THROWS_AS(to_image(to_tensor(p)), DimensionError);
    CHECK_THROWS_AS(make_sample(img, img, img, p, Plane(4, 7)), DimensionError);
}

TEST_CASE("smoothing windows") {
    const std::vector<double> v{4, 2, 6, 8, 10};
    CHECK(smoothed_head(v, 2) == 3.0);
    CHECK(smoothed_tail(v, 2) == 9.0);
    CHECK(smoothed_tail(v, 99) == 6.0);
    CHECK(smoothed_head({}, 3) == 0.0);
}

TEST_CASE("plateau scheduler") {
    SUBCASE("flat curve drops once per patience window") {
        PlateauScheduler s(50, 0.001);
        int drops = 0, first = -1;
        for (int it = 10; it <= 100; it += 10)
            if (s.observe(it, 1.0)) {
                ++drops;
                if (first < 0) first = it;
            }
        CHECK(drops == 1);
        CHECK(first == 60);  // 50 past the first observation
    }
    SUBCASE("steady improvement never drops") {
        PlateauScheduler s(20, 0.001);
        double loss = 1.0;
        for (int it = 1; it <= 200; ++it) {
            CHECK_FALSE(s.observe(it, loss));
            loss *= 0.99;
        }
    }
    SUBCASE("gains below the threshold do not count") {
        PlateauScheduler s(5, 0.01);
        CHECK_FALSE(s.observe(1, 1.0));
        CHECK_FALSE(s.observe(3, 0.995));
        CHECK(s.observe(6, 0.995));
        CHECK(s.best() == 0.995);
    }
}

TEST_CASE("flat validation curve divides the learning rate by exactly ten") {
    const auto samples = fixture_samples(2, 16, 1);
    nets::DeHazeModel m({.features = 4});
    m.initialize(1);
    TrainSchedule s;
    s.learning_rate = 0.0f;
    s.weight_decay = 0.0f;
    s.batch_size = 2;
    s.max_iterations = 60;
    s.patience = 50;
    s.validation_interval = 10;
    const auto r0 = train_dehaze(m, samples, samples, s);
    CHECK(r0.lr_drops == 1);

    s.learning_rate = 1e-9f;  // moves nothing measurable
    const auto r = train_dehaze(m, samples, samples, s);
    CHECK(r.lr_drops == 1);
    CHECK(r.final_learning_rate == 1e-9f / 10.0f);
}

TEST_CASE("zero learning rate leaves parameters bit-identical") {
    const auto samples = fixture_samples(2, 16, 2);
    nets::DeGlowModel m({.features = 4, .recurrences = 2});
    m.initialize(2);
    const auto before = snapshot(m);
    TrainSchedule s;
    s.learning_rate = 0.0f;
    s.batch_size = 2;
    s.max_iterations = 5;
    train_deglow(m, samples, {}, s);
    CHECK(snapshot(m) == before);
}

TEST_CASE("non-finite loss raises a divergence error") {
    auto samples = fixture_samples(1, 16, 3);
    samples[0].transmission[5] = std::numeric_limits<float>::quiet_NaN();
    nets::DeHazeModel m({.features = 4});
    m.initialize(3);
    TrainSchedule s;
    s.batch_size = 1;
    s.max_iterations = 3;
    try {
        train_dehaze(m, samples, {}, s);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.step() == 1);
    }
}

TEST_CASE("schedule validation") {
    TrainSchedule s;
    s.batch_size = 0;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    s = {};
    s.patience = 0;
    CHECK_THROWS_AS(s.validate(), ParameterError);
    nets::DeHazeModel m({.features = 4});
    CHECK_THROWS_AS(train_dehaze(m, {}, {}, TrainSchedule{}), ParameterError);
}

TEST_CASE("training is deterministic and writes checkpoints") {
    const auto samples = fixture_samples(3, 16, 4);
    testing::TempDir dir("train");
    TrainSchedule s;
    s.batch_size = 2;
    s.max_iterations = 6;
    s.patch_size = 12;
    s.seed = 9;
    s.checkpoint_interval = 3;
    s.checkpoint_dir = dir.path();
    s.checkpoint_prefix = "g";

    nets::DeGlowModel a({.features = 4, .recurrences = 2}), b({.features = 4, .recurrences = 2});
    a.initialize(5);
    b.initialize(5);
    const auto ra = train_deglow(a, samples, {}, s);
    s.checkpoint_dir.clear();
    const auto rb = train_deglow(b, samples, {}, s);
    CHECK(ra.losses == rb.losses);
    CHECK(snapshot(a) == snapshot(b));
    REQUIRE(ra.checkpoints.size() == 2);
    CHECK(std::filesystem::exists(ra.checkpoints[1]));
    CHECK(std::filesystem::exists(dir / "g.log"));
    CHECK(rb.checkpoints.empty());
    // The last periodic checkpoint holds the final weights.
    auto loaded = nets::DeGlowModel::from_checkpoint(checkpoint::load(ra.checkpoints[1]));
    CHECK(snapshot(loaded) == snapshot(a));
}

TEST_CASE("DeGlow loss falls on a small fixture") {
    const auto samples = fixture_samples(4, 24, 5);
    nets::DeGlowModel m({.features = 8, .recurrences = 2});
    m.initialize(6);
    TrainSchedule s;
    s.batch_size = 4;
    s.max_iterations = 60;
    const auto r = train_deglow(m, samples, {}, s);
    CHECK(smoothed_tail(r.losses, 10) < smoothed_head(r.losses, 10));
}

TEST_CASE("DeHaze overfits one pair") {
    const auto samples = fixture_samples(1, 24, 6);
    nets::DeHazeModel m({.features = 8});
    m.initialize(7, nets::InitScheme::Scaled);
    TrainSchedule s;
    s.batch_size = 1;
    s.max_iterations = 1500;
    s.learning_rate = 0.01f;
    s.clip_norm = 1.0f;
    s.weight_decay = 0.0f;
    s.patience = 2000;
    train_dehaze(m, samples, {}, s);
    const Tensor t = nets::dehaze_forward(samples[0].haze, m);
    double mae = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) mae += std::abs(t[i] - samples[0].transmission[i]);
    mae /= static_cast<double>(t.size());
    CHECK(mae < 0.05);
}
