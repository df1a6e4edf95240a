#include "nightdehaze/error.hpp"
#include "nightdehaze/gradcheck.hpp"
#include "nightdehaze/graph.hpp"
#include "nightdehaze/tensor.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>

using namespace nightdehaze;
using namespace nightdehaze::tensor;

namespace {

// Direct stencil, double accumulation; no im2col.
Tensor naive_conv(const Tensor& in, const ConvParams& p) {
    const Shape s = in.shape();
    const int k = p.kernel(), r = (k - 1) / 2, d = p.dilation;
    Tensor out(Shape{s.n, p.out_channels(), s.h, s.w});
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < p.out_channels(); ++o)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    double acc = p.bias[o];
                    for (int i = 0; i < s.c; ++i)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int sy = y + (ky - r) * d, sx = x + (kx - r) * d;
                                if (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w) continue;
                                acc += static_cast<double>(p.weight.at(o, i, ky, kx)) * in.at(n, i, sy, sx);
                            }
                    out.at(n, o, y, x) = static_cast<float>(acc);
                }
    return out;
}

double max_abs_diff(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
    return m;
}

double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

ConvParams random_conv(std::mt19937_64& rng, int in, int out, int k, int dil) {
    ConvParams p(in, out, k, dil);
    p.weight = testing::random_tensor(rng, p.weight.shape());
    p.bias = testing::random_tensor(rng, p.bias.shape());
    return p;
}

ConvParams delta_conv(int channels, int dil) {
    ConvParams p(channels, channels, 3, dil);
    for (int c = 0; c < channels; ++c) p.weight.at(c, c, 1, 1) = 1.0f;
    return p;
}

// Float32 central differences with the relative-error definition of the suite.
double float_fd_error(const std::function<Graph::Id(Graph&)>& build, Tensor& wrt, std::size_t probes,
                      std::mt19937_64& rng) {
    wrt.zero_grad();
    {
        Graph g;
        g.backward(build(g));
    }
    const std::vector<float> analytic(wrt.grad().begin(), wrt.grad().end());
    std::vector<std::size_t> idx(wrt.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(probes, idx.size()));
    double diff = 0.0, ma = 0.0, mn = 0.0;
    for (std::size_t i : idx) {
        const float x = wrt[i];
        wrt[i] = x + 1e-3f;
        Graph gp;
        const double plus = gp.scalar(build(gp));
        wrt[i] = x - 1e-3f;
        Graph gm;
        const double minus = gm.scalar(build(gm));
        wrt[i] = x;
        const double h = static_cast<double>(x + 1e-3f) - static_cast<double>(x - 1e-3f);
        const double numeric = (plus - minus) / h;
        diff = std::max(diff, std::abs(numeric - analytic[i]));
        ma = std::max(ma, std::abs(static_cast<double>(analytic[i])));
        mn = std::max(mn, std::abs(numeric));
    }
    wrt.drop_grad();
    return diff / std::max({ma, mn, 1e-12});
}

}  // namespace

TEST_CASE("shapes and construction") {
    CHECK(Shape{2, 3, 4, 5}.count() == 120);
    CHECK_THROWS_AS(Tensor(Shape{0, 1, 1, 1}), DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), DimensionError);
    CHECK_THROWS_AS(ConvParams(1, 1, 2, 1), ParameterError);
    CHECK_THROWS_AS(ConvParams(1, 1, 3, 0), ParameterError);
    Tensor t(Shape{1, 2, 2, 2});
    CHECK_FALSE(t.has_grad());
    t.grad()[0] = 1.0f;
    CHECK(t.has_grad());
    t.zero_grad();
    CHECK(t.grad()[0] == 0.0f);
}

TEST_CASE("conv matches the direct stencil") {
    std::mt19937_64 rng(1);
    for (int dil : {1, 2, 3}) {
        for (int k : {1, 3}) {
            const Tensor x = testing::random_tensor(rng, Shape{2, 4, 11, 9});
            const ConvParams p = random_conv(rng, 4, 5, k, dil);
            CHECK(max_abs_diff(dilated_conv2d(x, p).data(), naive_conv(x, p).data()) <= 1e-5);
        }
    }
}

TEST_CASE("conv examples") {
    std::mt19937_64 rng(2);
    SUBCASE("delta kernel is the identity") {
        const Tensor x = testing::random_tensor(rng, Shape{1, 3, 8, 8});
        for (int dil : {1, 2, 3}) {
            const Tensor y = dilated_conv2d(x, delta_conv(3, dil));
            CHECK(max_abs_diff(y.data(), x.data()) == 0.0);
        }
    }
    SUBCASE("impulse through an all-ones DF=2 kernel") {
        Tensor x(Shape{1, 1, 9, 9});
        x.at(0, 0, 4, 4) = 1.0f;
        ConvParams p(1, 1, 3, 2);
        for (float& w : p.weight.data()) w = 1.0f;
        const Tensor y = dilated_conv2d(x, p);
        int nonzero = 0;
        for (int yy = 0; yy < 9; ++yy)
            for (int xx = 0; xx < 9; ++xx) {
                const bool tap = (yy == 2 || yy == 4 || yy == 6) && (xx == 2 || xx == 4 || xx == 6);
                CHECK((y.at(0, 0, yy, xx) != 0.0f) == tap);
                nonzero += y.at(0, 0, yy, xx) != 0.0f;
            }
        CHECK(nonzero == 9);
    }
    SUBCASE("constant field at an interior pixel") {
        const Tensor x(Shape{1, 2, 9, 9}, 0.7f);
        const ConvParams p = random_conv(rng, 2, 1, 3, 2);
        const double s = std::accumulate(p.weight.data().begin(), p.weight.data().end(), 0.0);
        const Tensor y = dilated_conv2d(x, p);
        CHECK(y.at(0, 0, 4, 4) == doctest::Approx(0.7 * s + p.bias[0]).epsilon(1e-5));
    }
    SUBCASE("channel mismatch") {
        CHECK_THROWS_AS(dilated_conv2d(Tensor(Shape{1, 2, 4, 4}), ConvParams(3, 1)), DimensionError);
    }
}

TEST_CASE("conv is affine") {
    std::mt19937_64 rng(3);
    for (int dil : {1, 2, 3}) {
        const ConvParams p = random_conv(rng, 3, 4, 3, dil);
        const Tensor x = testing::random_tensor(rng, Shape{2, 3, 10, 10});
        const Tensor z = testing::random_tensor(rng, Shape{2, 3, 10, 10});
        const float a = 0.7f, b = -1.3f;
        Tensor mix(x.shape());
        for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * x[i] + b * z[i];
        const Tensor cm = dilated_conv2d(mix, p), cx = dilated_conv2d(x, p), cz = dilated_conv2d(z, p);
        double worst = 0.0;
        for (int n = 0; n < 2; ++n)
            for (int o = 0; o < 4; ++o)
                for (int y = 0; y < 10; ++y)
                    for (int xx = 0; xx < 10; ++xx) {
                        const double expect = a * cx.at(n, o, y, xx) + b * cz.at(n, o, y, xx) -
                                              (a + b - 1.0) * p.bias[o];
                        worst = std::max(worst, std::abs(cm.at(n, o, y, xx) - expect));
                    }
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("conv backward") {
    std::mt19937_64 rng(4);
    SUBCASE("zero cotangent") {
        const Tensor x = testing::random_tensor(rng, Shape{1, 2, 6, 6});
        const ConvParams p = random_conv(rng, 2, 3, 3, 2);
        const auto g = dilated_conv2d_backward(x, p, Tensor(Shape{1, 3, 6, 6}));
        for (float v : g.input.data()) CHECK(v == 0.0f);
        for (float v : g.weight.data()) CHECK(v == 0.0f);
        for (float v : g.bias.data()) CHECK(v == 0.0f);
    }
    SUBCASE("delta kernel returns the impulse") {
        const Tensor x = testing::random_tensor(rng, Shape{1, 2, 7, 7});
        Tensor gout(Shape{1, 2, 7, 7});
        gout.at(0, 1, 3, 5) = 1.0f;
        const auto g = dilated_conv2d_backward(x, delta_conv(2, 3), gout);
        CHECK(max_abs_diff(g.input.data(), gout.data()) == 0.0);
    }
    SUBCASE("adjoint identity and direct weight/bias gradients") {
        for (int dil : {1, 2, 3}) {
            const Tensor x = testing::random_tensor(rng, Shape{2, 3, 9, 8});
            ConvParams p = random_conv(rng, 3, 4, 3, dil);
            const Tensor gout = testing::random_tensor(rng, Shape{2, 4, 9, 8});
            const auto g = dilated_conv2d_backward(x, p, gout);

            // <A x, y> = <x, A^T y> for the linear part A (bias removed).
            ConvParams nobias = p;
            nobias.bias = Tensor(p.bias.shape());
            const Tensor ax = naive_conv(x, nobias);
            CHECK(dot(ax.data(), gout.data()) == doctest::Approx(dot(x.data(), g.input.data())).epsilon(1e-5));

            const int r = 1;
            for (int o = 0; o < 4; ++o) {
                double db = 0.0;
                for (int n = 0; n < 2; ++n)
                    for (int y = 0; y < 9; ++y)
                        for (int xx = 0; xx < 8; ++xx) db += gout.at(n, o, y, xx);
                CHECK(g.bias[o] == doctest::Approx(db).epsilon(1e-5));
                for (int i = 0; i < 3; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            double dw = 0.0;
                            for (int n = 0; n < 2; ++n)
                                for (int y = 0; y < 9; ++y)
                                    for (int xx = 0; xx < 8; ++xx) {
                                        const int sy = y + (ky - r) * dil, sx = xx + (kx - r) * dil;
                                        if (sy < 0 || sy >= 9 || sx < 0 || sx >= 8) continue;
                                        dw += static_cast<double>(gout.at(n, o, y, xx)) * x.at(n, i, sy, sx);
                                    }
                            CHECK(g.weight.at(o, i, ky, kx) == doctest::Approx(dw).epsilon(1e-4));
                        }
            }
        }
    }
    SUBCASE("shape mismatch") {
        const Tensor x = testing::random_tensor(rng, Shape{1, 2, 6, 6});
        CHECK_THROWS_AS(dilated_conv2d_backward(x, ConvParams(2, 3), Tensor(Shape{1, 3, 5, 6})),
                        DimensionError);
    }
}

TEST_CASE("float32 finite differences on primitive ops") {
    std::mt19937_64 rng(5);
    for (int dil : {1, 2, 3}) {
        Tensor x = testing::random_tensor(rng, Shape{2, 4, 16, 16});
        ConvParams p = random_conv(rng, 4, 4, 3, dil);
        for (float& w : p.weight.data()) w *= 0.3f;
        const Tensor target = testing::random_tensor(rng, Shape{2, 4, 16, 16});
        auto build = [&](Graph& g) { return g.mse(g.conv(g.param(x), p), g.constant(target)); };
        CHECK(float_fd_error(build, x, 40, rng) <= 1e-3);
        CHECK(float_fd_error(build, p.weight, 40, rng) <= 1e-3);
        CHECK(float_fd_error(build, p.bias, 4, rng) <= 1e-3);
    }
    Tensor x = testing::random_tensor(rng, Shape{2, 4, 16, 16});
    for (float& v : x.data()) v = v >= 0 ? v + 0.05f : v - 0.05f;  // away from the kink
    const Tensor target = testing::random_tensor(rng, x.shape());
    CHECK(float_fd_error([&](Graph& g) { return g.mse(g.relu(g.param(x)), g.constant(target)); }, x, 64, rng) <= 1e-3);
    Tensor a = testing::random_tensor(rng, Shape{2, 4, 8, 8});
    const Tensor b = testing::random_tensor(rng, Shape{2, 2, 8, 8});
    const Tensor t6 = testing::random_tensor(rng, Shape{2, 6, 8, 8});
    CHECK(float_fd_error([&](Graph& g) { return g.mse(g.concat({g.param(a), g.constant(b)}), g.constant(t6)); },
                         a, 64, rng) <= 1e-3);
}

TEST_CASE("gradient suite") {
    for (const auto& r : gradcheck::run_suite(7)) {
        INFO(r.name);
        CHECK(r.probes > 0);
        CHECK(r.passed(gradcheck::kTolerance));
    }
}

TEST_CASE("relu") {
    const Tensor neg(Shape{1, 1, 2, 3}, -0.5f);
    const Tensor cut = relu(neg);
    for (float v : cut.data()) CHECK(v == 0.0f);
    std::mt19937_64 rng(6);
    const Tensor pos = testing::random_tensor(rng, Shape{1, 2, 3, 3}, 0.01f, 1.0f);
    CHECK(max_abs_diff(relu(pos).data(), pos.data()) == 0.0);
    const Tensor mixed = testing::random_tensor(rng, Shape{1, 2, 3, 3});
    const Tensor g = testing::random_tensor(rng, mixed.shape());
    const Tensor back = relu_backward(mixed, g);
    for (std::size_t i = 0; i < mixed.size(); ++i) CHECK(back[i] == (mixed[i] > 0.0f ? g[i] : 0.0f));
}

TEST_CASE("concat and split") {
    std::mt19937_64 rng(7);
    const Tensor a = testing::random_tensor(rng, Shape{2, 4, 3, 5});
    const Tensor b = testing::random_tensor(rng, Shape{2, 2, 3, 5});
    CHECK(max_abs_diff(concat_channels({&a}).data(), a.data()) == 0.0);
    const Tensor ab = concat_channels({&a, &b});
    CHECK(ab.shape() == Shape{2, 6, 3, 5});
    CHECK(ab.at(1, 4, 2, 3) == b.at(1, 0, 2, 3));
    CHECK(ab.at(1, 3, 2, 3) == a.at(1, 3, 2, 3));
    const std::array<int, 2> channels{4, 2};
    const auto parts = split_channels(ab, channels);
    CHECK(max_abs_diff(parts[0].data(), a.data()) == 0.0);
    CHECK(max_abs_diff(parts[1].data(), b.data()) == 0.0);
    const Tensor bad(Shape{2, 1, 4, 5});
    CHECK_THROWS_AS(concat_channels({&a, &bad}), DimensionError);
    const std::array<int, 2> wrong{4, 1};
    CHECK_THROWS_AS(split_channels(ab, wrong), DimensionError);
}

TEST_CASE("gaussian init") {
    std::mt19937_64 rng(8);
    const Tensor t = gaussian_init(Shape{1000, 1, 1000, 1}, rng);
    double mean = 0.0;
    for (float v : t.data()) mean += v;
    mean /= static_cast<double>(t.size());
    double var = 0.0;
    for (float v : t.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(t.size() - 1));
    CHECK(std::abs(mean) <= 3.0 * (1e-4 / 1e3));
    CHECK(std::abs(sd - 1e-4) <= 0.05 * 1e-4);

    std::mt19937_64 r1(9), r2(9);
    const Tensor a = gaussian_init(Shape{1, 3, 5, 5}, r1);
    const Tensor b = gaussian_init(Shape{1, 3, 5, 5}, r2);
    CHECK(max_abs_diff(a.data(), b.data()) == 0.0);
}

TEST_CASE("sgd step") {
    Tensor w(Shape{1, 1, 1, 2}, std::vector<float>{1.0f, -2.0f});
    Tensor bias(Shape{1, 1, 1, 1}, 0.5f);
    std::vector<ParamRef> params{{"w", &w, true}, {"b", &bias, false}};

    SUBCASE("zero gradient, zero decay") {
        OptimizerState st;
        st.weight_decay = 0.0f;
        w.zero_grad();
        bias.zero_grad();
        sgd_step(params, st);
        CHECK(w[0] == 1.0f);
        CHECK(w[1] == -2.0f);
        CHECK(bias[0] == 0.5f);
    }
    SUBCASE("first step is plain SGD") {
        OptimizerState st;
        st.weight_decay = 0.0f;
        st.learning_rate = 0.1f;
        w.grad()[0] = 2.0f;
        w.grad()[1] = -1.0f;
        bias.grad()[0] = 4.0f;
        sgd_step(params, st);
        CHECK(w[0] == doctest::Approx(1.0f - 0.1f * 2.0f));
        CHECK(w[1] == doctest::Approx(-2.0f + 0.1f));
        CHECK(bias[0] == doctest::Approx(0.5f - 0.4f));
    }
    SUBCASE("momentum recurrence against a scalar simulation") {
        OptimizerState st;
        st.learning_rate = 0.05f;
        st.momentum = 0.9f;
        st.weight_decay = 0.001f;
        double p = w[0], pb = bias[0], v = 0.0, vb = 0.0;
        const double g = 0.3, gb = -0.2;
        for (int step = 0; step < 5; ++step) {
            w.grad()[0] = static_cast<float>(g);
            w.grad()[1] = 0.0f;
            bias.grad()[0] = static_cast<float>(gb);
            sgd_step(params, st);
            v = 0.9 * v + (g + 0.001 * p);
            p -= 0.05 * v;
            vb = 0.9 * vb + gb;  // no decay on biases
            pb -= 0.05 * vb;
        }
        CHECK(w[0] == doctest::Approx(p).epsilon(1e-6));
        CHECK(bias[0] == doctest::Approx(pb).epsilon(1e-6));
    }
    SUBCASE("two steps with constant gradient, no decay") {
        OptimizerState st;
        st.weight_decay = 0.0f;
        st.learning_rate = 0.1f;
        const float start = w[0];
        for (int i = 0; i < 2; ++i) {
            w.grad()[0] = 1.0f;
            w.grad()[1] = 0.0f;
            bias.grad()[0] = 0.0f;
            sgd_step(params, st);
        }
        CHECK(w[0] == doctest::Approx(start - 0.1f * (1.0f + (1.0f + 0.9f))));
    }
    SUBCASE("zero learning rate is the identity") {
        OptimizerState st;
        st.learning_rate = 0.0f;
        std::mt19937_64 rng(10);
        for (int i = 0; i < 3; ++i) {
            for (float& gv : w.grad()) gv = std::uniform_real_distribution<float>(-1, 1)(rng);
            bias.grad()[0] = 1.0f;
            sgd_step(params, st);
        }
        CHECK(w[0] == 1.0f);
        CHECK(w[1] == -2.0f);
        CHECK(bias[0] == 0.5f);
    }
    SUBCASE("velocity shape mismatch") {
        OptimizerState st;
        sgd_step(params, st);
        Tensor other(Shape{1, 1, 1, 3});
        std::vector<ParamRef> changed{{"w", &other, true}, {"b", &bias, false}};
        CHECK_THROWS_AS(sgd_step(changed, st), DimensionError);
    }
}

TEST_CASE("receptive field of three stacked convs") {
    CHECK(receptive_field_extent(3, 1) == 7);
    CHECK(receptive_field_extent(3, 2) == 13);
    CHECK(receptive_field_extent(3, 3) == 19);
    for (int dil : {1, 2, 3}) {
        Tensor x(Shape{1, 1, 41, 41});
        x.at(0, 0, 20, 20) = 1.0f;
        ConvParams p(1, 1, 3, dil);
        for (float& w : p.weight.data()) w = 1.0f;
        Tensor y = x;
        for (int l = 0; l < 3; ++l) y = dilated_conv2d(y, p);
        int ymin = 41, ymax = -1, xmin = 41, xmax = -1;
        for (int yy = 0; yy < 41; ++yy)
            for (int xx = 0; xx < 41; ++xx)
                if (y.at(0, 0, yy, xx) != 0.0f) {
                    ymin = std::min(ymin, yy);
                    ymax = std::max(ymax, yy);
                    xmin = std::min(xmin, xx);
                    xmax = std::max(xmax, xx);
                }
        CHECK(ymax - ymin + 1 == receptive_field_extent(3, dil));
        CHECK(xmax - xmin + 1 == receptive_field_extent(3, dil));
    }
}

TEST_CASE("graph bookkeeping") {
    std::mt19937_64 rng(11);
    Tensor w = testing::random_tensor(rng, Shape{1, 2, 3, 3});
    SUBCASE("parameter gradients accumulate across passes") {
        w.zero_grad();
        for (int i = 0; i < 2; ++i) {
            Graph g;
            g.backward(g.mse(g.param(w), g.constant(Tensor(w.shape()))));
        }
        // d/dw mean(w^2) = 2w/N, twice.
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(w.grad()[i] == doctest::Approx(2.0 * 2.0 * w[i] / w.size()).epsilon(1e-6));
    }
    SUBCASE("hardened mask passes no gradient") {
        w.zero_grad();
        Graph g;
        const auto h = g.harden(g.param(w));
        CHECK_FALSE(g.requires_grad(h));
        for (float v : g.value(h).data()) CHECK((v == 0.0f || v == 1.0f));
    }
    SUBCASE("non-binary cross-entropy target") {
        Graph g;
        const auto logits = g.constant(Tensor(Shape{1, 2, 2, 2}));
        CHECK_THROWS_AS(g.softmax2_cross_entropy(logits, Tensor(Shape{1, 1, 2, 2}, 0.5f)), DataError);
    }
    SUBCASE("backward needs a scalar root") {
        Graph g;
        CHECK_THROWS_AS(g.backward(g.param(w)), DimensionError);
    }
}
