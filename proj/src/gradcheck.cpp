#include "nightdehaze/gradcheck.hpp"

#include "nightdehaze/networks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nightdehaze::gradcheck {

using ConvParams = tensor::BasicConvParams<double>;
using tensor::Shape;

namespace {

Tensor uniform(Shape s, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(s);
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data()) v = d(rng);
    return t;
}

// Uniform in ±[lo, hi], keeping values away from the ReLU kink at zero.
Tensor away_from_zero(Shape s, std::mt19937_64& rng, double lo, double hi) {
    Tensor t = uniform(s, rng, lo, hi);
    std::bernoulli_distribution sign(0.5);
    for (double& v : t.data()) v = sign(rng) ? v : -v;
    return t;
}

Tensor binary(Shape s, std::mt19937_64& rng) {
    Tensor t(s);
    std::bernoulli_distribution d(0.4);
    for (double& v : t.data()) v = d(rng) ? 1.0 : 0.0;
    return t;
}

void randomize(ConvParams& p, std::mt19937_64& rng, double scale) {
    p.weight = uniform(p.weight.shape(), rng, -scale, scale);
    p.bias = uniform(p.bias.shape(), rng, -0.1, 0.1);
}

tensor::Tensor to_float(const Tensor& t) { return tensor::tensor_cast<float>(t); }

}  // namespace

Result check(std::string name, const LossBuilder& build, const std::vector<Tensor*>& wrt,
             const Options& options) {
    Result result;
    result.name = std::move(name);

    for (Tensor* t : wrt) t->zero_grad();
    std::vector<std::uint8_t> base_signature;
    {
        Graph g;
        const Graph::Id root = build(g);
        g.backward(root);
        base_signature = g.relu_signature();
    }
    auto evaluate = [&](std::vector<std::uint8_t>& signature) {
        Graph g;
        const double v = g.scalar(build(g));
        signature = g.relu_signature();
        return v;
    };

    std::mt19937_64 rng(options.seed);
    for (Tensor* t : wrt) {
        const std::vector<double> analytic(t->grad().begin(), t->grad().end());
        std::vector<std::size_t> idx(t->size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        // Candidates are drawn until max_probes are accepted or the attempt budget runs out.
        const std::size_t budget = 4 * options.max_probes;
        std::size_t accepted = 0, attempts = 0;
        double max_diff = 0.0, max_a = 0.0, max_n = 0.0;
        for (std::size_t i : idx) {
            if (accepted == options.max_probes || attempts == budget) break;
            ++attempts;
            const double original = (*t)[i];
            std::vector<std::uint8_t> sig_plus, sig_minus;
            (*t)[i] = original + options.step;
            const double plus = evaluate(sig_plus);
            (*t)[i] = original - options.step;
            const double minus = evaluate(sig_minus);
            (*t)[i] = original;
            if (sig_plus != base_signature || sig_minus != base_signature) {
                ++result.skipped;
                continue;
            }
            const double h = (original + options.step) - (original - options.step);
            const double numeric = (plus - minus) / h;
            max_diff = std::max(max_diff, std::abs(numeric - analytic[i]));
            max_a = std::max(max_a, std::abs(analytic[i]));
            max_n = std::max(max_n, std::abs(numeric));
            ++result.probes;
            ++accepted;
        }
        const double scale = std::max({max_a, max_n, 1e-8});
        result.max_rel_error = std::max(result.max_rel_error, max_diff / scale);
        t->drop_grad();
    }
    return result;
}

std::vector<Result> run_suite(std::uint64_t seed) {
    std::vector<Result> out;
    std::mt19937_64 rng(seed);
    Options opt;
    opt.seed = seed;

    for (int dil : {1, 2, 3}) {
        Tensor x = uniform(Shape{2, 4, 16, 16}, rng, -1.0, 1.0);
        ConvParams conv(4, 4, 3, dil);
        randomize(conv, rng, 0.3);
        const Tensor target = uniform(Shape{2, 4, 16, 16}, rng, -1.0, 1.0);
        out.push_back(check("dilated_conv2d DF=" + std::to_string(dil),
                            [&](Graph& g) { return g.mse(g.conv(g.param(x), conv), g.constant(target)); },
                            {&x, &conv.weight, &conv.bias}, opt));
    }
    {
        Tensor x = away_from_zero(Shape{2, 4, 16, 16}, rng, 0.05, 1.0);
        const Tensor target = uniform(x.shape(), rng, -1.0, 1.0);
        out.push_back(check("relu",
                            [&](Graph& g) { return g.mse(g.relu(g.param(x)), g.constant(target)); },
                            {&x}, opt));
    }
    {
        Tensor a = uniform(Shape{2, 4, 8, 8}, rng, -1.0, 1.0);
        Tensor b = uniform(Shape{2, 2, 8, 8}, rng, -1.0, 1.0);
        const Tensor target = uniform(Shape{2, 6, 8, 8}, rng, -1.0, 1.0);
        out.push_back(check("concat_channels",
                            [&](Graph& g) {
                                return g.mse(g.concat({g.param(a), g.param(b)}), g.constant(target));
                            },
                            {&a, &b}, opt));
    }
    {
        Tensor x = uniform(Shape{1, 1, 8, 8}, rng, -3.0f, 3.0f);
        const Tensor t = uniform(x.shape(), rng, 0.2, 1.0);
        out.push_back(check("dehaze_loss",
                            [&](Graph& g) {
                                return nets::dehaze_loss(g, g.sigmoid(g.param(x)), g.constant(t));
                            },
                            {&x}, opt));
    }
    {
        // Loss over a two-step trace whose outputs are free leaves.
        const Shape img{1, 3, 8, 8}, map{1, 1, 8, 8}, logit{1, 2, 8, 8};
        std::vector<Tensor> outputs, streaks, logits;
        for (int t = 0; t < 2; ++t) {
            outputs.push_back(uniform(img, rng, 0.0, 1.0));
            streaks.push_back(uniform(img, rng, 0.0, 1.0));
            logits.push_back(uniform(logit, rng, -2.0, 2.0));
        }
        const nets::DeGlowTargets targets{to_float(uniform(img, rng, 0.0, 1.0)),
                                          to_float(uniform(img, rng, 0.0, 1.0)),
                                          to_float(binary(map, rng))};
        std::vector<Tensor*> wrt;
        for (int t = 0; t < 2; ++t) wrt.insert(wrt.end(), {&outputs[t], &streaks[t], &logits[t]});
        out.push_back(check("deglow_loss",
                            [&](Graph& g) {
                                nets::UnrollNodes u{g.constant(Tensor(img)), {}};
                                for (int t = 0; t < 2; ++t) {
                                    nets::StepNodes s{};
                                    s.output = g.param(outputs[t]);
                                    s.streak = g.param(streaks[t]);
                                    s.glow_logits = g.param(logits[t]);
                                    s.glow = g.softmax2_first(s.glow_logits);
                                    u.steps.push_back(s);
                                }
                                return nets::deglow_loss(g, u, targets, {0.1, 0.05});
                            },
                            wrt, opt));
    }
    for (const int tau : {1, 3}) {
        nets::DeGlowModel init(nets::DeGlowConfig{nets::kDefaultFeatures, tau, true, false});
        init.initialize(seed + 11, nets::InitScheme::Scaled);
        auto model = init.cast<double>();
        for (auto& p : model.parameters()) {
            if (!p.decay) *p.tensor = uniform(p.tensor->shape(), rng, -0.05, 0.05);
        }
        Tensor input = uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
        const nets::DeGlowTargets targets{to_float(uniform(input.shape(), rng, 0.0, 1.0)),
                                          to_float(uniform(input.shape(), rng, 0.0, 0.5)),
                                          to_float(binary(Shape{1, 1, 8, 8}, rng))};
        std::vector<Tensor*> wrt{&input};
        for (auto& p : model.parameters()) wrt.push_back(p.tensor);
        Options net_opt = opt;
        net_opt.max_probes = 12;
        const std::string name = tau == 1 ? "deglow_step 1x3x8x8" : "deglow_unroll tau=3 1x3x8x8";
        out.push_back(check(name,
                            [&](Graph& g) {
                                const auto u = model.unroll(g, g.param(input), tau);
                                return nets::deglow_loss(g, u, targets, {0.1, 0.05});
                            },
                            wrt, net_opt));
    }
    {
        nets::DeHazeModel init(nets::DeHazeConfig{nets::kDefaultFeatures});
        init.initialize(seed + 13, nets::InitScheme::Scaled);
        auto model = init.cast<double>();
        for (auto& p : model.parameters()) {
            if (!p.decay) *p.tensor = uniform(p.tensor->shape(), rng, -0.05, 0.05);
        }
        Tensor input = uniform(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
        const Tensor t = uniform(Shape{1, 1, 8, 8}, rng, 0.2, 1.0);
        std::vector<Tensor*> wrt{&input};
        for (auto& p : model.parameters()) wrt.push_back(p.tensor);
        Options net_opt = opt;
        net_opt.max_probes = 12;
        out.push_back(check("dehaze_forward 1x3x8x8",
                            [&](Graph& g) {
                                return nets::dehaze_loss(g, model.forward(g, g.param(input)), g.constant(t));
                            },
                            wrt, net_opt));
    }
    return out;
}

}  // namespace nightdehaze::gradcheck
