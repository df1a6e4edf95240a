#include "nightdehaze/training.hpp"

#include "nightdehaze/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace nightdehaze::training {

namespace fs = std::filesystem;
using tensor::Graph;
using tensor::Shape;

namespace {

struct Batch {
    Tensor hazy, haze, streak, glow, transmission;
};

// Copies the (y0, x0) size×size crop of every channel of `src` into batch slot `n`.
void blit(const Tensor& src, Tensor& dst, int n, int y0, int x0) {
    const Shape s = src.shape();
    const Shape d = dst.shape();
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < d.h; ++y) {
            const float* in = &src.data()[src.offset(0, c, y0 + y, x0)];
            std::copy(in, in + d.w, &dst.data()[dst.offset(n, c, y, 0)]);
        }
}

Batch assemble(std::span<const TrainingSample> samples, std::span<const std::size_t> indices,
               int patch, std::mt19937_64& rng) {
    const Shape full = samples[indices[0]].hazy.shape();
    const int h = patch > 0 ? std::min(patch, full.h) : full.h;
    const int w = patch > 0 ? std::min(patch, full.w) : full.w;
    const int n = static_cast<int>(indices.size());
    Batch b{Tensor(Shape{n, 3, h, w}), Tensor(Shape{n, 3, h, w}), Tensor(Shape{n, 3, h, w}),
            Tensor(Shape{n, 1, h, w}), Tensor(Shape{n, 1, h, w})};
    for (int i = 0; i < n; ++i) {
        const TrainingSample& s = samples[indices[i]];
        const Shape ss = s.hazy.shape();
        if (ss.h < h || ss.w < w) throw DimensionError("training sample smaller than the batch crop");
        const int y0 = ss.h > h ? std::uniform_int_distribution<int>(0, ss.h - h)(rng) : 0;
        const int x0 = ss.w > w ? std::uniform_int_distribution<int>(0, ss.w - w)(rng) : 0;
        blit(s.hazy, b.hazy, i, y0, x0);
        blit(s.haze, b.haze, i, y0, x0);
        blit(s.streak, b.streak, i, y0, x0);
        blit(s.glow, b.glow, i, y0, x0);
        blit(s.transmission, b.transmission, i, y0, x0);
    }
    return b;
}

using BatchLoss = std::function<Graph::Id(Graph&, const Batch&)>;
using Snapshot = std::function<checkpoint::Checkpoint()>;

double evaluate(std::span<const TrainingSample> samples, int batch_size, const BatchLoss& loss) {
    double total = 0.0;
    std::mt19937_64 unused(0);
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
        const std::size_t end = std::min(samples.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch b = assemble(samples, idx, 0, unused);
        Graph g;
        total += g.scalar(loss(g, b)) * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(samples.size());
}

void clip_gradients(std::span<const tensor::ParamRef> params, float max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        for (float g : p.tensor->grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const float scale = static_cast<float>(max_norm / norm);
    for (const auto& p : params)
        for (float& g : p.tensor->grad()) g *= scale;
}

TrainResult run(std::vector<tensor::ParamRef> params, const BatchLoss& loss,
                const Snapshot& snapshot, std::span<const TrainingSample> train,
                std::span<const TrainingSample> validation, const TrainSchedule& sched) {
    sched.validate();
    if (train.empty()) throw ParameterError("training set is empty");

    TrainResult result;
    tensor::OptimizerState opt;
    opt.learning_rate = sched.learning_rate;
    opt.momentum = sched.momentum;
    opt.weight_decay = sched.weight_decay;
    PlateauScheduler plateau(sched.patience, sched.min_improvement);
    std::mt19937_64 rng(sched.seed);

    std::unique_ptr<std::ofstream> log_file;
    if (!sched.checkpoint_dir.empty()) {
        fs::create_directories(sched.checkpoint_dir);
        log_file = std::make_unique<std::ofstream>(sched.checkpoint_dir / (sched.checkpoint_prefix + ".log"));
        *log_file << "iteration\tloss\tvalidation\tlearning_rate\n";
    }

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    const std::size_t batch_size = std::min<std::size_t>(sched.batch_size, train.size());
    double last_validation = std::numeric_limits<double>::quiet_NaN();

    for (int it = 1; it <= sched.max_iterations; ++it) {
        std::vector<std::size_t> idx;
        while (idx.size() < batch_size) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            idx.push_back(order[cursor++]);
        }
        const Batch batch = assemble(train, idx, sched.patch_size, rng);

        for (auto& p : params) p.tensor->zero_grad();
        Graph g;
        const Graph::Id root = loss(g, batch);
        const double value = g.scalar(root);
        if (!std::isfinite(value)) {
            throw DivergenceError("training loss became non-finite at iteration " + std::to_string(it), it);
        }
        g.backward(root);
        if (sched.clip_norm > 0.0f) clip_gradients(params, sched.clip_norm);
        tensor::sgd_step(params, opt);
        result.losses.push_back(value);

        if (it % sched.validation_interval == 0) {
            if (validation.empty()) {
                const std::size_t w = std::min<std::size_t>(sched.validation_interval, result.losses.size());
                last_validation = smoothed_tail(result.losses, w);
            } else {
                last_validation = evaluate(validation, sched.batch_size, loss);
            }
            if (!std::isfinite(last_validation)) {
                throw DivergenceError("validation loss became non-finite at iteration " + std::to_string(it), it);
            }
            if (plateau.observe(it, last_validation)) {
                opt.learning_rate /= 10.0f;
                ++result.lr_drops;
            }
        }
        if (it % sched.log_interval == 0 || it == sched.max_iterations) {
            result.log.push_back({it, value, last_validation, opt.learning_rate});
            if (log_file) {
                *log_file << it << '\t' << value << '\t' << last_validation << '\t'
                          << opt.learning_rate << '\n';
            }
        }
        if (sched.checkpoint_interval > 0 && it % sched.checkpoint_interval == 0 &&
            !sched.checkpoint_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "_iter%06d.nckp", it);
            const fs::path path = sched.checkpoint_dir / (sched.checkpoint_prefix + name);
            checkpoint::save(path, snapshot());
            result.checkpoints.push_back(path);
        }
    }
    for (auto& p : params) p.tensor->drop_grad();
    result.final_learning_rate = opt.learning_rate;
    return result;
}

}  // namespace

Tensor to_tensor(const RadianceImage& img) {
    const auto v = img.values();
    return Tensor(Shape{1, 3, img.height(), img.width()}, std::vector<float>(v.begin(), v.end()));
}

Tensor to_tensor(const Plane& plane) {
    const auto v = plane.values();
    return Tensor(Shape{1, 1, plane.height(), plane.width()}, std::vector<float>(v.begin(), v.end()));
}

RadianceImage to_image(const Tensor& t, int n) {
    const Shape s = t.shape();
    if (s.c != 3) throw DimensionError("to_image needs 3 channels, got " + s.str());
    RadianceImage img(s.h, s.w);
    const float* src = &t.data()[t.offset(n, 0, 0, 0)];
    std::copy(src, src + img.size(), img.values().begin());
    return img;
}

Plane to_plane(const Tensor& t, int n) {
    const Shape s = t.shape();
    if (s.c != 1) throw DimensionError("to_plane needs 1 channel, got " + s.str());
    Plane p(s.h, s.w);
    const float* src = &t.data()[t.offset(n, 0, 0, 0)];
    std::copy(src, src + p.size(), p.values().begin());
    return p;
}

TrainingSample make_sample(const RadianceImage& hazy, const RadianceImage& haze,
                           const RadianceImage& streak, const Plane& glow, const Plane& t) {
    if (!hazy.same_size(haze) || !hazy.same_size(streak) || !hazy.same_size(glow) || !hazy.same_size(t)) {
        throw DimensionError("training sample layers differ in size");
    }
    return {to_tensor(hazy), to_tensor(haze), to_tensor(streak), to_tensor(glow), to_tensor(t)};
}

std::vector<TrainingSample> samples_from(std::span<const synthesis::SynthesizedRecord> records) {
    std::vector<TrainingSample> out;
    for (const auto& r : records) {
        const auto& e = r.example;
        out.push_back(make_sample(e.hazy, e.haze, e.glow.streak_sum(), e.glow.mask, e.transmission));
    }
    return out;
}

std::vector<TrainingSample> samples_from(std::span<const synthesis::LoadedRecord> records) {
    std::vector<TrainingSample> out;
    for (const auto& r : records) {
        out.push_back(make_sample(r.hazy, r.haze, r.streak, r.mask, r.transmission));
    }
    return out;
}

void TrainSchedule::validate() const {
    if (!(learning_rate >= 0.0f)) throw ParameterError("learning rate must be >= 0");
    if (batch_size < 1) throw ParameterError("batch size must be >= 1");
    if (max_iterations < 0) throw ParameterError("max iterations must be >= 0");
    if (patience < 1) throw ParameterError("plateau patience must be >= 1");
    if (validation_interval < 1 || log_interval < 1) throw ParameterError("intervals must be >= 1");
    if (checkpoint_interval < 0) throw ParameterError("checkpoint interval must be >= 0");
    if (patch_size < 0) throw ParameterError("patch size must be >= 0");
}

PlateauScheduler::PlateauScheduler(int patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement), best_(0.0) {}

bool PlateauScheduler::observe(int iteration, double loss) {
    if (!seen_ || loss < best_ * (1.0 - min_improvement_)) {
        seen_ = true;
        best_ = loss;
        best_iteration_ = iteration;
        return false;
    }
    if (iteration - best_iteration_ >= patience_) {
        best_iteration_ = iteration;
        best_ = std::min(best_, loss);
        return true;
    }
    return false;
}

double smoothed_head(std::span<const double> v, std::size_t window) {
    window = std::min(window, v.size());
    if (window == 0) return 0.0;
    return std::accumulate(v.begin(), v.begin() + window, 0.0) / static_cast<double>(window);
}

double smoothed_tail(std::span<const double> v, std::size_t window) {
    window = std::min(window, v.size());
    if (window == 0) return 0.0;
    return std::accumulate(v.end() - window, v.end(), 0.0) / static_cast<double>(window);
}

TrainResult train_deglow(nets::DeGlowModel& model, std::span<const TrainingSample> train,
                         std::span<const TrainingSample> validation, const TrainSchedule& schedule,
                         const nets::LossConfig& loss_config) {
    loss_config.validate();
    BatchLoss loss = [&](Graph& g, const Batch& b) {
        const auto trace = model.unroll(g, g.constant(b.hazy));
        return nets::deglow_loss(g, trace, {b.haze, b.streak, b.glow}, loss_config);
    };
    return run(model.parameters(), loss, [&] { return model.to_checkpoint(); }, train, validation,
               schedule);
}

TrainResult train_dehaze(nets::DeHazeModel& model, std::span<const TrainingSample> train,
                         std::span<const TrainingSample> validation, const TrainSchedule& schedule) {
    BatchLoss loss = [&](Graph& g, const Batch& b) {
        return nets::dehaze_loss(g, model.forward(g, g.constant(b.haze)), g.constant(b.transmission));
    };
    return run(model.parameters(), loss, [&] { return model.to_checkpoint(); }, train, validation,
               schedule);
}

}  // namespace nightdehaze::training
