#include "nightdehaze/metrics.hpp"

#include "nightdehaze/error.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace nightdehaze::metrics {

namespace {

void require_same(const RadianceImage& a, const RadianceImage& b) {
    if (!a.same_size(b)) {
        throw DimensionError("metric inputs differ in size: " + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                             "x" + std::to_string(b.width()));
    }
}

std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(size);
    const double mid = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-((i - mid) * (i - mid)) / (2 * sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Valid-mode separable filtering of an H×W plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1, oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

}  // namespace

double mse(const RadianceImage& a, const RadianceImage& b) {
    require_same(a, b);
    const auto va = a.values();
    const auto vb = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const double d = static_cast<double>(va[i]) - vb[i];
        acc += d * d;
    }
    return acc / static_cast<double>(va.size());
}

Psnr psnr(const RadianceImage& a, const RadianceImage& b) {
    const double e = mse(a, b);
    if (e == 0.0) return {std::numeric_limits<double>::infinity(), true};
    return {10.0 * std::log10(1.0 / e), false};
}

double ssim(const RadianceImage& a, const RadianceImage& b, const SsimOptions& o) {
    require_same(a, b);
    if (a.height() < o.window || a.width() < o.window) {
        throw DimensionError("ssim needs images of at least " + std::to_string(o.window) + "x" +
                             std::to_string(o.window));
    }
    const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
    const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
    const auto kernel = gaussian_kernel(o.window, o.sigma);
    const int h = a.height(), w = a.width();
    const std::size_t n = a.pixels();

    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < 3; ++c) {
        const auto pa = a.channel(c);
        const auto pb = b.channel(c);
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = pa[i];
            y[i] = pb[i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, kernel);
        const auto my = filter_valid(y, h, w, kernel);
        const auto sxx = filter_valid(xx, h, w, kernel);
        const auto syy = filter_valid(yy, h, w, kernel);
        const auto sxy = filter_valid(xy, h, w, kernel);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

void QualityReport::add(std::string id, const RadianceImage& predicted, const RadianceImage& truth) {
    rows.push_back({std::move(id), psnr(predicted, truth), ssim(predicted, truth)});
}

double QualityReport::mean_psnr() const {
    double acc = 0.0;
    int n = 0;
    for (const auto& r : rows) {
        if (r.psnr.infinite) continue;
        acc += r.psnr.db;
        ++n;
    }
    return n ? acc / n : std::numeric_limits<double>::infinity();
}

double QualityReport::mean_ssim() const {
    double acc = 0.0;
    for (const auto& r : rows) acc += r.ssim;
    return rows.empty() ? 0.0 : acc / static_cast<double>(rows.size());
}

std::string QualityReport::to_text() const {
    std::string out = "id\tpsnr_db\tssim\n";
    char buf[96];
    for (const auto& r : rows) {
        if (r.psnr.infinite) {
            std::snprintf(buf, sizeof buf, "\tinf\t%.6f\n", r.ssim);
        } else {
            std::snprintf(buf, sizeof buf, "\t%.4f\t%.6f\n", r.psnr.db, r.ssim);
        }
        out += r.id;
        out += buf;
    }
    return out;
}

}  // namespace nightdehaze::metrics
