#pragma once

#include "nightdehaze/image.hpp"

#include <string>
#include <vector>

namespace nightdehaze::metrics {

/// PSNR for unit-peak data. `infinite` is set when the images are identical.
struct Psnr {
    double db = 0.0;
    bool infinite = false;
};

Psnr psnr(const RadianceImage& a, const RadianceImage& b);
double mse(const RadianceImage& a, const RadianceImage& b);

struct SsimOptions {
    double k1 = 0.01;
    double k2 = 0.03;
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 1.0;
};

/// Mean local SSIM over every fully-contained window position, computed per
/// RGB channel and averaged.
double ssim(const RadianceImage& a, const RadianceImage& b, const SsimOptions& options = {});

struct ReportRow {
    std::string id;
    Psnr psnr;
    double ssim = 0.0;
};

struct QualityReport {
    std::vector<ReportRow> rows;

    void add(std::string id, const RadianceImage& predicted, const RadianceImage& truth);
    /// Mean PSNR over finite rows and mean SSIM over all rows.
    double mean_psnr() const;
    double mean_ssim() const;
    /// Flat text table: header line then "id psnr ssim" rows; identical
    /// images print psnr as "inf".
    std::string to_text() const;
};

}  // namespace nightdehaze::metrics
