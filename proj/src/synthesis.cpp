#include "nightdehaze/synthesis.hpp"

#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

namespace nightdehaze::synthesis {

namespace fs = std::filesystem;

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::string fmt_float(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    return buf;
}

float parse_float(const std::string& s, const std::string& field) {
    try {
        std::size_t used = 0;
        const float v = std::stof(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("manifest field '" + field + "' is not a number: '" + s + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) out.push_back(cur);
    return out;
}

// HSV -> RGB with h in [0,1).
std::array<float, 3> hsv(double h, double s, double v) {
    const double hh = std::fmod(h, 1.0) * 6.0;
    const int sector = static_cast<int>(hh);
    const double f = hh - sector;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r, g, b;
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    return {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)};
}

void check_range(Range r, const char* name) {
    if (!(r.lo < r.hi)) throw ParameterError(std::string(name) + " range needs lo < hi");
}

}  // namespace

void SynthesisConfig::validate() const {
    check_range(beta, "beta");
    check_range(q, "q");
    check_range(light, "light");
    check_range(glow_radius, "glow_radius");
    if (beta.lo <= 0) throw ParameterError("beta range must be positive");
    if (q.lo <= 0 || q.hi >= 1) throw ParameterError("q range must lie inside (0,1)");
    if (light.lo < 0 || light.hi > 1) throw ParameterError("light range must lie inside [0,1]");
    if (glow_radius.lo <= 0) throw ParameterError("glow radius must be positive");
    if (beta_samples < 1 || q_samples < 1) throw ParameterError("samples per image must be >= 1");
    if (width < 16 || height < 16) throw ParameterError("target dimensions must be >= 16");
    if (sources.lo < 0 || sources.lo > sources.hi) throw ParameterError("bad sources range");
    if (!(mask_threshold >= 0)) throw ParameterError("mask threshold must be >= 0");
    if (threads < 1) throw ParameterError("threads must be >= 1");
}

SceneParams sample_scene_params(std::mt19937_64& rng, const SynthesisConfig& config) {
    SceneParams p;
    p.beta = static_cast<float>(uniform(rng, config.beta.lo, config.beta.hi));
    p.q = static_cast<float>(uniform(rng, config.q.lo, config.q.hi));
    p.light = AtmosphericLight::gray(static_cast<float>(uniform(rng, config.light.lo, config.light.hi)));
    return p;
}

float glow_attenuation(float q, float d, bool use_taylor) {
    if (use_taylor) return std::max(0.0f, 1.0f - q * d);
    return std::exp(-q * d);
}

GlowField render_glow_field(int height, int width, std::span<const GlowSource> sources,
                            const SynthesisConfig& config) {
    GlowField field = GlowField::empty(height, width);
    for (const auto& s : sources) {
        if (s.x < 0 || s.x >= width || s.y < 0 || s.y >= height) {
            throw ParameterError("glow source (" + std::to_string(s.x) + "," + std::to_string(s.y) +
                                 ") outside " + std::to_string(width) + "x" +
                                 std::to_string(height) + " frame");
        }
        if (!(s.radius > 0)) throw ParameterError("glow source radius must be > 0");
        RadianceImage layer(height, width);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const float dist = std::hypot(static_cast<float>(x - s.x), static_cast<float>(y - s.y));
                const float a = glow_attenuation(s.q, dist / s.radius, config.use_taylor_glow);
                for (int c = 0; c < 3; ++c) layer.at(c, y, x) = s.peak[c] * a;
            }
        }
        field.sources.push_back(s);
        field.streaks.push_back(std::move(layer));
    }
    if (!field.sources.empty()) {
        const RadianceImage sum = field.streak_sum();
        for (std::size_t i = 0; i < sum.pixels(); ++i) {
            const auto px = sum.pixel(i);
            field.mask[i] = (px[0] + px[1] + px[2]) / 3.0f > config.mask_threshold ? 1.0f : 0.0f;
        }
    }
    return field;
}

std::vector<GlowSource> sample_glow_sources(std::mt19937_64& rng, int height, int width, float q,
                                            const SynthesisConfig& config) {
    const int count = uniform_int(rng, config.sources.lo, config.sources.hi);
    std::vector<GlowSource> out;
    for (int i = 0; i < count; ++i) {
        GlowSource s;
        s.x = uniform_int(rng, 0, width - 1);
        s.y = uniform_int(rng, 0, height - 1);
        s.q = q;
        s.radius = static_cast<float>(uniform(rng, config.glow_radius.lo, config.glow_radius.hi));
        const double kind = uniform(rng, 0.0, 1.0);
        const double level = uniform(rng, 0.6, 1.0);
        if (kind < 0.4) {  // white / sodium-white lamps
            s.peak = hsv(uniform(rng, 0.05, 0.15), uniform(rng, 0.0, 0.15), level);
        } else if (kind < 0.85) {  // warm
            s.peak = hsv(uniform(rng, 0.0, 0.12), uniform(rng, 0.3, 0.8), level);
        } else {
            s.peak = hsv(uniform(rng, 0.0, 1.0), uniform(rng, 0.3, 0.9), level);
        }
        out.push_back(s);
    }
    return out;
}

Example synthesize_example(const RadianceImage& clean, const DepthMap& depth,
                           const SceneParams& params, std::span<const GlowSource> sources,
                           const SynthesisConfig& config) {
    if (!clean.same_size(depth)) throw DimensionError("synthesize_example: clean/depth size mismatch");
    Example ex;
    ex.transmission = atmospherics::transmission_from_depth(depth, params.beta);
    ex.haze = atmospherics::compose_haze(clean, ex.transmission, params.light);
    ex.glow = render_glow_field(clean.height(), clean.width(), sources, config);
    ex.hazy = atmospherics::compose_glow(ex.haze, ex.glow);
    return ex;
}

// ---------------------------------------------------------------------------
// Procedural scenes

ScenePair procedural_scene(std::mt19937_64& rng, int height, int width, std::string id) {
    ScenePair pair{std::move(id), RadianceImage(height, width), DepthMap(height, width)};
    RadianceImage& img = pair.clean;
    DepthMap& depth = pair.depth;

    // Backdrop: far upper band, ground ramping towards the camera.
    const double horizon = uniform(rng, 0.3, 0.6) * height;
    const auto sky = hsv(uniform(rng, 0.5, 0.7), uniform(rng, 0.2, 0.6), uniform(rng, 0.3, 0.8));
    const auto ground = hsv(uniform(rng, 0.0, 1.0), uniform(rng, 0.3, 0.9), uniform(rng, 0.2, 0.7));
    const double near_depth = uniform(rng, 0.0, 0.3);
    const double tilt = uniform(rng, -0.15, 0.15);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = static_cast<double>(x) / std::max(1, width - 1) - 0.5;
            double d;
            std::array<float, 3> col;
            if (y < horizon) {
                d = 1.0;
                col = sky;
            } else {
                const double f = (y - horizon) / std::max(1.0, height - 1 - horizon);
                d = 1.0 - f * (1.0 - near_depth) + tilt * u;
                col = ground;
                for (auto& c : col) c = static_cast<float>(c * (0.6 + 0.4 * f));
            }
            depth.at(y, x) = static_cast<float>(std::clamp(d, 0.0, 1.0));
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
        }
    }

    // Objects painted far to near; each carries its own depth and texture.
    const int objects = uniform_int(rng, 4, 9);
    struct Obj {
        double cx, cy, rx, ry, d;
        bool ellipse;
        std::array<float, 3> col, col2;
        double freq, phase;
    };
    std::vector<Obj> objs;
    for (int i = 0; i < objects; ++i) {
        Obj o;
        o.cx = uniform(rng, 0.0, width);
        o.cy = uniform(rng, horizon * 0.5, height);
        o.rx = uniform(rng, 0.05, 0.3) * width;
        o.ry = uniform(rng, 0.05, 0.35) * height;
        o.d = uniform(rng, 0.05, 0.95);
        o.ellipse = uniform(rng, 0.0, 1.0) < 0.5;
        const double hue = uniform(rng, 0.0, 1.0);
        o.col = hsv(hue, uniform(rng, 0.4, 1.0), uniform(rng, 0.15, 1.0));
        o.col2 = hsv(hue + uniform(rng, -0.1, 0.1) + 1.0, uniform(rng, 0.3, 1.0), uniform(rng, 0.05, 0.6));
        o.freq = uniform(rng, 0.1, 0.8);
        o.phase = uniform(rng, 0.0, 2 * std::numbers::pi);
        objs.push_back(o);
    }
    std::sort(objs.begin(), objs.end(), [](const Obj& a, const Obj& b) { return a.d > b.d; });
    for (const auto& o : objs) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double dx = (x - o.cx) / o.rx, dy = (y - o.cy) / o.ry;
                const bool inside = o.ellipse ? dx * dx + dy * dy <= 1.0
                                              : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
                if (!inside) continue;
                const double stripe = 0.5 + 0.5 * std::sin(o.freq * (x + 0.7 * y) + o.phase);
                for (int c = 0; c < 3; ++c) {
                    img.at(c, y, x) = static_cast<float>(o.col[c] * stripe + o.col2[c] * (1 - stripe));
                }
                depth.at(y, x) = static_cast<float>(std::clamp(o.d + 0.05 * dy, 0.0, 1.0));
            }
        }
    }

    std::normal_distribution<float> noise(0.0f, 0.01f);
    for (float& v : img.values()) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    return pair;
}

std::vector<ScenePair> procedural_pairs(int count, int height, int width, std::uint64_t seed) {
    std::vector<ScenePair> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        std::mt19937_64 rng(derive_seed(seed, 0x5ce4e, static_cast<std::uint64_t>(i)));
        char id[32];
        std::snprintf(id, sizeof id, "scene%04d", i);
        out.push_back(procedural_scene(rng, height, width, id));
    }
    return out;
}

std::vector<ScenePair> load_pairs(const fs::path& clean_dir, const fs::path& depth_dir) {
    std::vector<fs::path> cleans;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(clean_dir, ec)) {
        if (e.path().extension() == ".ppm") cleans.push_back(e.path());
    }
    if (ec) throw IoError("cannot list " + clean_dir.string() + ": " + ec.message());
    std::sort(cleans.begin(), cleans.end());
    std::vector<ScenePair> out;
    for (const auto& c : cleans) {
        const std::string stem = c.stem().string();
        const fs::path d = depth_dir / (stem + ".pgm");
        try {
            RadianceImage clean = netpbm::read_ppm(c);
            DepthMap depth(netpbm::read_pgm(d));
            if (!clean.same_size(depth)) {
                depth = DepthMap(resize_bilinear(depth, clean.height(), clean.width()));
            }
            out.push_back({stem, std::move(clean), std::move(depth)});
        } catch (const Error& e) {
            throw IoError("pair '" + stem + "' unreadable: " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(mix(master) ^ a) ^ b) ^ c);
}

std::string format_record(const DatasetRecord& r) {
    std::ostringstream ss;
    ss << "id=" << r.id << " clean=" << r.clean << " hazy=" << r.hazy << " haze=" << r.haze
       << " trans=" << r.transmission << " mask=" << r.mask << " streak=" << r.streak
       << " beta=" << fmt_float(r.beta) << " q=" << fmt_float(r.q) << " light="
       << fmt_float(r.light[0]) << ',' << fmt_float(r.light[1]) << ',' << fmt_float(r.light[2])
       << " sources=";
    if (r.sources.empty()) ss << '-';
    for (std::size_t i = 0; i < r.sources.size(); ++i) {
        const auto& s = r.sources[i];
        if (i) ss << ';';
        ss << s.x << ':' << s.y << ':' << fmt_float(s.radius) << ':' << fmt_float(s.peak[0]) << ':'
           << fmt_float(s.peak[1]) << ':' << fmt_float(s.peak[2]);
    }
    return ss.str();
}

DatasetRecord parse_record(const std::string& line) {
    std::map<std::string, std::string> kv;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError("manifest token without '=': " + tok);
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw DataError("manifest record lacks '" + key + "'");
        return it->second;
    };
    DatasetRecord r;
    r.id = get("id");
    r.clean = get("clean");
    r.hazy = get("hazy");
    r.haze = get("haze");
    r.transmission = get("trans");
    r.mask = get("mask");
    r.streak = get("streak");
    r.beta = parse_float(get("beta"), "beta");
    r.q = parse_float(get("q"), "q");
    const auto light = split(get("light"), ',');
    if (light.size() != 3) throw DataError("manifest light must have 3 components");
    r.light = AtmosphericLight(parse_float(light[0], "light"), parse_float(light[1], "light"),
                               parse_float(light[2], "light"));
    const std::string sources = get("sources");
    if (sources != "-") {
        for (const auto& item : split(sources, ';')) {
            const auto f = split(item, ':');
            if (f.size() != 6) throw DataError("manifest source needs 6 fields: " + item);
            GlowSource s;
            s.x = static_cast<int>(parse_float(f[0], "source.x"));
            s.y = static_cast<int>(parse_float(f[1], "source.y"));
            s.radius = parse_float(f[2], "source.radius");
            for (int c = 0; c < 3; ++c) s.peak[c] = parse_float(f[3 + c], "source.peak");
            s.q = r.q;
            r.sources.push_back(s);
        }
    }
    return r;
}

std::vector<SynthesizedRecord> synthesize_dataset(std::span<const ScenePair> pairs,
                                                  const SynthesisConfig& config) {
    config.validate();
    if (pairs.empty()) throw ParameterError("build_dataset needs at least one clean/depth pair");
    const std::size_t per_pair = static_cast<std::size_t>(config.beta_samples) * config.q_samples;
    std::vector<SynthesizedRecord> out(pairs.size() * per_pair);

    auto work = [&](std::size_t p) {
        const ScenePair& pair = pairs[p];
        const RadianceImage clean = resize_bilinear(pair.clean, config.height, config.width);
        DepthMap depth(resize_bilinear(pair.depth, config.height, config.width));
        for (float& d : depth.values()) {
            if (!std::isfinite(d)) throw DataError("pair '" + pair.id + "' has non-finite depth");
            d = std::clamp(d, 0.0f, 1.0f);
        }
        // Record (b, k) takes beta and light from draw b and q from draw k.
        std::mt19937_64 pair_rng(derive_seed(config.seed, 0xda7a, p));
        const int draws = std::max(config.beta_samples, config.q_samples);
        std::vector<SceneParams> drawn;
        for (int i = 0; i < draws; ++i) drawn.push_back(sample_scene_params(pair_rng, config));
        for (int b = 0; b < config.beta_samples; ++b) {
            for (int k = 0; k < config.q_samples; ++k) {
                SceneParams params = drawn[b];
                params.q = drawn[k].q;
                std::mt19937_64 rng(derive_seed(config.seed, 0x6e0a, p, b * config.q_samples + k));
                const auto sources = sample_glow_sources(rng, config.height, config.width, params.q, config);

                SynthesizedRecord& rec = out[p * per_pair + b * config.q_samples + k];
                rec.clean = clean;
                rec.example = synthesize_example(clean, depth, params, sources, config);
                DatasetRecord& r = rec.record;
                r.id = pair.id + "_b" + std::to_string(b) + "_q" + std::to_string(k);
                r.clean = r.id + ".clean.ppm";
                r.hazy = r.id + ".hazy.ppm";
                r.haze = r.id + ".haze.ppm";
                r.transmission = r.id + ".trans.pgm";
                r.mask = r.id + ".mask.pgm";
                r.streak = r.id + ".streak.ppm";
                r.beta = params.beta;
                r.q = params.q;
                r.light = params.light;
                r.sources = sources;
            }
        }
    };

    if (config.threads <= 1) {
        for (std::size_t p = 0; p < pairs.size(); ++p) work(p);
    } else {
        std::vector<std::exception_ptr> errors(pairs.size());
        std::vector<std::jthread> pool;
        for (int t = 0; t < config.threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t p = t; p < pairs.size(); p += config.threads) {
                    try {
                        work(p);
                    } catch (...) {
                        errors[p] = std::current_exception();
                    }
                }
            });
        }
        pool.clear();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return out;
}

std::vector<DatasetRecord> build_dataset(std::span<const ScenePair> pairs,
                                         const SynthesisConfig& config, const fs::path& out_dir) {
    auto synthesized = synthesize_dataset(pairs, config);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    std::vector<DatasetRecord> records;
    std::string manifest;
    for (auto& s : synthesized) {
        const DatasetRecord& r = s.record;
        netpbm::write_ppm(out_dir / r.clean, s.clean);
        netpbm::write_ppm(out_dir / r.hazy, s.example.hazy);
        netpbm::write_ppm(out_dir / r.haze, s.example.haze);
        netpbm::write_pgm16(out_dir / r.transmission, s.example.transmission);
        netpbm::write_pgm16(out_dir / r.mask, s.example.glow.mask);
        netpbm::write_ppm(out_dir / r.streak, s.example.glow.streak_sum());
        manifest += format_record(r);
        manifest += '\n';
        records.push_back(r);
    }
    netpbm::write_file(out_dir / kManifestName, manifest);
    return records;
}

std::vector<DatasetRecord> read_manifest(const fs::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw IoError("cannot open manifest " + manifest.string());
    std::vector<DatasetRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(parse_record(line));
        } catch (const DataError& e) {
            throw DataError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

LoadedRecord load_record(const fs::path& dir, const DatasetRecord& r) {
    LoadedRecord l;
    l.record = r;
    l.clean = netpbm::read_ppm(dir / r.clean);
    l.hazy = netpbm::read_ppm(dir / r.hazy);
    l.haze = netpbm::read_ppm(dir / r.haze);
    l.transmission = TransmissionMap(netpbm::read_pgm(dir / r.transmission));
    l.mask = GlowMask(netpbm::read_pgm(dir / r.mask));
    l.streak = netpbm::read_ppm(dir / r.streak);
    return l;
}

}  // namespace nightdehaze::synthesis
