#include "cli.hpp"

#include "nightdehaze/checkpoint.hpp"
#include "nightdehaze/config.hpp"
#include "nightdehaze/error.hpp"
#include "nightdehaze/gradcheck.hpp"
#include "nightdehaze/metrics.hpp"
#include "nightdehaze/netpbm.hpp"
#include "nightdehaze/pipeline.hpp"
#include "nightdehaze/synthesis.hpp"
#include "nightdehaze/training.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace nightdehaze::cli {

namespace fs = std::filesystem;

namespace {

/// Where the command currently is, for error reporting.
struct Context {
    std::string stage = "cli";
    std::string file = "-";

    void at(std::string s, std::string f = "-") {
        stage = std::move(s);
        file = std::move(f);
    }
};

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c == '\n' ? ' ' : c);
    }
    return out + '"';
}

// Runs fn(i) for i in [0, count) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < count; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::string stem_of(const fs::path& p) {
    std::string name = p.filename().string();
    return name.substr(0, name.rfind('.'));
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<fs::path> list_ppm(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

config::PipelineConfig load_config_or_default(const std::string& path, Context& ctx) {
    if (path.empty()) return config::PipelineConfig{};
    ctx.at("config", path);
    return config::load_config(path);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

int cmd_synth(const SynthArgs& a, Context& ctx, std::ostream& out) {
    auto cfg = load_config_or_default(a.config, ctx);
    if (a.seed) cfg.synthesis.seed = *a.seed;
    cfg.synthesis.threads = std::max(1, a.threads);
    std::vector<synthesis::ScenePair> pairs;
    if (!cfg.clean_dir.empty()) {
        ctx.at("load-pairs", cfg.clean_dir.string());
        pairs = synthesis::load_pairs(cfg.clean_dir, cfg.depth_dir.empty() ? cfg.clean_dir : cfg.depth_dir);
    } else {
        ctx.at("procedural-pairs");
        pairs = synthesis::procedural_pairs(cfg.procedural_pairs, cfg.synthesis.height,
                                            cfg.synthesis.width, cfg.synthesis.seed);
    }
    ctx.at("synth", a.out);
    const auto records = synthesis::build_dataset(pairs, cfg.synthesis, a.out);
    out << "records=" << records.size() << " manifest=" << (fs::path(a.out) / synthesis::kManifestName).string()
        << '\n';
    return 0;
}

struct TrainArgs {
    std::string config, out, init_checkpoint;
    std::optional<std::uint64_t> seed;
    int tau = 0;
    int threads = 1;
};

std::vector<training::TrainingSample> load_samples(const std::vector<synthesis::DatasetRecord>& records,
                                                   const fs::path& dir, Context& ctx) {
    std::vector<synthesis::LoadedRecord> loaded;
    for (const auto& r : records) {
        ctx.at("load-dataset", (dir / r.hazy).string());
        loaded.push_back(synthesis::load_record(dir, r));
    }
    return training::samples_from(loaded);
}

int cmd_train(const TrainArgs& a, bool deglow, Context& ctx, std::ostream& out) {
    auto cfg = load_config_or_default(a.config, ctx);
    if (a.seed) cfg.schedule.seed = *a.seed;
    if (a.tau > 0) cfg.deglow.recurrences = a.tau;
    fs::path target = !a.out.empty() ? fs::path(a.out)
                                     : (deglow ? cfg.deglow_checkpoint : cfg.dehaze_checkpoint);
    if (target.empty()) throw ParameterError("no output checkpoint given (--out or [pipeline] setting)");
    if (cfg.manifest.empty()) throw ParameterError("config lacks [train] manifest");

    ctx.at("load-dataset", cfg.manifest.string());
    const auto records = synthesis::read_manifest(cfg.manifest);
    if (records.empty()) throw DataError("manifest has no records");
    auto samples = load_samples(records, cfg.manifest.parent_path(), ctx);
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * samples.size()));
    if (n_val >= samples.size()) n_val = samples.size() - 1;
    const std::span<const training::TrainingSample> all(samples);
    const auto train = all.first(samples.size() - n_val);
    const auto val = all.last(n_val);

    auto sched = cfg.schedule;
    if (sched.checkpoint_interval > 0) {
        sched.checkpoint_dir = target.parent_path().empty() ? fs::path(".") : target.parent_path();
        sched.checkpoint_prefix = target.stem().string();
    }

    ctx.at(deglow ? "train-deglow" : "train-dehaze", target.string());
    training::TrainResult result;
    checkpoint::Checkpoint final_ckpt;
    if (deglow) {
        nets::DeGlowModel model(cfg.deglow);
        if (!a.init_checkpoint.empty()) {
            ctx.at("load", a.init_checkpoint);
            model = nets::DeGlowModel::from_checkpoint(checkpoint::load(a.init_checkpoint));
        } else {
            model.initialize(sched.seed, cfg.init);
        }
        ctx.at("train-deglow", target.string());
        result = training::train_deglow(model, train, val, sched, cfg.loss);
        final_ckpt = model.to_checkpoint();
    } else {
        nets::DeHazeModel model(cfg.dehaze);
        if (!a.init_checkpoint.empty()) {
            ctx.at("load", a.init_checkpoint);
            model = nets::DeHazeModel::from_checkpoint(checkpoint::load(a.init_checkpoint));
        } else {
            model.initialize(sched.seed, cfg.init);
        }
        ctx.at("train-dehaze", target.string());
        result = training::train_dehaze(model, train, val, sched);
        final_ckpt = model.to_checkpoint();
    }
    ctx.at("save", target.string());
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
    checkpoint::save(target, final_ckpt);

    const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(10, result.losses.size()));
    out << std::setprecision(6) << "iterations=" << result.losses.size()
        << " initial_loss=" << training::smoothed_head(result.losses, w)
        << " final_loss=" << training::smoothed_tail(result.losses, w) << " lr_drops=" << result.lr_drops
        << " checkpoint=" << target.string() << '\n';
    return 0;
}

struct RunArgs {
    std::string config, input, out;
    std::vector<std::string> checkpoints;
    int tau = 0;
    int tile_size = -1;
    int threads = 1;
    bool dump = false;
    bool from_intermediates = false;
    std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a, Context& ctx, std::ostream& out) {
    auto cfg = load_config_or_default(a.config, ctx);
    const fs::path out_dir(a.out);
    fs::create_directories(out_dir);

    std::vector<fs::path> inputs;
    const fs::path input(a.input);
    if (fs::is_directory(input)) {
        for (const auto& p : list_ppm(input)) {
            const std::string name = p.filename().string();
            if (a.from_intermediates ? ends_with(name, ".deglow.ppm") : !ends_with(name, ".deglow.ppm")) {
                inputs.push_back(p);
            }
        }
    } else {
        ctx.at("input", a.input);
        if (!fs::exists(input)) throw IoError("input not found: " + a.input);
        inputs.push_back(input);
    }

    const float t_min = cfg.t_min;
    if (a.from_intermediates) {
        for (const auto& p : inputs) {
            std::string stem = p.filename().string();
            stem = stem.substr(0, stem.size() - std::string(".deglow.ppm").size());
            const fs::path dir = p.parent_path();
            ctx.at("recovery", p.string());
            const auto deglowed = netpbm::read_ppm(p);
            ctx.at("recovery", (dir / (stem + ".trans.pgm")).string());
            const TransmissionMap t(netpbm::read_pgm(dir / (stem + ".trans.pgm")));
            ctx.at("recovery", (dir / (stem + ".light.txt")).string());
            const auto light = pipeline::parse_light(netpbm::read_file(dir / (stem + ".light.txt")));
            ctx.at("recovery", (out_dir / (stem + ".out.ppm")).string());
            netpbm::write_ppm(out_dir / (stem + ".out.ppm"),
                              pipeline::recover_from_intermediates(deglowed, t, light, t_min));
            out << stem << " recovered\n";
        }
        return 0;
    }

    fs::path deglow_path = cfg.deglow_checkpoint, dehaze_path = cfg.dehaze_checkpoint;
    for (const auto& c : a.checkpoints) {
        ctx.at("load", c);
        const std::string kind = nets::checkpoint_kind(checkpoint::peek_descriptor(c));
        if (kind == "deglow") {
            deglow_path = c;
        } else if (kind == "dehaze") {
            dehaze_path = c;
        } else {
            throw LoadError("checkpoint " + c + " has unknown kind '" + kind + "'");
        }
    }
    if (deglow_path.empty() || dehaze_path.empty()) {
        throw LoadError("both a DeGlow and a DeHaze checkpoint are required");
    }
    ctx.at("load", deglow_path.string());
    auto deglow = nets::DeGlowModel::from_checkpoint(checkpoint::load(deglow_path));
    ctx.at("load", dehaze_path.string());
    auto dehaze = nets::DeHazeModel::from_checkpoint(checkpoint::load(dehaze_path));
    pipeline::Pipeline pipe(std::move(deglow), std::move(dehaze));

    pipeline::RunOptions opts;
    opts.tau = a.tau > 0 ? a.tau : cfg.tau;
    opts.t_min = t_min;
    opts.tile_size = a.tile_size >= 0 ? a.tile_size : cfg.tile_size;

    std::vector<std::string> lines(inputs.size());
    std::mutex failure_mutex;
    bool failed = false;
    parallel_for(inputs.size(), a.threads, [&](std::size_t i) {
        const fs::path& p = inputs[i];
        const std::string stem = stem_of(p);
        std::string stage = "read";
        try {
            const auto img = netpbm::read_ppm(p);
            stage = "pipeline";
            const auto art = pipe.run(img, opts);
            stage = "write";
            netpbm::write_ppm(out_dir / (stem + ".out.ppm"), art.output);
            if (a.dump) {
                netpbm::write_ppm(out_dir / (stem + ".deglow.ppm"), art.deglowed);
                netpbm::write_pgm16(out_dir / (stem + ".trans.pgm"), art.transmission);
                netpbm::write_file(out_dir / (stem + ".light.txt"), pipeline::format_light(art.light) + "\n");
            }
            std::ostringstream line;
            line << stem << std::fixed << std::setprecision(4);
            for (const auto& t : art.timings) line << ' ' << t.stage << '=' << t.seconds << 's';
            lines[i] = line.str();
        } catch (...) {
            const std::lock_guard lock(failure_mutex);
            if (!failed) {
                failed = true;
                ctx.at(stage, p.string());
            }
            throw;
        }
    });
    for (const auto& l : lines) out << l << '\n';
    return 0;
}

struct EvalArgs {
    std::string pred, truth, out;
    int threads = 1;
};

int cmd_eval(const EvalArgs& a, Context& ctx, std::ostream& out) {
    ctx.at("eval", a.truth);
    const auto truths = list_ppm(a.truth);
    if (truths.empty()) throw IoError("no .ppm files in " + a.truth);
    std::vector<metrics::ReportRow> rows(truths.size());
    parallel_for(truths.size(), a.threads, [&](std::size_t i) {
        const std::string stem = stem_of(truths[i]);
        fs::path pred = fs::path(a.pred) / (stem + ".out.ppm");
        if (!fs::exists(pred)) pred = fs::path(a.pred) / truths[i].filename();
        if (!fs::exists(pred)) throw IoError("no prediction for " + truths[i].string());
        metrics::QualityReport r;
        r.add(stem, netpbm::read_ppm(pred), netpbm::read_ppm(truths[i]));
        rows[i] = r.rows.front();
    });
    metrics::QualityReport report{rows};
    const std::string text = report.to_text();
    out << text;
    out << std::fixed << std::setprecision(4) << "mean\t" << report.mean_psnr() << '\t'
        << std::setprecision(6) << report.mean_ssim() << '\n';
    if (!a.out.empty()) {
        ctx.at("eval", a.out);
        netpbm::write_file(a.out, text);
    }
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out) {
    bool ok = true;
    for (const auto& r : gradcheck::run_suite(seed)) {
        const bool pass = r.passed(gradcheck::kTolerance);
        ok = ok && pass;
        out << std::left << std::setw(30) << r.name << " max_rel_error=" << std::scientific
            << std::setprecision(3) << r.max_rel_error << std::defaultfloat << " probes=" << r.probes
            << " skipped=" << r.skipped << ' ' << (pass ? "PASS" : "FAIL") << '\n';
    }
    if (!ok) throw Error("gradcheck", "finite-difference check exceeded tolerance " +
                                          std::to_string(gradcheck::kTolerance));
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Nighttime haze and glow removal toolkit", "nightdehaze"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Synthesize a training dataset");
    synth->add_option("--config", synth_args.config, "Configuration file");
    synth->add_option("--out", synth_args.out, "Output dataset directory")->required();
    synth->add_option("--seed", synth_args.seed, "Override the synthesis seed");
    synth->add_option("--threads", synth_args.threads, "Worker threads");

    TrainArgs train_args;
    auto* train_deglow = app.add_subcommand("train-deglow", "Train the DeGlow network");
    auto* train_dehaze = app.add_subcommand("train-dehaze", "Train the DeHaze network");
    for (auto* sub : {train_deglow, train_dehaze}) {
        sub->add_option("--config", train_args.config, "Configuration file")->required();
        sub->add_option("--out", train_args.out, "Output checkpoint path");
        sub->add_option("--checkpoint", train_args.init_checkpoint, "Initial weights");
        sub->add_option("--seed", train_args.seed, "Override the training seed");
        sub->add_option("--threads", train_args.threads, "Accepted for symmetry; training is single-threaded");
    }
    train_deglow->add_option("--tau", train_args.tau, "Recurrences of a freshly initialized model");

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Dehaze an image or a directory of images");
    run->add_option("--config", run_args.config, "Configuration file");
    run->add_option("--checkpoint", run_args.checkpoints, "Model checkpoint (repeatable)");
    run->add_option("--input", run_args.input, "Input .ppm file or directory")->required();
    run->add_option("--out", run_args.out, "Output directory")->required();
    run->add_option("--tau", run_args.tau, "DeGlow recurrences");
    run->add_option("--tile-size", run_args.tile_size, "Tile core size (0 = whole frame)");
    run->add_option("--threads", run_args.threads, "Images processed in parallel");
    run->add_option("--seed", run_args.seed, "Accepted for symmetry; inference is deterministic");
    run->add_flag("--dump-intermediates", run_args.dump, "Write J, t and L next to the output");
    run->add_flag("--from-intermediates", run_args.from_intermediates,
                  "Only run recovery from previously dumped intermediates");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
    eval->add_option("--pred", eval_args.pred, "Prediction directory")->required();
    eval->add_option("--truth", eval_args.truth, "Ground-truth directory")->required();
    eval->add_option("--out", eval_args.out, "Report file");
    eval->add_option("--threads", eval_args.threads, "Worker threads");

    std::uint64_t gradcheck_seed = 7;
    auto* gradcheck = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
    gradcheck->add_option("--seed", gradcheck_seed, "Random seed");

    std::vector<std::string> rev(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rev.begin(), rev.end());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error stage=cli file=- kind=usage message=" << quote(e.what()) << '\n';
        err << app.help();
        return 2;
    }

    Context ctx;
    try {
        if (*synth) return cmd_synth(synth_args, ctx, out);
        if (*train_deglow) return cmd_train(train_args, true, ctx, out);
        if (*train_dehaze) return cmd_train(train_args, false, ctx, out);
        if (*run) return cmd_run(run_args, ctx, out);
        if (*eval) return cmd_eval(eval_args, ctx, out);
        if (*gradcheck) {
            ctx.at("gradcheck");
            return cmd_gradcheck(gradcheck_seed, out);
        }
    } catch (const Error& e) {
        err << "error stage=" << ctx.stage << " file=" << ctx.file << " kind=" << e.kind()
            << " message=" << quote(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error stage=" << ctx.stage << " file=" << ctx.file << " kind=runtime message="
            << quote(e.what()) << '\n';
        return 1;
    }
    return 2;
}

}  // namespace nightdehaze::cli
