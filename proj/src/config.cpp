#include "nightdehaze/config.hpp"

#include "nightdehaze/error.hpp"
#include "nightdehaze/netpbm.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <map>
#include <set>
#include <sstream>

namespace nightdehaze::config {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"pipeline", {"deglow_checkpoint", "dehaze_checkpoint", "tau", "t_min", "tile_size"}},
        {"synthesis",
         {"pairs", "clean_dir", "depth_dir", "width", "height", "beta_min", "beta_max",
          "beta_samples", "q_min", "q_max", "q_samples", "light_min", "light_max", "taylor",
          "sources_min", "sources_max", "radius_min", "radius_max", "mask_threshold", "seed",
          "threads"}},
        {"train",
         {"manifest", "validation_fraction", "learning_rate", "momentum", "weight_decay",
          "batch_size", "max_iterations", "patience", "min_improvement", "validation_interval",
          "log_interval", "checkpoint_interval", "patch_size", "clip_norm", "seed", "init"}},
        {"deglow", {"features", "tau", "tied", "harden", "lambda1", "lambda2"}},
        {"dehaze", {"features"}},
    };
    return keys;
}

class Reader {
public:
    Reader(const pt::ptree& tree, fs::path base) : tree_(tree), base_(std::move(base)) {}

    template <class T>
    void get(const std::string& key, T& out) const {
        const auto node = tree_.get_child_optional(pt::ptree::path_type(key, '/'));
        if (!node) return;
        try {
            out = node->get_value<T>();
        } catch (const pt::ptree_bad_data&) {
            throw ParameterError("config key '" + key + "' has invalid value '" + node->data() + "'");
        }
    }

    void get_bool(const std::string& key, bool& out) const {
        std::string v;
        get(key, v);
        if (v.empty()) return;
        if (v == "1" || v == "true" || v == "yes" || v == "on") {
            out = true;
        } else if (v == "0" || v == "false" || v == "no" || v == "off") {
            out = false;
        } else {
            throw ParameterError("config key '" + key + "' expects a boolean, got '" + v + "'");
        }
    }

    void get_path(const std::string& key, fs::path& out) const {
        std::string v;
        get(key, v);
        if (v.empty()) return;
        fs::path p(v);
        out = p.is_relative() && !base_.empty() ? base_ / p : p;
    }

private:
    const pt::ptree& tree_;
    fs::path base_;
};

}  // namespace

void PipelineConfig::validate() const {
    synthesis.validate();
    schedule.validate();
    deglow.validate();
    loss.validate();
    if (tau < 0) throw ParameterError("pipeline.tau must be >= 0");
    if (!(t_min > 0.0f && t_min < 1.0f)) throw ParameterError("pipeline.t_min must lie in (0,1)");
    if (tile_size < 0) throw ParameterError("pipeline.tile_size must be >= 0");
    if (procedural_pairs < 1) throw ParameterError("synthesis.pairs must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ParameterError("train.validation_fraction must lie in [0,1)");
    }
    if (dehaze.features < 1) throw ParameterError("dehaze.features must be >= 1");
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParameterError("config parse error: " + e.message() + " (line " +
                             std::to_string(e.line()) + ")");
    }
    for (const auto& [section, body] : tree) {
        const auto it = known_keys().find(section);
        if (it == known_keys().end()) throw ParameterError("unknown config section [" + section + "]");
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw ParameterError("unknown config key '" + key + "' in [" + section + "]");
            }
        }
    }

    const Reader r(tree, base_dir);
    PipelineConfig c;
    r.get_path("pipeline/deglow_checkpoint", c.deglow_checkpoint);
    r.get_path("pipeline/dehaze_checkpoint", c.dehaze_checkpoint);
    r.get("pipeline/tau", c.tau);
    r.get("pipeline/t_min", c.t_min);
    r.get("pipeline/tile_size", c.tile_size);

    auto& s = c.synthesis;
    r.get("synthesis/pairs", c.procedural_pairs);
    r.get_path("synthesis/clean_dir", c.clean_dir);
    r.get_path("synthesis/depth_dir", c.depth_dir);
    r.get("synthesis/width", s.width);
    r.get("synthesis/height", s.height);
    r.get("synthesis/beta_min", s.beta.lo);
    r.get("synthesis/beta_max", s.beta.hi);
    r.get("synthesis/beta_samples", s.beta_samples);
    r.get("synthesis/q_min", s.q.lo);
    r.get("synthesis/q_max", s.q.hi);
    r.get("synthesis/q_samples", s.q_samples);
    r.get("synthesis/light_min", s.light.lo);
    r.get("synthesis/light_max", s.light.hi);
    r.get_bool("synthesis/taylor", s.use_taylor_glow);
    r.get("synthesis/sources_min", s.sources.lo);
    r.get("synthesis/sources_max", s.sources.hi);
    r.get("synthesis/radius_min", s.glow_radius.lo);
    r.get("synthesis/radius_max", s.glow_radius.hi);
    r.get("synthesis/mask_threshold", s.mask_threshold);
    r.get("synthesis/seed", s.seed);
    r.get("synthesis/threads", s.threads);

    auto& t = c.schedule;
    r.get_path("train/manifest", c.manifest);
    r.get("train/validation_fraction", c.validation_fraction);
    r.get("train/learning_rate", t.learning_rate);
    r.get("train/momentum", t.momentum);
    r.get("train/weight_decay", t.weight_decay);
    r.get("train/batch_size", t.batch_size);
    r.get("train/max_iterations", t.max_iterations);
    r.get("train/patience", t.patience);
    r.get("train/min_improvement", t.min_improvement);
    r.get("train/validation_interval", t.validation_interval);
    r.get("train/log_interval", t.log_interval);
    r.get("train/checkpoint_interval", t.checkpoint_interval);
    r.get("train/patch_size", t.patch_size);
    r.get("train/clip_norm", t.clip_norm);
    r.get("train/seed", t.seed);
    std::string init;
    r.get("train/init", init);
    if (!init.empty()) c.init = nets::parse_init_scheme(init);

    r.get("deglow/features", c.deglow.features);
    r.get("deglow/tau", c.deglow.recurrences);
    r.get_bool("deglow/tied", c.deglow.tied);
    r.get_bool("deglow/harden", c.deglow.harden_mask);
    r.get("deglow/lambda1", c.loss.lambda1);
    r.get("deglow/lambda2", c.loss.lambda2);
    r.get("dehaze/features", c.dehaze.features);

    c.validate();
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = netpbm::read_file(path);
    } catch (const IoError&) {
        throw IoError("cannot read config " + path.string());
    }
    return parse_config(text, path.parent_path());
}

}  // namespace nightdehaze::config
