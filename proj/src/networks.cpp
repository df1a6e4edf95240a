#include "nightdehaze/networks.hpp"

#include "nightdehaze/error.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace nightdehaze::nets {

namespace {

std::map<std::string, std::string> parse_descriptor(const std::string& descriptor) {
    std::map<std::string, std::string> out;
    std::istringstream ss(descriptor);
    std::string tok;
    while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw LoadError("malformed descriptor token '" + tok + "'");
        out[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return out;
}

int descriptor_int(const std::map<std::string, std::string>& d, const std::string& key) {
    const auto it = d.find(key);
    if (it == d.end()) throw LoadError("checkpoint descriptor lacks '" + key + "'");
    try {
        return std::stoi(it->second);
    } catch (const std::exception&) {
        throw LoadError("checkpoint descriptor has non-integer '" + key + "'");
    }
}

template <class T>
void init_conv(BasicConvParams<T>& p, std::mt19937_64& rng, InitScheme scheme) {
    const int fan_in = p.in_channels() * p.kernel() * p.kernel();
    const float stddev = scheme == InitScheme::Narrow ? tensor::kNarrowInitStd
                                                     : std::sqrt(2.0f / static_cast<float>(fan_in));
    p.weight = tensor::tensor_cast<T>(tensor::gaussian_init(p.weight.shape(), rng, stddev));
    p.bias = BasicTensor<T>(p.bias.shape(), T(0));
}

template <class T>
void add_conv(std::vector<BasicParamRef<T>>& out, const std::string& name, BasicConvParams<T>& p) {
    out.push_back({name + ".weight", &p.weight, true});
    out.push_back({name + ".bias", &p.bias, false});
}

template <class T>
checkpoint::Checkpoint snapshot(std::string descriptor, const std::vector<BasicParamRef<T>>& refs) {
    checkpoint::Checkpoint ckpt;
    ckpt.descriptor = std::move(descriptor);
    for (const auto& r : refs) ckpt.params.push_back({r.name, tensor::tensor_cast<float>(*r.tensor)});
    return ckpt;
}

template <class T>
void restore(const checkpoint::Checkpoint& ckpt, const std::vector<BasicParamRef<T>>& refs) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& p : ckpt.params) by_name[p.name] = &p.value;
    if (by_name.size() != refs.size()) {
        throw LoadError("checkpoint holds " + std::to_string(by_name.size()) +
                        " parameters, architecture expects " + std::to_string(refs.size()));
    }
    for (const auto& r : refs) {
        const auto it = by_name.find(r.name);
        if (it == by_name.end()) throw LoadError("checkpoint is missing parameter " + r.name);
        if (it->second->shape() != r.tensor->shape()) {
            throw LoadError("parameter " + r.name + " has shape " + it->second->shape().str() +
                            ", expected " + r.tensor->shape().str());
        }
        *r.tensor = tensor::tensor_cast<T>(*it->second);
    }
}

}  // namespace

std::string to_string(InitScheme s) { return s == InitScheme::Narrow ? "narrow" : "scaled"; }

InitScheme parse_init_scheme(const std::string& s) {
    if (s == "narrow") return InitScheme::Narrow;
    if (s == "scaled") return InitScheme::Scaled;
    throw ParameterError("unknown init scheme '" + s + "' (expected narrow|scaled)");
}

// ---------------------------------------------------------------------------
// ContextualDilatedBlock

namespace {

int positive_width(int features) {
    if (features < 1) throw ParameterError("feature width must be >= 1");
    return features;
}

}  // namespace

template <class T>
BasicContextualDilatedBlock<T>::BasicContextualDilatedBlock(int in_channels, int features,
                                                            bool feedback)
    : entry1(in_channels, positive_width(features)),
      entry2(features, features),
      fusion(features, features),
      features_(features),
      feedback_(feedback) {
    for (int p = 0; p < 3; ++p) {
        for (auto& conv : paths[p]) conv = BasicConvParams<T>(features, features, 3, kPathDilations[p]);
    }
    if (feedback) gate = BasicConvParams<T>(features, features, 1, 1);
}

template <class T>
NodeId BasicContextualDilatedBlock<T>::forward(BasicGraph<T>& g, NodeId input,
                                               std::optional<NodeId> previous) {
    NodeId entry = g.relu(g.conv(g.relu(g.conv(input, entry1)), entry2));
    if (feedback_ && previous) entry = g.add(entry, g.conv(*previous, gate));

    std::optional<NodeId> sum;
    for (auto& path : paths) {
        NodeId h = entry;
        for (auto& conv : path) h = g.relu(g.conv(h, conv));
        sum = sum ? g.add(*sum, h) : h;
    }
    return g.relu(g.conv(*sum, fusion));
}

template <class T>
void BasicContextualDilatedBlock<T>::collect(std::vector<BasicParamRef<T>>& out,
                                             const std::string& prefix) {
    add_conv(out, prefix + "entry1", entry1);
    add_conv(out, prefix + "entry2", entry2);
    for (int p = 0; p < 3; ++p) {
        for (int l = 0; l < 3; ++l) {
            add_conv(out, prefix + "path" + std::to_string(p + 1) + "." + std::to_string(l),
                     paths[p][l]);
        }
    }
    add_conv(out, prefix + "fusion", fusion);
    if (feedback_) add_conv(out, prefix + "gate", gate);
}

template <class T>
void BasicContextualDilatedBlock<T>::initialize(std::mt19937_64& rng, InitScheme scheme) {
    init_conv(entry1, rng, scheme);
    init_conv(entry2, rng, scheme);
    for (auto& path : paths)
        for (auto& conv : path) init_conv(conv, rng, scheme);
    init_conv(fusion, rng, scheme);
    if (feedback_) init_conv(gate, rng, scheme);
}

// ---------------------------------------------------------------------------
// DeGlow

void DeGlowConfig::validate() const {
    if (features < 1) throw ParameterError("features must be >= 1");
    if (recurrences < 1) throw ParameterError("recurrences (tau) must be >= 1");
}

template <class T>
BasicDeGlowModel<T>::BasicDeGlowModel(DeGlowConfig config) : config_(config) {
    config_.validate();
    const int f = config_.features;
    const int count = config_.tied ? 1 : config_.recurrences;
    for (int i = 0; i < count; ++i) {
        DeGlowStage<T> s;
        s.block = BasicContextualDilatedBlock<T>(3, f, /*feedback=*/true);
        s.head_glow = BasicConvParams<T>(f, 2);
        s.head_streak1 = BasicConvParams<T>(f + 1, f);
        s.head_streak2 = BasicConvParams<T>(f, 3);
        s.head_residual = BasicConvParams<T>(f + 1 + 3 + 3, 3);
        stages_.push_back(std::move(s));
    }
}

template <class T>
StepNodes BasicDeGlowModel<T>::step(BasicGraph<T>& g, NodeId input, std::optional<NodeId> previous,
                                    int t) {
    if (t < 0 || t >= config_.recurrences) {
        throw ParameterError("recurrence index " + std::to_string(t) + " out of range");
    }
    const auto& s = g.value(input).shape();
    if (s.c != 3) throw DimensionError("DeGlow expects N×3×H×W input, got " + s.str());

    DeGlowStage<T>& st = stage(t);
    StepNodes n{};
    n.features = st.block.forward(g, input, previous);
    n.glow_logits = g.conv(n.features, st.head_glow);
    n.glow = g.softmax2_first(n.glow_logits);
    const NodeId mask = config_.harden_mask ? g.harden(n.glow) : n.glow;
    n.streak = g.relu(g.conv(g.relu(g.conv(g.concat({n.features, mask}), st.head_streak1)),
                             st.head_streak2));
    const NodeId deglowed = g.sub(input, g.mul_mask(n.glow, n.streak));
    n.residual = g.conv(g.concat({n.features, n.glow, n.streak, deglowed}), st.head_residual);
    n.output = g.sub(input, n.residual);
    return n;
}

template <class T>
UnrollNodes BasicDeGlowModel<T>::unroll(BasicGraph<T>& g, NodeId input, int tau) {
    if (tau < 1) throw ParameterError("tau must be >= 1");
    if (tau > config_.recurrences && !config_.tied) {
        throw ParameterError("untied model has only " + std::to_string(config_.recurrences) +
                             " parameter sets");
    }
    UnrollNodes u{input, {}};
    NodeId current = input;
    std::optional<NodeId> previous;
    for (int t = 0; t < tau; ++t) {
        const int slot = config_.tied ? 0 : t;
        StepNodes n = step(g, current, previous, std::min(slot, config_.recurrences - 1));
        previous = n.features;
        current = n.output;
        u.steps.push_back(n);
    }
    return u;
}

template <class T>
std::vector<BasicParamRef<T>> BasicDeGlowModel<T>::parameters() {
    std::vector<BasicParamRef<T>> out;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
        auto& s = stages_[i];
        const std::string p = "stage" + std::to_string(i) + ".";
        s.block.collect(out, p + "block.");
        add_conv(out, p + "head_glow", s.head_glow);
        add_conv(out, p + "head_streak1", s.head_streak1);
        add_conv(out, p + "head_streak2", s.head_streak2);
        add_conv(out, p + "head_residual", s.head_residual);
    }
    return out;
}

template <class T>
void BasicDeGlowModel<T>::initialize(std::uint64_t seed, InitScheme scheme) {
    std::mt19937_64 rng(seed);
    for (auto& s : stages_) {
        s.block.initialize(rng, scheme);
        init_conv(s.head_glow, rng, scheme);
        init_conv(s.head_streak1, rng, scheme);
        init_conv(s.head_streak2, rng, scheme);
        init_conv(s.head_residual, rng, scheme);
    }
}

template <class T>
checkpoint::Checkpoint BasicDeGlowModel<T>::to_checkpoint() const {
    std::ostringstream d;
    d << "kind=deglow features=" << config_.features << " tau=" << config_.recurrences
      << " tied=" << (config_.tied ? 1 : 0) << " harden=" << (config_.harden_mask ? 1 : 0);
    return snapshot(d.str(), const_cast<BasicDeGlowModel*>(this)->parameters());
}

template <class T>
BasicDeGlowModel<T> BasicDeGlowModel<T>::from_checkpoint(const checkpoint::Checkpoint& ckpt) {
    const auto d = parse_descriptor(ckpt.descriptor);
    if (checkpoint_kind(ckpt.descriptor) != "deglow") {
        throw LoadError("checkpoint is not a DeGlow model (" + ckpt.descriptor + ")");
    }
    DeGlowConfig cfg;
    cfg.features = descriptor_int(d, "features");
    cfg.recurrences = descriptor_int(d, "tau");
    cfg.tied = descriptor_int(d, "tied") != 0;
    cfg.harden_mask = descriptor_int(d, "harden") != 0;
    BasicDeGlowModel m(cfg);
    restore(ckpt, m.parameters());
    return m;
}

DeGlowStepResult deglow_step(const Tensor& input, DeGlowModel& model) {
    Graph g;
    const StepNodes n = model.step(g, g.constant(input), std::nullopt, 0);
    return {g.value(n.residual), g.value(n.glow), g.value(n.streak)};
}

DeGlowTrace deglow_unroll(const Tensor& input, DeGlowModel& model, int tau) {
    Graph g;
    const UnrollNodes u = model.unroll(g, g.constant(input), tau);
    DeGlowTrace trace;
    trace.output = g.value(u.output());
    for (const auto& s : u.steps) {
        trace.steps.push_back({g.value(s.residual), g.value(s.glow), g.value(s.streak)});
        trace.glow_logits.push_back(g.value(s.glow_logits));
        trace.outputs.push_back(g.value(s.output));
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Losses

void LossConfig::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ParameterError("loss weights must be >= 0");
}

template <class T>
NodeId deglow_loss(BasicGraph<T>& g, const UnrollNodes& trace, const DeGlowTargets& targets,
                   const LossConfig& config) {
    config.validate();
    const NodeId clean = g.constant(tensor::tensor_cast<T>(targets.clean));
    const NodeId streak = g.constant(tensor::tensor_cast<T>(targets.streak));
    const BasicTensor<T> glow = tensor::tensor_cast<T>(targets.glow);
    std::vector<std::pair<NodeId, double>> terms;
    for (const auto& s : trace.steps) {
        const NodeId direct = g.mse(s.output, clean);
        terms.emplace_back(direct, 1.0 + config.lambda1);
        terms.emplace_back(g.mse(s.streak, streak), config.lambda1);
        terms.emplace_back(g.softmax2_cross_entropy(s.glow_logits, glow), config.lambda2);
    }
    return g.weighted_sum(terms);
}

double deglow_loss(const DeGlowTrace& trace, const DeGlowTargets& targets,
                   const LossConfig& config) {
    config.validate();
    for (float v : targets.glow.data()) {
        if (v != 0.0f && v != 1.0f) throw DataError("glow target must be binary");
    }
    auto mse = [](const Tensor& a, const Tensor& b) {
        if (a.shape() != b.shape()) throw DimensionError("deglow_loss: shape mismatch");
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = static_cast<double>(a[i]) - b[i];
            acc += d * d;
        }
        return acc / static_cast<double>(a.size());
    };
    double total = 0.0;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const Tensor& logits = trace.glow_logits[t];
        const auto s = logits.shape();
        double bce = 0.0;
        for (int n = 0; n < s.n; ++n)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) {
                    // -[y log p + (1-y) log(1-p)] with p = sigmoid(z), as softplus(z) - y z
                    const double z = static_cast<double>(logits.at(n, 0, y, x)) - logits.at(n, 1, y, x);
                    const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
                    bce += softplus - targets.glow.at(n, 0, y, x) * z;
                }
        bce /= static_cast<double>(s.n) * s.h * s.w;
        const double direct = mse(trace.outputs[t], targets.clean);
        total += direct + config.lambda1 * (mse(trace.steps[t].streak, targets.streak) + direct) +
                 config.lambda2 * bce;
    }
    return total;
}

// ---------------------------------------------------------------------------
// DeHaze

template <class T>
BasicDeHazeModel<T>::BasicDeHazeModel(DeHazeConfig config)
    : block(3, config.features, /*feedback=*/false), head(config.features, 1), config_(config) {}

template <class T>
NodeId BasicDeHazeModel<T>::forward(BasicGraph<T>& g, NodeId input) {
    const auto& s = g.value(input).shape();
    if (s.c != 3) throw DimensionError("DeHaze expects N×3×H×W input, got " + s.str());
    return g.sigmoid(g.conv(block.forward(g, input, std::nullopt), head));
}

template <class T>
std::vector<BasicParamRef<T>> BasicDeHazeModel<T>::parameters() {
    std::vector<BasicParamRef<T>> out;
    block.collect(out, "block.");
    add_conv(out, "head", head);
    return out;
}

template <class T>
void BasicDeHazeModel<T>::initialize(std::uint64_t seed, InitScheme scheme) {
    std::mt19937_64 rng(seed);
    block.initialize(rng, scheme);
    init_conv(head, rng, scheme);
}

template <class T>
checkpoint::Checkpoint BasicDeHazeModel<T>::to_checkpoint() const {
    return snapshot("kind=dehaze features=" + std::to_string(config_.features),
                    const_cast<BasicDeHazeModel*>(this)->parameters());
}

template <class T>
BasicDeHazeModel<T> BasicDeHazeModel<T>::from_checkpoint(const checkpoint::Checkpoint& ckpt) {
    const auto d = parse_descriptor(ckpt.descriptor);
    if (checkpoint_kind(ckpt.descriptor) != "dehaze") {
        throw LoadError("checkpoint is not a DeHaze model (" + ckpt.descriptor + ")");
    }
    BasicDeHazeModel m(DeHazeConfig{descriptor_int(d, "features")});
    restore(ckpt, m.parameters());
    return m;
}

Tensor dehaze_forward(const Tensor& input, DeHazeModel& model, std::optional<float> t_min) {
    Graph g;
    Tensor t = g.value(model.forward(g, g.constant(input)));
    if (t_min) {
        for (float& v : t.data()) v = std::max(v, *t_min);
    }
    return t;
}

double dehaze_loss(const Tensor& predicted, const Tensor& truth) {
    if (predicted.shape() != truth.shape()) throw DimensionError("dehaze_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double d = static_cast<double>(predicted[i]) - truth[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predicted.size());
}

std::string checkpoint_kind(const std::string& descriptor) {
    const auto d = parse_descriptor(descriptor);
    const auto it = d.find("kind");
    return it == d.end() ? std::string{} : it->second;
}

template class BasicContextualDilatedBlock<float>;
template class BasicContextualDilatedBlock<double>;
template class BasicDeGlowModel<float>;
template class BasicDeGlowModel<double>;
template class BasicDeHazeModel<float>;
template class BasicDeHazeModel<double>;
template NodeId deglow_loss(BasicGraph<float>&, const UnrollNodes&, const DeGlowTargets&,
                            const LossConfig&);
template NodeId deglow_loss(BasicGraph<double>&, const UnrollNodes&, const DeGlowTargets&,
                            const LossConfig&);

}  // namespace nightdehaze::nets
