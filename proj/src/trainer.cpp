#include "ucm/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <ostream>

#include "ucm/autograd.hpp"
#include "ucm/runconfig.hpp"

namespace ucm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

double clip_grad_norm(ParamStore& params, double max_norm) {
    if (max_norm <= 0.0) throw ConfigError("clip_grad_norm: max_norm must be positive");
    double sq = 0.0;
    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        for (const float g : t.grad_vec()) sq += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return 1.0;
    const double scale = max_norm / norm;
    const float fscale = static_cast<float>(scale);
    for (auto& [name, t] : params) {
        if (!t.has_grad()) continue;
        float* g = t.grad_data();
        const std::int64_t n = t.numel();
        for (std::int64_t i = 0; i < n; ++i) g[i] *= fscale;
    }
    return scale;
}

void adamw_step(ParamStore& params, OptimState& state, const OptimConfig& cfg) {
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params) {
        const std::size_t n = static_cast<std::size_t>(p.numel());
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != n) m.assign(n, 0.0f);
        if (v.size() != n) v.assign(n, 0.0f);
        const bool has_grad = p.has_grad();
        const float* g = has_grad ? p.grad_vec().data() : nullptr;
        float* w = p.data();
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g ? static_cast<double>(g[i]) : 0.0;
            const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            const double wi = static_cast<double>(w[i]);
            w[i] = static_cast<float>(wi - cfg.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps)) -
                                      cfg.lr * cfg.weight_decay * wi);
        }
    }
}

std::pair<Tensor, std::vector<std::int32_t>> make_batch(
    const std::vector<const dataio::Sample*>& samples, int input_h, int input_w) {
    if (samples.empty()) throw ContractError("make_batch: empty batch");
    const std::int64_t n = static_cast<std::int64_t>(samples.size());
    Tensor images = Tensor::zeros({n, 3, input_h, input_w});
    std::vector<std::int32_t> target;
    target.reserve(static_cast<std::size_t>(n) * input_h * input_w);
    const std::int64_t sample_elems = 3ll * input_h * input_w;
    for (std::int64_t i = 0; i < n; ++i) {
        const dataio::Sample* s = samples[static_cast<std::size_t>(i)];
        dataio::Sample resized;
        if (s->height != input_h || s->width != input_w) {
            resized = dataio::resize(*s, input_h, input_w);
            s = &resized;
        }
        std::memcpy(images.data() + i * sample_elems, s->image.data(),
                    static_cast<std::size_t>(sample_elems) * sizeof(float));
        target.insert(target.end(), s->mask.begin(), s->mask.end());
    }
    return {std::move(images), std::move(target)};
}

double train_epoch(UCycleMLPModel& model, const std::vector<dataio::Sample>& train_set,
                   const LossConfig& loss_cfg, const OptimConfig& optim_cfg, OptimState& state,
                   Rng& rng) {
    if (train_set.empty()) throw ContractError("train_epoch: empty training set");
    tune_allocator_for_training();
    const int h = model.config().input_h, w = model.config().input_w;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_below(i)]);

    double loss_acc = 0.0;
    std::size_t seen = 0;
    const std::size_t bs = static_cast<std::size_t>(optim_cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        std::vector<dataio::Sample> augmented;
        augmented.reserve(end - start);
        for (std::size_t i = start; i < end; ++i) {
            dataio::Sample s = dataio::resize(train_set[order[i]], h, w);
            if (rng.uniform() < 0.5) s = dataio::flip_h(s);
            if (rng.uniform() < 0.5) s = dataio::flip_v(s);
            augmented.push_back(std::move(s));
        }
        std::vector<const dataio::Sample*> ptrs;
        for (const auto& s : augmented) ptrs.push_back(&s);
        auto [images, target] = make_batch(ptrs, h, w);

        model.params().zero_grad();
        Tensor logits = model.forward(images, /*training=*/true, rng);
        Tensor loss = compute_loss(logits, target, loss_cfg);
        backward(loss);
        clip_grad_norm(model.params(), optim_cfg.clip_max_norm);
        adamw_step(model.params(), state, optim_cfg);

        loss_acc += static_cast<double>(loss.value()) * static_cast<double>(end - start);
        seen += end - start;
    }
    return loss_acc / static_cast<double>(seen);
}

double evaluate_mean_dice(const UCycleMLPModel& model,
                          const std::vector<dataio::Sample>& samples) {
    if (samples.empty()) throw ContractError("evaluate_mean_dice: empty dataset");
    const int h = model.config().input_h, w = model.config().input_w;
    const int k = model.config().num_classes;
    const int metric_classes = k == 1 ? 2 : k;
    NoGradGuard no_grad;
    Rng dummy(0);
    double acc = 0.0;
    for (const auto& sample : samples) {
        std::vector<const dataio::Sample*> one{&sample};
        auto [image, target] = make_batch(one, h, w);
        Tensor logits = model.forward(image, /*training=*/false, dummy);
        const std::vector<std::int32_t> pred = predict_mask(logits);
        acc += mean_dice(pred, target, metric_classes, /*exclude_background=*/true);
    }
    return acc / static_cast<double>(samples.size());
}

std::pair<double, bool> validate_and_gate(const UCycleMLPModel& model,
                                          const std::vector<dataio::Sample>& val_set, double& best,
                                          const std::string& ckpt_path) {
    const double dice = evaluate_mean_dice(model, val_set);
    const bool improved = dice > best;  // strict
    if (improved) {
        best = dice;
        save_checkpoint(ckpt_path, model, best);
    }
    return {dice, improved};
}

TrainReport fit(UCycleMLPModel& model, const dataio::SplitDataset& data,
                const LossConfig& loss_cfg, const OptimConfig& optim_cfg,
                const std::string& ckpt_path, std::ostream* log) {
    loss_cfg.validate();
    optim_cfg.validate();
    if (data.train.empty()) throw ContractError("fit: empty training split");
    // tiny runs may have no validation split; gate on the training set then
    const std::vector<dataio::Sample>& gate_set = data.val.empty() ? data.train : data.val;

    Rng rng(optim_cfg.seed);
    OptimState state;
    TrainReport report;
    report.best_val_dice = -std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= optim_cfg.epochs; ++epoch) {
        const double loss = train_epoch(model, data.train, loss_cfg, optim_cfg, state, rng);
        const auto [dice, saved] = validate_and_gate(model, gate_set, report.best_val_dice, ckpt_path);
        report.epochs.push_back({epoch, loss, dice, saved});
        if (log)
            (*log) << "epoch " << epoch << " loss " << loss << " val_dice " << dice << " saved "
                   << (saved ? 1 : 0) << "\n";
    }
    report.steps = state.step_count;
    return report;
}

namespace {

constexpr char kMagic[4] = {'U', 'C', 'M', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
    const auto n = read_pod<std::uint64_t>(in, path);
    if (n > (1ull << 32)) throw FormatError(path + ": implausible string length");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw FormatError(path + ": truncated checkpoint");
    return s;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
    write_string(out, name);
    write_pod<std::uint8_t>(out, 0);  // dtype 0 = f32
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d = 0; d < t.rank(); ++d)
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(t.shape()[d]));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

}  // namespace

void save_checkpoint(const std::string& path, const UCycleMLPModel& model, double best_val_dice) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_string(out, model_config_to_text(model.config()));
    write_pod<double>(out, best_val_dice);
    write_pod<std::uint64_t>(out, model.params().size() + model.buffers().size());
    for (const auto& [name, t] : model.params()) write_tensor(out, name, t);
    for (const auto& [name, t] : model.buffers()) write_tensor(out, name, t);
    if (!out) throw IoError("write failed for checkpoint " + path);
}

UCycleMLPModel load_checkpoint(const std::string& path, LoadedCheckpoint* info) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError(path + ": not a UCMK checkpoint (bad magic)");
    const auto version = read_pod<std::uint32_t>(in, path);
    if (version != kVersion)
        throw VersionError(path + ": unsupported checkpoint version " + std::to_string(version) +
                           ", expected " + std::to_string(kVersion));
    const ModelConfig cfg = model_config_from_text(read_string(in, path));
    const double best = read_pod<double>(in, path);

    UCycleMLPModel model(cfg, /*seed=*/0);
    std::size_t filled = 0;
    const auto count = read_pod<std::uint64_t>(in, path);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, path);
        const auto dtype = read_pod<std::uint8_t>(in, path);
        if (dtype != 0) throw FormatError(path + ": unsupported dtype code for " + name);
        const auto rank = read_pod<std::uint8_t>(in, path);
        Shape shape;
        for (int d = 0; d < rank; ++d)
            shape.push_back(static_cast<std::int64_t>(read_pod<std::uint64_t>(in, path)));
        Tensor* dst = nullptr;
        if (model.params().contains(name))
            dst = &model.params().get(name);
        else if (model.buffers().contains(name))
            dst = &model.buffers().get(name);
        else
            throw FormatError(path + ": unknown tensor '" + name + "' for this architecture");
        if (dst->shape() != shape)
            throw FormatError(path + ": shape mismatch for '" + name + "': stored " +
                              shape_str(shape) + ", model " + shape_str(dst->shape()));
        in.read(reinterpret_cast<char*>(dst->data()),
                static_cast<std::streamsize>(dst->numel() * sizeof(float)));
        if (!in) throw FormatError(path + ": truncated tensor data for '" + name + "'");
        ++filled;
    }
    if (filled != model.params().size() + model.buffers().size())
        throw FormatError(path + ": checkpoint is missing tensors (" + std::to_string(filled) +
                          " of " +
                          std::to_string(model.params().size() + model.buffers().size()) + ")");
    if (info) {
        info->config = cfg;
        info->best_val_dice = best;
    }
    return model;
}

}  // namespace ucm
