#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "ucm/gradcheck.hpp"
#include "ucm/runconfig.hpp"
#include "ucm/trainer.hpp"

namespace fs = std::filesystem;
using namespace ucm;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerificationFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

RunConfig load_config_or_default(const std::string& path) {
    RunConfig cfg;
    if (!path.empty()) cfg = load_run_config(path);
    return cfg;
}

dataio::SplitDataset dataset_from_flags(const RunConfig& cfg, const std::string& data_dir,
                                        int synth_n, std::uint64_t seed) {
    const int k = cfg.model.num_classes == 1 ? 2 : cfg.model.num_classes;
    if (synth_n > 0) {
        dataio::Dataset ds = dataio::synth_generate(
            synth_n, std::max(cfg.model.input_h, cfg.model.input_w), k, seed);
        dataio::SplitSpec spec = cfg.split;
        spec.seed = seed;
        auto ids_split = [&] {
            std::vector<std::string> ids;
            for (const auto& s : ds.samples) ids.push_back(s.id);
            return dataio::split(ids, spec);
        }();
        dataio::SplitDataset out;
        out.num_classes = k;
        for (auto& s : ds.samples) {
            const auto in = [&](const std::vector<std::string>& part) {
                for (const auto& id : part)
                    if (id == s.id) return true;
                return false;
            };
            if (in(ids_split[1]))
                out.val.push_back(std::move(s));
            else if (in(ids_split[2]))
                out.test.push_back(std::move(s));
            else
                out.train.push_back(std::move(s));
        }
        return out;
    }
    if (data_dir.empty())
        throw ConfigError("either --data DIR or --synth N is required");
    dataio::SplitSpec spec = cfg.split;
    spec.seed = seed;
    return dataio::load_dataset_dir(data_dir, k, spec);
}

int cmd_train(const std::string& config_path, const std::string& data_dir, int synth_n,
              const std::string& out_path, std::uint64_t seed, bool seed_set) {
    tune_allocator_for_training();
    RunConfig cfg = load_config_or_default(config_path);
    if (seed_set) cfg.optim.seed = seed;
    cfg.validate();
    auto data = dataset_from_flags(cfg, data_dir, synth_n, cfg.optim.seed);
    UCycleMLPModel model(cfg.model, cfg.optim.seed);
    fit(model, data, cfg.loss, cfg.optim, out_path, &std::cout);
    return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& csv_path,
             std::uint64_t seed) {
    LoadedCheckpoint info;
    UCycleMLPModel model = load_checkpoint(ckpt, &info);
    const int k = model.config().num_classes == 1 ? 2 : model.config().num_classes;
    dataio::SplitSpec spec;
    spec.seed = seed;
    auto data = dataio::load_dataset_dir(data_dir, k, spec);
    const auto& samples = !data.test.empty() ? data.test : (!data.val.empty() ? data.val : data.train);
    if (samples.empty()) throw DataError("no samples to evaluate in " + data_dir);

    // aggregate per-class confusion over the evaluation set
    NoGradGuard no_grad;
    Rng dummy(0);
    const int h = model.config().input_h, w = model.config().input_w;
    std::vector<std::int64_t> tp(k, 0), fp(k, 0), fn(k, 0);
    double dice_acc = 0;
    for (const auto& sample : samples) {
        std::vector<const dataio::Sample*> one{&sample};
        auto [image, target] = make_batch(one, h, w);
        auto pred = predict_mask(model.forward(image, false, dummy));
        auto c = confusion(pred, target, k);
        for (int cls = 0; cls < k; ++cls) {
            tp[cls] += c.tp[cls];
            fp[cls] += c.fp[cls];
            fn[cls] += c.fn[cls];
        }
        dice_acc += mean_dice(pred, target, k, true);
    }
    ConfusionCounts agg;
    agg.num_classes = k;
    agg.tp = tp;
    agg.fp = fp;
    agg.fn = fn;
    agg.tn.assign(k, 0);

    std::printf("%-8s %8s %8s %8s\n", "class", "dsc", "f1", "iou");
    for (int cls = 0; cls < k; ++cls)
        std::printf("%-8d %8.4f %8.4f %8.4f\n", cls, dsc_score(agg, cls), f1_score(agg, cls),
                    iou_score(agg, cls));
    std::printf("mean foreground dice over %zu samples: %.4f\n", samples.size(),
                dice_acc / static_cast<double>(samples.size()));

    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw IoError("cannot write " + csv_path);
        csv << "class,dsc,f1,iou\n";
        for (int cls = 0; cls < k; ++cls)
            csv << cls << "," << dsc_score(agg, cls) << "," << f1_score(agg, cls) << ","
                << iou_score(agg, cls) << "\n";
    }
    return kExitOk;
}

int cmd_predict(const std::string& ckpt, const std::string& image_path,
                const std::string& out_path) {
    UCycleMLPModel model = load_checkpoint(ckpt);
    Tensor image = dataio::load_image(image_path);
    dataio::Sample s;
    s.image = image;
    s.height = static_cast<int>(image.dim(1));
    s.width = static_cast<int>(image.dim(2));
    s.mask.assign(static_cast<std::size_t>(s.height) * s.width, 0);
    std::vector<const dataio::Sample*> one{&s};
    auto [batch, target] = make_batch(one, model.config().input_h, model.config().input_w);
    NoGradGuard no_grad;
    Rng dummy(0);
    auto pred = predict_mask(model.forward(batch, false, dummy));

    const int k = model.config().num_classes == 1 ? 2 : model.config().num_classes;
    const int step = 255 / (k - 1);
    std::vector<std::uint8_t> gray(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i)
        gray[i] = static_cast<std::uint8_t>(pred[i] * step);
    dataio::save_pgm(out_path, gray, model.config().input_h, model.config().input_w);
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& level, std::uint64_t seed) {
    bool all_pass = true;
    if (level == "block" || level == "all") {
        for (const auto& r : run_block_gradchecks(seed)) {
            std::printf("%-20s max_rel_err %.3e %s\n", r.name.c_str(), r.max_rel_err,
                        r.pass ? "PASS" : "FAIL");
            all_pass = all_pass && r.pass;
        }
    }
    if (level == "model" || level == "all") {
        const auto r = run_model_gradcheck(seed);
        std::printf("%-20s max_rel_err %.3e %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    return all_pass ? kExitOk : kExitVerificationFailed;
}

int cmd_info(const std::string& config_path) {
    RunConfig cfg = load_config_or_default(config_path);
    cfg.model.validate();
    UCycleMLPModel model(cfg.model, 0);
    std::cout << "parameters: " << model.count_params() << "\n";
    const FlopCount flops = count_flops(cfg.model, cfg.model.input_h, cfg.model.input_w);
    std::cout << "flops @ " << cfg.model.input_h << "x" << cfg.model.input_w << ": " << flops.total
              << " (" << std::fixed << std::setprecision(2) << flops.total / 1e9 << " G)\n";
    std::cout << "position-attention share: " << std::setprecision(1)
              << 100.0 * flops.attention_share() << "% (" << std::setprecision(2)
              << flops.attention / 1e9 << " G)\n";
    std::cout << "stage ladder (channels x height x width):\n";
    for (const auto& st : shape_ladder(cfg.model))
        std::cout << "  " << st.channels << " x " << st.height << " x " << st.width << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& op, const std::vector<int>& sizes, int channels) {
    tune_allocator_for_training();
    if (op != "cyclefc") throw ConfigError("bench: unsupported --op '" + op + "'");
    Rng rng(1);
    auto params = CycleFcParamsT<float>::make(channels, channels, 1, 7, rng);
    std::printf("%8s %16s %12s %14s\n", "size", "flops", "time_ms", "gflops");
    double prev_time = 0;
    int prev_size = 0;
    bool ok = true;
    NoGradGuard no_grad;
    for (const int size : sizes) {
        Tensor x = Tensor::zeros({1, channels, size, size});
        for (auto& v : x.vec()) v = static_cast<float>(rng.uniform(-1, 1));
        cycle_fc(x, params);  // warm up
        double best = 1e300;
        for (int rep = 0; rep < 5; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            cycle_fc(x, params);
            const auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        const std::int64_t flops = cycle_fc_flops(channels, channels, size, size);
        std::printf("%8d %16lld %12.3f %14.2f\n", size, static_cast<long long>(flops),
                    best * 1e3, flops / best / 1e9);
        if (prev_size > 0) {
            const double area_ratio =
                static_cast<double>(size) * size / (static_cast<double>(prev_size) * prev_size);
            const double time_ratio = best / prev_time;
            std::printf("         time ratio %.2fx for %.0fx area\n", time_ratio, area_ratio);
            ok = ok && time_ratio < area_ratio * 1.125;  // < 4.5x per 4x area
        }
        prev_time = best;
        prev_size = size;
    }
    std::printf("counted flops scale exactly linearly in H*W; wall-time scaling %s\n",
                ok ? "within bound" : "EXCEEDS bound");
    return ok ? kExitOk : kExitVerificationFailed;
}

int cmd_synth(int n, int size, int k, std::uint64_t seed, const std::string& out_dir) {
    auto ds = dataio::synth_generate(n, size, k, seed);
    dataio::SplitSpec spec;
    spec.seed = seed;
    dataio::write_dataset(ds, out_dir, spec);
    std::cout << "wrote " << n << " samples to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"U-CycleMLP segmentation toolkit"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path = "model.ckpt", csv_path, image_path, ckpt_path;
    std::string level = "all", bench_op = "cyclefc";
    std::vector<int> sizes{32, 64, 128};
    int synth_n = 0, synth_size = 64, synth_k = 2, bench_channels = 32;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* train = app.add_subcommand("train", "train a model with Dice-gated checkpointing");
    train->add_option("--config", config_path, "run config file (key=value)");
    train->add_option("--data", data_dir, "dataset directory (images/, masks/)");
    train->add_option("--synth", synth_n, "train on N generated synthetic samples");
    train->add_option("--out", out_path, "checkpoint output path");
    train->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
        seed_set = true;
    });

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--csv", csv_path, "also write metrics as CSV");
    eval->add_option("--seed", seed, "split seed when no manifest exists");

    auto* predict = app.add_subcommand("predict", "segment one image to a PGM mask");
    predict->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    predict->add_option("--image", image_path, "input PPM/PGM image")->required();
    predict->add_option("--out", out_path, "output mask path")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference verification suites");
    gradcheck->add_option("--level", level, "block|model|all")
        ->check(CLI::IsMember({"block", "model", "all"}));
    gradcheck->add_option("--seed", seed, "suite seed");

    auto* info = app.add_subcommand("info", "parameter/FLOP accounting and the shape ladder");
    info->add_option("--config", config_path, "run config file");

    auto* bench = app.add_subcommand("bench", "wall-time scaling of an operation");
    bench->add_option("--op", bench_op, "operation (cyclefc)");
    bench->add_option("--sizes", sizes, "square input sizes")->delimiter(',');
    bench->add_option("--channels", bench_channels, "channel count");

    auto* synth = app.add_subcommand("synth", "materialize a synthetic dataset");
    synth->add_option("--n", synth_n, "sample count")->required();
    synth->add_option("--size", synth_size, "square size (divisible by 32)");
    synth->add_option("--classes", synth_k, "2 (binary) or 4 (cardiac-like)");
    synth->add_option("--seed", seed, "generator seed");
    synth->add_option("--out", out_path, "output directory")->required();

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path, data_dir, synth_n, out_path, seed, seed_set);
        if (eval->parsed()) return cmd_eval(ckpt_path, data_dir, csv_path, seed);
        if (predict->parsed()) return cmd_predict(ckpt_path, image_path, out_path);
        if (gradcheck->parsed()) return cmd_gradcheck(level, seed);
        if (info->parsed()) return cmd_info(config_path);
        if (bench->parsed()) return cmd_bench(bench_op, sizes, bench_channels);
        if (synth->parsed()) return cmd_synth(synth_n, synth_size, synth_k, seed, out_path);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitIo;
    } catch (const VersionError& e) {
        std::cerr << "version error: " << e.what() << "\n";
        return kExitIo;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerificationFailed;
    }
    return kExitUsage;
}
