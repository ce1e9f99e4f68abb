#include "ucm/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace ucm {
namespace {

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

bool apply_model_entry(ModelConfig& m, const std::string& key, const std::string& value) {
    if (key == "in_channels")
        m.in_channels = parse_int(key, value);
    else if (key == "base_channels")
        m.base_channels = parse_int(key, value);
    else if (key == "stages")
        m.stages = parse_int(key, value);
    else if (key == "num_classes")
        m.num_classes = parse_int(key, value);
    else if (key == "dense_depth")
        m.dense_depth = parse_int(key, value);
    else if (key == "growth")
        m.growth = parse_int(key, value);
    else if (key == "dilation")
        m.dilation = parse_int(key, value);
    else if (key == "we_reduction")
        m.we_reduction = parse_int(key, value);
    else if (key == "dropout")
        m.dropout = parse_double(key, value);
    else if (key == "use_ccm")
        m.use_ccm = parse_bool(key, value);
    else if (key == "upsampler") {
        if (value == "transposed")
            m.upsampler = ModelConfig::Upsampler::kTransposed;
        else if (value == "bilinear")
            m.upsampler = ModelConfig::Upsampler::kBilinear;
        else
            throw ConfigError("config key 'upsampler': expected transposed|bilinear, got '" +
                              value + "'");
    } else if (key == "input_h")
        m.input_h = parse_int(key, value);
    else if (key == "input_w")
        m.input_w = parse_int(key, value);
    else
        return false;
    return true;
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    optim.validate();
    loss.validate();
    split.validate();
}

void apply_run_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (apply_model_entry(cfg.model, key, value)) return;
    if (key == "lr")
        cfg.optim.lr = parse_double(key, value);
    else if (key == "beta1")
        cfg.optim.beta1 = parse_double(key, value);
    else if (key == "beta2")
        cfg.optim.beta2 = parse_double(key, value);
    else if (key == "eps")
        cfg.optim.eps = parse_double(key, value);
    else if (key == "weight_decay")
        cfg.optim.weight_decay = parse_double(key, value);
    else if (key == "clip_max_norm")
        cfg.optim.clip_max_norm = parse_double(key, value);
    else if (key == "epochs")
        cfg.optim.epochs = parse_int(key, value);
    else if (key == "batch_size")
        cfg.optim.batch_size = parse_int(key, value);
    else if (key == "seed")
        cfg.optim.seed = parse_u64(key, value);
    else if (key == "loss_mode") {
        if (value == "hybrid_ce_dice")
            cfg.loss.mode = LossConfig::Mode::kHybridCeDice;
        else if (value == "bce_focal")
            cfg.loss.mode = LossConfig::Mode::kBceFocal;
        else
            throw ConfigError("config key 'loss_mode': expected hybrid_ce_dice|bce_focal, got '" +
                              value + "'");
    } else if (key == "loss_alpha")
        cfg.loss.alpha = parse_double(key, value);
    else if (key == "focal_gamma")
        cfg.loss.gamma = parse_double(key, value);
    else if (key == "dice_smooth")
        cfg.loss.dice_smooth = parse_double(key, value);
    else if (key == "train_frac")
        cfg.split.train_frac = parse_double(key, value);
    else if (key == "val_frac")
        cfg.split.val_frac = parse_double(key, value);
    else if (key == "test_frac")
        cfg.split.test_frac = parse_double(key, value);
    else if (key == "data_dir")
        cfg.data_dir = value;
    else
        throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        apply_run_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.split.seed = cfg.optim.seed;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config_text(buf.str());
}

std::string model_config_to_text(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "in_channels=" << cfg.in_channels << "\n";
    out << "base_channels=" << cfg.base_channels << "\n";
    out << "stages=" << cfg.stages << "\n";
    out << "num_classes=" << cfg.num_classes << "\n";
    out << "dense_depth=" << cfg.dense_depth << "\n";
    out << "growth=" << cfg.growth << "\n";
    out << "dilation=" << cfg.dilation << "\n";
    out << "we_reduction=" << cfg.we_reduction << "\n";
    out << "dropout=" << cfg.dropout << "\n";
    out << "use_ccm=" << (cfg.use_ccm ? 1 : 0) << "\n";
    out << "upsampler="
        << (cfg.upsampler == ModelConfig::Upsampler::kTransposed ? "transposed" : "bilinear")
        << "\n";
    out << "input_h=" << cfg.input_h << "\n";
    out << "input_w=" << cfg.input_w << "\n";
    return out.str();
}

ModelConfig model_config_from_text(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed model config line: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!apply_model_entry(cfg, key, value))
            throw FormatError("unknown model config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace ucm
