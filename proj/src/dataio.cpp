#include "ucm/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ucm::dataio {
namespace fs = std::filesystem;

void SplitSpec::validate() const {
    if (train_frac < 0 || val_frac < 0 || test_frac < 0)
        throw ConfigError("split spec: fractions must be nonnegative");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("split spec: fractions must sum to 1");
}

namespace {

struct PnmHeader {
    int kind = 0;  // 5 or 6
    int width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::istream& in, const std::string& path) {
    auto next_token = [&in, &path]() {
        std::string tok;
        for (;;) {
            int ch = in.get();
            if (ch == EOF) throw FormatError(path + ": truncated PNM header");
            if (ch == '#') {
                while (ch != '\n' && ch != EOF) ch = in.get();
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
    };
    PnmHeader h;
    const std::string magic = next_token();
    if (magic == "P5")
        h.kind = 5;
    else if (magic == "P6")
        h.kind = 6;
    else
        throw FormatError(path + ": not a binary PGM/PPM file (magic '" + magic + "')");
    try {
        h.width = std::stoi(next_token());
        h.height = std::stoi(next_token());
        h.maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw FormatError(path + ": malformed PNM header");
    }
    if (h.width < 1 || h.height < 1) throw FormatError(path + ": non-positive dimensions");
    if (h.maxval != 255) throw FormatError(path + ": only maxval 255 is supported");
    return h;
}

std::vector<std::uint8_t> read_pnm(const std::string& path, PnmHeader& header) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    header = read_pnm_header(in, path);
    const std::size_t n = static_cast<std::size_t>(header.width) * header.height *
                          (header.kind == 6 ? 3 : 1);
    std::vector<std::uint8_t> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw FormatError(path + ": truncated pixel data");
    return bytes;
}

}  // namespace

Tensor load_image(const std::string& path) {
    PnmHeader h;
    const std::vector<std::uint8_t> bytes = read_pnm(path, h);
    const int hh = h.height, ww = h.width;
    Tensor img = Tensor::zeros({3, hh, ww});
    float* out = img.data();
    const std::int64_t plane = static_cast<std::int64_t>(hh) * ww;
    if (h.kind == 5) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const float v = static_cast<float>(bytes[static_cast<std::size_t>(i)]) / 255.0f;
            out[i] = out[plane + i] = out[2 * plane + i] = v;
        }
    } else {
        for (std::int64_t i = 0; i < plane; ++i)
            for (int c = 0; c < 3; ++c)
                out[c * plane + i] =
                    static_cast<float>(bytes[static_cast<std::size_t>(3 * i + c)]) / 255.0f;
    }
    return img;
}

std::vector<std::int32_t> load_mask(const std::string& path, int num_classes, int* height,
                                    int* width) {
    PnmHeader h;
    const std::vector<std::uint8_t> bytes = read_pnm(path, h);
    if (h.kind != 5) throw FormatError(path + ": masks must be P5 (grayscale)");
    std::vector<std::int32_t> mask(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const int v = bytes[i];
        if (v < num_classes)
            mask[i] = v;
        else if (v == 255 && num_classes == 2)
            mask[i] = 1;  // 0/255 binary corpus convention
        else
            throw DataError(path + ": mask value " + std::to_string(v) + " at pixel " +
                            std::to_string(i) + " exceeds class count " +
                            std::to_string(num_classes));
    }
    if (height) *height = h.height;
    if (width) *width = h.width;
    return mask;
}

void save_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ContractError("save_ppm: image must be 3 x H x W");
    const std::int64_t hh = image.dim(1), ww = image.dim(2), plane = hh * ww;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P6\n" << ww << " " << hh << "\n255\n";
    const float* px = image.data();
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(3 * plane));
    for (std::int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) {
            const float v = std::clamp(px[c * plane + i], 0.0f, 1.0f);
            bytes[static_cast<std::size_t>(3 * i + c)] =
                static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

void save_pgm(const std::string& path, const std::vector<std::uint8_t>& gray, int height,
              int width) {
    if (gray.size() != static_cast<std::size_t>(height) * width)
        throw ContractError("save_pgm: pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << width << " " << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(gray.data()),
              static_cast<std::streamsize>(gray.size()));
    if (!out) throw IoError("write failed for " + path);
}

Sample resize(const Sample& s, int new_h, int new_w) {
    if (new_h < 1 || new_w < 1) throw ConfigError("resize: target dims must be positive");
    if (new_h == s.height && new_w == s.width) return s;
    Sample out;
    out.id = s.id;
    out.height = new_h;
    out.width = new_w;
    out.image = Tensor::zeros({3, new_h, new_w});
    out.mask.resize(static_cast<std::size_t>(new_h) * new_w);

    const float* src = s.image.data();
    float* dst = out.image.data();
    const std::int64_t sp = static_cast<std::int64_t>(s.height) * s.width;
    const std::int64_t dp = static_cast<std::int64_t>(new_h) * new_w;
    const double sy = static_cast<double>(s.height) / new_h;
    const double sx = static_cast<double>(s.width) / new_w;
    for (int oy = 0; oy < new_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        if (fy < 0) fy = 0;
        const int y0 = std::min(static_cast<int>(fy), s.height - 1);
        const int y1 = std::min(y0 + 1, s.height - 1);
        const float wy = static_cast<float>(fy - y0);
        for (int ox = 0; ox < new_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            if (fx < 0) fx = 0;
            const int x0 = std::min(static_cast<int>(fx), s.width - 1);
            const int x1 = std::min(x0 + 1, s.width - 1);
            const float wx = static_cast<float>(fx - x0);
            for (int c = 0; c < 3; ++c) {
                const float* plane = src + c * sp;
                const float top = plane[y0 * s.width + x0] * (1.0f - wx) +
                                  plane[y0 * s.width + x1] * wx;
                const float bot = plane[y1 * s.width + x0] * (1.0f - wx) +
                                  plane[y1 * s.width + x1] * wx;
                dst[c * dp + oy * new_w + ox] = top * (1.0f - wy) + bot * wy;
            }
            // nearest neighbor for the mask
            const int ny = std::min(static_cast<int>((oy + 0.5) * sy), s.height - 1);
            const int nx = std::min(static_cast<int>((ox + 0.5) * sx), s.width - 1);
            out.mask[static_cast<std::size_t>(oy) * new_w + ox] =
                s.mask[static_cast<std::size_t>(ny) * s.width + nx];
        }
    }
    return out;
}

namespace {

Sample flip(const Sample& s, bool horizontal) {
    Sample out;
    out.id = s.id;
    out.height = s.height;
    out.width = s.width;
    out.image = Tensor::zeros({3, s.height, s.width});
    out.mask.resize(s.mask.size());
    const std::int64_t plane = static_cast<std::int64_t>(s.height) * s.width;
    const float* src = s.image.data();
    float* dst = out.image.data();
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            const int syy = horizontal ? y : s.height - 1 - y;
            const int sxx = horizontal ? s.width - 1 - x : x;
            for (int c = 0; c < 3; ++c)
                dst[c * plane + y * s.width + x] = src[c * plane + syy * s.width + sxx];
            out.mask[static_cast<std::size_t>(y) * s.width + x] =
                s.mask[static_cast<std::size_t>(syy) * s.width + sxx];
        }
    }
    return out;
}

}  // namespace

Sample flip_h(const Sample& s) { return flip(s, true); }
Sample flip_v(const Sample& s) { return flip(s, false); }

std::array<std::vector<std::string>, 3> split(std::vector<std::string> ids,
                                              const SplitSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    // Fisher-Yates with the portable bounded draw
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.uniform_below(i)]);
    const std::size_t n = ids.size();
    const std::size_t n_val = static_cast<std::size_t>(spec.val_frac * static_cast<double>(n));
    const std::size_t n_test = static_cast<std::size_t>(spec.test_frac * static_cast<double>(n));
    const std::size_t n_train = n - n_val - n_test;
    std::array<std::vector<std::string>, 3> out;
    out[0].assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    out[1].assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
                  ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out[2].assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
    return out;
}

namespace {

void paint_pixel(Sample& s, int y, int x, float value, std::int32_t cls) {
    const std::int64_t plane = static_cast<std::int64_t>(s.height) * s.width;
    float* px = s.image.data();
    px[y * s.width + x] = value;
    px[plane + y * s.width + x] = value;
    px[2 * plane + y * s.width + x] = value;
    s.mask[static_cast<std::size_t>(y) * s.width + x] = cls;
}

Sample synth_binary(int size, int index, Rng& rng) {
    Sample s;
    s.id = "synth" + std::to_string(index);
    s.height = s.width = size;
    s.image = Tensor::zeros({3, size, size});
    s.mask.assign(static_cast<std::size_t>(size) * size, 0);

    struct Ellipse {
        double cx, cy, a, b, cos_t, sin_t;
    };
    const int count = 1 + static_cast<int>(rng.uniform_below(3));
    std::vector<Ellipse> shapes;
    for (int i = 0; i < count; ++i) {
        Ellipse e;
        e.cx = rng.uniform(0.25, 0.75) * size;
        e.cy = rng.uniform(0.25, 0.75) * size;
        e.a = rng.uniform(0.10, 0.40) * size;
        e.b = rng.uniform(0.10, 0.40) * size;
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        e.cos_t = std::cos(theta);
        e.sin_t = std::sin(theta);
        shapes.push_back(e);
    }
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            bool inside = false;
            for (const auto& e : shapes) {
                const double dx = x + 0.5 - e.cx, dy = y + 0.5 - e.cy;
                const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
                const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
                if (u * u + v * v <= 1.0) {
                    inside = true;
                    break;
                }
            }
            const double base = inside ? 0.8 : 0.2;
            const double noisy = std::clamp(base + 0.1 * rng.normal(), 0.0, 1.0);
            paint_pixel(s, y, x, static_cast<float>(noisy), inside ? 1 : 0);
        }
    }
    return s;
}

Sample synth_cardiac(int size, int index, Rng& rng) {
    Sample s;
    s.id = "synth" + std::to_string(index);
    s.height = s.width = size;
    s.image = Tensor::zeros({3, size, size});
    s.mask.assign(static_cast<std::size_t>(size) * size, 0);

    const double cx = rng.uniform(0.45, 0.65) * size;
    const double cy = rng.uniform(0.35, 0.65) * size;
    const double r_core = rng.uniform(0.08, 0.15) * size;           // LV cavity, class 3
    const double r_ring = r_core + rng.uniform(0.05, 0.10) * size;  // myocardium, class 2
    const double r_rv = rng.uniform(0.08, 0.15) * size;             // RV crescent, class 1
    const double rv_cx = cx - (r_ring + 0.5 * r_rv);
    const double rv_cy = cy;

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double d = std::sqrt(dx * dx + dy * dy);
            std::int32_t cls = 0;
            if (d <= r_core)
                cls = 3;
            else if (d <= r_ring)
                cls = 2;
            else {
                const double rdx = x + 0.5 - rv_cx, rdy = y + 0.5 - rv_cy;
                if (rdx * rdx + rdy * rdy <= r_rv * r_rv) cls = 1;
            }
            static constexpr double kLevel[4] = {0.2, 0.5, 0.7, 0.9};
            const double noisy = std::clamp(kLevel[cls] + 0.1 * rng.normal(), 0.0, 1.0);
            paint_pixel(s, y, x, static_cast<float>(noisy), cls);
        }
    }
    return s;
}

}  // namespace

Dataset synth_generate(int n, int size, int num_classes, std::uint64_t seed) {
    if (size % 32 != 0) throw ConfigError("synth_generate: size must be divisible by 32");
    if (n < 1) throw ConfigError("synth_generate: n must be positive");
    if (num_classes != 2 && num_classes != 4)
        throw ConfigError("synth_generate: only K=2 (binary) and K=4 (cardiac-like) supported");
    Rng rng(seed);
    Dataset ds;
    ds.num_classes = num_classes;
    for (int i = 0; i < n; ++i)
        ds.samples.push_back(num_classes == 2 ? synth_binary(size, i, rng)
                                              : synth_cardiac(size, i, rng));
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir, const SplitSpec& spec) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::vector<std::string> ids;
    for (const auto& s : ds.samples) {
        ids.push_back(s.id);
        save_ppm((fs::path(dir) / "images" / (s.id + ".ppm")).string(), s.image);
        std::vector<std::uint8_t> gray(s.mask.size());
        for (std::size_t i = 0; i < s.mask.size(); ++i)
            gray[i] = ds.num_classes == 2
                          ? static_cast<std::uint8_t>(s.mask[i] ? 255 : 0)
                          : static_cast<std::uint8_t>(s.mask[i]);
        save_pgm((fs::path(dir) / "masks" / (s.id + ".pgm")).string(), gray, s.height, s.width);
    }
    const auto parts = split(ids, spec);
    const char* names[3] = {"train.txt", "val.txt", "test.txt"};
    for (int i = 0; i < 3; ++i) {
        std::ofstream out(fs::path(dir) / names[i]);
        if (!out) throw IoError("cannot write split manifest in " + dir);
        for (const auto& id : parts[static_cast<std::size_t>(i)]) out << id << "\n";
    }
}

namespace {

std::vector<std::string> read_id_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot read split manifest " + p.string());
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

Sample load_sample(const fs::path& dir, const std::string& id, int num_classes) {
    Sample s;
    s.id = id;
    const fs::path img_ppm = dir / "images" / (id + ".ppm");
    const fs::path img_pgm = dir / "images" / (id + ".pgm");
    s.image = load_image(fs::exists(img_ppm) ? img_ppm.string() : img_pgm.string());
    int mh = 0, mw = 0;
    s.mask = load_mask((dir / "masks" / (id + ".pgm")).string(), num_classes, &mh, &mw);
    s.height = static_cast<int>(s.image.dim(1));
    s.width = static_cast<int>(s.image.dim(2));
    if (mh != s.height || mw != s.width)
        throw DataError(id + ": image " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                        " and mask " + std::to_string(mh) + "x" + std::to_string(mw) +
                        " dimensions differ");
    return s;
}

}  // namespace

SplitDataset load_dataset_dir(const std::string& dir, int num_classes, const SplitSpec& spec) {
    const fs::path root(dir);
    if (!fs::is_directory(root / "images") || !fs::is_directory(root / "masks"))
        throw IoError(dir + ": expected images/ and masks/ subdirectories");
    SplitDataset out;
    out.num_classes = num_classes;
    std::array<std::vector<std::string>, 3> parts;
    if (fs::exists(root / "train.txt")) {
        parts[0] = read_id_file(root / "train.txt");
        if (fs::exists(root / "val.txt")) parts[1] = read_id_file(root / "val.txt");
        if (fs::exists(root / "test.txt")) parts[2] = read_id_file(root / "test.txt");
    } else {
        std::vector<std::string> ids;
        for (const auto& entry : fs::directory_iterator(root / "images")) {
            if (!entry.is_regular_file()) continue;
            const fs::path p = entry.path();
            if (p.extension() == ".ppm" || p.extension() == ".pgm") ids.push_back(p.stem().string());
        }
        std::sort(ids.begin(), ids.end());
        if (ids.empty()) throw DataError(dir + ": no images found");
        parts = split(ids, spec);
    }
    for (const auto& id : parts[0]) out.train.push_back(load_sample(root, id, num_classes));
    for (const auto& id : parts[1]) out.val.push_back(load_sample(root, id, num_classes));
    for (const auto& id : parts[2]) out.test.push_back(load_sample(root, id, num_classes));
    return out;
}

}  // namespace ucm::dataio
