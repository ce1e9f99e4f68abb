#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ucm/tensor.hpp"

namespace ucm::dataio {

// One image-mask pair. Images are 3 x H x W reals in [0,1]; masks are H*W
// class indices in [0, K).
struct Sample {
    Tensor image;
    std::vector<std::int32_t> mask;
    int height = 0;
    int width = 0;
    std::string id;
};

struct SplitSpec {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 2;
};

struct SplitDataset {
    std::vector<Sample> train, val, test;
    int num_classes = 2;
};

// 8-bit binary PGM (P5) / PPM (P6), maxval 255. Grayscale is replicated to
// three channels; values scale to [0,1].
Tensor load_image(const std::string& path);

// Class indices read directly from a P5 file; 0/255 binary corpora map to
// {0,1}. Any other value >= K is a DataError naming the pixel.
std::vector<std::int32_t> load_mask(const std::string& path, int num_classes, int* height,
                                    int* width);

void save_ppm(const std::string& path, const Tensor& image);                       // 3 x H x W
void save_pgm(const std::string& path, const std::vector<std::uint8_t>& gray, int height,
              int width);

// image bilinear, mask nearest-neighbor
Sample resize(const Sample& s, int new_h, int new_w);

Sample flip_h(const Sample& s);
Sample flip_v(const Sample& s);

// seeded shuffle then prefix partition; val/test get floor(frac*n), the
// remainder goes to train
std::array<std::vector<std::string>, 3> split(std::vector<std::string> ids, const SplitSpec& spec);

// Desk-scale synthetic stand-in: K=2 draws 1-3 random ellipses over a noisy
// background; K=4 draws ACDC-like concentric structures (core class 3, ring
// class 2, offset crescent class 1). size must be divisible by 32.
Dataset synth_generate(int n, int size, int num_classes, std::uint64_t seed);

// directory layout: images/<id>.ppm, masks/<id>.pgm, train.txt/val.txt/test.txt
void write_dataset(const Dataset& ds, const std::string& dir, const SplitSpec& spec);

SplitDataset load_dataset_dir(const std::string& dir, int num_classes, const SplitSpec& spec);

}  // namespace ucm::dataio
