#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "durr/common.hpp"
#include "durr/image.hpp"

namespace durr {

enum class Degradation { Gaussian, Jpeg };

struct DegradationSpec {
    Degradation kind = Degradation::Gaussian;
    double level = 25.0;  // sigma on the 0-255 scale, or JPEG quality factor
    std::uint64_t seed = 0;
};

// i.i.d. Normal(0, (sigma/255)^2) added in float, then clamped to [0,1].
// sigma is on the 0-255 scale. Reproducible per seed.
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

// JPEG luminance blocking emulation: pad to multiples of 8 by edge
// replication, per block level-shift / DCT-II / quantize with the IJG
// luminance table scaled for the quality factor / dequantize / inverse DCT,
// then crop and clamp. No entropy coding, no chroma.
Image jpeg_blocking_sim(const Image& img, int quality_factor);

// The quantization table jpeg_blocking_sim uses at a given quality factor
// (IJG scaling: scale = qf < 50 ? 5000/qf : 200 - 2*qf,
//  q' = clamp((q*scale + 50)/100, 1, 255)).
std::array<int, 64> jpeg_quant_table(int quality_factor);

// Orthonormal 8x8 DCT-II pair used by the JPEG emulation.
void forward_dct8(const double in[8][8], double out[8][8]);
void inverse_dct8(const double in[8][8], double out[8][8]);

Image apply_degradation(const Image& img, const DegradationSpec& spec);

// 10*log10(1/MSE) on the [0,1] scale; +infinity for identical images.
double metric_psnr(const Image& a, const Image& b);

// Mean local SSIM, 11x11 Gaussian window sigma 1.5, C1=(0.01)^2, C2=(0.03)^2
// on the [0,1] scale, valid-region average.
double metric_ssim(const Image& a, const Image& b);

// One batch of training pairs. degraded/clean are (batch, 1, size, size).
struct PatchBatch {
    TensorPtr<float> degraded;
    TensorPtr<float> clean;
    std::vector<double> levels;      // per item
    std::vector<int> source_index;   // per item
};

// Infinite seeded stream of uniformly random crops with per-item levels
// drawn uniformly from `levels`. Single-owner iterator.
class PatchStream {
public:
    PatchStream(const std::vector<Image>& corpus, int patch_size, int batch,
                std::vector<double> levels, Degradation kind, std::uint64_t seed);

    PatchBatch next();

private:
    const std::vector<Image>& corpus_;
    int size_;
    int batch_;
    std::vector<double> levels_;
    Degradation kind_;
    Rng rng_;
};

// Seeded synthetic corpus: gradient backgrounds with random rectangles,
// ellipses and sinusoidal textures. Stands in for a natural-image corpus at
// desk scale; images are deterministic in (seed, index).
std::vector<Image> generate_synthetic_corpus(int count, int width, int height,
                                             std::uint64_t seed);

// Deterministic train/validation split: the trailing fraction validates.
void split_corpus(const std::vector<Image>& corpus, double val_fraction,
                  std::vector<Image>& train, std::vector<Image>& val);

}  // namespace durr
