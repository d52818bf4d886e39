#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "durr/common.hpp"
#include "durr/tensor.hpp"

namespace durr {

// Single-channel image, pixels in [0,1], row major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Image() = default;
    Image(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw ValueError("Image: non-positive dimensions");
    }

    float& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    size_t size() const { return pixels.size(); }

    void clamp01() {
        for (auto& p : pixels) p = p < 0.0f ? 0.0f : (p > 1.0f ? 1.0f : p);
    }
};

// Binary PGM (P5, maxval 255). Writing quantizes with round(clamp(p)*255);
// the byte stream for a given image is identical across runs.
Image read_pgm(const std::string& path);
void write_pgm(const Image& img, const std::string& path);

// (B=1, C=1, H, W) tensor from an image and back.
template <typename T>
TensorPtr<T> image_to_tensor(const Image& img);

template <typename T>
Image tensor_to_image(const TensorPtr<T>& t, bool clamp = false);

// Mean squared error in double precision on the [0,1] scale (the loss
// bookkeeping the reward path uses).
double image_mse(const Image& a, const Image& b);

extern template TensorPtr<float> image_to_tensor<float>(const Image&);
extern template TensorPtr<double> image_to_tensor<double>(const Image&);
extern template Image tensor_to_image<float>(const TensorPtr<float>&, bool);
extern template Image tensor_to_image<double>(const TensorPtr<double>&, bool);

}  // namespace durr
