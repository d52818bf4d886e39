#include "durr/image.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace durr {

namespace {

// next whitespace/comment-delimited token of a PGM header
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    if (next_token(in) != "P5") throw IoError(path + ": not a binary PGM (P5) file");
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token(in));
        h = std::stoi(next_token(in));
        maxval = std::stoi(next_token(in));
    } catch (const std::exception&) {
        throw IoError(path + ": malformed PGM header");
    }
    if (w <= 0 || h <= 0) throw IoError(path + ": bad dimensions");
    if (maxval <= 0 || maxval > 255)
        throw IoError(path + ": unsupported maxval " + std::to_string(maxval));

    std::vector<unsigned char> raw(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError(path + ": truncated pixel data");

    Image img(w, h);
    const float inv = 1.0f / static_cast<float>(maxval);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<float>(raw[i]) * inv;
    return img;
}

void write_pgm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (size_t i = 0; i < raw.size(); ++i) {
        float p = img.pixels[i];
        p = p < 0.0f ? 0.0f : (p > 1.0f ? 1.0f : p);
        raw[i] = static_cast<unsigned char>(std::lround(p * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed for " + path);
}

template <typename T>
TensorPtr<T> image_to_tensor(const Image& img) {
    std::vector<T> data(img.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(img.pixels[i]);
    return make_tensor<T>({1, 1, img.height, img.width}, std::move(data));
}

template <typename T>
Image tensor_to_image(const TensorPtr<T>& t, bool clamp) {
    if (t->rank() != 4 || t->dim(0) != 1 || t->dim(1) != 1)
        throw ShapeError("tensor_to_image: expected (1,1,H,W), got " + shape_str(t->shape));
    Image img(static_cast<int>(t->dim(3)), static_cast<int>(t->dim(2)));
    for (size_t i = 0; i < img.size(); ++i) img.pixels[i] = static_cast<float>(t->data[i]);
    if (clamp) img.clamp01();
    return img;
}

double image_mse(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("image_mse: dimension mismatch " + std::to_string(a.width) + "x" +
                         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                         std::to_string(b.height));
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

template TensorPtr<float> image_to_tensor<float>(const Image&);
template TensorPtr<double> image_to_tensor<double>(const Image&);
template Image tensor_to_image<float>(const TensorPtr<float>&, bool);
template Image tensor_to_image<double>(const TensorPtr<double>&, bool);

}  // namespace durr
