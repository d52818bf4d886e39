#include "durr/degrade.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace durr {

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
    if (sigma <= 0.0) throw ValueError("add_gaussian_noise: sigma must be positive");
    Rng rng(seed);
    Image out(img.width, img.height);
    const double s = sigma / 255.0;
    for (size_t i = 0; i < img.size(); ++i) {
        const double v = static_cast<double>(img.pixels[i]) + rng.normal(0.0, s);
        out.pixels[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// JPEG blocking emulation

namespace {

// IJG standard luminance quantization table (Annex K), row major
constexpr std::array<int, 64> kBaseLuminanceTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct DctBasis {
    // cosines[u][x] = cos((2x+1) u pi / 16), alpha[u] = u==0 ? 1/sqrt(2) : 1
    double cosines[8][8];
    double alpha[8];
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            alpha[u] = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x)
                cosines[u][x] = std::cos((2.0 * x + 1.0) * u * 3.14159265358979323846 / 16.0);
        }
    }
};

const DctBasis& dct_basis() {
    static const DctBasis basis;
    return basis;
}

}  // namespace

void forward_dct8(const double in[8][8], double out[8][8]) {
    const DctBasis& b = dct_basis();
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0.0;
            for (int x = 0; x < 8; ++x)
                for (int y = 0; y < 8; ++y) acc += in[x][y] * b.cosines[u][x] * b.cosines[v][y];
            out[u][v] = 0.25 * b.alpha[u] * b.alpha[v] * acc;
        }
}

void inverse_dct8(const double in[8][8], double out[8][8]) {
    const DctBasis& b = dct_basis();
    for (int x = 0; x < 8; ++x)
        for (int y = 0; y < 8; ++y) {
            double acc = 0.0;
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v)
                    acc += b.alpha[u] * b.alpha[v] * in[u][v] * b.cosines[u][x] * b.cosines[v][y];
            out[x][y] = 0.25 * acc;
        }
}

std::array<int, 64> jpeg_quant_table(int quality_factor) {
    if (quality_factor < 1 || quality_factor > 100)
        throw ValueError("jpeg quality factor must be in [1,100], got " +
                         std::to_string(quality_factor));
    const int scale = quality_factor < 50 ? 5000 / quality_factor : 200 - 2 * quality_factor;
    std::array<int, 64> q{};
    for (int i = 0; i < 64; ++i)
        q[static_cast<size_t>(i)] =
            std::clamp((kBaseLuminanceTable[static_cast<size_t>(i)] * scale + 50) / 100, 1, 255);
    return q;
}

Image jpeg_blocking_sim(const Image& img, int quality_factor) {
    const std::array<int, 64> q = jpeg_quant_table(quality_factor);
    const int W8 = (img.width + 7) / 8 * 8;
    const int H8 = (img.height + 7) / 8 * 8;

    // edge-replicated working copy on the 0-255 scale, level-shifted
    std::vector<double> work(static_cast<size_t>(W8) * H8);
    for (int y = 0; y < H8; ++y) {
        const int sy = std::min(y, img.height - 1);
        for (int x = 0; x < W8; ++x) {
            const int sx = std::min(x, img.width - 1);
            work[static_cast<size_t>(y) * W8 + x] =
                static_cast<double>(img.at(sy, sx)) * 255.0 - 128.0;
        }
    }

    double block[8][8], coef[8][8], recon[8][8];
    for (int by = 0; by < H8; by += 8)
        for (int bx = 0; bx < W8; bx += 8) {
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    block[y][x] = work[static_cast<size_t>(by + y) * W8 + bx + x];
            forward_dct8(block, coef);
            for (int u = 0; u < 8; ++u)
                for (int v = 0; v < 8; ++v) {
                    const double qv = static_cast<double>(q[static_cast<size_t>(u * 8 + v)]);
                    coef[u][v] = std::round(coef[u][v] / qv) * qv;
                }
            inverse_dct8(coef, recon);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x)
                    work[static_cast<size_t>(by + y) * W8 + bx + x] = recon[y][x];
        }

    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double v = (work[static_cast<size_t>(y) * W8 + x] + 128.0) / 255.0;
            out.at(y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return out;
}

Image apply_degradation(const Image& img, const DegradationSpec& spec) {
    if (spec.kind == Degradation::Gaussian)
        return add_gaussian_noise(img, spec.level, spec.seed);
    return jpeg_blocking_sim(img, static_cast<int>(std::lround(spec.level)));
}

// ---------------------------------------------------------------------------
// metrics

double metric_psnr(const Image& a, const Image& b) {
    const double mse = image_mse(a, b);  // also validates dimensions
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

struct SsimWindow {
    // 11x11 Gaussian, sigma 1.5, normalized
    double w[11][11];
    SsimWindow() {
        double sum = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5, dx = x - 5;
                w[y][x] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                sum += w[y][x];
            }
        for (auto& row : w)
            for (auto& v : row) v /= sum;
    }
};

}  // namespace

double metric_ssim(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height)
        throw ShapeError("metric_ssim: dimension mismatch");
    if (a.width < 11 || a.height < 11)
        throw ValueError("metric_ssim: image must be at least 11x11");
    static const SsimWindow win;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;

    double total = 0.0;
    int64_t count = 0;
    for (int y0 = 0; y0 + 11 <= a.height; ++y0)
        for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wv = win.w[y][x];
                    mu_a += wv * a.at(y0 + y, x0 + x);
                    mu_b += wv * b.at(y0 + y, x0 + x);
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wv = win.w[y][x];
                    const double da = a.at(y0 + y, x0 + x) - mu_a;
                    const double db = b.at(y0 + y, x0 + x) - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    cov += wv * da * db;
                }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// patch stream

PatchStream::PatchStream(const std::vector<Image>& corpus, int patch_size, int batch,
                         std::vector<double> levels, Degradation kind, std::uint64_t seed)
    : corpus_(corpus), size_(patch_size), batch_(batch), levels_(std::move(levels)), kind_(kind),
      rng_(seed) {
    if (corpus_.empty()) throw ValueError("PatchStream: empty corpus");
    if (levels_.empty()) throw ValueError("PatchStream: no degradation levels");
    for (size_t i = 0; i < corpus_.size(); ++i)
        if (corpus_[i].width < size_ || corpus_[i].height < size_)
            throw ValueError("PatchStream: image " + std::to_string(i) + " (" +
                             std::to_string(corpus_[i].width) + "x" +
                             std::to_string(corpus_[i].height) + ") smaller than patch size " +
                             std::to_string(size_));
}

PatchBatch PatchStream::next() {
    PatchBatch out;
    const int64_t n = static_cast<int64_t>(batch_) * size_ * size_;
    std::vector<float> clean(static_cast<size_t>(n)), degraded(static_cast<size_t>(n));
    out.levels.resize(static_cast<size_t>(batch_));
    out.source_index.resize(static_cast<size_t>(batch_));

    for (int i = 0; i < batch_; ++i) {
        const auto idx = static_cast<size_t>(rng_.uniform_int(corpus_.size()));
        const Image& src = corpus_[idx];
        const int y0 = static_cast<int>(rng_.uniform_int(
            static_cast<std::uint64_t>(src.height - size_ + 1)));
        const int x0 = static_cast<int>(rng_.uniform_int(
            static_cast<std::uint64_t>(src.width - size_ + 1)));
        const double level = levels_[static_cast<size_t>(rng_.uniform_int(levels_.size()))];

        Image patch(size_, size_);
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x) patch.at(y, x) = src.at(y0 + y, x0 + x);

        Image dg;
        if (kind_ == Degradation::Gaussian)
            dg = add_gaussian_noise(patch, level, rng_.next_u64());
        else
            dg = jpeg_blocking_sim(patch, static_cast<int>(std::lround(level)));

        std::copy(patch.pixels.begin(), patch.pixels.end(),
                  clean.begin() + static_cast<int64_t>(i) * size_ * size_);
        std::copy(dg.pixels.begin(), dg.pixels.end(),
                  degraded.begin() + static_cast<int64_t>(i) * size_ * size_);
        out.levels[static_cast<size_t>(i)] = level;
        out.source_index[static_cast<size_t>(i)] = static_cast<int>(idx);
    }

    out.clean = make_tensor<float>({batch_, 1, size_, size_}, std::move(clean));
    out.degraded = make_tensor<float>({batch_, 1, size_, size_}, std::move(degraded));
    return out;
}

// ---------------------------------------------------------------------------
// synthetic corpus

namespace {

Image synthesize_image(int width, int height, Rng& rng) {
    Image img(width, height);

    // oriented gradient background
    const double theta = rng.uniform(0.0, 6.283185307179586);
    const double gx = std::cos(theta) / width, gy = std::sin(theta) / height;
    const double base = rng.uniform(0.25, 0.65);
    const double amp = rng.uniform(0.1, 0.3);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.at(y, x) = static_cast<float>(base + amp * (gx * x + gy * y));

    // flat-shaded rectangles and ellipses
    const int shapes = 4 + static_cast<int>(rng.uniform_int(6));
    for (int s = 0; s < shapes; ++s) {
        const double gray = rng.uniform(0.05, 0.95);
        const bool ellipse = rng.uniform() < 0.5;
        const int cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width)));
        const int cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height)));
        const int rx = 3 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(width / 3)));
        const int ry = 3 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height / 3)));
        const double blend = rng.uniform(0.55, 1.0);
        for (int y = std::max(0, cy - ry); y <= std::min(height - 1, cy + ry); ++y)
            for (int x = std::max(0, cx - rx); x <= std::min(width - 1, cx + rx); ++x) {
                if (ellipse) {
                    const double u = static_cast<double>(x - cx) / rx;
                    const double v = static_cast<double>(y - cy) / ry;
                    if (u * u + v * v > 1.0) continue;
                }
                img.at(y, x) = static_cast<float>(blend * gray + (1.0 - blend) * img.at(y, x));
            }
    }

    // sinusoidal texture band over part of the image
    if (rng.uniform() < 0.8) {
        const double fx = rng.uniform(0.03, 0.15), fy = rng.uniform(0.03, 0.15);
        const double phase = rng.uniform(0.0, 6.283185307179586);
        const double amp_t = rng.uniform(0.04, 0.12);
        const int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(height / 2)));
        const int y1 = y0 + height / 3 + static_cast<int>(rng.uniform_int(
                                             static_cast<std::uint64_t>(height - y0 - height / 3)));
        for (int y = y0; y < std::min(height, y1); ++y)
            for (int x = 0; x < width; ++x)
                img.at(y, x) += static_cast<float>(
                    amp_t * std::sin(6.283185307179586 * (fx * x + fy * y) + phase));
    }

    img.clamp01();
    return img;
}

}  // namespace

std::vector<Image> generate_synthetic_corpus(int count, int width, int height,
                                             std::uint64_t seed) {
    if (count <= 0) throw ValueError("generate_synthetic_corpus: count must be positive");
    std::vector<Image> corpus;
    corpus.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i) + 1));
        corpus.push_back(synthesize_image(width, height, rng));
    }
    return corpus;
}

void split_corpus(const std::vector<Image>& corpus, double val_fraction,
                  std::vector<Image>& train, std::vector<Image>& val) {
    if (corpus.empty()) throw ValueError("split_corpus: empty corpus");
    auto n_val = static_cast<size_t>(std::ceil(corpus.size() * val_fraction));
    n_val = std::min(n_val, corpus.size() - 1);
    train.assign(corpus.begin(), corpus.end() - static_cast<std::ptrdiff_t>(n_val));
    val.assign(corpus.end() - static_cast<std::ptrdiff_t>(n_val), corpus.end());
}

}  // namespace durr
