#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "durr/degrade.hpp"
#include "durr/image.hpp"

using namespace durr;

namespace {

Image textured_image(int w, int h, std::uint64_t seed) {
    auto corpus = generate_synthetic_corpus(1, w, h, seed);
    return corpus[0];
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("gaussian noise: vanishing sigma leaves the image unchanged") {
    Image img = textured_image(32, 32, 5);
    Image out = add_gaussian_noise(img, 1e-9, 42);
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(out.pixels[i] - img.pixels[i]) < 1e-8f);
    CHECK_THROWS_AS(add_gaussian_noise(img, 0.0, 1), ValueError);
    CHECK_THROWS_AS(add_gaussian_noise(img, -5.0, 1), ValueError);
}

TEST_CASE("gaussian noise: same seed twice gives identical output") {
    Image img = textured_image(48, 48, 6);
    Image a = add_gaussian_noise(img, 25.0, 777);
    Image b = add_gaussian_noise(img, 25.0, 777);
    CHECK(a.pixels == b.pixels);
    Image c = add_gaussian_noise(img, 25.0, 778);
    CHECK(a.pixels != c.pixels);
}

TEST_CASE("gaussian noise statistics on a mid-gray image") {
    const double sigma = 25.0;
    Image gray(256, 256, 0.5f);
    Image noisy = add_gaussian_noise(gray, sigma, 99);
    const double n = static_cast<double>(gray.size());
    double mean = 0.0;
    for (size_t i = 0; i < gray.size(); ++i)
        mean += static_cast<double>(noisy.pixels[i]) - 0.5;
    mean /= n;
    double var = 0.0;
    for (size_t i = 0; i < gray.size(); ++i) {
        const double d = static_cast<double>(noisy.pixels[i]) - 0.5 - mean;
        var += d * d;
    }
    var /= n - 1;
    const double s = sigma / 255.0;
    CHECK(std::abs(mean) < 0.5 * s / std::sqrt(n) * 4);  // 4 sigma of the mean estimator
    CHECK(std::sqrt(var) == doctest::Approx(s).epsilon(0.02));
}

TEST_CASE("jpeg quant table: qf 50 reproduces the base table exactly") {
    const std::array<int, 64> base = {
        16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
    CHECK(jpeg_quant_table(50) == base);
    // monotone coarsening away from qf 50
    const auto q10 = jpeg_quant_table(10);
    const auto q90 = jpeg_quant_table(90);
    for (int i = 0; i < 64; ++i) {
        CHECK(q10[static_cast<size_t>(i)] >= base[static_cast<size_t>(i)]);
        CHECK(q90[static_cast<size_t>(i)] <= base[static_cast<size_t>(i)]);
    }
    CHECK_THROWS_AS(jpeg_quant_table(0), ValueError);
    CHECK_THROWS_AS(jpeg_quant_table(101), ValueError);
    CHECK_THROWS_AS(jpeg_blocking_sim(textured_image(16, 16, 1), 101), ValueError);
}

TEST_CASE("jpeg sim: constant image stays constant within one DC step") {
    // constant block has only a DC coefficient; quantization moves it by at
    // most half a quantization step of the DC entry
    Image img(24, 24, 0.42f);
    Image out = jpeg_blocking_sim(img, 20);
    const auto q = jpeg_quant_table(20);
    const double dc_step = static_cast<double>(q[0]);
    // DC coefficient is 8 * shifted value; error on pixels = coef error / 8
    const double bound = 0.5 * dc_step / 8.0 / 255.0 + 1e-9;
    for (size_t i = 1; i < out.size(); ++i)
        CHECK(out.pixels[i] == doctest::Approx(out.pixels[0]).epsilon(1e-6));
    CHECK(std::abs(out.pixels[0] - img.pixels[0]) <= bound);
}

TEST_CASE("jpeg sim: higher quality factor gives higher PSNR") {
    Image img = textured_image(64, 64, 7);
    const double p90 = metric_psnr(jpeg_blocking_sim(img, 90), img);
    const double p10 = metric_psnr(jpeg_blocking_sim(img, 10), img);
    CHECK(p90 > p10);
}

TEST_CASE("jpeg sim applied twice never beats applying it once (statistical)") {
    double once = 0.0, twice = 0.0;
    for (std::uint64_t s = 0; s < 6; ++s) {
        Image img = textured_image(48, 48, 100 + s);
        Image one = jpeg_blocking_sim(img, 30);
        Image two = jpeg_blocking_sim(one, 30);
        once += metric_psnr(one, img);
        twice += metric_psnr(two, img);
    }
    CHECK(twice <= once + 1e-9);
}

TEST_CASE("degradation leaves its input untouched") {
    Image img = textured_image(32, 32, 8);
    const auto before = img.pixels;
    (void)add_gaussian_noise(img, 35.0, 1);
    (void)jpeg_blocking_sim(img, 20);
    CHECK(img.pixels == before);
}

TEST_CASE("psnr anchors") {
    Image a(16, 16, 0.3f);
    CHECK(metric_psnr(a, a) == std::numeric_limits<double>::infinity());

    Image zero(16, 16, 0.0f);
    Image one(16, 16, 1.0f);
    CHECK(metric_psnr(zero, one) == doctest::Approx(0.0).epsilon(1e-12));

    Image b = a;
    for (auto& p : b.pixels) p += 1.0f / 255.0f;
    CHECK(metric_psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0)).epsilon(1e-6));

    Image small(8, 16, 0.5f);
    CHECK_THROWS_AS(metric_psnr(a, small), ShapeError);
}

TEST_CASE("psnr is symmetric") {
    Image x = textured_image(32, 32, 9);
    Image y = add_gaussian_noise(x, 25.0, 3);
    CHECK(metric_psnr(x, y) == metric_psnr(y, x));
}

TEST_CASE("ssim anchors and monotonicity") {
    Image img = textured_image(64, 64, 10);
    CHECK(metric_ssim(img, img) == 1.0);  // exactly

    Image inverted = img;
    for (auto& p : inverted.pixels) p = 1.0f - p;
    CHECK(metric_ssim(img, inverted) < 0.5);

    const double s10 = metric_ssim(add_gaussian_noise(img, 10.0, 4), img);
    const double s25 = metric_ssim(add_gaussian_noise(img, 25.0, 4), img);
    CHECK(s25 < s10);

    Image tiny(10, 10, 0.5f);
    CHECK_THROWS_AS(metric_ssim(tiny, tiny), ValueError);
}

TEST_CASE("pgm round trip is bit exact") {
    Image img = textured_image(37, 23, 11);  // odd sizes on purpose
    const std::string path = temp_path("durr_test_roundtrip.pgm");
    write_pgm(img, path);
    Image back = read_pgm(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    // quantized on write; re-writing must reproduce identical bytes
    const std::string path2 = temp_path("durr_test_roundtrip2.pgm");
    write_pgm(back, path2);
    Image back2 = read_pgm(path2);
    CHECK(back.pixels == back2.pixels);

    CHECK_THROWS_AS(read_pgm("/nonexistent/file.pgm"), IoError);
    const std::string bad = temp_path("durr_test_bad.pgm");
    {
        std::FILE* f = std::fopen(bad.c_str(), "wb");
        std::fputs("P6\n2 2\n255\n....", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_pgm(bad), IoError);
}

TEST_CASE("patch stream: constant corpus, determinism and level frequencies") {
    std::vector<Image> corpus{Image(40, 40, 0.6f)};
    PatchStream stream(corpus, 16, 8, {10.0, 20.0, 30.0}, Degradation::Gaussian, 123);
    PatchBatch batch = stream.next();
    CHECK(batch.clean->shape == Shape{8, 1, 16, 16});
    for (float v : batch.clean->data) CHECK(v == 0.6f);
    for (int idx : batch.source_index) CHECK(idx == 0);

    PatchStream s1(corpus, 16, 8, {10.0, 20.0}, Degradation::Gaussian, 55);
    PatchStream s2(corpus, 16, 8, {10.0, 20.0}, Degradation::Gaussian, 55);
    for (int i = 0; i < 3; ++i) {
        PatchBatch a = s1.next(), b = s2.next();
        CHECK(a.degraded->data == b.degraded->data);
        CHECK(a.levels == b.levels);
    }

    // per-item levels uniform over the list: 3-sigma multinomial bound
    PatchStream s3(corpus, 8, 10, {1.0, 2.0, 3.0, 4.0}, Degradation::Gaussian, 777);
    std::array<int, 4> counts{};
    const int draws = 10000;
    for (int i = 0; i < draws / 10; ++i) {
        PatchBatch b = s3.next();
        for (double l : b.levels) ++counts[static_cast<size_t>(l) - 1];
    }
    const double expect = draws / 4.0;
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (int c : counts) CHECK(std::abs(c - expect) < 3.0 * sigma);

    std::vector<Image> empty;
    CHECK_THROWS_AS(PatchStream(empty, 16, 8, {10.0}, Degradation::Gaussian, 1), ValueError);
    std::vector<Image> tiny{Image(8, 8, 0.5f)};
    CHECK_THROWS_AS(PatchStream(tiny, 16, 8, {10.0}, Degradation::Gaussian, 1), ValueError);
}

TEST_CASE("synthetic corpus is deterministic in (seed, index) and in range") {
    auto a = generate_synthetic_corpus(4, 48, 48, 999);
    auto b = generate_synthetic_corpus(6, 48, 48, 999);
    for (int i = 0; i < 4; ++i)
        CHECK(a[static_cast<size_t>(i)].pixels == b[static_cast<size_t>(i)].pixels);
    for (const auto& img : a)
        for (float p : img.pixels) {
            CHECK(p >= 0.0f);
            CHECK(p <= 1.0f);
        }
    // images are not trivially flat
    for (const auto& img : a) {
        float lo = 1.0f, hi = 0.0f;
        for (float p : img.pixels) {
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        CHECK(hi - lo > 0.1f);
    }
}

TEST_CASE("corpus split is deterministic and disjoint by construction") {
    auto corpus = generate_synthetic_corpus(10, 32, 32, 3);
    std::vector<Image> train, val;
    split_corpus(corpus, 0.25, train, val);
    CHECK(train.size() == 7);
    CHECK(val.size() == 3);
    CHECK(train[0].pixels == corpus[0].pixels);
    CHECK(val[2].pixels == corpus[9].pixels);
}

TEST_CASE("dct round trip without quantization reconstructs blocks") {
    Rng rng(2718);
    for (int trial = 0; trial < 20; ++trial) {
        double block[8][8], coef[8][8], back[8][8];
        for (auto& row : block)
            for (auto& v : row) v = rng.uniform(-128.0, 127.0);
        forward_dct8(block, coef);
        inverse_dct8(coef, back);
        for (int x = 0; x < 8; ++x)
            for (int y = 0; y < 8; ++y)
                CHECK(std::abs(back[x][y] - block[x][y]) < 1e-6);
    }
    // Parseval sanity for the orthonormal scaling
    double block[8][8] = {};
    block[0][0] = 1.0;
    double coef[8][8];
    forward_dct8(block, coef);
    double energy = 0.0;
    for (auto& row : coef)
        for (double v : row) energy += v * v;
    CHECK(energy == doctest::Approx(1.0).epsilon(1e-12));
}
