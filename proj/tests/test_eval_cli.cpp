#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "durr/checkpoint.hpp"
#include "durr/cli.hpp"
#include "durr/eval.hpp"
#include "durr/pipelines.hpp"

using namespace durr;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
    const auto dir = fs::temp_directory_path() / "durr_eval_cli_test";
    fs::create_directories(dir);
    return dir.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

NetworkParams<float> zero_residual_restorer(std::uint64_t seed) {
    auto params = build_restoration_unit<float>(RestorerArch{0.25}, seed);
    for (auto& v : params.at("conv9.w")->data) v = 0.0f;
    for (auto& v : params.at("conv9.b")->data) v = 0.0f;
    return params;
}

int run_cli(std::initializer_list<const char*> args) {
    std::vector<const char*> argv{"durr"};
    argv.insert(argv.end(), args);
    return cli_run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("policy specifier parsing") {
    CHECK(PolicySpecifier::parse("dqn").kind == PolicySpecifier::Kind::Dqn);
    CHECK(PolicySpecifier::parse("decorr").kind == PolicySpecifier::Kind::Decorrelation);
    CHECK(PolicySpecifier::parse("oracle").kind == PolicySpecifier::Kind::Oracle);
    auto fixed = PolicySpecifier::parse("fixed:7");
    CHECK(fixed.kind == PolicySpecifier::Kind::Fixed);
    CHECK(fixed.fixed_steps == 7);
    CHECK(fixed.name() == "fixed:7");
    CHECK_THROWS_AS(PolicySpecifier::parse("magic"), UsageError);
    CHECK_THROWS_AS(PolicySpecifier::parse("fixed:x"), UsageError);
    CHECK_THROWS_AS(PolicySpecifier::parse("fixed:-1"), UsageError);
}

TEST_CASE("eval with fixed:0 reports the degraded-input metrics") {
    auto corpus = generate_synthetic_corpus(4, 48, 48, 21);
    auto restorer = build_restoration_unit<float>(RestorerArch{0.25}, 3);
    const std::vector<double> levels{25.0};
    EvalReport report = eval_durr(corpus, restorer, PolicySpecifier::parse("fixed:0"), nullptr,
                                  levels, 8, Degradation::Gaussian, 77);
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].mean_stop_step == 0.0);
    CHECK(report.rows[0].image_count == 4);

    // recompute the degraded-input PSNR with the same per-image seeds the
    // harness derives
    double expect = 0.0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        DegradationSpec spec{Degradation::Gaussian, 25.0,
                             Rng::mix(Rng::mix(77, 0x6576616cULL + i), 0 + 1)};
        expect += metric_psnr(apply_degradation(corpus[i], spec), corpus[i]);
    }
    expect /= static_cast<double>(corpus.size());
    CHECK(report.rows[0].mean_psnr == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("oracle dominates every other policy at every level") {
    auto corpus = generate_synthetic_corpus(3, 48, 48, 22);
    auto restorer = build_restoration_unit<float>(RestorerArch{0.25}, 5);
    const std::vector<double> levels{15.0, 35.0};
    const int max_steps = 6;

    EvalReport oracle = eval_durr(corpus, restorer, PolicySpecifier::parse("oracle"), nullptr,
                                  levels, max_steps, Degradation::Gaussian, 31);
    for (const char* other : {"fixed:0", "fixed:3", "fixed:6", "decorr"}) {
        EvalReport rep = eval_durr(corpus, restorer, PolicySpecifier::parse(other), nullptr,
                                   levels, max_steps, Degradation::Gaussian, 31);
        for (size_t li = 0; li < levels.size(); ++li)
            CHECK(oracle.rows[li].mean_psnr >= rep.rows[li].mean_psnr - 1e-12);
    }
}

TEST_CASE("eval summary means match a recomputation from the detail rows") {
    auto corpus = generate_synthetic_corpus(5, 48, 48, 23);
    auto restorer = build_restoration_unit<float>(RestorerArch{0.25}, 7);
    EvalReport report = eval_durr(corpus, restorer, PolicySpecifier::parse("fixed:2"), nullptr,
                                  {25.0, 45.0}, 6, Degradation::Gaussian, 13);
    for (const auto& row : report.rows) {
        double psnr = 0.0, ssim = 0.0, stop = 0.0;
        int count = 0;
        for (const auto& d : report.detail)
            if (d.level == row.level) {
                psnr += d.psnr;
                ssim += d.ssim;
                stop += d.stop_step;
                ++count;
            }
        REQUIRE(count == row.image_count);
        CHECK(std::abs(row.mean_psnr - psnr / count) < 1e-9);
        CHECK(std::abs(row.mean_ssim - ssim / count) < 1e-9);
        CHECK(std::abs(row.mean_stop_step - stop / count) < 1e-9);
    }
}

TEST_CASE("eval report runs are byte-deterministic") {
    auto corpus = generate_synthetic_corpus(3, 48, 48, 24);
    auto restorer = build_restoration_unit<float>(RestorerArch{0.25}, 9);
    const std::string dir = temp_dir();
    const std::string a = dir + "/eval_a.csv", b = dir + "/eval_b.csv";
    for (const std::string& path : {a, b}) {
        EvalReport rep = eval_durr(corpus, restorer, PolicySpecifier::parse("fixed:3"), nullptr,
                                   {25.0}, 6, Degradation::Gaussian, 5);
        rep.write_csv(path);
    }
    CHECK(slurp(a) == slurp(b));
}

TEST_CASE("peak harness: zero-residual restorer peaks at step 0 with input PSNR") {
    auto corpus = generate_synthetic_corpus(3, 48, 48, 25);
    auto restorer = zero_residual_restorer(11);
    EvalReport peak = eval_peak_psnr(corpus, restorer, {25.0}, 6, Degradation::Gaussian, 19);
    EvalReport input = eval_durr(corpus, restorer, PolicySpecifier::parse("fixed:0"), nullptr,
                                 {25.0}, 6, Degradation::Gaussian, 19);
    CHECK(peak.rows[0].mean_stop_step == 0.0);
    CHECK(peak.rows[0].mean_psnr == doctest::Approx(input.rows[0].mean_psnr).epsilon(1e-9));
}

TEST_CASE("trajectory export: zero steps, zero residual and optional columns") {
    const std::string dir = temp_dir();
    auto corpus = generate_synthetic_corpus(1, 48, 48, 26);
    Image degraded = add_gaussian_noise(corpus[0], 25.0, 3);
    auto restorer = zero_residual_restorer(13);

    const std::string csv0 = dir + "/traj0.csv";
    export_trajectory(degraded, &corpus[0], restorer, nullptr, 0, csv0, dir + "/imgs0");
    {
        std::ifstream in(csv0);
        std::string header, row, extra;
        std::getline(in, header);
        CHECK(header == "step,psnr,ssim");
        CHECK(static_cast<bool>(std::getline(in, row)));
        CHECK(!std::getline(in, extra));
        CHECK(fs::exists(dir + "/imgs0/step_000.pgm"));
        CHECK(!fs::exists(dir + "/imgs0/step_001.pgm"));
    }

    const std::string csv5 = dir + "/traj5.csv";
    export_trajectory(degraded, &corpus[0], restorer, nullptr, 5, csv5, "");
    {
        std::ifstream in(csv5);
        std::string header;
        std::getline(in, header);
        std::vector<std::string> rows;
        for (std::string line; std::getline(in, line);) rows.push_back(line);
        REQUIRE(rows.size() == 6);
        // zero residual: psnr column identical in every row
        const std::string psnr0 = rows[0].substr(rows[0].find(',') + 1);
        for (const auto& row : rows) CHECK(row.substr(row.find(',') + 1) == psnr0);
    }

    // without ground truth, only the step column (plus q with a policy)
    const std::string csv_plain = dir + "/traj_plain.csv";
    export_trajectory(degraded, nullptr, restorer, nullptr, 2, csv_plain, "");
    {
        std::ifstream in(csv_plain);
        std::string header;
        std::getline(in, header);
        CHECK(header == "step");
    }
    auto policy = build_policy_unit<float>(PolicyArch{0.25}, 15);
    const std::string csv_q = dir + "/traj_q.csv";
    export_trajectory(degraded, nullptr, restorer, &policy, 2, csv_q, "");
    {
        std::ifstream in(csv_q);
        std::string header;
        std::getline(in, header);
        CHECK(header == "step,q_continue");
    }
}

TEST_CASE("cli: usage, data and success exit codes") {
    const std::string dir = temp_dir();

    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"eval", "--policy", "dqn"}) == 1);  // missing required options

    // gen-corpus writes a readable corpus
    const std::string corpus_dir = dir + "/corpus";
    CHECK(run_cli({"gen-corpus", "--out", corpus_dir.c_str(), "--count", "3", "--width", "48",
                   "--height", "48", "--seed", "7"}) == 0);
    CHECK(fs::exists(corpus_dir + "/img_0000.pgm"));
    Image img = read_pgm(corpus_dir + "/img_0000.pgm");
    CHECK(img.width == 48);

    // degrade one of them
    const std::string noisy = dir + "/noisy.pgm";
    const std::string in0 = corpus_dir + "/img_0000.pgm";
    CHECK(run_cli({"degrade", "--in", in0.c_str(), "--out", noisy.c_str(), "--task", "denoise",
                   "--sigma", "35", "--seed", "3"}) == 0);
    CHECK(run_cli({"degrade", "--in", in0.c_str(), "--out", noisy.c_str(), "--task", "deblock",
                   "--qf", "200"}) == 2);  // qf out of range -> data error
    CHECK(run_cli({"degrade", "--in", "/missing.pgm", "--out", noisy.c_str()}) == 2);

    // hand-built checkpoint lets restore run without training
    const std::string ckpt = dir + "/restorer.ckpt";
    Checkpoint c;
    c.kind = UnitKind::Restorer;
    c.params = zero_residual_restorer(17);
    checkpoint_save(c, ckpt);

    const std::string restored = dir + "/restored.pgm";
    CHECK(run_cli({"restore", "--in", noisy.c_str(), "--out", restored.c_str(), "--restorer",
                   ckpt.c_str(), "--steps", "2"}) == 0);
    // zero residual: output equals the (quantized) input bytes
    CHECK(slurp(restored) == slurp(noisy));

    // eval through the CLI, byte-deterministic across runs
    const std::string eval_a = dir + "/eval_cli_a.csv";
    const std::string eval_b = dir + "/eval_cli_b.csv";
    for (const std::string& out : {eval_a, eval_b})
        CHECK(run_cli({"eval", "--corpus", corpus_dir.c_str(), "--restorer", ckpt.c_str(),
                       "--policy", "fixed:1", "--levels", "25", "--max-steps", "4", "--seed",
                       "11", "--out", out.c_str()}) == 0);
    CHECK(slurp(eval_a) == slurp(eval_b));

    // inspect-ckpt succeeds; loading it as a policy fails with a data error
    CHECK(run_cli({"inspect-ckpt", "--in", ckpt.c_str()}) == 0);
    CHECK(run_cli({"train-policy", "--restorer", ckpt.c_str(), "--out",
                   (dir + "/p.ckpt").c_str(), "--env-steps", "1"}) == 0);
    CHECK(run_cli({"restore", "--in", noisy.c_str(), "--out", restored.c_str(), "--restorer",
                   (dir + "/p.ckpt").c_str(), "--steps", "1"}) == 2);  // wrong unit kind
}

TEST_CASE("trajectory cli exports csv and images") {
    const std::string dir = temp_dir();
    auto corpus = generate_synthetic_corpus(1, 48, 48, 27);
    const std::string gt = dir + "/gt.pgm";
    write_pgm(corpus[0], gt);
    const std::string noisy = dir + "/noisy_t.pgm";
    write_pgm(add_gaussian_noise(corpus[0], 25.0, 9), noisy);

    const std::string ckpt = dir + "/restorer_t.ckpt";
    Checkpoint c;
    c.kind = UnitKind::Restorer;
    c.params = build_restoration_unit<float>(RestorerArch{0.25}, 29);
    checkpoint_save(c, ckpt);

    const std::string csv = dir + "/traj_cli.csv";
    const std::string imgs = dir + "/traj_imgs";
    CHECK(run_cli({"trajectory", "--in", noisy.c_str(), "--gt", gt.c_str(), "--restorer",
                   ckpt.c_str(), "--steps", "3", "--out-csv", csv.c_str(), "--out-dir",
                   imgs.c_str()}) == 0);
    CHECK(fs::exists(imgs + "/step_003.pgm"));
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,psnr,ssim");
}
