#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "transflower/core/rng.hpp"
#include "transflower/features/feature_io.hpp"
#include "transflower/metrics/beats.hpp"
#include "transflower/metrics/frechet.hpp"
#include "transflower/metrics/tempogram.hpp"

using namespace tf;

namespace {

MotionSequence const_motion(std::size_t frames, double y) {
    MotionSequence m;
    m.fps = kFps;
    m.frames = Tensor<double>({frames, kPoseDim});
    for (std::size_t i = 0; i < frames; ++i) m.frames(i, kRootHeightChannel) = y;
    return m;
}

MotionSequence random_motion(std::size_t frames, RngStream& rng) {
    MotionSequence m;
    m.fps = kFps;
    m.frames = Tensor<double>({frames, kPoseDim});
    for (auto& v : m.frames.data) v = rng.normal();
    return m;
}

std::vector<double> click_pcm(double bpm, double seconds, double sr) {
    std::vector<double> pcm(static_cast<std::size_t>(seconds * sr), 0.0);
    const double period = 60.0 / bpm;
    for (double t = 0.0; t < seconds; t += period) {
        const std::size_t s0 = static_cast<std::size_t>(t * sr);
        for (std::size_t i = 0; i < 64 && s0 + i < pcm.size(); ++i)
            pcm[s0 + i] = 0.9 * std::exp(-double(i) / 16.0);
    }
    return pcm;
}

}  // namespace

TEST_CASE("gaussian moments: two-point and degenerate cases") {
    Tensor<double> x({2, 2});
    x(0, 0) = 0; x(0, 1) = 0; x(1, 0) = 2; x(1, 1) = 2;
    auto m = gaussian_moments(x);
    CHECK(m.mean(0) == doctest::Approx(1.0));
    CHECK(m.mean(1) == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(m.cov(i, j) == doctest::Approx(1.0));

    Tensor<double> same({5, 3});
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 3; ++j) same(i, j) = 7.0 + double(j);
    auto ms = gaussian_moments(same);
    for (double v : ms.cov.data) CHECK(std::abs(v) < 1e-12);

    Tensor<double> one({1, 2});
    CHECK_THROWS_AS(gaussian_moments(one), Error);
    Tensor<double> vec({4});
    CHECK_THROWS_AS(gaussian_moments(vec), Error);
}

TEST_CASE("gaussian moments: standard normal Monte Carlo") {
    RngStream rng(42);
    Tensor<double> x({100000, 3});
    for (auto& v : x.data) v = rng.normal();
    auto m = gaussian_moments(x);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(m.mean(j)) < 0.02);
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            worst = std::max(worst, std::abs(m.cov(i, j) - (i == j ? 1.0 : 0.0)));
    CHECK(worst < 0.03);
}

TEST_CASE("frechet distance: closed forms, symmetry, rotation invariance") {
    GaussianMoments a, b;
    a.mean = Tensor<double>({1});
    a.cov = Tensor<double>({1, 1});
    a.cov(0, 0) = 1.0;
    b = a;
    CHECK(frechet_distance(a, b) == doctest::Approx(0.0).epsilon(1e-12));
    b.mean(0) = 1.0;
    CHECK(frechet_distance(a, b) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(frechet_distance(b, a) == doctest::Approx(1.0).epsilon(1e-9));

    // diagonal-covariance pairs against the per-dimension closed form
    RngStream rng(7);
    GaussianMoments c, d;
    c.mean = Tensor<double>({4});
    d.mean = Tensor<double>({4});
    c.cov = Tensor<double>({4, 4});
    d.cov = Tensor<double>({4, 4});
    double expect = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        c.mean(j) = rng.normal();
        d.mean(j) = rng.normal();
        const double s1 = 0.5 + rng.uniform(), s2 = 0.5 + rng.uniform();
        c.cov(j, j) = s1 * s1;
        d.cov(j, j) = s2 * s2;
        expect += (c.mean(j) - d.mean(j)) * (c.mean(j) - d.mean(j)) +
                  (s1 - s2) * (s1 - s2);
    }
    CHECK(frechet_distance(c, d) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(std::abs(frechet_distance(c, d) - frechet_distance(d, c)) < 1e-9);

    GaussianMoments wrong;
    wrong.mean = Tensor<double>({3});
    wrong.cov = Tensor<double>({3, 3});
    CHECK_THROWS_AS(frechet_distance(c, wrong), Error);

    // simultaneous rotation of both sample sets leaves the distance fixed
    Tensor<double> xa({400, 3}), xb({400, 3});
    for (auto& v : xa.data) v = rng.normal();
    for (std::size_t i = 0; i < 400; ++i)
        for (std::size_t j = 0; j < 3; ++j) xb(i, j) = 0.5 * rng.normal() + 0.3 * double(j);
    Eigen::MatrixXd g(3, 3);
    for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = rng.normal();
    Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
    Tensor<double> ra({400, 3}), rb({400, 3});
    ra.mat() = xa.mat() * q.transpose();
    rb.mat() = xb.mat() * q.transpose();
    const double base = frechet_distance(gaussian_moments(xa), gaussian_moments(xb));
    const double rot = frechet_distance(gaussian_moments(ra), gaussian_moments(rb));
    CHECK(std::abs(base - rot) < 1e-6);
}

TEST_CASE("fpd/fmd: self, constant offset, preconditions") {
    RngStream rng(11);
    std::vector<MotionSequence> ref;
    for (int i = 0; i < 3; ++i) ref.push_back(random_motion(500, rng));

    auto [fpd0, fmd0] = fpd_fmd(ref, ref);
    CHECK(std::abs(fpd0) < 1e-9);
    CHECK(std::abs(fmd0) < 1e-9);

    std::vector<MotionSequence> off = ref;
    for (auto& s : off)
        for (std::size_t i = 0; i < s.length(); ++i) s.frames(i, 1) += 1.0;
    auto [fpd1, fmd1] = fpd_fmd(off, ref);
    CHECK(fpd1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fmd1 == doctest::Approx(3.0).epsilon(1e-9));

    std::vector<MotionSequence> tiny = {random_motion(100, rng)};
    CHECK_THROWS_WITH_AS(fpd_fmd(tiny, ref), doctest::Contains("202"), Error);

    std::vector<MotionSequence> small = {random_motion(300, rng)};
    std::string warning;
    fpd_fmd(small, ref, &warning);
    CHECK(!warning.empty());
}

TEST_CASE("kinematic beats: sinusoid oracle and thresholds") {
    auto flat = const_motion(100, 0.9);
    CHECK(kinematic_beats(flat).times.empty());

    MotionSequence sine = const_motion(100, 0.9);  // 5 s at 20 fps
    for (std::size_t i = 0; i < 100; ++i)
        sine.frames(i, kRootHeightChannel) =
            0.9 + 0.05 * std::sin(2.0 * M_PI * double(i) / kFps);
    auto bt = kinematic_beats(sine);
    bt.validate();
    CHECK(bt.times.size() >= 4);
    CHECK(bt.times.size() <= 6);
    for (std::size_t i = 1; i < bt.times.size(); ++i)
        CHECK(bt.times[i] - bt.times[i - 1] == doctest::Approx(1.0).epsilon(0.1));
    CHECK(bt.magnitudes.size() == bt.times.size());

    CHECK(kinematic_beats(sine, 1e9).times.empty());
    MotionSequence two = const_motion(2, 0.9);
    CHECK_THROWS_AS(kinematic_beats(two), Error);
}

TEST_CASE("audio beats: click track, silence, beat file") {
    auto pcm = click_pcm(120.0, 10.0, 16000.0);
    auto bt = audio_beats(pcm, 16000.0);
    CHECK(bt.times.size() >= 19);
    CHECK(bt.times.size() <= 21);
    for (std::size_t i = 1; i < bt.times.size(); ++i)
        CHECK(bt.times[i] - bt.times[i - 1] == doctest::Approx(0.5).epsilon(0.02));

    std::vector<double> silence(160000, 0.0);
    auto sb = audio_beats(silence, 16000.0);
    CHECK(sb.times.empty());
    CHECK(sb.warning);

    const std::string path = std::filesystem::temp_directory_path() / "tfm_beats.txt";
    std::ofstream(path) << "0.5\n1.0\n1.5\n";
    auto fb = beat_train_from_times(read_beat_file(path));
    REQUIRE(fb.times.size() == 3);
    CHECK(fb.times[0] == doctest::Approx(0.5));
    CHECK(fb.times[2] == doctest::Approx(1.5));
    std::remove(path.c_str());
}

TEST_CASE("beat alignment: shifts and sentinels") {
    auto music = beat_train_from_times({0.5, 1.0, 1.5, 2.0, 2.5});
    auto [m0, s0] = beat_alignment(music, music);
    CHECK(m0 == 0.0);
    CHECK(s0 == 0.0);

    std::vector<double> shifted;
    for (double t : music.times) shifted.push_back(t + 0.05);
    auto [m1, s1] = beat_alignment(music, beat_train_from_times(shifted));
    CHECK(m1 == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(std::abs(s1) < 1e-6);

    BeatTrain empty;
    auto [mi, si] = beat_alignment(music, empty);
    CHECK(std::isinf(mi));
    CHECK(si == 0.0);
    CHECK_THROWS_AS(beat_alignment(empty, music), Error);

    std::vector<double> bad = {1.0, 0.5};
    CHECK_THROWS_AS(beat_train_from_times(bad), Error);
}

TEST_CASE("tempogram: click tempi, harmonics, degenerate input") {
    auto make_clicks = [](double bpm, double seconds) {
        std::vector<double> times;
        for (double t = 0.0; t < seconds; t += 60.0 / bpm) times.push_back(t);
        return beat_train_from_times(times);
    };

    for (double bpm : {60.0, 90.0, 120.0, 180.0}) {
        auto nov = novelty_from_beats(make_clicks(bpm, 30.0), 30.0);
        auto tg = tempogram(nov);
        REQUIRE(tg.shape[1] == 451);
        for (std::size_t s = 0; s < tg.shape[0]; ++s) {
            std::size_t arg = 0;
            for (std::size_t b = 1; b < tg.shape[1]; ++b)
                if (tg(s, b) > tg(s, arg)) arg = b;
            const double peak_bpm = kTempogramBpmMin + double(arg);
            CHECK(std::abs(peak_bpm - bpm) <= 1.0);
        }
        if (bpm == 120.0) {
            // the 240 bpm harmonic carries at least half the fundamental's energy
            CHECK(tg(0, std::size_t(240.0 - kTempogramBpmMin)) >=
                  0.5 * tg(0, std::size_t(120.0 - kTempogramBpmMin)));
        }
    }

    std::vector<double> zero(600, 0.0);
    auto zt = tempogram(zero);
    for (double v : zt.data) CHECK(v == 0.0);

    std::vector<double> shorty(100, 0.0);
    CHECK_THROWS_AS(tempogram(shorty), Error);
}

TEST_CASE("tempogram files: csv header and pgm payload") {
    std::vector<double> nov(200, 0.0);
    for (std::size_t i = 0; i < 200; i += 10) nov[i] = 1.0;
    auto tg = tempogram(nov);
    const auto dir = std::filesystem::temp_directory_path();
    const std::string csv = dir / "tfm_tg.csv", pgm = dir / "tfm_tg.pgm";
    write_tempogram_csv(csv, tg);
    write_tempogram_pgm(pgm, tg);

    std::ifstream cf(csv);
    std::string header;
    std::getline(cf, header);
    CHECK(header.substr(0, 6) == "30,31,");
    std::size_t rows = 0;
    for (std::string line; std::getline(cf, line);) ++rows;
    CHECK(rows == tg.shape[0]);

    std::ifstream pf(pgm, std::ios::binary);
    std::string magic, dims, maxval;
    std::getline(pf, magic);
    std::getline(pf, dims);
    std::getline(pf, maxval);
    CHECK(magic == "P5");
    CHECK(dims == std::to_string(tg.shape[1]) + " " + std::to_string(tg.shape[0]));
    std::vector<unsigned char> px(tg.size());
    pf.read(reinterpret_cast<char*>(px.data()), px.size());
    CHECK(pf.gcount() == std::streamsize(px.size()));
    CHECK(*std::max_element(px.begin(), px.end()) == 255);
    std::remove(csv.c_str());
    std::remove(pgm.c_str());
}
