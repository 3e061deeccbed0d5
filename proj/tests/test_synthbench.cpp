#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "transflower/metrics/beats.hpp"
#include "transflower/metrics/frechet.hpp"
#include "transflower/synthbench/synthbench.hpp"

using namespace tf;

TEST_CASE("config validation") {
    SynthConfig c;
    c.validate();
    c.tempos = {};
    CHECK_THROWS_AS(c.validate(), Error);
    c = SynthConfig{};
    c.tempos = {40.0};
    CHECK_THROWS_AS(c.validate(), Error);
    c = SynthConfig{};
    c.mode_probs = {0.7, 0.7};
    CHECK_THROWS_AS(c.validate(), Error);
    c = SynthConfig{};
    c.n_styles = 5;
    c.mode_probs = {0.2, 0.2, 0.2, 0.2, 0.2};
    CHECK_THROWS_AS(c.validate(), Error);  // 5 x 18 limb channels overflow the range
    c = SynthConfig{};
    c.sigma = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("noiseless single style: kinematic beats sit exactly on the pulse") {
    SynthConfig c;
    c.sigma = 0.0;
    c.n_styles = 1;
    c.mode_probs = {1.0};
    c.clip_count = 3;
    auto corpus = make_synthetic_corpus(c);
    REQUIRE(corpus.clips.size() == 3);
    for (const auto& clip : corpus.clips) {
        CHECK(clip.tempo_bpm == 120.0);
        auto kin = kinematic_beats(clip.motion);
        REQUIRE(kin.times.size() >= 2);
        // interior pulse beats (detector cannot see minima at the ends)
        std::vector<double> interior(clip.beat_times.begin() + 1,
                                     clip.beat_times.end() - 1);
        auto [mean, sd] = beat_alignment(beat_train_from_times(interior), kin);
        CHECK(mean < 1e-9);
        CHECK(sd < 1e-9);
    }
}

TEST_CASE("style draws follow the mode probabilities") {
    SynthConfig c;
    c.clip_count = 100;
    c.clip_seconds = 2.0;
    auto corpus = make_synthetic_corpus(c);
    std::size_t zero = 0;
    for (const auto& clip : corpus.clips) zero += clip.style == 0 ? 1 : 0;
    CHECK(zero >= 35);
    CHECK(zero <= 65);
}

TEST_CASE("fixed seed reproduces the corpus bitwise") {
    SynthConfig c;
    c.clip_count = 4;
    c.clip_seconds = 3.0;
    auto a = make_synthetic_corpus(c);
    auto b = make_synthetic_corpus(c);
    REQUIRE(a.clips.size() == b.clips.size());
    for (std::size_t i = 0; i < a.clips.size(); ++i) {
        CHECK(a.clips[i].motion.frames.data == b.clips[i].motion.frames.data);
        CHECK(a.clips[i].audio.frames.data == b.clips[i].audio.frames.data);
        CHECK(a.clips[i].style == b.clips[i].style);
        CHECK(a.clips[i].beat_times == b.clips[i].beat_times);
    }
    c.seed = 1;
    auto d = make_synthetic_corpus(c);
    CHECK(a.clips[0].motion.frames.data != d.clips[0].motion.frames.data);
}

TEST_CASE("oracle: Gaussian entropy, scale rule, mode entropy, rejection") {
    SynthConfig c;
    c.sigma = 1.0;
    auto o = oracle_stats(c);
    CHECK(o.entropy_rate_per_dim == doctest::Approx(1.4189385332).epsilon(1e-9));
    c.sigma = 0.1;
    CHECK(oracle_stats(c).entropy_rate_per_dim ==
          doctest::Approx(1.4189385332 + std::log(0.1)).epsilon(1e-9));
    // equal two-mode choice costs exactly log 2 nats
    CHECK(o.mode_entropy == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    c.mode_probs = {1.0, 0.0};
    CHECK(oracle_stats(c).mode_entropy == doctest::Approx(0.0));
    c = SynthConfig{};
    c.sigma = 0.0;
    CHECK_THROWS_AS(oracle_stats(c), Error);
    c = SynthConfig{};
    c.beat_jitter = 0.02;
    CHECK(oracle_stats(c).expected_beat_offset ==
          doctest::Approx(0.02 * std::sqrt(2.0 / M_PI)).epsilon(1e-12));
}

TEST_CASE("ground truth passes its own beat metric") {
    SynthConfig c;
    c.clip_count = 5;
    auto corpus = make_synthetic_corpus(c);
    for (const auto& clip : corpus.clips) {
        auto kin = kinematic_beats(clip.motion);
        auto [mean, sd] = beat_alignment(beat_train_from_times(clip.beat_times), kin);
        CHECK(mean < 2.0 * c.sigma + 1.0 / kFps);
    }
}

TEST_CASE("corpus self-consistency: split-half FMD far below cross-style FMD") {
    SynthConfig c;
    c.clip_count = 24;
    c.seed = 3;
    auto corpus = make_synthetic_corpus(c);
    std::vector<MotionSequence> s0, s1;
    for (const auto& clip : corpus.clips)
        (clip.style == 0 ? s0 : s1).push_back(clip.motion);
    REQUIRE(s0.size() >= 4);
    REQUIRE(s1.size() >= 4);
    std::vector<MotionSequence> h0(s0.begin(), s0.begin() + s0.size() / 2);
    std::vector<MotionSequence> h1(s0.begin() + s0.size() / 2, s0.end());
    const double self_fmd = fpd_fmd(h0, h1).second;
    const double cross_fmd = fpd_fmd(s0, s1).second;
    CHECK(self_fmd < 0.05 * cross_fmd);
}

TEST_CASE("written corpus: feature files and labels") {
    SynthConfig c;
    c.clip_count = 2;
    c.clip_seconds = 2.0;
    auto corpus = make_synthetic_corpus(c);
    const auto dir = (std::filesystem::temp_directory_path() / "tfs_corpus").string();
    std::filesystem::remove_all(dir);
    write_synth_corpus(dir, corpus);

    auto m = read_motion_file(dir + "/clip_000.mfeat");
    CHECK(m.frames.shape == corpus.clips[0].motion.frames.shape);
    auto a = read_audio_feature_file(dir + "/clip_001.afeat");
    CHECK(a.frames.shape == corpus.clips[1].audio.frames.shape);

    std::ifstream labels(dir + "/labels.csv");
    std::string line;
    std::getline(labels, line);
    CHECK(line == "clip,style,tempo");
    std::size_t rows = 0;
    while (std::getline(labels, line)) ++rows;
    CHECK(rows == 2);

    auto beats = read_beat_file(dir + "/clip_000.beats");
    CHECK(beats.size() == corpus.clips[0].beat_times.size());
    std::filesystem::remove_all(dir);
}
