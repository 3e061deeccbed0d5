// Command-line entry point: feature extraction, standardization, synthetic
// corpus generation, training, generation, evaluation, prompting experiments.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "transflower/features/audio.hpp"
#include "transflower/features/feature_io.hpp"
#include "transflower/metrics/beats.hpp"
#include "transflower/metrics/frechet.hpp"
#include "transflower/metrics/tempogram.hpp"
#include "transflower/model/checkpoint.hpp"
#include "transflower/model/prompt.hpp"
#include "transflower/model/train.hpp"
#include "transflower/synthbench/synthbench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tf;

namespace {

constexpr const char* kVersion =
    "tf 0.1.0 (formats tffeat-1 tfstd-1 tfck-1)";

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& section) {
    if (!j.is_object())
        throw usage_error("config section '" + section + "' must be an object");
    for (const auto& [k, v] : j.items())
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw usage_error("config: unknown key '" + k + "' in section '" +
                              section + "'");
}

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("cannot open " + path);
    try {
        json j;
        f >> j;
        return j;
    } catch (const json::exception& e) {
        throw data_error("bad JSON in " + path + ": " + e.what());
    }
}

// Run configuration: {model, train, data, sample, eval} with strict keys;
// command-line flags override file values.
struct RunConfig {
    json model, train, data, sample, eval;

    static RunConfig load(const std::string& path) {
        RunConfig rc;
        if (path.empty()) return rc;
        json j = load_json(path);
        check_keys(j, {"model", "train", "data", "sample", "eval"}, "top level");
        rc.model = j.value("model", json());
        rc.train = j.value("train", json::object());
        rc.data = j.value("data", json::object());
        rc.sample = j.value("sample", json::object());
        rc.eval = j.value("eval", json::object());
        if (!rc.train.is_null())
            check_keys(rc.train, {"lr", "milestones", "steps", "batch_size", "seed",
                                  "grad_clip"},
                       "train");
        if (!rc.data.is_null()) check_keys(rc.data, {"dir", "stride"}, "data");
        if (!rc.sample.is_null())
            check_keys(rc.sample, {"tau", "stride", "length"}, "sample");
        if (!rc.eval.is_null()) check_keys(rc.eval, {"metrics"}, "eval");
        return rc;
    }

    // preset expansion happens before validation
    TransflowerConfig model_config(const std::string& preset_flag) const {
        if (!preset_flag.empty()) return TransflowerConfig::from_preset(preset_flag);
        if (model.is_string()) return TransflowerConfig::from_preset(model.get<std::string>());
        if (model.is_object()) {
            check_keys(model, {"preset", "dtype", "encoder", "flow"}, "model");
            if (!model.contains("encoder")) {
                auto c = TransflowerConfig::from_preset(model.value("preset", "desk"));
                c.dtype = model.value("dtype", c.dtype);
                c.validate();
                return c;
            }
            return TransflowerConfig::from_json(model);
        }
        return TransflowerConfig::desk();
    }

    TrainSchedule schedule() const {
        TrainSchedule s;
        if (train.is_object()) {
            s.lr = train.value("lr", s.lr);
            if (train.contains("milestones"))
                s.milestones = train["milestones"].get<std::vector<std::size_t>>();
            s.total_steps = train.value("steps", s.total_steps);
            s.batch_size = train.value("batch_size", s.batch_size);
            s.seed = train.value("seed", s.seed);
            s.grad_clip = train.value("grad_clip", s.grad_clip);
        }
        s.validate();
        return s;
    }
};

struct Clip {
    std::string name;
    MotionSequence motion;
    AudioFeatureSequence audio;
    long long style = -1;
};

std::vector<Clip> load_corpus(const std::string& dir, bool need_audio = true) {
    if (!fs::is_directory(dir)) throw data_error("corpus directory not found: " + dir);
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".mfeat") stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    if (stems.empty()) throw data_error("no .mfeat files in " + dir);

    std::map<std::string, long long> styles;
    const std::string labels = dir + "/labels.csv";
    if (fs::exists(labels)) {
        std::ifstream f(labels);
        std::string line;
        std::getline(f, line);  // header
        while (std::getline(f, line)) {
            const auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos) continue;
            styles[line.substr(0, c1)] = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
        }
    }

    std::vector<Clip> out;
    for (const auto& stem : stems) {
        Clip c;
        c.name = stem;
        c.motion = read_motion_file(dir + "/" + stem + ".mfeat");
        const std::string af = dir + "/" + stem + ".afeat";
        if (fs::exists(af))
            c.audio = read_audio_feature_file(af);
        else if (need_audio)
            throw data_error("missing audio features for clip '" + stem + "' (" + af + ")");
        auto it = styles.find(stem);
        if (it != styles.end()) c.style = it->second;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<TrainingExample> windowed_dataset(const std::vector<Clip>& corpus,
                                              const Standardizer& st,
                                              const TransflowerConfig& cfg,
                                              std::size_t stride) {
    WindowParams wp = cfg.window_params();
    wp.stride = stride;
    std::vector<TrainingExample> out;
    for (const auto& clip : corpus) {
        auto ex = window_dataset(st.apply_motion(clip.motion.frames),
                                 st.apply_audio(clip.audio.frames), wp);
        out.insert(out.end(), std::make_move_iterator(ex.begin()),
                   std::make_move_iterator(ex.end()));
    }
    if (out.empty()) throw data_error("corpus produced no training windows");
    return out;
}

Standardizer fit_standardizer(const std::vector<Clip>& corpus) {
    std::vector<MotionSequence> ms;
    std::vector<AudioFeatureSequence> as;
    for (const auto& c : corpus) {
        ms.push_back(c.motion);
        as.push_back(c.audio);
    }
    return Standardizer::fit(ms, as);
}

std::string manifest_dtype(const std::string& ckpt_dir) {
    return load_json(ckpt_dir + "/manifest.json").value("dtype", "f32");
}

SynthConfig synth_config_from_json(const json& j) {
    check_keys(j,
               {"tempos", "n_styles", "mode_probs", "sigma", "beat_jitter",
                "clip_seconds", "clip_count", "seed", "y_amplitude",
                "style_amplitude", "style_width"},
               "synth");
    SynthConfig c;
    if (j.contains("tempos")) c.tempos = j["tempos"].get<std::vector<double>>();
    c.n_styles = j.value("n_styles", c.n_styles);
    if (j.contains("mode_probs"))
        c.mode_probs = j["mode_probs"].get<std::vector<double>>();
    c.sigma = j.value("sigma", c.sigma);
    c.beat_jitter = j.value("beat_jitter", c.beat_jitter);
    c.clip_seconds = j.value("clip_seconds", c.clip_seconds);
    c.clip_count = j.value("clip_count", c.clip_count);
    c.seed = j.value("seed", c.seed);
    c.y_amplitude = j.value("y_amplitude", c.y_amplitude);
    c.style_amplitude = j.value("style_amplitude", c.style_amplitude);
    c.style_width = j.value("style_width", c.style_width);
    return c;
}

void write_report_csv(const std::string& path,
                      const std::vector<std::pair<std::string, double>>& rows) {
    std::ofstream f(path);
    if (!f) throw data_error("cannot open " + path);
    f << "metric,value\n";
    f.precision(17);
    for (const auto& [k, v] : rows) f << k << "," << v << "\n";
}

// ---- subcommand bodies ----

template <class T>
void run_train(const TransflowerConfig& cfg, const TrainSchedule& sched,
               const std::vector<Clip>& corpus, const Standardizer& st,
               std::size_t steps, std::size_t stride, std::uint64_t seed,
               const std::string& out) {
    auto dataset = windowed_dataset(corpus, st, cfg, stride);
    auto store = build_model<T>(cfg, seed);
    auto trace = train_loop(store, cfg, dataset, sched, steps);
    fs::create_directories(out);
    write_loss_trace(out + "/loss.csv", trace);
    Checkpoint<T> ck{cfg, steps, st, store};
    save_checkpoint(out + "/ckpt", ck);
    std::cout << "trained " << steps << " steps on " << dataset.size()
              << " windows; final nll " << trace.back().nll << "\n";
}

template <class T>
void run_generate(const std::string& ckpt, const std::string& audio_path,
                  const std::string& seed_path, std::size_t length, double tau,
                  std::size_t stride, std::uint64_t seed, const std::string& out) {
    auto ck = load_checkpoint<T>(ckpt);
    auto audio = read_audio_feature_file(audio_path);
    auto seed_motion = read_motion_file(seed_path);
    RngStream rng(seed);
    auto motion = rollout(ck.store, ck.config, ck.standardizer, seed_motion.frames,
                          audio, length, tau, rng, stride);
    write_motion_file(out, motion);
    std::cout << "wrote " << motion.length() << " frames to " << out << "\n";
}

template <class T>
void run_prompt_matrix(const std::string& ckpt, const std::string& data_dir,
                       std::size_t songs, std::size_t length, double tau,
                       std::size_t stride, std::uint64_t seed,
                       const std::string& out) {
    auto ck = load_checkpoint<T>(ckpt);
    auto corpus = load_corpus(data_dir);
    std::map<long long, std::vector<const Clip*>> by_style;
    for (const auto& c : corpus) {
        if (c.style < 0)
            throw data_error("prompt-matrix: corpus has no style labels (labels.csv)");
        by_style[c.style].push_back(&c);
    }
    std::vector<Tensor<double>> seeds;
    std::vector<std::vector<MotionSequence>> refs;
    std::vector<std::string> names;
    const std::size_t k_x = ck.config.encoder.k_x;
    for (const auto& [style, clips] : by_style) {
        const auto& first = clips.front()->motion.frames;
        seeds.push_back(padded_rows(first, 0, std::min<std::size_t>(k_x, first.shape[0])));
        refs.emplace_back();
        for (const auto* c : clips) refs.back().push_back(c->motion);
        names.push_back("style" + std::to_string(style));
    }
    std::vector<AudioFeatureSequence> song_feats;
    for (std::size_t i = 0; i < songs && i < corpus.size(); ++i)
        song_feats.push_back(corpus[i].audio);
    auto m = model_prompt_matrix(ck.store, ck.config, ck.standardizer, seeds, song_feats,
                                 refs, length, tau, seed, stride);
    write_prompt_matrix_csv(out, m, names);
    std::cout << "wrote " << m.shape[0] << "x" << m.shape[1] << " prompt matrix to "
              << out << "\n";
}

template <class T>
void run_info(const std::string& ckpt) {
    auto ck = load_checkpoint<T>(ckpt);
    std::cout << "version: " << kCheckpointVersion << "\n"
              << "dtype: " << ck.config.dtype << "\n"
              << "preset: " << ck.config.preset << "\n"
              << "step: " << ck.step << "\n"
              << "tensors: " << ck.store.params.size() << "\n"
              << "parameters: " << model_param_count(ck.store) << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"Transformer + normalizing-flow dance generation toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, preset, out, data_dir, in_path, ckpt;
    std::uint64_t seed = 0;

    // features
    auto* features = app.add_subcommand("features", "Extract feature files");
    features->require_subcommand(1);
    auto* feat_audio = features->add_subcommand("audio", "WAV -> .afeat features");
    std::string fa_in, fa_out;
    feat_audio->add_option("--in", fa_in, "input WAV file")->required();
    feat_audio->add_option("--out", fa_out, "output .afeat path")->required();
    auto* feat_motion =
        features->add_subcommand("motion", "interchange JSON -> .mfeat features");
    std::string fm_in, fm_out;
    feat_motion->add_option("--in", fm_in, "input interchange JSON")->required();
    feat_motion->add_option("--out", fm_out, "output .mfeat path")->required();

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    stats->require_subcommand(1);
    auto* stats_fit = stats->add_subcommand("fit", "Fit a feature standardizer");
    std::string sf_data, sf_out;
    stats_fit->add_option("--data", sf_data, "corpus directory")->required();
    stats_fit->add_option("--out", sf_out, "output standardizer JSON")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "Synthetic benchmark corpus");
    synth->require_subcommand(1);
    auto* synth_make = synth->add_subcommand("make", "Generate a synthetic corpus");
    std::string sm_config, sm_out;
    std::uint64_t sm_seed = 0;
    bool sm_seed_set = false;
    synth_make->add_option("--config", sm_config, "synth config JSON");
    synth_make->add_option("--out", sm_out, "output corpus directory")->required();
    synth_make->add_option("--seed", sm_seed, "override the config seed")
        ->each([&](const std::string&) { sm_seed_set = true; });

    // train
    auto* train = app.add_subcommand("train", "Train a model");
    std::size_t tr_steps = 0, tr_stride = 1, tr_batch = 0;
    double tr_lr = 0.0;
    train->add_option("--config", config_path, "run config JSON");
    train->add_option("--preset", preset, "model preset (desk|paper)");
    train->add_option("--data", data_dir, "corpus directory");
    train->add_option("--steps", tr_steps, "optimizer steps");
    train->add_option("--seed", seed, "random seed");
    train->add_option("--out", out, "output directory")->required();
    train->add_option("--batch", tr_batch, "batch size override");
    train->add_option("--lr", tr_lr, "learning rate override");
    train->add_option("--stride", tr_stride, "window stride");

    // generate
    auto* generate = app.add_subcommand("generate", "Autoregressive rollout");
    std::string g_audio, g_seed_motion, g_out = "generated.mfeat";
    std::size_t g_length = 200, g_stride = 1;
    double g_tau = 1.0;
    generate->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    generate->add_option("--audio", g_audio, "audio feature file")->required();
    generate->add_option("--seed-motion", g_seed_motion, "seed motion file")->required();
    generate->add_option("--length", g_length, "frames to generate");
    generate->add_option("--tau", g_tau, "sampling temperature");
    generate->add_option("--stride", g_stride, "poses fed back per step");
    generate->add_option("--seed", seed, "random seed");
    generate->add_option("--out", g_out, "output .mfeat path");

    // eval
    auto* eval = app.add_subcommand("eval", "Objective metrics");
    eval->require_subcommand(1);
    auto* ev_fpd = eval->add_subcommand("fpd-fmd", "Frechet pose/movement distances");
    std::string ef_gen, ef_ref, ef_out;
    ev_fpd->add_option("--generated", ef_gen, "generated corpus directory")->required();
    ev_fpd->add_option("--reference", ef_ref, "reference corpus directory")->required();
    ev_fpd->add_option("--out", ef_out, "report CSV path");
    auto* ev_beats = eval->add_subcommand("beats", "Beat extraction");
    std::string eb_motion, eb_audio, eb_out;
    ev_beats->add_option("--motion", eb_motion, "motion feature file");
    ev_beats->add_option("--audio", eb_audio, "audio feature file");
    ev_beats->add_option("--out", eb_out, "beat-times output file");
    auto* ev_align = eval->add_subcommand("align", "Beat alignment statistics");
    std::string ea_motion, ea_audio, ea_beats, ea_out;
    ev_align->add_option("--motion", ea_motion, "motion feature file")->required();
    ev_align->add_option("--audio", ea_audio, "audio feature file");
    ev_align->add_option("--beats", ea_beats, "beat-time text file");
    ev_align->add_option("--out", ea_out, "report CSV path");
    auto* ev_tg = eval->add_subcommand("tempogram", "Time x tempo energy map");
    std::string et_motion, et_audio, et_out = ".";
    ev_tg->add_option("--motion", et_motion, "motion feature file");
    ev_tg->add_option("--audio", et_audio, "audio feature file");
    ev_tg->add_option("--out", et_out, "output directory");

    // prompt-matrix
    auto* pm = app.add_subcommand("prompt-matrix", "Seed-style FMD matrix");
    std::string pm_out = "prompt_matrix.csv";
    std::size_t pm_songs = 2, pm_length = 100, pm_stride = 1;
    double pm_tau = 1.0;
    pm->add_option("--ckpt", ckpt, "checkpoint directory")->required();
    pm->add_option("--data", data_dir, "labeled corpus directory")->required();
    pm->add_option("--songs", pm_songs, "songs per seed style");
    pm->add_option("--length", pm_length, "rollout length");
    pm->add_option("--tau", pm_tau, "sampling temperature");
    pm->add_option("--stride", pm_stride, "poses fed back per step");
    pm->add_option("--seed", seed, "random seed");
    pm->add_option("--out", pm_out, "output CSV path");

    // info
    auto* info = app.add_subcommand("info", "Inspect artifacts");
    info->require_subcommand(1);
    auto* info_ckpt = info->add_subcommand("checkpoint", "Checkpoint summary");
    info_ckpt->add_option("--ckpt", ckpt, "checkpoint directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error[1]: " << e.what() << "\n";
        return 1;
    }

    if (*feat_audio) {
        auto wav = read_wav(fa_in);
        write_audio_file(fa_out, extract_audio_features(wav.samples, wav.sample_rate));
        std::cout << "wrote " << fa_out << "\n";
    } else if (*feat_motion) {
        write_motion_file(fm_out, motion_from_interchange(load_json(fm_in)));
        std::cout << "wrote " << fm_out << "\n";
    } else if (*stats_fit) {
        auto st = fit_standardizer(load_corpus(sf_data));
        std::ofstream f(sf_out);
        if (!f) throw data_error("cannot open " + sf_out);
        f << st.to_json().dump(2) << "\n";
        std::cout << "wrote " << sf_out << "\n";
    } else if (*synth_make) {
        SynthConfig sc = sm_config.empty() ? SynthConfig{}
                                           : synth_config_from_json(load_json(sm_config));
        if (sm_seed_set) sc.seed = sm_seed;
        auto corpus = make_synthetic_corpus(sc);
        write_synth_corpus(sm_out, corpus);
        std::cout << "wrote " << corpus.clips.size() << " clips to " << sm_out << "\n";
    } else if (*train) {
        RunConfig rc = RunConfig::load(config_path);
        auto cfg = rc.model_config(preset);
        auto sched = rc.schedule();
        if (tr_batch > 0) sched.batch_size = tr_batch;
        if (tr_lr > 0.0) sched.lr = tr_lr;
        if (train->count("--seed")) sched.seed = seed;
        std::size_t steps = tr_steps > 0 ? tr_steps : rc.train.value("steps", std::size_t(0));
        if (steps == 0) throw usage_error("train: --steps (or train.steps) must be > 0");
        std::string dir = !data_dir.empty() ? data_dir : rc.data.value("dir", "");
        if (dir.empty()) throw usage_error("train: --data (or data.dir) is required");
        std::size_t stride = train->count("--stride") ? tr_stride
                                                      : rc.data.value("stride", std::size_t(1));
        auto corpus = load_corpus(dir);
        auto st = fit_standardizer(corpus);
        if (cfg.dtype == "f64")
            run_train<double>(cfg, sched, corpus, st, steps, stride, sched.seed, out);
        else
            run_train<float>(cfg, sched, corpus, st, steps, stride, sched.seed, out);
    } else if (*generate) {
        if (manifest_dtype(ckpt) == "f64")
            run_generate<double>(ckpt, g_audio, g_seed_motion, g_length, g_tau, g_stride,
                                 seed, g_out);
        else
            run_generate<float>(ckpt, g_audio, g_seed_motion, g_length, g_tau, g_stride,
                                seed, g_out);
    } else if (*ev_fpd) {
        std::vector<MotionSequence> gen, ref;
        for (const auto& c : load_corpus(ef_gen, false)) gen.push_back(c.motion);
        for (const auto& c : load_corpus(ef_ref, false)) ref.push_back(c.motion);
        std::string warning;
        auto [fpd, fmd] = fpd_fmd(gen, ref, &warning);
        if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
        std::cout << "fpd " << fpd << "\nfmd " << fmd << "\n";
        if (!ef_out.empty()) write_report_csv(ef_out, {{"fpd", fpd}, {"fmd", fmd}});
    } else if (*ev_beats) {
        if (eb_motion.empty() == eb_audio.empty())
            throw usage_error("eval beats: pass exactly one of --motion / --audio");
        BeatTrain bt = eb_motion.empty()
                           ? audio_beats(read_audio_feature_file(eb_audio))
                           : kinematic_beats(read_motion_file(eb_motion));
        if (bt.warning) std::cerr << "warning: undecidable tempo, empty train\n";
        std::cout << bt.times.size() << " beats\n";
        if (!eb_out.empty()) {
            std::ofstream f(eb_out);
            if (!f) throw data_error("cannot open " + eb_out);
            f.precision(17);
            for (double t : bt.times) f << t << "\n";
        }
    } else if (*ev_align) {
        if (ea_audio.empty() == ea_beats.empty())
            throw usage_error("eval align: pass exactly one of --audio / --beats");
        BeatTrain music = ea_audio.empty()
                              ? beat_train_from_times(read_beat_file(ea_beats))
                              : audio_beats(read_audio_feature_file(ea_audio));
        auto kin = kinematic_beats(read_motion_file(ea_motion));
        auto [mean, sd] = beat_alignment(music, kin);
        std::cout << "mean " << mean << "\nstd " << sd << "\n";
        if (!ea_out.empty()) write_report_csv(ea_out, {{"mean", mean}, {"std", sd}});
    } else if (*ev_tg) {
        if (et_motion.empty() == et_audio.empty())
            throw usage_error("eval tempogram: pass exactly one of --motion / --audio");
        std::vector<double> novelty;
        if (!et_motion.empty()) {
            auto motion = read_motion_file(et_motion);
            novelty = novelty_from_beats(kinematic_beats(motion),
                                         motion.length() / motion.fps, motion.fps);
        } else {
            auto audio = read_audio_feature_file(et_audio);
            novelty.resize(audio.length());
            for (std::size_t t = 0; t < audio.length(); ++t)
                novelty[t] = audio.frames(t, 80);
        }
        auto tg = tempogram(novelty);
        fs::create_directories(et_out);
        write_tempogram_csv(et_out + "/tempogram.csv", tg);
        write_tempogram_pgm(et_out + "/tempogram.pgm", tg);
        std::cout << "wrote " << tg.shape[0] << "x" << tg.shape[1] << " tempogram to "
                  << et_out << "\n";
    } else if (*pm) {
        if (manifest_dtype(ckpt) == "f64")
            run_prompt_matrix<double>(ckpt, data_dir, pm_songs, pm_length, pm_tau,
                                      pm_stride, seed, pm_out);
        else
            run_prompt_matrix<float>(ckpt, data_dir, pm_songs, pm_length, pm_tau,
                                     pm_stride, seed, pm_out);
    } else if (*info_ckpt) {
        if (manifest_dtype(ckpt) == "f64")
            run_info<double>(ckpt);
        else
            run_info<float>(ckpt);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error[" << static_cast<int>(e.kind()) << "]: " << e.what() << "\n";
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error[3]: " << e.what() << "\n";
        return 3;
    }
}
