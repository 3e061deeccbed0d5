// Checkpoint format: <dir>/manifest.json (version, config, step,
// standardizer, tensor name lists) + <dir>/params.bin with repeated records
//   [u32 LE name length][UTF-8 name][u8 dtype: 0=f32, 1=f64][u8 rank]
//   [rank x u64 LE dims][raw LE data]
// Optimizer slots are stored alongside the parameters ("adam.<name>.m/.v")
// so resuming reproduces an uninterrupted run exactly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "transflower/features/standardizer.hpp"
#include "transflower/model/transflower.hpp"

namespace tf {

constexpr const char* kCheckpointVersion = "tfck-1";

template <class T>
struct Checkpoint {
    TransflowerConfig config;
    std::size_t step = 0;
    Standardizer standardizer;
    ParameterStore<T> store;
};

namespace ckpt_detail {

template <class T>
constexpr std::uint8_t dtype_code() {
    return std::is_same_v<T, float> ? 0 : 1;
}

template <class T>
void write_record(std::ofstream& f, const std::string& name, const Tensor<T>& t) {
    const std::uint32_t nlen = static_cast<std::uint32_t>(name.size());
    f.write(reinterpret_cast<const char*>(&nlen), 4);
    f.write(name.data(), nlen);
    const std::uint8_t dt = dtype_code<T>(), rank = std::uint8_t(t.shape.size());
    f.write(reinterpret_cast<const char*>(&dt), 1);
    f.write(reinterpret_cast<const char*>(&rank), 1);
    for (std::size_t d : t.shape) {
        const std::uint64_t v = d;
        f.write(reinterpret_cast<const char*>(&v), 8);
    }
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <class T>
bool read_record(std::ifstream& f, std::string& name, Tensor<T>& t,
                 const std::string& path) {
    std::uint32_t nlen = 0;
    if (!f.read(reinterpret_cast<char*>(&nlen), 4)) return false;  // clean EOF
    const auto fail = [&](const std::string& what) {
        throw data_error("checkpoint: " + what + " in " + path + " at byte offset " +
                         std::to_string(static_cast<long long>(f.tellg()) < 0
                                            ? -1
                                            : static_cast<long long>(f.tellg())));
    };
    if (nlen == 0 || nlen > 4096) fail("implausible name length");
    name.resize(nlen);
    if (!f.read(name.data(), nlen)) fail("truncated tensor name");
    std::uint8_t dt = 0, rank = 0;
    if (!f.read(reinterpret_cast<char*>(&dt), 1) ||
        !f.read(reinterpret_cast<char*>(&rank), 1))
        fail("truncated record header");
    if (dt != dtype_code<T>()) fail("dtype mismatch for tensor '" + name + "'");
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
        std::uint64_t v = 0;
        if (!f.read(reinterpret_cast<char*>(&v), 8)) fail("truncated dims");
        shape[i] = static_cast<std::size_t>(v);
        total *= shape[i];
    }
    t = Tensor<T>(shape);
    if (!f.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(total * sizeof(T))))
        fail("truncated data for tensor '" + name + "'");
    return true;
}

}  // namespace ckpt_detail

template <class T>
void save_checkpoint(const std::string& dir, const Checkpoint<T>& ck) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {
        {"version", kCheckpointVersion},
        {"dtype", ckpt_detail::dtype_code<T>() == 0 ? "f32" : "f64"},
        {"config", ck.config.to_json()},
        {"step", ck.step},
        {"standardizer", ck.standardizer.to_json()},
    };
    nlohmann::json params = nlohmann::json::array(), state = nlohmann::json::array();
    for (const auto& [name, t] : ck.store.params) params.push_back(name);
    for (const auto& [name, t] : ck.store.state) state.push_back(name);
    nlohmann::json adam_steps = nlohmann::json::object();
    for (const auto& [name, slot] : ck.store.adam) adam_steps[name] = slot.step;
    manifest["params"] = params;
    manifest["state"] = state;
    manifest["adam_steps"] = adam_steps;

    {
        std::ofstream mf(dir + "/manifest.json");
        if (!mf) throw data_error("save_checkpoint: cannot open " + dir + "/manifest.json");
        mf << manifest.dump(2) << "\n";
    }
    std::ofstream bf(dir + "/params.bin", std::ios::binary);
    if (!bf) throw data_error("save_checkpoint: cannot open " + dir + "/params.bin");
    for (const auto& [name, t] : ck.store.params) ckpt_detail::write_record(bf, name, t);
    for (const auto& [name, t] : ck.store.state) ckpt_detail::write_record(bf, name, t);
    for (const auto& [name, slot] : ck.store.adam) {
        ckpt_detail::write_record(bf, "adam." + name + ".m", slot.m);
        ckpt_detail::write_record(bf, "adam." + name + ".v", slot.v);
    }
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& dir) {
    const std::string mpath = dir + "/manifest.json";
    std::ifstream mf(mpath);
    if (!mf) throw data_error("load_checkpoint: cannot open " + mpath);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw data_error("load_checkpoint: bad manifest " + mpath + ": " + e.what());
    }
    if (manifest.value("version", "") != std::string(kCheckpointVersion))
        throw data_error("load_checkpoint: unsupported version '" +
                         manifest.value("version", "?") + "' in " + mpath);
    const std::string want_dtype = ckpt_detail::dtype_code<T>() == 0 ? "f32" : "f64";
    if (manifest.value("dtype", "f32") != want_dtype)
        throw data_error("load_checkpoint: checkpoint dtype " +
                         manifest.value("dtype", "?") + ", expected " + want_dtype);

    Checkpoint<T> ck;
    ck.config = TransflowerConfig::from_json(manifest.at("config"));
    ck.step = manifest.at("step").get<std::size_t>();
    ck.standardizer = Standardizer::from_json(manifest.at("standardizer"));

    std::set<std::string> param_names, state_names;
    for (const auto& n : manifest.at("params")) param_names.insert(n.get<std::string>());
    for (const auto& n : manifest.at("state")) state_names.insert(n.get<std::string>());

    const std::string bpath = dir + "/params.bin";
    std::ifstream bf(bpath, std::ios::binary);
    if (!bf) throw data_error("load_checkpoint: cannot open " + bpath);
    std::string name;
    Tensor<T> t;
    std::map<std::string, Tensor<T>> adam_parts;
    while (ckpt_detail::read_record(bf, name, t, bpath)) {
        if (param_names.count(name)) {
            ck.store.params[name] = t;
        } else if (state_names.count(name)) {
            ck.store.state[name] = t;
        } else if (name.rfind("adam.", 0) == 0) {
            adam_parts[name] = t;
        } else {
            throw data_error("load_checkpoint: unknown tensor name '" + name + "' in " +
                             bpath);
        }
    }
    for (const auto& n : param_names)
        if (!ck.store.params.count(n))
            throw data_error("load_checkpoint: missing parameter '" + n + "' in " + bpath);
    for (const auto& n : state_names)
        if (!ck.store.state.count(n))
            throw data_error("load_checkpoint: missing state tensor '" + n + "' in " +
                             bpath);

    const auto& adam_steps = manifest.value("adam_steps", nlohmann::json::object());
    for (const auto& [pname, jstep] : adam_steps.items()) {
        auto& slot = ck.store.adam[pname];
        slot.step = jstep.template get<std::size_t>();
        auto mit = adam_parts.find("adam." + pname + ".m");
        auto vit = adam_parts.find("adam." + pname + ".v");
        if (mit == adam_parts.end() || vit == adam_parts.end())
            throw data_error("load_checkpoint: missing optimizer slots for '" + pname +
                             "' in " + bpath);
        slot.m = mit->second;
        slot.v = vit->second;
    }
    return ck;
}

}  // namespace tf
