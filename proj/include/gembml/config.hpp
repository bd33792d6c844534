#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gembml/meta.hpp"
#include "gembml/tasks.hpp"

namespace gembml {

class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Flat typed key-value configuration. Grammar: one `key = value` per line,
/// sections by dotted key prefixes, '#' comments. Values keep their raw text;
/// typed getters parse on access. Command-line overrides are plain key=value.
class Config {
public:
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    void parse_line(const std::string& raw, const std::string& where) {
        std::string line = raw;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) return;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw config_error(where + ": expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw config_error(where + ": empty key");
        kv_[key] = val;
    }

    static Config from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file " + path.string());
        Config c;
        std::string line;
        int no = 0;
        while (std::getline(in, line)) c.parse_line(line, path.string() + ":" + std::to_string(++no));
        return c;
    }

    void apply_override(const std::string& assignment) { parse_line(assignment, "--set"); }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : it->second;
    }
    std::string require_string(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw config_error("missing required config key: " + key);
        return it->second;
    }
    double get_double(const std::string& key, double def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        try {
            size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw config_error("");
            return v;
        } catch (...) {
            throw config_error("config key " + key + ": not a number: '" + it->second + "'");
        }
    }
    int64_t get_int(const std::string& key, int64_t def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw config_error("");
            return v;
        } catch (...) {
            throw config_error("config key " + key + ": not an integer: '" + it->second + "'");
        }
    }
    bool get_bool(const std::string& key, bool def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw config_error("config key " + key + ": not a bool: '" + it->second + "'");
    }
    std::vector<int> get_int_list(const std::string& key, const std::vector<int>& def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        std::vector<int> out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stoi(tok));
            } catch (...) {
                throw config_error("config key " + key + ": bad integer list: '" + it->second + "'");
            }
        }
        if (out.empty()) throw config_error("config key " + key + ": empty list");
        return out;
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

    /// Canonical `key = value` text, sorted by key; what manifests snapshot.
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : kv_) out += k + " = " + v + "\n";
        return out;
    }

    /// FNV-1a over the canonical text, hex-encoded.
    std::string hash() const {
        uint64_t h = 1469598103934665603ULL;
        for (char c : canonical_text()) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }

private:
    std::map<std::string, std::string> kv_;
};

/// Assembled run settings for the experiment CLI.
struct RunConfig {
    std::string experiment = "run";
    uint64_t seed = 0;
    std::filesystem::path out_dir = "out";
    int jobs = 1;
    ArchSpec arch;
    MetaConfig meta;
    SinusoidSetting setting = SinusoidSetting::Default;
    int task_k = 10;
    int task_k_split = 5;
    int test_tasks = 600;
    int dump_tasks = 0;
    Config raw;
};

inline VIConfig vi_config_from(const Config& c, const std::string& prefix, const VIConfig& defs) {
    VIConfig v = defs;
    v.steps = static_cast<int>(c.get_int(prefix + ".steps", v.steps));
    v.learning_rate = c.get_double(prefix + ".lr", v.learning_rate);
    v.mc_samples = static_cast<int>(c.get_int(prefix + ".mc_samples", v.mc_samples));
    v.optimizer = optimizer_from_string(c.get_string(prefix + ".optimizer", to_string(v.optimizer)));
    v.adam_beta1 = c.get_double(prefix + ".adam_beta1", v.adam_beta1);
    v.adam_beta2 = c.get_double(prefix + ".adam_beta2", v.adam_beta2);
    v.adam_eps = c.get_double(prefix + ".adam_eps", v.adam_eps);
    v.clip_norm = c.get_double(prefix + ".clip", v.clip_norm);
    return v;
}

inline RunConfig run_config_from(const Config& c) {
    RunConfig r;
    r.raw = c;
    r.experiment = c.get_string("experiment.name", r.experiment);
    if (!c.has("seed")) throw config_error("missing required config key: seed");
    r.seed = static_cast<uint64_t>(c.get_int("seed", 0));
    r.out_dir = c.get_string("out", r.out_dir.string());
    r.jobs = static_cast<int>(c.get_int("jobs", r.jobs));
    if (r.jobs < 1) throw config_error("jobs must be >= 1");

    std::vector<int> layers = c.get_int_list("arch.layers", {1, 40, 40, 1});
    r.arch = ArchSpec(layers, activation_from_string(c.get_string("arch.activation", "relu")));

    MetaConfig& m = r.meta;
    m.method = method_from_string(c.get_string("method", "gem_bml_plus"));
    m.meta_lr = c.get_double("meta.lr", 0.001);
    m.meta_batch_size = static_cast<int>(c.get_int("meta.batch_size", 5));
    m.iterations = static_cast<int>(c.get_int("meta.iterations", 20000));
    m.seed = r.seed;
    m.noise_var = c.get_double("task.noise_var", 1.0);
    m.pooled_vi = c.get_bool("meta.pooled_vi", false);
    m.init_scale = c.get_double("meta.init_scale", 0.05);
    m.init_logvar = c.get_double("meta.init_logvar", -6.0);
    if (c.has("meta.fixed_variance")) m.fixed_variance = c.get_double("meta.fixed_variance", 1.0);
    if (is_delta_method(m.method) && !m.fixed_variance) m.fixed_variance = 1.0;
    m.checkpoint_every = static_cast<int>(c.get_int("meta.checkpoint_every", 0));
    m.skip_on_failure = c.get_bool("meta.skip_on_failure", false);
    m.mc_predictor = c.get_bool("test.mc_predictor", false);
    m.mc_predictor_draws = static_cast<int>(c.get_int("test.mc_predictor_draws", 20));

    VIConfig inner_defaults;
    inner_defaults.steps = 1;
    inner_defaults.learning_rate = 0.001;
    m.inner = vi_config_from(c, "inner", inner_defaults);
    VIConfig test_defaults = m.inner;
    test_defaults.steps = 10;
    m.inner_test = vi_config_from(c, "inner_test", test_defaults);

    try {
        r.setting = sinusoid_setting_from_string(c.get_string("task.setting", "default"));
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    r.task_k = static_cast<int>(c.get_int("task.k", 10));
    r.task_k_split = static_cast<int>(c.get_int("task.k_split", 5));
    r.test_tasks = static_cast<int>(c.get_int("test.tasks", 600));
    r.dump_tasks = static_cast<int>(c.get_int("sine.dump_tasks", 0));
    if (r.task_k < 1 || r.task_k_split < 0 || r.task_k_split > r.task_k)
        throw config_error("task.k / task.k_split out of range");
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    return r;
}

}  // namespace gembml
