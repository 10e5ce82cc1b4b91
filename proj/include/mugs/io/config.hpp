#pragma once

// Structured-text run configuration: `key = value` lines grouped under
// `[section]` headers, `#` or `;` full-line comments. Every field has a
// default; file values override defaults and command-line flags override the
// file. Unknown keys are rejected with their line and column so a typo fails
// the run instead of silently using a default.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mugs/io/dataset.hpp"
#include "mugs/train/model.hpp"
#include "mugs/train/trainer.hpp"

namespace mugs {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ConfigEntry {
    std::string section, key, value;
    int line = 0, col = 0;  // 1-based position of the key; 0 for programmatic entries
    mutable bool used = false;
};

class Config {
  public:
    static Config parse_text(const std::string& text, const std::string& origin) {
        Config cfg;
        cfg.origin_ = origin;
        std::istringstream in(text);
        std::string raw;
        std::string section;
        int line_no = 0;
        while (std::getline(in, raw)) {
            ++line_no;
            const size_t first = raw.find_first_not_of(" \t");
            const int indent = first == std::string::npos ? 0 : static_cast<int>(first);
            std::string line = trim(raw);
            if (line.empty() || line[0] == '#' || line[0] == ';') continue;
            const int col = indent + 1;
            if (line.front() == '[') {
                if (line.back() != ']' || line.size() < 3)
                    throw ConfigError(origin + ":" + std::to_string(line_no) + ":" +
                                      std::to_string(col) + ": malformed section header '" + line +
                                      "'");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(line_no) + ":" +
                                  std::to_string(col) + ": expected 'key = value', got '" + line +
                                  "'");
            ConfigEntry e;
            e.section = section;
            e.key = trim(line.substr(0, eq));
            e.value = trim(line.substr(eq + 1));
            e.line = line_no;
            e.col = col;
            if (e.key.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ":" +
                                  std::to_string(col) + ": empty key");
            cfg.entries_.push_back(std::move(e));
        }
        return cfg;
    }

    static Config parse_file(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw ConfigError("config: cannot open " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return parse_text(ss.str(), path);
    }

    // Command-line override; wins over file entries for the same key.
    void set(const std::string& section, const std::string& key, const std::string& value) {
        ConfigEntry e;
        e.section = section;
        e.key = key;
        e.value = value;
        entries_.push_back(std::move(e));
    }

    std::string gets(const std::string& section, const std::string& key,
                     const std::string& def) const {
        const ConfigEntry* e = find(section, key);
        return e ? e->value : def;
    }

    int64_t geti(const std::string& section, const std::string& key, int64_t def) const {
        const ConfigEntry* e = find(section, key);
        if (!e) return def;
        char* end = nullptr;
        const long long v = std::strtoll(e->value.c_str(), &end, 10);
        if (end == e->value.c_str() || *end != '\0')
            throw ConfigError(where(*e) + ": key '" + qualified(section, key) +
                              "': expected an integer, got '" + e->value + "'");
        return v;
    }

    uint64_t getu(const std::string& section, const std::string& key, uint64_t def) const {
        const int64_t v = geti(section, key, static_cast<int64_t>(def));
        if (v < 0) {
            const ConfigEntry* e = find(section, key);
            throw ConfigError(where(*e) + ": key '" + qualified(section, key) +
                              "': expected a non-negative integer, got '" + e->value + "'");
        }
        return static_cast<uint64_t>(v);
    }

    double getd(const std::string& section, const std::string& key, double def) const {
        const ConfigEntry* e = find(section, key);
        if (!e) return def;
        char* end = nullptr;
        const double v = std::strtod(e->value.c_str(), &end);
        if (end == e->value.c_str() || *end != '\0')
            throw ConfigError(where(*e) + ": key '" + qualified(section, key) +
                              "': expected a number, got '" + e->value + "'");
        return v;
    }

    bool getb(const std::string& section, const std::string& key, bool def) const {
        const ConfigEntry* e = find(section, key);
        if (!e) return def;
        std::string v = e->value;
        for (char& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(where(*e) + ": key '" + qualified(section, key) +
                          "': expected a boolean, got '" + e->value + "'");
    }

    // Rejects the first entry no getter consumed, pointing at its position.
    void require_all_used() const {
        for (const ConfigEntry& e : entries_)
            if (!e.used)
                throw ConfigError(where(e) + ": unknown key '" + qualified(e.section, e.key) +
                                  "'");
    }

  private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    static std::string qualified(const std::string& section, const std::string& key) {
        return section.empty() ? key : section + "." + key;
    }

    std::string where(const ConfigEntry& e) const {
        if (e.line == 0) return "command line";
        return origin_ + ":" + std::to_string(e.line) + ":" + std::to_string(e.col);
    }

    // Last entry wins so command-line overrides shadow file values; every
    // shadowed duplicate is still marked used (it is a legal repeat, not a typo).
    const ConfigEntry* find(const std::string& section, const std::string& key) const {
        const ConfigEntry* hit = nullptr;
        for (const ConfigEntry& e : entries_)
            if (e.section == section && e.key == key) {
                e.used = true;
                hit = &e;
            }
        return hit;
    }

    std::string origin_;
    std::vector<ConfigEntry> entries_;
};

inline BaselineMode parse_baseline_mode(const std::string& s) {
    if (s == "small") return BaselineMode::Small;
    if (s == "large") return BaselineMode::Large;
    throw ConfigError("config: baseline must be 'small' or 'large', got '" + s + "'");
}

inline const char* baseline_mode_name(BaselineMode m) {
    return m == BaselineMode::Small ? "small" : "large";
}

// Dataset generation settings surfaced in the [data] section.
struct DataConfig {
    int scenes = 50;
    uint64_t seed = 1;
    int width = 64;
    int height = 64;
    int n_sources = 2;
    BaselineMode baseline = BaselineMode::Small;
    bool occluder = false;
    double mde_scale_min = 0.8;
    double mde_scale_max = 1.25;
    double mde_shift_frac = 0.1;
    double mde_noise_sigma = 0.05;
};

// Everything a run needs; defaults are a complete, working configuration.
struct RunConfig {
    DataConfig data;
    uint64_t model_seed = 3;
    ModelConfig model;
    TrainConfig train;
};

inline RunConfig load_run_config(const Config& cfg) {
    RunConfig rc;
    rc.data.scenes = static_cast<int>(cfg.geti("data", "scenes", rc.data.scenes));
    rc.data.seed = cfg.getu("data", "seed", rc.data.seed);
    rc.data.width = static_cast<int>(cfg.geti("data", "width", rc.data.width));
    rc.data.height = static_cast<int>(cfg.geti("data", "height", rc.data.height));
    rc.data.n_sources = static_cast<int>(cfg.geti("data", "n_sources", rc.data.n_sources));
    rc.data.baseline =
        parse_baseline_mode(cfg.gets("data", "baseline", baseline_mode_name(rc.data.baseline)));
    rc.data.occluder = cfg.getb("data", "occluder", rc.data.occluder);
    rc.data.mde_scale_min = cfg.getd("data", "mde_scale_min", rc.data.mde_scale_min);
    rc.data.mde_scale_max = cfg.getd("data", "mde_scale_max", rc.data.mde_scale_max);
    rc.data.mde_shift_frac = cfg.getd("data", "mde_shift_frac", rc.data.mde_shift_frac);
    rc.data.mde_noise_sigma = cfg.getd("data", "mde_noise_sigma", rc.data.mde_noise_sigma);

    rc.model_seed = cfg.getu("model", "seed", rc.model_seed);
    rc.model.d_coarse = static_cast<int>(cfg.geti("model", "d_coarse", rc.model.d_coarse));
    rc.model.d_fine = static_cast<int>(cfg.geti("model", "d_fine", rc.model.d_fine));
    rc.model.use_mono = cfg.getb("model", "use_mono", rc.model.use_mono);
    rc.model.use_refine = cfg.getb("model", "use_refine", rc.model.use_refine);
    rc.model.n_sources = rc.data.n_sources;

    rc.train.iterations = static_cast<int>(cfg.geti("train", "iterations", rc.train.iterations));
    rc.train.lr = cfg.getd("train", "lr", rc.train.lr);
    rc.train.cosine_schedule = cfg.getb("train", "cosine", rc.train.cosine_schedule);
    rc.train.reference_views = cfg.getb("train", "reference_views", rc.train.reference_views);
    rc.train.coarse_phase = cfg.getd("train", "coarse_phase", rc.train.coarse_phase);
    rc.train.val_every = static_cast<int>(cfg.geti("train", "val_every", rc.train.val_every));
    rc.train.checkpoint_every =
        static_cast<int>(cfg.geti("train", "checkpoint_every", rc.train.checkpoint_every));
    rc.train.seed = cfg.getu("train", "seed", rc.train.seed);
    cfg.require_all_used();

    if (rc.data.scenes < 0) throw ConfigError("config: data.scenes must be non-negative");
    if (rc.data.width < 8 || rc.data.height < 8 || rc.data.width % 4 != 0 ||
        rc.data.height % 4 != 0)
        throw ConfigError("config: image size must be at least 8 and divisible by 4");
    if (rc.data.n_sources < 2) throw ConfigError("config: data.n_sources must be at least 2");
    if (rc.model.d_coarse < 2 || rc.model.d_fine < 1)
        throw ConfigError("config: depth candidate counts must be positive");
    if (rc.train.iterations < 0) throw ConfigError("config: train.iterations must be non-negative");
    if (!(rc.train.lr > 0.0)) throw ConfigError("config: train.lr must be positive");
    if (rc.train.coarse_phase < 0.0 || rc.train.coarse_phase > 1.0)
        throw ConfigError("config: train.coarse_phase must be in [0, 1]");
    return rc;
}

// Canonical serialization; parsing it back yields the same RunConfig, so the
// copy written into a run directory re-runs the experiment exactly.
inline std::string serialize_run_config(const RunConfig& rc) {
    std::ostringstream o;
    o << "[data]\n";
    o << "scenes = " << rc.data.scenes << "\n";
    o << "seed = " << rc.data.seed << "\n";
    o << "width = " << rc.data.width << "\n";
    o << "height = " << rc.data.height << "\n";
    o << "n_sources = " << rc.data.n_sources << "\n";
    o << "baseline = " << baseline_mode_name(rc.data.baseline) << "\n";
    o << "occluder = " << (rc.data.occluder ? "true" : "false") << "\n";
    o << "mde_scale_min = " << rc.data.mde_scale_min << "\n";
    o << "mde_scale_max = " << rc.data.mde_scale_max << "\n";
    o << "mde_shift_frac = " << rc.data.mde_shift_frac << "\n";
    o << "mde_noise_sigma = " << rc.data.mde_noise_sigma << "\n";
    o << "\n[model]\n";
    o << "seed = " << rc.model_seed << "\n";
    o << "d_coarse = " << rc.model.d_coarse << "\n";
    o << "d_fine = " << rc.model.d_fine << "\n";
    o << "use_mono = " << (rc.model.use_mono ? "true" : "false") << "\n";
    o << "use_refine = " << (rc.model.use_refine ? "true" : "false") << "\n";
    o << "\n[train]\n";
    o << "iterations = " << rc.train.iterations << "\n";
    o << "lr = " << rc.train.lr << "\n";
    o << "cosine = " << (rc.train.cosine_schedule ? "true" : "false") << "\n";
    o << "reference_views = " << (rc.train.reference_views ? "true" : "false") << "\n";
    o << "coarse_phase = " << rc.train.coarse_phase << "\n";
    o << "val_every = " << rc.train.val_every << "\n";
    o << "checkpoint_every = " << rc.train.checkpoint_every << "\n";
    o << "seed = " << rc.train.seed << "\n";
    return o.str();
}

inline GenConfig dataset_gen_config(const DataConfig& d) {
    GenConfig g;
    g.rig.width = d.width;
    g.rig.height = d.height;
    g.rig.n_sources = d.n_sources;
    g.rig.mode = d.baseline;
    g.scene.occluder = d.occluder;
    g.mde_scale_min = d.mde_scale_min;
    g.mde_scale_max = d.mde_scale_max;
    g.mde_shift_frac = d.mde_shift_frac;
    g.mde_noise_sigma = d.mde_noise_sigma;
    return g;
}

}  // namespace mugs
