#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hcm/core/common.hpp"

namespace hcm::engine {

/// Run configuration. Mirrors the published training recipe: Adam with
/// momentum terms (0.9, 0.999), initial learning rate 1e-4 divided by 10
/// every 80 epochs, batch size 32, 352 x 352 inputs.
struct TrainConfig {
    int64_t schema_version = 1;

    double lr0 = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    int64_t batch_size = 32;
    int64_t epochs = 160;
    int64_t lr_decay_period = 80;
    double lr_decay_factor = 10.0;
    int64_t input_size = 352;
    int64_t decoder_width = 64;
    bool use_isc = true;
    bool use_csc = true;
    bool use_rrd = true;
    uint64_t seed = 0;
    int64_t max_steps = 0;  // optional cap on optimizer steps (0 = none)
    bool augment_hflip = false;

    std::string data_root;
    std::string train_split = "train";
    std::string eval_split = "test";
    std::string checkpoint_dir = "checkpoints";
    std::string checkpoint;         // required by eval / predict
    std::string backbone_weights;   // optional pretrained stem

    /// Stepwise decay: lr0 * factor^-(floor(epoch / period)).
    double lr_at(int64_t epoch) const {
        return lr0 * std::pow(lr_decay_factor, -static_cast<double>(epoch / lr_decay_period));
    }

    void validate() const {
        if (lr0 <= 0) throw ConfigError("config: lr0 must be positive");
        if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
        if (input_size < 32 || input_size % 32 != 0)
            throw ConfigError("config: input_size must be a positive multiple of 32");
        if (decoder_width < 1) throw ConfigError("config: decoder_width must be >= 1");
        if (lr_decay_period < 1) throw ConfigError("config: lr_decay_period must be >= 1");
        if (schema_version != 1)
            throw ConfigError("config: unsupported schema_version " +
                              std::to_string(schema_version));
    }

    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
    static TrainConfig from_file(const std::string& path);
    void set_key(const std::string& key, const std::string& value);
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline int64_t parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

}  // namespace detail

inline void TrainConfig::set_key(const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "schema_version") schema_version = parse_int(key, value);
    else if (key == "lr0") lr0 = parse_double(key, value);
    else if (key == "beta1") beta1 = parse_double(key, value);
    else if (key == "beta2") beta2 = parse_double(key, value);
    else if (key == "weight_decay") weight_decay = parse_double(key, value);
    else if (key == "batch_size") batch_size = parse_int(key, value);
    else if (key == "epochs") epochs = parse_int(key, value);
    else if (key == "lr_decay_period") lr_decay_period = parse_int(key, value);
    else if (key == "lr_decay_factor") lr_decay_factor = parse_double(key, value);
    else if (key == "input_size") input_size = parse_int(key, value);
    else if (key == "decoder_width") decoder_width = parse_int(key, value);
    else if (key == "use_isc") use_isc = parse_bool(key, value);
    else if (key == "use_csc") use_csc = parse_bool(key, value);
    else if (key == "use_rrd") use_rrd = parse_bool(key, value);
    else if (key == "seed") seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "max_steps") max_steps = parse_int(key, value);
    else if (key == "augment_hflip") augment_hflip = parse_bool(key, value);
    else if (key == "data_root") data_root = value;
    else if (key == "train_split") train_split = value;
    else if (key == "eval_split") eval_split = value;
    else if (key == "checkpoint_dir") checkpoint_dir = value;
    else if (key == "checkpoint") checkpoint = value;
    else if (key == "backbone_weights") backbone_weights = value;
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline TrainConfig TrainConfig::from_text(const std::string& text) {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) +
                              " is not 'key = value': " + t);
        cfg.set_key(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return cfg;
}

inline TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

inline std::string TrainConfig::to_text() const {
    std::ostringstream o;
    o << "schema_version = " << schema_version << "\n";
    o.precision(17);
    o << "lr0 = " << lr0 << "\n"
      << "beta1 = " << beta1 << "\n"
      << "beta2 = " << beta2 << "\n"
      << "weight_decay = " << weight_decay << "\n"
      << "batch_size = " << batch_size << "\n"
      << "epochs = " << epochs << "\n"
      << "lr_decay_period = " << lr_decay_period << "\n"
      << "lr_decay_factor = " << lr_decay_factor << "\n"
      << "input_size = " << input_size << "\n"
      << "decoder_width = " << decoder_width << "\n"
      << "use_isc = " << (use_isc ? "true" : "false") << "\n"
      << "use_csc = " << (use_csc ? "true" : "false") << "\n"
      << "use_rrd = " << (use_rrd ? "true" : "false") << "\n"
      << "seed = " << seed << "\n"
      << "max_steps = " << max_steps << "\n"
      << "augment_hflip = " << (augment_hflip ? "true" : "false") << "\n"
      << "data_root = " << data_root << "\n"
      << "train_split = " << train_split << "\n"
      << "eval_split = " << eval_split << "\n"
      << "checkpoint_dir = " << checkpoint_dir << "\n"
      << "checkpoint = " << checkpoint << "\n"
      << "backbone_weights = " << backbone_weights << "\n";
    return o.str();
}

}  // namespace hcm::engine
