#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "shrinkage/error.hpp"
#include "shrinkage/network.hpp"
#include "shrinkage/varem.hpp"

namespace shrinkage {

// Flat key=value configuration with [section] headers and '#' comments.
// Keys are stored as "section.key". CLI overrides reuse the same syntax.
struct KeyValueConfig {
    std::map<std::string, std::string> values;

    static KeyValueConfig parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("config: cannot open " + path);
        KeyValueConfig cfg;
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config: malformed section at " + path + ":" +
                                      std::to_string(lineno));
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: expected key=value at " + path + ":" +
                                  std::to_string(lineno));
            std::string key = trim(line.substr(0, eq));
            std::string val = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("config: empty key at " + path + ":" + std::to_string(lineno));
            cfg.values[section.empty() ? key : section + "." + key] = val;
        }
        return cfg;
    }

    // "section.key=value"
    void apply_override(const std::string& spec) {
        auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config: override must look like section.key=value, got '" + spec +
                              "'");
        values[trim(spec.substr(0, eq))] = trim(spec.substr(eq + 1));
    }

    bool has(const std::string& key) const { return values.count(key) > 0; }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        char* end = nullptr;
        double v = std::strtod(it->second.c_str(), &end);
        if (end == it->second.c_str() || *end != '\0')
            throw ConfigError("config: key '" + key + "' is not a number: '" + it->second + "'");
        return v;
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        char* end = nullptr;
        long long v = std::strtoll(it->second.c_str(), &end, 10);
        if (end == it->second.c_str() || *end != '\0')
            throw ConfigError("config: key '" + key + "' is not an integer: '" + it->second +
                              "'");
        return v;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("config: key '" + key + "' is not a boolean: '" + it->second + "'");
    }

    static std::string trim(const std::string& s) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }
};

// Fully resolved experiment description; every knob has a default so a config
// file only states what it changes.
struct ExperimentConfig {
    // [data]
    std::string data_name = "boston";
    std::string data_dir = "data";
    std::string target = "y";
    // [model]
    std::string model = "lb";  // lb | iw | ta | map | em-ard | em-add | em-ard-add
    std::size_t samples = 10;
    double drop_rate = 0.005;
    std::string noise = "bernoulli";
    double noise_scale = 1.0;
    double noise_a = 0.5, noise_b = 0.5;
    std::string structure = "unit";  // unit | weight | layer | combined
    std::string layer_noise = "bernoulli";
    double layer_drop_rate = 0.005;
    double layer_noise_scale = 1.0;
    double layer_noise_a = 0.5, layer_noise_b = 0.5;
    double sigma0 = 1.0;
    bool weight_decay = false;
    std::string hyper = "inverse-gamma";
    double hyper_alpha = 3.0, hyper_beta = 3.0, hyper_b = 1.0;
    double init_sigma = 0.05;
    // [network]
    std::vector<std::size_t> hidden = {50};
    std::string residual = "none";  // none | blocks | all
    std::string activation = "relu";
    // [train]
    std::size_t epochs = 400;
    std::size_t batch = 32;
    double lr = 1e-3;
    std::size_t eval_every = 10;
    std::size_t patience = 10;
    double val_fraction = 0.2;
    std::size_t val_samples = 20;
    std::size_t test_samples = 100;
    std::size_t elbo_samples = 8;
    // [protocol]
    std::size_t splits = 20;
    double test_fraction = 0.1;
    std::uint64_t seed = 1;
    std::size_t sd_grid = 30;
    double sd_min = 1e-3, sd_max = 10.0;
    // [output]
    std::string out_dir = "results";
    std::string formats = "csv,json";
    std::size_t histogram_bins = 40;

    static const std::set<std::string>& known_keys() {
        static const std::set<std::string> keys = {
            "data.name", "data.dir", "data.target",
            "model.kind", "model.samples", "model.drop_rate", "model.noise",
            "model.noise_scale", "model.noise_a", "model.noise_b", "model.structure",
            "model.layer_noise", "model.layer_drop_rate", "model.layer_noise_scale",
            "model.layer_noise_a", "model.layer_noise_b", "model.sigma0",
            "model.weight_decay", "model.hyper", "model.hyper_alpha", "model.hyper_beta",
            "model.hyper_b", "model.init_sigma",
            "network.hidden", "network.residual", "network.activation",
            "train.epochs", "train.batch", "train.lr", "train.eval_every", "train.patience",
            "train.val_fraction", "train.val_samples", "train.test_samples",
            "train.elbo_samples",
            "protocol.splits", "protocol.test_fraction", "protocol.seed", "protocol.sd_grid",
            "protocol.sd_min", "protocol.sd_max",
            "output.dir", "output.formats", "output.histogram_bins",
        };
        return keys;
    }

    static ExperimentConfig from(const KeyValueConfig& kv) {
        for (const auto& [key, value] : kv.values)
            if (!known_keys().count(key))
                throw ConfigError("config: unknown key '" + key + "' (value '" + value + "')");
        ExperimentConfig c;
        c.data_name = kv.get("data.name", c.data_name);
        c.data_dir = kv.get("data.dir", c.data_dir);
        c.target = kv.get("data.target", c.target);
        c.model = kv.get("model.kind", c.model);
        c.samples = as_count(kv, "model.samples", c.samples);
        c.drop_rate = kv.get_double("model.drop_rate", c.drop_rate);
        c.noise = kv.get("model.noise", c.noise);
        c.noise_scale = kv.get_double("model.noise_scale", c.noise_scale);
        c.noise_a = kv.get_double("model.noise_a", c.noise_a);
        c.noise_b = kv.get_double("model.noise_b", c.noise_b);
        c.structure = kv.get("model.structure", c.structure);
        c.layer_noise = kv.get("model.layer_noise", c.layer_noise);
        c.layer_drop_rate = kv.get_double("model.layer_drop_rate", c.layer_drop_rate);
        c.layer_noise_scale = kv.get_double("model.layer_noise_scale", c.layer_noise_scale);
        c.layer_noise_a = kv.get_double("model.layer_noise_a", c.layer_noise_a);
        c.layer_noise_b = kv.get_double("model.layer_noise_b", c.layer_noise_b);
        c.sigma0 = kv.get_double("model.sigma0", c.sigma0);
        c.weight_decay = kv.get_bool("model.weight_decay", c.weight_decay);
        c.hyper = kv.get("model.hyper", c.hyper);
        c.hyper_alpha = kv.get_double("model.hyper_alpha", c.hyper_alpha);
        c.hyper_beta = kv.get_double("model.hyper_beta", c.hyper_beta);
        c.hyper_b = kv.get_double("model.hyper_b", c.hyper_b);
        c.init_sigma = kv.get_double("model.init_sigma", c.init_sigma);
        c.hidden = parse_hidden(kv.get("network.hidden", "50"));
        c.residual = kv.get("network.residual", c.residual);
        c.activation = kv.get("network.activation", c.activation);
        c.epochs = as_count(kv, "train.epochs", c.epochs);
        c.batch = as_count(kv, "train.batch", c.batch);
        c.lr = kv.get_double("train.lr", c.lr);
        c.eval_every = as_count(kv, "train.eval_every", c.eval_every);
        c.patience = as_count(kv, "train.patience", c.patience);
        c.val_fraction = kv.get_double("train.val_fraction", c.val_fraction);
        c.val_samples = as_count(kv, "train.val_samples", c.val_samples);
        c.test_samples = as_count(kv, "train.test_samples", c.test_samples);
        c.elbo_samples = as_count(kv, "train.elbo_samples", c.elbo_samples);
        c.splits = as_count(kv, "protocol.splits", c.splits);
        c.test_fraction = kv.get_double("protocol.test_fraction", c.test_fraction);
        c.seed = static_cast<std::uint64_t>(kv.get_int("protocol.seed", 1));
        c.sd_grid = as_count(kv, "protocol.sd_grid", c.sd_grid);
        c.sd_min = kv.get_double("protocol.sd_min", c.sd_min);
        c.sd_max = kv.get_double("protocol.sd_max", c.sd_max);
        c.out_dir = kv.get("output.dir", c.out_dir);
        c.formats = kv.get("output.formats", c.formats);
        c.histogram_bins = as_count(kv, "output.histogram_bins", c.histogram_bins);
        c.validate();
        return c;
    }

    void validate() const {
        const std::set<std::string> models = {"lb", "iw", "ta", "map",
                                              "em-ard", "em-add", "em-ard-add"};
        if (!models.count(model))
            throw ConfigError("config: unknown model.kind '" + model + "'");
        const std::set<std::string> noises = {"bernoulli", "gaussian", "rayleigh",
                                              "inverse-nakagami", "half-cauchy"};
        if (!noises.count(noise))
            throw ConfigError("config: unknown model.noise '" + noise + "'");
        if (!noises.count(layer_noise))
            throw ConfigError("config: unknown model.layer_noise '" + layer_noise + "'");
        const std::set<std::string> structures = {"unit", "weight", "layer", "combined"};
        if (!structures.count(structure))
            throw ConfigError("config: unknown model.structure '" + structure + "'");
        const std::set<std::string> hypers = {"inverse-gamma", "half-cauchy", "log-uniform"};
        if (!hypers.count(hyper))
            throw ConfigError("config: unknown model.hyper '" + hyper + "'");
        const std::set<std::string> residuals = {"none", "blocks", "all"};
        if (!residuals.count(residual))
            throw ConfigError("config: unknown network.residual '" + residual + "'");
        const std::set<std::string> activations = {"relu", "softplus", "identity"};
        if (!activations.count(activation))
            throw ConfigError("config: unknown network.activation '" + activation + "'");
        if (drop_rate < 0.0 || drop_rate >= 1.0)
            throw ConfigError("config: model.drop_rate must lie in [0,1)");
        if (!(val_fraction > 0.0) || val_fraction >= 0.5)
            throw ConfigError("config: train.val_fraction must lie in (0, 0.5)");
        if (sd_grid < 1 || !(sd_min > 0.0) || !(sd_max > sd_min))
            throw ConfigError("config: bad observation-noise grid");
    }

    // Every known key with its resolved value; reports echo this for provenance.
    std::map<std::string, std::string> echo() const {
        auto num = [](double v) {
            char b[40];
            std::snprintf(b, sizeof b, "%.17g", v);
            return std::string(b);
        };
        std::string hid;
        for (std::size_t i = 0; i < hidden.size(); ++i)
            hid += (i ? "," : "") + std::to_string(hidden[i]);
        return {
            {"data.name", data_name},
            {"data.dir", data_dir},
            {"data.target", target},
            {"model.kind", model},
            {"model.samples", std::to_string(samples)},
            {"model.drop_rate", num(drop_rate)},
            {"model.noise", noise},
            {"model.noise_scale", num(noise_scale)},
            {"model.noise_a", num(noise_a)},
            {"model.noise_b", num(noise_b)},
            {"model.structure", structure},
            {"model.layer_noise", layer_noise},
            {"model.layer_drop_rate", num(layer_drop_rate)},
            {"model.layer_noise_scale", num(layer_noise_scale)},
            {"model.layer_noise_a", num(layer_noise_a)},
            {"model.layer_noise_b", num(layer_noise_b)},
            {"model.sigma0", num(sigma0)},
            {"model.weight_decay", weight_decay ? "true" : "false"},
            {"model.hyper", hyper},
            {"model.hyper_alpha", num(hyper_alpha)},
            {"model.hyper_beta", num(hyper_beta)},
            {"model.hyper_b", num(hyper_b)},
            {"model.init_sigma", num(init_sigma)},
            {"network.hidden", hid},
            {"network.residual", residual},
            {"network.activation", activation},
            {"train.epochs", std::to_string(epochs)},
            {"train.batch", std::to_string(batch)},
            {"train.lr", num(lr)},
            {"train.eval_every", std::to_string(eval_every)},
            {"train.patience", std::to_string(patience)},
            {"train.val_fraction", num(val_fraction)},
            {"train.val_samples", std::to_string(val_samples)},
            {"train.test_samples", std::to_string(test_samples)},
            {"train.elbo_samples", std::to_string(elbo_samples)},
            {"protocol.splits", std::to_string(splits)},
            {"protocol.test_fraction", num(test_fraction)},
            {"protocol.seed", std::to_string(seed)},
            {"protocol.sd_grid", std::to_string(sd_grid)},
            {"protocol.sd_min", num(sd_min)},
            {"protocol.sd_max", num(sd_max)},
            {"output.dir", out_dir},
            {"output.formats", formats},
            {"output.histogram_bins", std::to_string(histogram_bins)},
        };
    }

    // The data directory, honoring the SHRINKAGE_DATA_DIR environment switch.
    std::string resolved_data_dir() const {
        const char* env = std::getenv("SHRINKAGE_DATA_DIR");
        return env && *env ? std::string(env) : data_dir;
    }

    std::string data_path() const { return resolved_data_dir() + "/" + data_name + ".csv"; }

    bool is_em() const { return model.rfind("em-", 0) == 0; }

    NetworkConfig make_network(std::size_t input_dim) const {
        NetworkConfig n;
        n.input_dim = input_dim;
        n.hidden = hidden;
        n.output_dim = 1;
        if (activation == "relu") n.activation = Activation::Relu;
        else if (activation == "softplus") n.activation = Activation::Softplus;
        else n.activation = Activation::Identity;
        n.residual.assign(hidden.size(), false);
        if (residual == "all")
            n.residual.assign(hidden.size(), true);
        else if (residual == "blocks")
            for (std::size_t i = 1; i < hidden.size(); ++i) n.residual[i] = true;
        n.validate();
        return n;
    }

    NoiseFamily make_noise_family(const std::string& kind, double keep, double scale, double a,
                                  double b) const {
        if (kind == "bernoulli") return NoiseFamily::bernoulli(keep);
        if (kind == "gaussian") return NoiseFamily::gaussian(scale);
        if (kind == "rayleigh") return NoiseFamily::rayleigh(scale);
        if (kind == "inverse-nakagami") return NoiseFamily::inverse_nakagami(a, b);
        return NoiseFamily::half_cauchy(b);
    }

    NoiseStructure make_structure() const {
        NoiseFamily unit =
            make_noise_family(noise, 1.0 - drop_rate, noise_scale, noise_a, noise_b);
        NoiseFamily layer = make_noise_family(layer_noise, 1.0 - layer_drop_rate,
                                              layer_noise_scale, layer_noise_a, layer_noise_b);
        if (structure == "unit") return NoiseStructure::unit_wise(unit);
        if (structure == "weight") return NoiseStructure::weight_wise(unit);
        if (structure == "layer") return NoiseStructure::layer_wise(layer);
        return NoiseStructure::combined(unit, layer);
    }

    HyperPrior make_hyper() const {
        if (hyper == "inverse-gamma") return HyperPrior::inverse_gamma(hyper_alpha, hyper_beta);
        if (hyper == "half-cauchy") return HyperPrior::half_cauchy(hyper_b);
        return HyperPrior::log_uniform();
    }

    PriorStructure prior_structure() const {
        if (model == "em-ard") return PriorStructure::Ard;
        if (model == "em-add") return PriorStructure::Add;
        if (model == "em-ard-add") return PriorStructure::ArdAdd;
        throw ConfigError("config: model '" + model + "' has no prior structure");
    }

  private:
    static std::size_t as_count(const KeyValueConfig& kv, const std::string& key,
                                std::size_t fallback) {
        long long v = kv.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw ConfigError("config: key '" + key + "' must be non-negative");
        return static_cast<std::size_t>(v);
    }

    static std::vector<std::size_t> parse_hidden(const std::string& spec) {
        std::vector<std::size_t> out;
        std::stringstream ss(spec);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cell = KeyValueConfig::trim(cell);
            if (cell.empty()) continue;
            char* end = nullptr;
            long long v = std::strtoll(cell.c_str(), &end, 10);
            if (end == cell.c_str() || *end != '\0' || v <= 0)
                throw ConfigError("config: bad hidden width '" + cell + "'");
            out.push_back(static_cast<std::size_t>(v));
        }
        if (out.empty()) throw ConfigError("config: network.hidden is empty");
        return out;
    }
};

}  // namespace shrinkage
