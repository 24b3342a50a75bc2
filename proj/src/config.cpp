#include "hydrarec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hydrarec {

namespace {

std::string trim(const std::string& s) {
    const size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    ConfigMap out;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
        out[key] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_overrides(ConfigMap& cfg, const std::vector<std::string>& args) {
    for (const auto& a : args) {
        if (a.rfind("--", 0) != 0)
            throw std::invalid_argument("expected --key=value flag, got: " + a);
        const size_t eq = a.find('=');
        if (eq == std::string::npos || eq == 2)
            throw std::invalid_argument("expected --key=value flag, got: " + a);
        cfg[a.substr(2, eq - 2)] = a.substr(eq + 1);
    }
}

TrainConfig make_train_config(const ConfigMap& m) {
    TrainConfig c;
    std::vector<std::string> errors;
    std::set<std::string> seen;

    auto raw = [&](const std::string& key) -> const std::string* {
        auto it = m.find(key);
        if (it == m.end()) return nullptr;
        seen.insert(key);
        return &it->second;
    };
    auto get_str = [&](const std::string& key, std::string& dst) {
        if (const std::string* v = raw(key)) dst = *v;
    };
    auto get_int = [&](const std::string& key, auto& dst) {
        if (const std::string* v = raw(key)) {
            try {
                size_t pos = 0;
                const long long parsed = std::stoll(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("trailing");
                dst = static_cast<std::decay_t<decltype(dst)>>(parsed);
            } catch (const std::exception&) {
                errors.push_back(key + ": not an integer: " + *v);
            }
        }
    };
    auto get_double = [&](const std::string& key, double& dst) {
        if (const std::string* v = raw(key)) {
            try {
                size_t pos = 0;
                dst = std::stod(*v, &pos);
                if (pos != v->size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                errors.push_back(key + ": not a number: " + *v);
            }
        }
    };
    auto get_bool = [&](const std::string& key, bool& dst) {
        if (const std::string* v = raw(key)) {
            if (*v == "true" || *v == "1")
                dst = true;
            else if (*v == "false" || *v == "0")
                dst = false;
            else
                errors.push_back(key + ": not a boolean: " + *v);
        }
    };

    get_str("dataset", c.dataset);
    get_str("format", c.format);
    get_int("min_item_count", c.min_item_count);
    get_int("min_length", c.min_length);
    get_int("d_model", c.d_model);
    get_int("n_state", c.n_state);
    get_int("layers", c.layers);
    get_int("max_len", c.max_len);
    get_str("optimizer", c.optimizer);
    get_int("epochs", c.epochs);
    get_double("lr", c.lr);
    get_double("diameter", c.diameter);
    get_int("b0", c.b0);
    get_double("alpha", c.alpha);
    get_double("lambda", c.lambda);
    get_double("tau", c.tau);
    get_double("orpo_lambda", c.orpo_lambda);
    get_double("orpo_lr", c.orpo_lr);
    get_int("orpo_warmup", c.orpo_warmup);
    get_int("orpo_epochs", c.orpo_epochs);
    get_str("pair_mode", c.pair_mode);
    get_str("init_checkpoint", c.init_checkpoint);
    get_int("seed", c.seed);
    get_int("eval_k", c.eval_k);
    get_bool("bench", c.bench);
    get_str("out_dir", c.out_dir);

    for (const auto& [key, value] : m)
        if (!seen.count(key)) errors.push_back("unknown config key: " + key);

    if (c.dataset.empty()) errors.push_back("dataset: required");
    if (c.format != "movielens-100k" && c.format != "movielens-1m" && c.format != "amazon-csv")
        errors.push_back("format: must be movielens-100k, movielens-1m, or amazon-csv");
    if (c.optimizer != "usgm-adaptive" && c.optimizer != "usgm-fixed" && c.optimizer != "adam" &&
        c.optimizer != "sgd")
        errors.push_back("optimizer: must be usgm-adaptive, usgm-fixed, adam, or sgd");
    if (c.pair_mode != "rating-pairs" && c.pair_mode != "negative-sampled" &&
        c.pair_mode != "both")
        errors.push_back("pair_mode: must be rating-pairs, negative-sampled, or both");
    if (c.min_item_count < 1) errors.push_back("min_item_count: must be positive");
    if (c.min_length < 3) errors.push_back("min_length: must be >= 3");
    if (c.d_model < 1) errors.push_back("d_model: must be positive");
    if (c.n_state < 1) errors.push_back("n_state: must be positive");
    if (c.layers < 1) errors.push_back("layers: must be positive");
    if (c.max_len < 1) errors.push_back("max_len: must be positive");
    if (c.epochs < 1) errors.push_back("epochs: must be positive");
    if (c.lr <= 0.0) errors.push_back("lr: must be positive");
    if (c.diameter <= 0.0) errors.push_back("diameter: must be positive");
    if (c.b0 < 1) errors.push_back("b0: must be positive");
    if (c.alpha <= 0.0 || c.alpha >= 1.0) errors.push_back("alpha: must be in (0,1)");
    if (c.lambda <= 1.0) errors.push_back("lambda: must exceed 1");
    if (c.tau <= 0.0) errors.push_back("tau: must be positive");
    if (c.orpo_lambda < 0.0) errors.push_back("orpo_lambda: must be >= 0");
    if (c.orpo_lr <= 0.0) errors.push_back("orpo_lr: must be positive");
    if (c.orpo_warmup < 1) errors.push_back("orpo_warmup: must be positive");
    if (c.orpo_epochs < 1) errors.push_back("orpo_epochs: must be positive");
    if (c.eval_k < 1) errors.push_back("eval_k: must be positive");
    if (c.out_dir.empty()) errors.push_back("out_dir: required");

    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "invalid config:";
        for (const auto& e : errors) msg << "\n  " << e;
        throw std::invalid_argument(msg.str());
    }
    return c;
}

}  // namespace hydrarec
