#pragma once

// Run configuration: a flat set of dotted keys read from `key = value` text,
// with `#` comments and command-line overrides. Values that depend on the
// mode or subcommand may be left as "auto" and are fixed by resolve().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neufe/field_io.hpp"
#include "neufe/nnet/unet.hpp"

namespace neufe::driver {

/// A malformed or unknown setting; maps to the usage-error exit code.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ProblemPreset { mms, kl2d, kl3d };
enum class Mode { network, direct };
enum class Capacity { fixed, enhanced };
enum class Command { solve_instance, solve_direct, train_parametric, infer, reference, converge, stats, kl_sample };

inline const char* to_string(ProblemPreset p) {
    switch (p) {
        case ProblemPreset::mms: return "mms";
        case ProblemPreset::kl2d: return "kl2d";
        case ProblemPreset::kl3d: return "kl3d";
    }
    return "?";
}
inline const char* to_string(Mode m) { return m == Mode::network ? "network" : "direct"; }
inline const char* to_string(Capacity c) { return c == Capacity::fixed ? "fixed" : "enhanced"; }

struct OptimizerConfig {
    std::optional<double> lr;          ///< auto: 1e-4 parametric, 1e-3 otherwise
    std::optional<long> max_epochs;    ///< auto: depends on command and mode
    int batch_size = 16;
    std::optional<double> tol;         ///< relative loss change over `window` epochs
    int window = 50;
    bool keep_best = true;             ///< solve-instance returns its lowest-loss iterate
    std::optional<double> lr_decay;    ///< multiply lr by this every decay_every epochs
    std::optional<long> decay_every;
};

struct KLConfig {
    int m = 6;
    double eta = 0.5;
    double sigma = 1.0;
    double lo = -std::sqrt(3.0);
    double hi = std::sqrt(3.0);
    int n_samples = 512;
    int heldout = 32;
    std::vector<double> coeffs;  ///< fixed tuple for single-instance runs; empty means sampled
    bool dump_nu = false;
};

struct ConvergeConfig {
    std::vector<int> nel_list{8, 16, 32, 64};
    Capacity capacity = Capacity::fixed;
};

struct StatsConfig {
    int n_samples = 2048;
    int bins = 32;
    double lo = -0.25;
    double hi = 0.25;
};

struct RunConfig {
    ProblemPreset problem = ProblemPreset::mms;
    int nel = 16;
    Mode mode = Mode::network;
    nnet::NetConfig net;
    std::optional<nnet::Activation> final_activation;  ///< auto: identity for mms, sigmoid for kl
    OptimizerConfig opt;
    KLConfig kl;
    ConvergeConfig converge;
    StatsConfig stats;
    double cg_tol = 1e-12;
    int cg_max_iter = 100000;
    long checkpoint_every = 0;   ///< epochs between intermediate checkpoints; 0 = final only
    std::string checkpoint_path;  ///< input checkpoint for infer / stats
    std::string infer_nu;         ///< optional NEUFE1 diffusivity for infer
    std::uint64_t seed = 0;
    bool deterministic = true;
    std::string output_dir = "out";

    int ndim() const { return problem == ProblemPreset::kl3d ? 3 : 2; }
    bool is_kl() const { return problem != ProblemPreset::mms; }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double to_real(const std::string& key, const std::string& v) {
    try {
        return parse_real(v);
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long to_long(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    long r = 0;
    try {
        r = std::stol(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    return r;
}

inline int to_int(const std::string& key, const std::string& v) { return static_cast<int>(to_long(key, v)); }

inline std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    std::uint64_t r = 0;
    try {
        if (!v.empty() && v[0] != '-') r = std::stoull(v, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return r;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> to_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(to_real(key, s));
    return out;
}

inline std::pair<double, double> to_bounds(const std::string& key, const std::string& v) {
    const auto b = to_reals(key, v);
    if (b.size() != 2 || !(b[0] < b[1])) throw ConfigError("config: '" + key + "' expects 'lo,hi' with lo < hi");
    return {b[0], b[1]};
}

template <typename T>
std::optional<T> auto_or(const std::string& v, T (*conv)(const std::string&, const std::string&), const std::string& key) {
    if (v == "auto") return std::nullopt;
    return conv(key, v);
}

inline std::string list_string(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_real(v[i]);
    return s;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["problem"] = [](RunConfig& c, const std::string& v) {
            if (v == "mms") c.problem = ProblemPreset::mms;
            else if (v == "kl2d") c.problem = ProblemPreset::kl2d;
            else if (v == "kl3d") c.problem = ProblemPreset::kl3d;
            else throw ConfigError("config: 'problem' must be mms, kl2d or kl3d, got '" + v + "'");
        };
        t["nel"] = [](RunConfig& c, const std::string& v) { c.nel = to_int("nel", v); };
        t["mode"] = [](RunConfig& c, const std::string& v) {
            if (v == "network") c.mode = Mode::network;
            else if (v == "direct") c.mode = Mode::direct;
            else throw ConfigError("config: 'mode' must be network or direct, got '" + v + "'");
        };
        t["seed"] = [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); };
        t["deterministic"] = [](RunConfig& c, const std::string& v) { c.deterministic = to_bool("deterministic", v); };
        t["output_dir"] = [](RunConfig& c, const std::string& v) { c.output_dir = v; };

        t["net.depth"] = [](RunConfig& c, const std::string& v) { c.net.depth = to_int("net.depth", v); };
        t["net.base_channels"] = [](RunConfig& c, const std::string& v) {
            c.net.base_channels = to_int("net.base_channels", v);
        };
        t["net.kernel_size"] = [](RunConfig& c, const std::string& v) {
            c.net.kernel_size = to_int("net.kernel_size", v);
        };
        t["net.leaky_slope"] = [](RunConfig& c, const std::string& v) {
            c.net.leaky_slope = to_real("net.leaky_slope", v);
        };
        t["net.final_activation"] = [](RunConfig& c, const std::string& v) {
            if (v == "auto") {
                c.final_activation.reset();
                return;
            }
            try {
                c.final_activation = nnet::parse_activation(v);
            } catch (const std::exception&) {
                throw ConfigError("config: 'net.final_activation' must be auto, sigmoid or identity, got '" + v + "'");
            }
        };
        t["net.instance_norm"] = [](RunConfig& c, const std::string& v) {
            c.net.use_instance_norm = to_bool("net.instance_norm", v);
        };
        t["net.coord_channels"] = [](RunConfig& c, const std::string& v) {
            c.net.coord_channels = to_bool("net.coord_channels", v);
        };
        t["net.norm_eps"] = [](RunConfig& c, const std::string& v) { c.net.norm_eps = to_real("net.norm_eps", v); };

        t["opt.lr"] = [](RunConfig& c, const std::string& v) { c.opt.lr = auto_or<double>(v, to_real, "opt.lr"); };
        t["opt.max_epochs"] = [](RunConfig& c, const std::string& v) {
            c.opt.max_epochs = auto_or<long>(v, to_long, "opt.max_epochs");
        };
        t["opt.batch_size"] = [](RunConfig& c, const std::string& v) {
            c.opt.batch_size = to_int("opt.batch_size", v);
        };
        t["opt.tol"] = [](RunConfig& c, const std::string& v) { c.opt.tol = auto_or<double>(v, to_real, "opt.tol"); };
        t["opt.window"] = [](RunConfig& c, const std::string& v) { c.opt.window = to_int("opt.window", v); };
        t["opt.keep_best"] = [](RunConfig& c, const std::string& v) { c.opt.keep_best = to_bool("opt.keep_best", v); };
        t["opt.lr_decay"] = [](RunConfig& c, const std::string& v) {
            c.opt.lr_decay = auto_or<double>(v, to_real, "opt.lr_decay");
        };
        t["opt.decay_every"] = [](RunConfig& c, const std::string& v) {
            c.opt.decay_every = auto_or<long>(v, to_long, "opt.decay_every");
        };

        t["kl.m"] = [](RunConfig& c, const std::string& v) { c.kl.m = to_int("kl.m", v); };
        t["kl.eta"] = [](RunConfig& c, const std::string& v) { c.kl.eta = to_real("kl.eta", v); };
        t["kl.sigma"] = [](RunConfig& c, const std::string& v) { c.kl.sigma = to_real("kl.sigma", v); };
        t["kl.bounds"] = [](RunConfig& c, const std::string& v) {
            std::tie(c.kl.lo, c.kl.hi) = to_bounds("kl.bounds", v);
        };
        t["kl.n_samples"] = [](RunConfig& c, const std::string& v) { c.kl.n_samples = to_int("kl.n_samples", v); };
        t["kl.heldout"] = [](RunConfig& c, const std::string& v) { c.kl.heldout = to_int("kl.heldout", v); };
        t["kl.coeffs"] = [](RunConfig& c, const std::string& v) {
            c.kl.coeffs = v == "none" ? std::vector<double>{} : to_reals("kl.coeffs", v);
        };
        t["kl.dump_nu"] = [](RunConfig& c, const std::string& v) { c.kl.dump_nu = to_bool("kl.dump_nu", v); };

        t["cg.tol"] = [](RunConfig& c, const std::string& v) { c.cg_tol = to_real("cg.tol", v); };
        t["cg.max_iter"] = [](RunConfig& c, const std::string& v) { c.cg_max_iter = to_int("cg.max_iter", v); };

        t["converge.nel_list"] = [](RunConfig& c, const std::string& v) {
            c.converge.nel_list.clear();
            for (const auto& s : split_list(v)) c.converge.nel_list.push_back(to_int("converge.nel_list", s));
        };
        t["converge.capacity"] = [](RunConfig& c, const std::string& v) {
            if (v == "fixed") c.converge.capacity = Capacity::fixed;
            else if (v == "enhanced") c.converge.capacity = Capacity::enhanced;
            else throw ConfigError("config: 'converge.capacity' must be fixed or enhanced, got '" + v + "'");
        };

        t["stats.n_samples"] = [](RunConfig& c, const std::string& v) {
            c.stats.n_samples = to_int("stats.n_samples", v);
        };
        t["stats.bins"] = [](RunConfig& c, const std::string& v) { c.stats.bins = to_int("stats.bins", v); };
        t["stats.bounds"] = [](RunConfig& c, const std::string& v) {
            std::tie(c.stats.lo, c.stats.hi) = to_bounds("stats.bounds", v);
        };

        t["checkpoint.every"] = [](RunConfig& c, const std::string& v) {
            c.checkpoint_every = to_long("checkpoint.every", v);
        };
        t["checkpoint.path"] = [](RunConfig& c, const std::string& v) { c.checkpoint_path = v; };
        t["infer.nu"] = [](RunConfig& c, const std::string& v) { c.infer_nu = v; };
        return t;
    }();
    return table;
}

}  // namespace detail

/// Set one key. Unknown keys and malformed values throw ConfigError naming the key.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
    const auto& table = detail::setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second(c, value);
}

/// Parse a "key=value" override as given to --set.
inline void apply_override(RunConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + assignment + "' is not key=value");
    apply_setting(c, detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
}

inline void parse_config(std::istream& is, RunConfig& c, const std::string& origin = "<config>") {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = detail::trim(line.substr(0, eq));
        try {
            apply_setting(c, key, detail::trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    RunConfig c;
    parse_config(is, c, path);
    return c;
}

/// Fill "auto" values for a given subcommand and check cross-field rules.
inline void resolve(RunConfig& c, Command cmd) {
    const bool parametric = cmd == Command::train_parametric || cmd == Command::stats || cmd == Command::infer;
    const bool direct = cmd == Command::solve_direct || (cmd == Command::converge && c.mode == Mode::direct);
    if (cmd == Command::solve_direct) c.mode = Mode::direct;
    if (cmd == Command::solve_instance || parametric) c.mode = Mode::network;

    if (c.nel < 2) throw ConfigError("config: 'nel' must be at least 2");
    c.net.ndim = c.ndim();
    c.net.seed = c.seed;
    if (!c.final_activation) c.final_activation = c.is_kl() ? nnet::Activation::sigmoid : nnet::Activation::identity;
    c.net.final_activation = *c.final_activation;
    if (c.problem == ProblemPreset::mms && c.net.final_activation == nnet::Activation::sigmoid) {
        throw ConfigError("config: 'net.final_activation' must be identity for the mms problem");
    }
    try {
        nnet::validate(c.net);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    if (!c.opt.lr) c.opt.lr = parametric ? 1e-4 : 1e-3;
    if (!c.opt.tol) c.opt.tol = direct ? 1e-15 : 1e-10;
    if (!c.opt.lr_decay) c.opt.lr_decay = parametric ? 1.0 : 0.9;
    if (!c.opt.decay_every) c.opt.decay_every = direct ? 1000 : 300;
    if (!c.opt.max_epochs) c.opt.max_epochs = parametric ? 200 : (direct ? 150000 : 6000);
    if (*c.opt.lr <= 0.0) throw ConfigError("config: 'opt.lr' must be positive");
    if (*c.opt.max_epochs < 1) throw ConfigError("config: 'opt.max_epochs' must be at least 1");
    if (*c.opt.tol < 0.0) throw ConfigError("config: 'opt.tol' must be non-negative");
    if (!(*c.opt.lr_decay > 0.0 && *c.opt.lr_decay <= 1.0)) throw ConfigError("config: 'opt.lr_decay' must be in (0,1]");
    if (*c.opt.decay_every < 1) throw ConfigError("config: 'opt.decay_every' must be at least 1");
    if (c.opt.window < 1) throw ConfigError("config: 'opt.window' must be at least 1");
    if (c.opt.batch_size < 1) throw ConfigError("config: 'opt.batch_size' must be at least 1");

    if (c.kl.m < 1) throw ConfigError("config: 'kl.m' must be at least 1");
    if (!(c.kl.eta > 0.0) || !(c.kl.sigma > 0.0)) throw ConfigError("config: 'kl.eta' and 'kl.sigma' must be positive");
    if (!c.kl.coeffs.empty() && static_cast<int>(c.kl.coeffs.size()) != c.kl.m) {
        throw ConfigError("config: 'kl.coeffs' has " + std::to_string(c.kl.coeffs.size()) + " entries but kl.m = " +
                          std::to_string(c.kl.m));
    }
    if (c.kl.n_samples < 1 || c.kl.heldout < 1) throw ConfigError("config: sample counts must be positive");
    if (c.stats.n_samples < 1 || c.stats.bins < 1) throw ConfigError("config: stats counts must be positive");
    if (c.converge.nel_list.empty()) throw ConfigError("config: 'converge.nel_list' is empty");
    for (std::size_t i = 0; i < c.converge.nel_list.size(); ++i) {
        if (c.converge.nel_list[i] < 2) throw ConfigError("config: 'converge.nel_list' entries must be at least 2");
        if (i > 0 && c.converge.nel_list[i] <= c.converge.nel_list[i - 1]) {
            throw ConfigError("config: 'converge.nel_list' must be strictly increasing");
        }
    }
    if (c.cg_tol <= 0.0 || c.cg_max_iter < 1) throw ConfigError("config: cg settings must be positive");
    if (c.checkpoint_every < 0) throw ConfigError("config: 'checkpoint.every' must be non-negative");
    if ((cmd == Command::train_parametric || cmd == Command::stats || cmd == Command::infer) && !c.is_kl()) {
        throw ConfigError("config: parametric commands need a kl problem");
    }
    if ((cmd == Command::stats || cmd == Command::infer) && c.checkpoint_path.empty()) {
        throw ConfigError("config: 'checkpoint.path' is required for this command");
    }
}

/// Every key with its current value, sorted by key. Used for manifests.
inline std::vector<std::pair<std::string, std::string>> echo(const RunConfig& c) {
    auto opt_real = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("auto"); };
    auto opt_long = [](const std::optional<long>& v) { return v ? std::to_string(*v) : std::string("auto"); };
    std::string nels;
    for (std::size_t i = 0; i < c.converge.nel_list.size(); ++i) {
        nels += (i ? "," : "") + std::to_string(c.converge.nel_list[i]);
    }
    std::vector<std::pair<std::string, std::string>> kv{
        {"problem", to_string(c.problem)},
        {"nel", std::to_string(c.nel)},
        {"mode", to_string(c.mode)},
        {"seed", std::to_string(c.seed)},
        {"deterministic", c.deterministic ? "true" : "false"},
        {"output_dir", c.output_dir},
        {"net.depth", std::to_string(c.net.depth)},
        {"net.base_channels", std::to_string(c.net.base_channels)},
        {"net.kernel_size", std::to_string(c.net.kernel_size)},
        {"net.leaky_slope", format_real(c.net.leaky_slope)},
        {"net.final_activation", c.final_activation ? nnet::to_string(*c.final_activation) : "auto"},
        {"net.instance_norm", c.net.use_instance_norm ? "true" : "false"},
        {"net.coord_channels", c.net.coord_channels ? "true" : "false"},
        {"net.norm_eps", format_real(c.net.norm_eps)},
        {"opt.lr", opt_real(c.opt.lr)},
        {"opt.max_epochs", opt_long(c.opt.max_epochs)},
        {"opt.batch_size", std::to_string(c.opt.batch_size)},
        {"opt.tol", opt_real(c.opt.tol)},
        {"opt.window", std::to_string(c.opt.window)},
        {"opt.keep_best", c.opt.keep_best ? "true" : "false"},
        {"opt.lr_decay", opt_real(c.opt.lr_decay)},
        {"opt.decay_every", opt_long(c.opt.decay_every)},
        {"kl.m", std::to_string(c.kl.m)},
        {"kl.eta", format_real(c.kl.eta)},
        {"kl.sigma", format_real(c.kl.sigma)},
        {"kl.bounds", format_real(c.kl.lo) + "," + format_real(c.kl.hi)},
        {"kl.n_samples", std::to_string(c.kl.n_samples)},
        {"kl.heldout", std::to_string(c.kl.heldout)},
        {"kl.coeffs", c.kl.coeffs.empty() ? "none" : detail::list_string(c.kl.coeffs)},
        {"kl.dump_nu", c.kl.dump_nu ? "true" : "false"},
        {"cg.tol", format_real(c.cg_tol)},
        {"cg.max_iter", std::to_string(c.cg_max_iter)},
        {"converge.nel_list", nels},
        {"converge.capacity", to_string(c.converge.capacity)},
        {"stats.n_samples", std::to_string(c.stats.n_samples)},
        {"stats.bins", std::to_string(c.stats.bins)},
        {"stats.bounds", format_real(c.stats.lo) + "," + format_real(c.stats.hi)},
        {"checkpoint.every", std::to_string(c.checkpoint_every)},
        {"checkpoint.path", c.checkpoint_path},
        {"infer.nu", c.infer_nu},
    };
    std::sort(kv.begin(), kv.end());
    return kv;
}

}  // namespace neufe::driver
