#pragma once

// Text checkpoint: a header echoing the network configuration and every
// tensor shape, then all tensor values (one per line, same formatting as
// NEUFE1 dumps) in declaration order.
//
//   NEUFE-CKPT 1
//   ndim 2
//   ...
//   tensors <count>
//   tensor <name> <rank> <dims...>
//   ...
//   data
//   <values>

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "neufe/field_io.hpp"
#include "neufe/nnet/unet.hpp"

namespace neufe::nnet {

struct Checkpoint {
    NetConfig config;
    NetParams params;
};

inline void write_checkpoint(std::ostream& os, const NetConfig& c, const NetParams& p) {
    os << "NEUFE-CKPT 1\n";
    os << "ndim " << c.ndim << '\n';
    os << "depth " << c.depth << '\n';
    os << "base_channels " << c.base_channels << '\n';
    os << "kernel_size " << c.kernel_size << '\n';
    os << "leaky_slope " << format_real(c.leaky_slope) << '\n';
    os << "final_activation " << to_string(c.final_activation) << '\n';
    os << "instance_norm " << (c.use_instance_norm ? 1 : 0) << '\n';
    os << "coord_channels " << (c.coord_channels ? 1 : 0) << '\n';
    os << "norm_eps " << format_real(c.norm_eps) << '\n';
    os << "seed " << c.seed << '\n';
    os << "tensors " << p.tensors.size() << '\n';
    for (const auto& t : p.tensors) {
        os << "tensor " << t.name << ' ' << t.shape.size();
        for (int d : t.shape) os << ' ' << d;
        os << '\n';
    }
    os << "data\n";
    for (const auto& t : p.tensors) {
        for (double v : t.data) os << format_real(v) << '\n';
    }
}

inline Checkpoint read_checkpoint(std::istream& is) {
    Checkpoint ck;
    std::string line;
    if (!std::getline(is, line) || line != "NEUFE-CKPT 1") throw std::runtime_error("checkpoint: bad magic");
    auto field = [&](const std::string& key) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated header");
        std::istringstream ls(line);
        std::string k, v;
        ls >> k >> v;
        if (k != key) throw std::runtime_error("checkpoint: expected '" + key + "', found '" + k + "'");
        return v;
    };
    NetConfig& c = ck.config;
    c.ndim = std::stoi(field("ndim"));
    c.depth = std::stoi(field("depth"));
    c.base_channels = std::stoi(field("base_channels"));
    c.kernel_size = std::stoi(field("kernel_size"));
    c.leaky_slope = parse_real(field("leaky_slope"));
    c.final_activation = parse_activation(field("final_activation"));
    c.use_instance_norm = field("instance_norm") == "1";
    c.coord_channels = field("coord_channels") == "1";
    c.norm_eps = parse_real(field("norm_eps"));
    c.seed = std::stoull(field("seed"));
    validate(c);
    const auto count = std::stoul(field("tensors"));

    const NetParams expected = init(c);
    if (count != expected.tensors.size()) throw std::runtime_error("checkpoint: tensor count does not match config");
    ck.params = expected;
    for (auto& t : ck.params.tensors) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated tensor list");
        std::istringstream ls(line);
        std::string tag, name;
        std::size_t rank = 0;
        ls >> tag >> name >> rank;
        std::vector<int> shape(rank);
        for (auto& d : shape) ls >> d;
        if (tag != "tensor" || name != t.name || shape != t.shape) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' does not match the declared configuration");
        }
    }
    if (!std::getline(is, line) || line != "data") throw std::runtime_error("checkpoint: missing data section");
    for (auto& t : ck.params.tensors) {
        for (auto& v : t.data) {
            if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated data");
            v = parse_real(line);
        }
    }
    return ck;
}

inline void save_checkpoint(const std::string& path, const NetConfig& c, const NetParams& p) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_checkpoint(os, c, p);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path);
    return read_checkpoint(is);
}

/// Load and insist on an exact configuration match.
inline Checkpoint load_checkpoint(const std::string& path, const NetConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    if (!(ck.config == expected)) throw std::invalid_argument("checkpoint: configuration mismatch with " + path);
    return ck;
}

}  // namespace neufe::nnet
