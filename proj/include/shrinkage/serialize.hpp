#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "shrinkage/error.hpp"
#include "shrinkage/network.hpp"
#include "shrinkage/varem.hpp"

namespace shrinkage {

namespace detail {

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_matrix(std::ostream& os, const char* tag, std::size_t index, const Tensor& t) {
    os << tag << " " << index << " " << t.rows() << " " << t.cols() << "\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) os << (c ? " " : "") << fmt17(t.at(r, c));
        os << "\n";
    }
}

inline Tensor read_matrix(std::istream& is, const char* tag, std::size_t index) {
    std::string word;
    std::size_t idx, rows, cols;
    if (!(is >> word >> idx >> rows >> cols) || word != tag || idx != index)
        throw IoError("state file: expected '" + std::string(tag) + " " + std::to_string(index) +
                      " <rows> <cols>'");
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.size(); ++i)
        if (!(is >> t[i])) throw IoError("state file: truncated matrix " + std::to_string(index));
    return t;
}

}  // namespace detail

inline void save_weights(const std::string& path, const WeightSet& ws) {
    std::ofstream os(path);
    if (!os) throw IoError("save_weights: cannot open " + path);
    os << "shrinkage-state 1\ntype point\nmatrices " << ws.w.size() << "\n";
    for (std::size_t i = 0; i < ws.w.size(); ++i) detail::write_matrix(os, "mu", i, ws.w[i]);
    if (!os) throw IoError("save_weights: write failed for " + path);
}

inline void save_state(const std::string& path, const VariationalState& st) {
    std::ofstream os(path);
    if (!os) throw IoError("save_state: cannot open " + path);
    os << "shrinkage-state 1\ntype variational\nmatrices " << st.mu.size() << "\n";
    for (std::size_t i = 0; i < st.mu.size(); ++i) detail::write_matrix(os, "mu", i, st.mu[i]);
    for (std::size_t i = 0; i < st.rho.size(); ++i) detail::write_matrix(os, "rho", i, st.rho[i]);
    os << "rowscales " << st.row_scale_sq.size() << "\n";
    for (const auto& rs : st.row_scale_sq) {
        os << rs.size();
        for (double v : rs) os << " " << detail::fmt17(v);
        os << "\n";
    }
    os << "layerscales " << st.layer_scale_sq.size();
    for (double v : st.layer_scale_sq) os << " " << detail::fmt17(v);
    os << "\n";
    if (!os) throw IoError("save_state: write failed for " + path);
}

namespace detail {
inline std::size_t read_header(std::istream& is, const std::string& want_type,
                               const std::string& path) {
    std::string magic, type_word, type_val, mat_word;
    int version;
    std::size_t k;
    if (!(is >> magic >> version >> type_word >> type_val >> mat_word >> k) ||
        magic != "shrinkage-state" || type_word != "type" || mat_word != "matrices")
        throw IoError("state file: bad header in " + path);
    if (version != 1) throw IoError("state file: unsupported version in " + path);
    if (type_val != want_type)
        throw IoError("state file: " + path + " holds a '" + type_val + "' state, expected '" +
                      want_type + "'");
    return k;
}
}  // namespace detail

inline std::string state_file_type(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("state file: cannot open " + path);
    std::string magic, type_word, type_val;
    int version;
    if (!(is >> magic >> version >> type_word >> type_val) || magic != "shrinkage-state")
        throw IoError("state file: bad header in " + path);
    return type_val;
}

inline WeightSet load_weights(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_weights: cannot open " + path);
    std::size_t k = detail::read_header(is, "point", path);
    WeightSet ws;
    for (std::size_t i = 0; i < k; ++i) ws.w.push_back(detail::read_matrix(is, "mu", i));
    return ws;
}

inline VariationalState load_state(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("load_state: cannot open " + path);
    std::size_t k = detail::read_header(is, "variational", path);
    VariationalState st;
    for (std::size_t i = 0; i < k; ++i) st.mu.push_back(detail::read_matrix(is, "mu", i));
    for (std::size_t i = 0; i < k; ++i) st.rho.push_back(detail::read_matrix(is, "rho", i));
    std::string word;
    std::size_t groups;
    if (!(is >> word >> groups) || word != "rowscales")
        throw IoError("state file: expected rowscales in " + path);
    st.row_scale_sq.resize(groups);
    for (auto& rs : st.row_scale_sq) {
        std::size_t count;
        if (!(is >> count)) throw IoError("state file: truncated rowscales in " + path);
        rs.resize(count);
        for (double& v : rs)
            if (!(is >> v)) throw IoError("state file: truncated rowscales in " + path);
    }
    std::size_t layers;
    if (!(is >> word >> layers) || word != "layerscales")
        throw IoError("state file: expected layerscales in " + path);
    st.layer_scale_sq.resize(layers);
    for (double& v : st.layer_scale_sq)
        if (!(is >> v)) throw IoError("state file: truncated layerscales in " + path);
    return st;
}

}  // namespace shrinkage
