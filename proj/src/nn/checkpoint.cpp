#include "pgl/nn/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace pgl::nn {

void Checkpoint::capture(std::span<Parameter* const> from) {
    params.clear();
    for (const auto* p : from) params.emplace_back(p->name, p->value);
}

void Checkpoint::restore(std::span<Parameter* const> into) const {
    for (auto* p : into) {
        auto it = std::find_if(params.begin(), params.end(), [&](const auto& kv) { return kv.first == p->name; });
        if (it == params.end()) throw ShapeError("checkpoint has no parameter '" + p->name + "'");
        if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
            throw ShapeError("checkpoint parameter '" + p->name + "' has shape " + std::to_string(it->second.rows()) +
                             "x" + std::to_string(it->second.cols()) + ", model expects " +
                             std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
        p->value = it->second;
        p->zero_grad();
    }
}

const std::string& Checkpoint::get(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError(0, "checkpoint is missing '" + key + "'");
    return it->second;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    out << "checkpoint 1\n";
    for (const auto& [k, v] : ckpt.meta) out << "meta " << k << ' ' << v << '\n';
    char buf[40];
    for (const auto& [name, m] : ckpt.params) {
        out << "param " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
                out << (j ? " " : "") << buf;
            }
            out << '\n';
        }
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    Checkpoint ckpt;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line) || line != "checkpoint 1") throw ParseError(1, "not a checkpoint file");
    ++line_no;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key, value;
            ls >> key;
            std::getline(ls >> std::ws, value);
            ckpt.meta[key] = value;
        } else if (kind == "param") {
            std::string name;
            Eigen::Index rows = 0, cols = 0;
            if (!(ls >> name >> rows >> cols)) throw ParseError(line_no, "bad param record");
            Matrix m(rows, cols);
            for (Eigen::Index i = 0; i < rows; ++i) {
                if (!std::getline(in, line)) throw ParseError(line_no, "truncated parameter '" + name + "'");
                ++line_no;
                std::istringstream rs(line);
                std::string tok;
                for (Eigen::Index j = 0; j < cols; ++j) {
                    if (!(rs >> tok)) throw ParseError(line_no, "short row in parameter '" + name + "'");
                    m(i, j) = std::strtod(tok.c_str(), nullptr);
                }
            }
            ckpt.params.emplace_back(name, std::move(m));
        } else {
            throw ParseError(line_no, "unknown checkpoint record '" + kind + "'");
        }
    }
    return ckpt;
}

}  // namespace pgl::nn
