#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pgl/nn/autograd.hpp"

namespace pgl::nn {

/// Text checkpoint:
///   checkpoint 1
///   meta <key> <value>          (any number, sorted by key)
///   param <name> <rows> <cols>
///   <row values, 17 significant digits>   (rows lines)
/// Reading back reproduces every value bit for bit.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Matrix>> params;

    void capture(std::span<Parameter* const> from);
    /// Copies stored values into `into`, matched by name and shape.
    /// Throws ShapeError on a missing name or a shape mismatch.
    void restore(std::span<Parameter* const> into) const;

    const std::string& get(const std::string& key) const;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);

}  // namespace pgl::nn
