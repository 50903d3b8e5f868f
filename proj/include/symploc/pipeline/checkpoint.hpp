#pragma once

#include <iosfwd>
#include <string>

#include "symploc/nn.hpp"

// Self-describing binary checkpoint, little-endian:
//   magic "SYMPLOC\x01", u64 tensor count, then per tensor
//   u64 name length, name bytes, u64 rank, rank x u64 dims, f64 payload.
namespace symploc::pipeline {

void write_checkpoint(std::ostream& out, const ParamStore& params);
ParamStore read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ParamStore& params);
ParamStore load_checkpoint(const std::string& path);

// Copies every tensor of `loaded` into `target`; names and shapes must match
// exactly in both directions.
void assign_checkpoint(ParamStore& target, const ParamStore& loaded);

}  // namespace symploc::pipeline
