#pragma once

#include <map>
#include <string>

#include "cet/tensor.hpp"

namespace cet {

// Textual key -> tensor container, the on-disk parameter format.
//
// Layout (stable; version in the magic line):
//   CETCKPT 1
//   <key> <rank> <dim0> [<dim1> ...]
//   <v0> <v1> ... <vN-1>
//   ... repeated per tensor, keys in lexicographic order ...
// Values are printed with %.17g, so fp64 round-trips exactly.
using TensorMap = std::map<std::string, Tensor>;

void save_checkpoint(const std::string& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::string& path);

std::string checkpoint_to_string(const TensorMap& tensors);

} // namespace cet
