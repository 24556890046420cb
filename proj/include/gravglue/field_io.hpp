#pragma once

#include <string>

#include "gravglue/grid.hpp"

namespace gravglue {

// GRF1 field file format (all little-endian):
//   bytes 0-3   magic "GRF1"
//   u32         version = 1
//   u32         rank code (0 scalar, 1 vector, 2 sym2)
//   u32 x3      n per axis
//   f64 x3      origin
//   f64         spacing
//   then each component in storage order, n^3 f64, row-major (x fastest).
void field_io_write(const TensorField& field, const std::string& path);
TensorField field_io_read(const std::string& path);

}  // namespace gravglue
