#pragma once

#include <string>

#include "kpshift/tensor.hpp"

namespace kpshift {

// KPST container: magic "KPST", u16 version = 1 (LE), u8 dtype (0 = f32,
// 1 = f64), u8 ndim, ndim × u64 LE extents, then the payload little-endian
// row-major. Round-trips are bit-exact for both dtypes.
void tensor_write(const Tensor& t, const std::string& path);
Tensor tensor_read(const std::string& path);

}  // namespace kpshift
