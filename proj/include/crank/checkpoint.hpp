#pragma once

#include <string>

#include "crank/net.hpp"

namespace crank {

// Versioned binary parameter container. All multi-byte values are
// little-endian; doubles are IEEE-754 bit patterns. Layout:
//
//   bytes 0..3   magic "CRNK"
//   u32          format version (currently 1)
//   config block:
//     i32 x 7    capacity_n, bpn_channels, bpn_depth, interleave, scales,
//                fpn_channels, image_size
//     f64        leaky_alpha
//     u32        backbone stage count, then i32 per stage
//   u64          rng seed
//   u32          array count, then per array:
//     u16        name length, name bytes
//     u8         rank, then u32 per dimension
//     f64 x n    row-major payload
//
// Save/load round-trips are bitwise exact.
void save_checkpoint(const RankerNetwork& net, const std::string& path);
RankerNetwork load_checkpoint(const std::string& path);

}  // namespace crank
