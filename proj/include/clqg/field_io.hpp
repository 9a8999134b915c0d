#pragma once

#include "clqg/field_synth.hpp"
#include "clqg/measure.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace clqg {

inline constexpr std::uint32_t kFieldCacheVersion = 1;

/// Little-endian field cache:
///   "CLQG", u32 version, u32 kernel id, u32 nparams, f64 params[nparams],
///   i64 nx, i64 ny, f64 x0, f64 y0, f64 dx, u32 depth, f64 eps[depth+1],
///   per scale: f64 X[ny*nx], f64 variance[ny*nx] (row-major),
///   u64 seed, u64 replica, u32 boundary,
///   per scale: u8 stationary, then 5 f64 lags or 4 covariance grids,
///   u32 shells, per shell f64 clip error and u32 padding,
///   u64 FNV-1a checksum of everything before it.
/// Measure blocks may follow: "MEAS", u32 kind, i32 scale, f64 beta, i64 nx,
/// i64 ny, f64 mass[ny*nx], u64 checksum of the block.
std::string encode_field(const FieldLadder& field);
/// Throws ChecksumError on corruption and DomainError on a malformed header.
FieldLadder decode_field(const std::string& bytes, std::size_t* consumed = nullptr);

std::string encode_measure(const GridMeasure& m);
GridMeasure decode_measure(const std::string& bytes, std::size_t offset, const GridSpec& grid,
                           std::size_t* consumed = nullptr);

void save_field_cache(const std::filesystem::path& file, const FieldLadder& field);
void append_measure_block(const std::filesystem::path& file, const GridMeasure& m);

struct FieldCache {
    FieldLadder field;
    std::vector<GridMeasure> measures;
};
FieldCache load_field_cache(const std::filesystem::path& file);

}  // namespace clqg
