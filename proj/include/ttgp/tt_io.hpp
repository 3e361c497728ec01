#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "ttgp/tensor_train.hpp"

namespace ttgp {

/// Binary TT container, little-endian:
///
///   "TTv1"                 4-byte format tag
///   u64 d
///   u64 mode_sizes[d]
///   u64 ranks[d + 1]
///   f64 cores[...]         core 1..d, each linearized first index fastest
///
/// No trailing bytes are accepted.
std::vector<std::uint8_t> tt_serialize(const TensorTrain& tt);
TensorTrain tt_deserialize(std::span<const std::uint8_t> bytes);

/// JSON mirror of the binary layout; `cores[k][a][i][b]` holds element
/// (a, i, b) of core k.
nlohmann::json tt_to_json(const TensorTrain& tt);
TensorTrain tt_from_json(const nlohmann::json& doc);

/// Writes JSON when the path ends in ".json", binary otherwise.
void save_tt(const std::filesystem::path& path, const TensorTrain& tt);
/// Detects the encoding from the first byte.
TensorTrain load_tt(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ttgp
