#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/tensor/tensor.hpp"

namespace air {

/// Binary tensor record:
///
///   u64 little-endian  header length N
///   N bytes            UTF-8 JSON {"name": str, "dtype": "f64", "shape": [...], "meta": {...}}
///   numel * 8 bytes    IEEE-754 binary64 payload, little-endian, row-major
///
/// A tensor file is a concatenation of records.
struct TensorRecord {
    std::string name;
    Tensor tensor;
    nlohmann::json meta = nlohmann::json::object();
};

void write_tensor_record(std::ostream& out, const TensorRecord& record);
/// Returns nullopt at a clean end of stream; throws on truncated or malformed input.
std::optional<TensorRecord> read_tensor_record(std::istream& in);

void save_tensor_file(const std::filesystem::path& path, const std::vector<TensorRecord>& records);
std::vector<TensorRecord> load_tensor_file(const std::filesystem::path& path);

}  // namespace air
