#pragma once

// Dataset CSV, network JSON and MASO JSON serialization.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "maso/dataset.hpp"
#include "maso/layers.hpp"

namespace maso {

/// Shortest text that reads back to the same double (%.17g).
std::string format_double(double v);

/// Rows of features followed by an integer label. A first line without any
/// numeric cell is taken as a header. When `class_count` is absent it is one
/// more than the largest label.
Dataset parse_dataset_csv(std::string_view text, std::optional<std::size_t> class_count = std::nullopt);
Dataset load_dataset_csv(const std::filesystem::path& path, std::optional<std::size_t> class_count = std::nullopt);
/// Header x1,…,xD,label then one row per point.
std::string format_dataset_csv(const Dataset& data);
void save_dataset_csv(const std::filesystem::path& path, const Dataset& data);

/// Schema: {input_shape, class_count, layers: [{type: dense|conv|activation|
/// maxpool|avgpool|batchnorm|skip, ...}]}. Arrays are plain decimal lists,
/// {shape, data} objects, or {shape, base64} little-endian float64 blobs.
Network parse_network_json(std::string_view text);
Network load_network(const std::filesystem::path& path);
/// Decimal arrays; `base64` switches weight blobs to the binary encoding.
std::string format_network_json(const Network& net, bool base64 = false);
void save_network(const std::filesystem::path& path, const Network& net, bool base64 = false);

/// {K, R, D, A: K*R*D values, B: K*R values}.
MasoParams parse_maso_json(std::string_view text);
MasoParams load_maso(const std::filesystem::path& path);
std::string format_maso_json(const MasoParams& p);

std::string base64_encode(std::span<const double> values);
Vec base64_decode(std::string_view text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace maso
