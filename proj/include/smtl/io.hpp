// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace smtl::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view text);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

// Little-endian float64 encoding, independent of host byte order.
std::vector<std::uint8_t> encode_f64(std::span<const double> values);
std::vector<double> decode_f64(std::span<const std::uint8_t> bytes);

std::string hex32(std::uint32_t v);

// 17 significant digits; round-trips any float64.
std::string fmt_exact(double v);
std::string fmt_fixed(double v, int decimals);

}  // namespace smtl::io
