#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace offrl {

/// Incremental SHA-256 with length-prefixed field framing for composite keys.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> bytes);
  Sha256& update(std::string_view text);
  /// Appends the field length before its bytes so ("ab","c") != ("a","bc").
  Sha256& field(std::span<const std::uint8_t> bytes);
  Sha256& field(std::string_view text);
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256Hex(std::span<const std::uint8_t> bytes);
std::string sha256Hex(std::string_view text);
std::string sha256File(const std::filesystem::path& path);
/// Digest over every regular file below dir, in sorted relative-path order.
std::string sha256Directory(const std::filesystem::path& dir);

std::vector<std::uint8_t> readFileBytes(const std::filesystem::path& path);
void writeFileBytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void writeFileText(const std::filesystem::path& path, std::string_view text);
std::string readFileText(const std::filesystem::path& path);

}  // namespace offrl
