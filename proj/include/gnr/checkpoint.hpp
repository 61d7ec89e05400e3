#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gnr/tensor.hpp"

namespace gnr::ckpt {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned binary container. Tensors are stored as raw little-endian
/// float32 so a save/load cycle is bit-exact; a trailing checksum catches
/// truncated or corrupted files.
struct Archive {
  std::uint64_t config_hash = 0;
  std::int64_t iteration = 0;
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> strings;

  const Tensor& tensor(const std::string& key) const;
  const std::string& string(const std::string& key) const;
};

inline constexpr std::uint32_t kFormatVersion = 1;

/// Written to a temporary sibling and renamed, so readers never see a
/// partial file.
void save(const std::filesystem::path& path, const Archive& archive);
Archive load(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace gnr::ckpt
