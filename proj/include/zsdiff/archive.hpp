#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace zsdiff {

/// Flat named-array archive: tensors and string attributes keyed by slash paths
/// ("diffusion/unet/down0.conv.weight"). Backed by the torch serialize container.
struct NamedArrays {
  std::map<std::string, torch::Tensor> arrays;
  std::map<std::string, std::string> strings;

  bool has_array(const std::string& key) const { return arrays.count(key) != 0; }
  const torch::Tensor& array(const std::string& key) const;
  const std::string& string(const std::string& key) const;

  /// Writes to a temp file next to `path`, then renames over it.
  void save(const std::filesystem::path& path) const;
  static NamedArrays load(const std::filesystem::path& path);
};

}  // namespace zsdiff
