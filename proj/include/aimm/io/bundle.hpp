#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aimm/nn/layers.hpp"

namespace aimm::io {

// Named f32 tensors behind a JSON header:
//   magic[4] | u32 version = 1 | u32 json length
//   | JSON {"meta": ..., "tensors": [{"name", "shape"}, ...]} | f32 data
struct Bundle {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::string> names;
  std::vector<Tensor<float>> tensors;

  void add(std::string name, Tensor<float> t);
  bool has(std::string_view name) const;
  // Throws CheckpointError when absent.
  const Tensor<float>& get(std::string_view name) const;
};

inline constexpr std::uint32_t kBundleVersion = 1;

std::vector<std::uint8_t> encode_bundle(std::string_view magic, const Bundle& b);
Bundle decode_bundle(const std::vector<std::uint8_t>& bytes, std::string_view magic);
void save_bundle(const std::filesystem::path& path, std::string_view magic, const Bundle& b);
Bundle load_bundle(const std::filesystem::path& path, std::string_view magic);

template <typename T>
void add_params(Bundle& b, const nn::ParamList<T>& params);

// Fills params from tensors of the same name; missing names or shape
// disagreements throw CheckpointError.
template <typename T>
void load_params(const Bundle& b, const nn::ParamList<T>& params);

}  // namespace aimm::io
