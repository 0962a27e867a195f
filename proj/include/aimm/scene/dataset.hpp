#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aimm/scene/sample.hpp"

namespace aimm::scene {

// Binary dataset file, little-endian:
//   "AIMM" | u32 version = 1 | u32 n_records | u16 n_t | u16 n_c
//   | u32 json length | UTF-8 JSON metadata | records
// Record: u8 grid[256] | f32 bs_xy[2] | f32 ue_xy[2] | f32 csi[2·n_t·n_c]
//   | f32 position[2] | u8 los | f32 path_loss_db | f32 precoder[2·n_t]
//   | u16 beam_index
struct Dataset {
  nlohmann::json metadata;
  std::size_t n_t = 0;
  std::size_t n_c = 0;
  std::vector<SampleRecord> records;

  double csi_rms() const { return metadata.value("csi_rms", 1.0); }
  double side_length() const;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::size_t record_size(std::size_t n_t, std::size_t n_c);

std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

// Root-mean-square CSI entry magnitude over every record.
double csi_rms(const std::vector<SampleRecord>& records);

// Samples [first, first + count) of one area.
std::vector<SampleRecord> generate_area_records(std::uint64_t seed, std::uint64_t area_index,
                                                std::uint64_t first, std::size_t count,
                                                const ChannelConfig& config);

struct AreaSpec {
  std::uint64_t area_index = 0;
  std::uint64_t first_sample = 0;
  std::size_t count = 0;
};

// Records for every area in order plus metadata (config, seed, areas with
// side lengths, csi_rms, split name).
Dataset build_dataset(std::uint64_t seed, const std::vector<AreaSpec>& areas,
                      const ChannelConfig& config, const std::string& split);

}  // namespace aimm::scene
