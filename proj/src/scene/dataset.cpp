#include "aimm/scene/dataset.hpp"

#include <cmath>

#include "aimm/io/binary.hpp"

namespace aimm::scene {

namespace {
constexpr char kMagic[4] = {'A', 'I', 'M', 'M'};
constexpr std::size_t kFixedHeader = 4 + 4 + 4 + 2 + 2 + 4;
}  // namespace

double Dataset::side_length() const {
  const auto& areas = metadata.at("areas");
  if (areas.size() != 1) throw ConfigError("dataset spans several areas; side length is per area");
  return areas.at(0).at("side_length").get<double>();
}

std::size_t record_size(std::size_t n_t, std::size_t n_c) {
  return kGridCells + 4 * 4 + 4 * 2 * n_t * n_c + 4 * 2 + 1 + 4 + 4 * 2 * n_t + 2;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  if (ds.records.empty()) throw ConfigError("refusing to write an empty dataset");
  io::ByteWriter w;
  w.put_text(std::string_view(kMagic, 4));
  w.put<std::uint32_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.records.size()));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.n_t));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(ds.n_c));
  const std::string meta = ds.metadata.dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.put_text(meta);
  for (const auto& r : ds.records) {
    if (r.csi.size() != 2 * ds.n_t * ds.n_c || r.precoder.size() != 2 * ds.n_t)
      throw DimensionError("record does not match dataset dimensions");
    w.put_bytes(r.grid);
    w.put_array<float>(r.bs_xy);
    w.put_array<float>(r.ue_xy);
    w.put_array<float>(r.csi);
    w.put_array<float>(r.position);
    w.put<std::uint8_t>(r.los ? 1 : 0);
    w.put<float>(r.path_loss_db);
    w.put_array<float>(r.precoder);
    w.put<std::uint16_t>(r.beam_index);
  }
  return w.take();
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader rd(bytes);
  if (rd.get_text(4, "magic") != std::string_view(kMagic, 4))
    throw FormatError("bad dataset magic", 0);
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  Dataset ds;
  const auto n_records = rd.get<std::uint32_t>("record count");
  ds.n_t = rd.get<std::uint16_t>("n_t");
  ds.n_c = rd.get<std::uint16_t>("n_c");
  const auto meta_len = rd.get<std::uint32_t>("metadata length");
  const std::size_t meta_offset = rd.offset();
  const std::string meta = rd.get_text(meta_len, "metadata");
  try {
    ds.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("metadata is not valid JSON: ") + e.what(), meta_offset);
  }
  const std::size_t rsize = record_size(ds.n_t, ds.n_c);
  const std::size_t expected = kFixedHeader + meta_len + std::size_t{n_records} * rsize;
  if (bytes.size() < expected) {
    // offset of the first record that is not fully present
    const std::size_t complete = (bytes.size() - rd.offset()) / rsize;
    throw FormatError("truncated dataset: header declares " + std::to_string(n_records) +
                          " records but only " + std::to_string(complete) + " are present",
                      rd.offset() + complete * rsize);
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes after last record", expected);
  ds.records.resize(n_records);
  for (auto& r : ds.records) {
    rd.get_array<std::uint8_t>(r.grid, "grid");
    rd.get_array<float>(r.bs_xy, "bs_xy");
    rd.get_array<float>(r.ue_xy, "ue_xy");
    r.csi.resize(2 * ds.n_t * ds.n_c);
    rd.get_array<float>(r.csi, "csi");
    rd.get_array<float>(r.position, "position");
    const auto los = rd.get<std::uint8_t>("los");
    if (los > 1) throw FormatError("los flag must be 0 or 1", rd.offset() - 1);
    r.los = los == 1;
    r.path_loss_db = rd.get<float>("path loss");
    r.precoder.resize(2 * ds.n_t);
    rd.get_array<float>(r.precoder, "precoder");
    r.beam_index = rd.get<std::uint16_t>("beam index");
    if (r.beam_index >= ds.n_t) throw FormatError("beam index out of range", rd.offset() - 2);
  }
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::write_file(path, encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

double csi_rms(const std::vector<SampleRecord>& records) {
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    for (std::size_t i = 0; i + 1 < r.csi.size(); i += 2) {
      ss += double(r.csi[i]) * r.csi[i] + double(r.csi[i + 1]) * r.csi[i + 1];
      ++n;
    }
  }
  return n == 0 ? 1.0 : std::sqrt(ss / static_cast<double>(n));
}

std::vector<SampleRecord> generate_area_records(std::uint64_t seed, std::uint64_t area_index,
                                                std::uint64_t first, std::size_t count,
                                                const ChannelConfig& config) {
  config.validate();
  const Scene area = generate_scene(seed, area_index);
  std::vector<SampleRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = generate_sample(area, seed, area_index, first + i, config);
    out.push_back(to_record(s.scene, s.csi, s.labels));
  }
  return out;
}

Dataset build_dataset(std::uint64_t seed, const std::vector<AreaSpec>& areas,
                      const ChannelConfig& config, const std::string& split) {
  Dataset ds;
  ds.n_t = config.n_t;
  ds.n_c = config.n_c;
  nlohmann::json area_meta = nlohmann::json::array();
  for (const auto& a : areas) {
    auto recs = generate_area_records(seed, a.area_index, a.first_sample, a.count, config);
    ds.records.insert(ds.records.end(), std::make_move_iterator(recs.begin()),
                      std::make_move_iterator(recs.end()));
    area_meta.push_back({{"index", a.area_index},
                         {"first_sample", a.first_sample},
                         {"count", a.count},
                         {"side_length", generate_scene(seed, a.area_index).side_length}});
  }
  ds.metadata = {{"config", config},
                 {"seed", seed},
                 {"areas", area_meta},
                 {"csi_rms", csi_rms(ds.records)},
                 {"split", split}};
  return ds;
}

}  // namespace aimm::scene
