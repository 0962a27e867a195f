#include "aimm/io/bundle.hpp"

#include "aimm/io/binary.hpp"

namespace aimm::io {

void Bundle::add(std::string name, Tensor<float> t) {
  if (has(name)) throw CheckpointError("duplicate tensor " + name);
  names.push_back(std::move(name));
  tensors.push_back(std::move(t));
}

bool Bundle::has(std::string_view name) const {
  for (const auto& n : names)
    if (n == name) return true;
  return false;
}

const Tensor<float>& Bundle::get(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return tensors[i];
  throw CheckpointError("checkpoint has no tensor named " + std::string(name));
}

std::vector<std::uint8_t> encode_bundle(std::string_view magic, const Bundle& b) {
  if (magic.size() != 4) throw ConfigError("bundle magic must be 4 bytes");
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < b.names.size(); ++i)
    index.push_back({{"name", b.names[i]}, {"shape", b.tensors[i].shape()}});
  const std::string header = nlohmann::json{{"meta", b.meta}, {"tensors", index}}.dump();
  ByteWriter w;
  w.put_text(magic);
  w.put<std::uint32_t>(kBundleVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(header.size()));
  w.put_text(header);
  for (const auto& t : b.tensors) w.put_array<float>(t.span());
  return w.take();
}

Bundle decode_bundle(const std::vector<std::uint8_t>& bytes, std::string_view magic) {
  ByteReader rd(bytes);
  if (rd.get_text(4, "magic") != magic)
    throw FormatError("expected a " + std::string(magic) + " file", 0);
  const auto version = rd.get<std::uint32_t>("version");
  if (version != kBundleVersion)
    throw FormatError("unsupported " + std::string(magic) + " version " + std::to_string(version), 4);
  const auto len = rd.get<std::uint32_t>("header length");
  const std::size_t header_offset = rd.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(rd.get_text(len, "header"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header is not valid JSON: ") + e.what(), header_offset);
  }
  Bundle b;
  b.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    Tensor<float> t(entry.at("shape").get<Shape>());
    rd.get_array<float>(t.span(), "tensor data");
    b.add(entry.at("name").get<std::string>(), std::move(t));
  }
  if (rd.remaining() != 0) throw FormatError("trailing bytes after tensor data", rd.offset());
  return b;
}

void save_bundle(const std::filesystem::path& path, std::string_view magic, const Bundle& b) {
  write_file(path, encode_bundle(magic, b));
}

Bundle load_bundle(const std::filesystem::path& path, std::string_view magic) {
  return decode_bundle(read_file(path), magic);
}

template <typename T>
void add_params(Bundle& b, const nn::ParamList<T>& params) {
  for (const auto& p : params) b.add(p.name, p.var.value().template cast<float>());
}

template <typename T>
void load_params(const Bundle& b, const nn::ParamList<T>& params) {
  for (const auto& p : params) {
    const auto& t = b.get(p.name);
    if (t.shape() != p.var.shape())
      throw CheckpointError("tensor " + p.name + " has shape " + shape_string(t.shape()) +
                            ", model expects " + shape_string(p.var.shape()));
    p.var.ptr()->value = t.template cast<T>();
  }
}

template void add_params<float>(Bundle&, const nn::ParamList<float>&);
template void add_params<double>(Bundle&, const nn::ParamList<double>&);
template void load_params<float>(const Bundle&, const nn::ParamList<float>&);
template void load_params<double>(const Bundle&, const nn::ParamList<double>&);

}  // namespace aimm::io
