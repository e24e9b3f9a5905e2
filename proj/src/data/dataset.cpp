#include "data/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>

namespace gendetect::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    U out{};
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(U); ++i) dst[i] = src[sizeof(U) - 1 - i];
    return out;
  } else {
    return v;
  }
}

std::vector<char> read_bytes(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::not_found,
          std::string(what) + " not found: " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

std::size_t get_size(const json& meta, const char* key) {
  require(meta.contains(key) && meta[key].is_number_unsigned(), ErrorCode::format,
          std::string("dataset metadata field '") + key + "' is missing or not a non-negative integer");
  return meta[key].get<std::size_t>();
}

}  // namespace

void write_f32_le(std::ostream& os, std::span<const float> values) {
  std::vector<std::uint32_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &values[i], sizeof u);
    raw[i] = to_le(u);
  }
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
}

void write_u32_le(std::ostream& os, std::span<const std::uint32_t> values) {
  std::vector<std::uint32_t> raw(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) raw[i] = to_le(values[i]);
  os.write(reinterpret_cast<const char*>(raw.data()),
           static_cast<std::streamsize>(raw.size() * sizeof(std::uint32_t)));
}

std::vector<float> read_f32_le(const fs::path& path) {
  const auto bytes = read_bytes(path, "image payload");
  require(bytes.size() % 4 == 0, ErrorCode::format,
          "image payload length is not a multiple of 4 bytes: " + path.string());
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    u = to_le(u);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

std::vector<std::uint32_t> read_u32_le(const fs::path& path, const char* what) {
  const auto bytes = read_bytes(path, what);
  require(bytes.size() % 4 == 0, ErrorCode::format,
          std::string(what) + " length is not a multiple of 4 bytes: " + path.string());
  std::vector<std::uint32_t> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    out[i] = to_le(u);
  }
  return out;
}

void Dataset::validate() const {
  require(num_classes >= 1, ErrorCode::format, "dataset class count must be positive");
  require(images.rank() == 4, ErrorCode::shape, "dataset images must be (N,C,H,W)");
  require(images.dim(0) == labels.size(), ErrorCode::format,
          "dataset has " + std::to_string(images.dim(0)) + " images but " +
              std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    require(labels[i] < num_classes, ErrorCode::format,
            "label overflow: sample " + std::to_string(i) + " has label " +
                std::to_string(labels[i]) + " >= class count " + std::to_string(num_classes));
  for (std::size_t i = 0; i < images.size(); ++i) {
    const float v = images[i];
    require(v >= 0.0f && v <= 1.0f, ErrorCode::format,
            "pixel range violated at element " + std::to_string(i) + " (value " +
                std::to_string(v) + ")");
  }
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
  Dataset out;
  out.name = ds.name;
  out.num_classes = ds.num_classes;
  const Shape shape = ds.image_shape();
  std::vector<std::span<const float>> samples;
  samples.reserve(indices.size());
  for (const std::size_t i : indices) {
    require(i < ds.size(), ErrorCode::invalid_argument, "subset index out of range");
    samples.push_back(ds.image(i));
    out.labels.push_back(ds.labels[i]);
  }
  if (!samples.empty()) out.images = autodiff::stack<float>(samples, shape);
  return out;
}

void save_dataset(const Dataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  const Shape shape = ds.image_shape();
  json meta = {
      {"format", kDatasetFormat},  {"name", ds.name},         {"channels", shape[0]},
      {"height", shape[1]},        {"width", shape[2]},       {"num_classes", ds.num_classes},
      {"count", ds.size()},
  };
  {
    std::ofstream out(dir / "meta.json");
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }
  {
    std::ofstream out(dir / "images.f32", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "images.f32").string());
    write_f32_le(out, ds.images.data());
  }
  {
    std::ofstream out(dir / "labels.u32", std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + (dir / "labels.u32").string());
    write_u32_le(out, ds.labels);
  }
}

Dataset load_dataset(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::not_found, "dataset not found: " + dir.string());
  std::ifstream meta_in(dir / "meta.json");
  require(static_cast<bool>(meta_in), ErrorCode::not_found,
          "dataset metadata not found: " + (dir / "meta.json").string());
  json meta;
  try {
    meta = json::parse(meta_in);
  } catch (const json::exception& e) {
    fail(ErrorCode::format, "dataset metadata is not valid JSON: " + std::string(e.what()));
  }
  require(meta.contains("format") && meta["format"] == kDatasetFormat, ErrorCode::format,
          std::string("dataset format version mismatch: expected ") + kDatasetFormat);

  const std::size_t c = get_size(meta, "channels"), h = get_size(meta, "height"),
                    w = get_size(meta, "width"), n = get_size(meta, "count");
  Dataset ds;
  ds.name = meta.value("name", std::string{});
  ds.num_classes = get_size(meta, "num_classes");
  require(c > 0 && h > 0 && w > 0 && n > 0, ErrorCode::format, "dataset dimensions must be positive");

  auto pixels = read_f32_le(dir / "images.f32");
  require(pixels.size() == n * c * h * w, ErrorCode::format,
          "image payload length " + std::to_string(pixels.size()) + " floats, expected " +
              std::to_string(n * c * h * w));
  auto labels = read_u32_le(dir / "labels.u32", "label payload");
  require(labels.size() == n, ErrorCode::format,
          "label payload length " + std::to_string(labels.size()) + ", expected " + std::to_string(n));
  ds.images = Tensor<float>({n, c, h, w}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

}  // namespace gendetect::data
